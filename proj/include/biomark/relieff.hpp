#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace biomark::relieff {

struct ReliefFConfig {
    /// Nearest hits and misses per sampled instance.
    std::size_t neighbors = 10;
    /// Sampled instances; nullopt means every row once, in order.
    std::optional<std::size_t> samples;
    /// Used only when `samples` is set (sampling with replacement).
    std::uint64_t seed = 0;
    /// Per-column flag; discrete columns use a 0/1 value-mismatch diff.
    std::vector<char> discrete;
};

struct RankingVector {
    std::vector<double> scores;
    /// Every column had zero range, so all scores are 0.
    bool degenerate = false;
};

/// ReliefF for a binary label: misses add and hits subtract the
/// range-normalized per-feature difference, averaged over samples x neighbors.
/// Neighbors use the range-normalized L1 distance over all features; equal
/// distances are broken toward the lower row index.
RankingVector relieff_rank(const Eigen::MatrixXd& x, const std::vector<int>& y, const ReliefFConfig& config = {});

/// Ascending indices of strictly positive scores (possibly empty).
std::vector<std::size_t> select_positive(const RankingVector& r);

}  // namespace biomark::relieff
