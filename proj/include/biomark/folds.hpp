#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace biomark {

/// Seeded stratified K-fold assignment.
struct FoldPlan {
    std::size_t n = 0;
    std::size_t k = 0;
    std::uint64_t seed = 0;
    std::vector<std::size_t> fold_of;  // per row, in [0, k)

    std::vector<std::size_t> rows_in(std::size_t fold) const;
    /// Rows whose fold is not in `excluded`.
    std::vector<std::size_t> rows_not_in(std::initializer_list<std::size_t> excluded) const;
    std::vector<std::size_t> fold_sizes() const;
};

/// Within each class (0 first) rows are shuffled by `seed` and dealt
/// round-robin, continuing from the fold where the previous class stopped, so
/// fold sizes differ by at most one and every fold holds both classes.
FoldPlan partition(std::size_t n, std::size_t k, std::uint64_t seed, std::span<const int> labels);

}  // namespace biomark
