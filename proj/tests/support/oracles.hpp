#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <span>
#include <vector>

namespace oracle {

/// Unpenalized logistic MLE by Newton-Raphson on [1, x]. Returns intercept first.
Eigen::VectorXd logistic_mle(const Eigen::MatrixXd& x, std::span<const int> y);

/// AUC by counting every (positive, negative) pair; ties count one half.
double pair_count_auc(std::span<const int> y, std::span<const double> s);

/// ReliefF by full enumeration: for each row all same-class and other-class
/// rows are sorted by (distance, index) with a stable sort.
std::vector<double> relieff_brute(const Eigen::MatrixXd& x, const std::vector<int>& y, std::size_t j);

/// Studentized range upper-tail probability by Monte Carlo.
double studentized_range_mc(double q, int k, int df, std::size_t draws, std::uint64_t seed);
/// Empirical upper-alpha quantile of the studentized range from `draws` simulated values.
double studentized_range_mc_quantile(double alpha, int k, int df, std::size_t draws, std::uint64_t seed);

}  // namespace oracle
