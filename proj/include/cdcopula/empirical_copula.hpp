#pragma once

#include <cstddef>
#include <vector>

#include <Eigen/Dense>

namespace cdcopula {

// Ranks 1..n, ties receive the average of the ranks they span.
std::vector<double> average_ranks(const std::vector<double>& x);

// Full n x n empirical copula: entry (i - 1, j - 1) is
// C(i/n, j/n) = #{k : rank1_k <= i, rank2_k <= j} / n.
Eigen::MatrixXd empirical_copula(const std::vector<double>& y1, const std::vector<double>& y2);

// Same estimator on an m x m grid of levels q = 1/m, ..., 1, for large n.
Eigen::MatrixXd empirical_copula_grid(const std::vector<double>& y1, const std::vector<double>& y2,
                                      std::size_t m);

// Sample Kendall's tau by pairwise concordance counting (tau-a), O(n^2).
double sample_kendall_tau(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace cdcopula
