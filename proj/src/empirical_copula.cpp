#include "cdcopula/empirical_copula.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cdcopula/errors.hpp"

namespace cdcopula {

std::vector<double> average_ranks(const std::vector<double>& x) {
  const std::size_t n = x.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&x](std::size_t a, std::size_t b) { return x[a] < x[b]; });
  std::vector<double> rank(n);
  std::size_t start = 0;
  while (start < n) {
    std::size_t end = start + 1;
    while (end < n && x[order[end]] == x[order[start]]) ++end;
    const double avg = 0.5 * static_cast<double>(start + 1 + end);
    for (std::size_t k = start; k < end; ++k) rank[order[k]] = avg;
    start = end;
  }
  return rank;
}

namespace {

void check_pair(const std::vector<double>& y1, const std::vector<double>& y2) {
  if (y1.size() != y2.size()) throw DimensionError("empirical_copula: samples differ in length");
  if (y1.size() < 2) throw DimensionError("empirical_copula: need n >= 2");
}

// Counts on an m x m lattice followed by a 2-D cumulative sum. Observation k
// falls in cell (ceil(m r1_k / n), ceil(m r2_k / n)).
Eigen::MatrixXd cumulative_counts(const std::vector<double>& y1, const std::vector<double>& y2, std::size_t m) {
  const std::vector<double> r1 = average_ranks(y1);
  const std::vector<double> r2 = average_ranks(y2);
  const double n = static_cast<double>(y1.size());
  const double scale = static_cast<double>(m) / n;
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(m), static_cast<Eigen::Index>(m));
  auto cell = [&](double r) {
    // tolerance absorbs rounding in m * r / n when the product is integral
    const double pos = std::ceil(scale * r - 1e-9);
    return static_cast<Eigen::Index>(std::clamp(pos, 1.0, static_cast<double>(m))) - 1;
  };
  for (std::size_t k = 0; k < y1.size(); ++k) c(cell(r1[k]), cell(r2[k])) += 1.0;
  for (Eigen::Index i = 0; i < c.rows(); ++i) {
    for (Eigen::Index j = 1; j < c.cols(); ++j) c(i, j) += c(i, j - 1);
  }
  for (Eigen::Index i = 1; i < c.rows(); ++i) c.row(i) += c.row(i - 1);
  return c / n;
}

}  // namespace

Eigen::MatrixXd empirical_copula(const std::vector<double>& y1, const std::vector<double>& y2) {
  check_pair(y1, y2);
  return cumulative_counts(y1, y2, y1.size());
}

Eigen::MatrixXd empirical_copula_grid(const std::vector<double>& y1, const std::vector<double>& y2,
                                      std::size_t m) {
  check_pair(y1, y2);
  if (m < 1) throw DimensionError("empirical_copula_grid: grid size must be positive");
  return cumulative_counts(y1, y2, m);
}

double sample_kendall_tau(const std::vector<double>& x, const std::vector<double>& y) {
  check_pair(x, y);
  const std::size_t n = x.size();
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      const double a = (x[i] - x[j]) * (y[i] - y[j]);
      s += (a > 0.0) - (a < 0.0);
    }
  }
  return 2.0 * s / (static_cast<double>(n) * static_cast<double>(n - 1));
}

}  // namespace cdcopula
