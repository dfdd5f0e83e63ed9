#pragma once

#include <cstddef>
#include <string>
#include <vector>

// Precomputed Kendall's tau over a (lambda_L, lambda_U) grid, used to seed the
// inverse map lambda_U = tau^-1(lambda_L, tau). Immutable after construction.

namespace cdcopula {

class TauGrid {
 public:
  static constexpr std::size_t kDefaultSize = 512;
  static constexpr double kAxisLow = 1e-4;
  static constexpr double kAxisHigh = 1.0 - 1e-4;

  // Geometrically spaced axes over [kAxisLow, kAxisHigh].
  static TauGrid build(std::size_t rows = kDefaultSize, std::size_t cols = kDefaultSize);

  static TauGrid load(const std::string& path);
  void save(const std::string& path) const;

  std::size_t rows() const { return lambda_l_.size(); }
  std::size_t cols() const { return lambda_u_.size(); }
  const std::vector<double>& lambda_l_axis() const { return lambda_l_; }
  const std::vector<double>& lambda_u_axis() const { return lambda_u_; }
  // Row-major: tau(i, j) is at lambda_l_axis()[i], lambda_u_axis()[j].
  double tau(std::size_t i, std::size_t j) const { return tau_[i * cols() + j]; }
  const std::vector<double>& values() const { return tau_; }

  // Interpolated guess of lambda_U: linear in log(lambda_L) between rows,
  // then inverse-linear along the monotone row. NaN when tau lies outside the
  // tabulated range for that lambda_L.
  double guess_lambda_u(double lambda_l, double tau) const;

  // Guess followed by Newton polishing on kendall_tau until converged.
  double inverse_upper(double lambda_l, double tau) const;

  bool operator==(const TauGrid& other) const = default;

 private:
  std::vector<double> lambda_l_;
  std::vector<double> lambda_u_;
  std::vector<double> tau_;
};

}  // namespace cdcopula
