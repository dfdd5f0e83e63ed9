#pragma once

#include <Eigen/Dense>

// Split-t margin: Student-t kernel with scale phi left of the mode mu and
// scale kappa * phi to the right, masses 1/(1 + kappa) and kappa/(1 + kappa).

namespace cdcopula {

struct SplitTParams {
  double mu = 0.0;
  double phi = 1.0;
  double nu = 5.0;
  double kappa = 1.0;
};

void validate(const SplitTParams& p);

double split_t_logpdf(double y, const SplitTParams& p);
double split_t_cdf(double y, const SplitTParams& p);
double split_t_quantile(double prob, const SplitTParams& p);

struct SplitTLogpdfGrad {
  double value = 0.0;
  double d_mu = 0.0;
  double d_phi = 0.0;
  double d_nu = 0.0;
  double d_kappa = 0.0;
};
SplitTLogpdfGrad split_t_logpdf_grad(double y, const SplitTParams& p);

struct SplitTCdfGrad {
  double cdf = 0.0;
  double d_mu = 0.0;
  double d_phi = 0.0;
  double d_kappa = 0.0;
  double d_nu = 0.0;
  bool nu_fallback = false;  // d_nu came from the integral of d f / d nu
};

enum class NuGradientMethod { kAuto, kClosedForm, kIntegral };

// Thresholds for switching the nu derivative to the integral form.
inline constexpr double kNuFallbackAbove = 50.0;
// The series converges like A^k; above this A the integral is cheaper and
// also covers the unstable region near the mode (A -> 1).
inline constexpr double kNuSeriesMaxA = 0.5;

// with_nu = false skips the (comparatively costly) nu derivative and leaves d_nu at 0.
SplitTCdfGrad split_t_cdf_grads(double y, const SplitTParams& p, NuGradientMethod method = NuGradientMethod::kAuto,
                                bool with_nu = true);

// 3F2(1/2, a, a; a + 1, a + 1; x) by direct summation, ratio truncation 1e-14.
// Returns false when max_terms is reached before convergence.
bool hypergeometric_3f2(double a, double x, double& result, int max_terms = 2000);

}  // namespace cdcopula
