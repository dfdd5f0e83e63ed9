#pragma once

#include <cstdint>
#include <limits>
#include <vector>

// Joe-Clayton (BB7) copula in the natural (theta, delta) and the feature
// (lambda_L, tau) parameterizations.

namespace cdcopula {

class TauGrid;

struct CopulaNatural {
  double theta = 1.0;  // >= 1, controls the upper tail
  double delta = 1.0;  // > 0, controls the lower tail
};

struct CopulaFeatures {
  double lambda_l = 0.5;  // lower tail dependence in (0, 1)
  double tau = 0.5;       // Kendall's tau in (0, 1)
};

struct UnitPair {
  double u = 0.5;
  double v = 0.5;
};

inline constexpr double kUnitClamp = 1e-12;
// |theta - 2| below this uses the dedicated theta = 2 expression for tau.
inline constexpr double kThetaTwoWindow = 1e-7;
// |theta - 2| below this evaluates the tau derivatives through the
// theta = 2 expressions plus a local interpolant, see dtau_dtheta().
inline constexpr double kThetaTwoDerivWindow = 1e-3;
// Returned in place of a log density whose intermediates left the floating range.
inline constexpr double kLogDensityFloor = -1.0e30;

void validate(const CopulaNatural& c);
void validate(const CopulaFeatures& f);
UnitPair clamp_unit(UnitPair p);

double jc_cdf(UnitPair p, const CopulaNatural& c);

// dC/du at (u, v): the conditional distribution of V given U = u.
double jc_conditional_cdf(UnitPair p, const CopulaNatural& c);

// Log density and, optionally, its gradients in one pass over the shared
// intermediates T1, T2, L1.
struct JcLogDensity {
  double value = 0.0;
  double d_theta = 0.0;
  double d_delta = 0.0;
  double d_u = 0.0;
  double d_v = 0.0;
  bool overflow = false;
};
JcLogDensity jc_logpdf_full(UnitPair p, const CopulaNatural& c, bool with_gradients);

double jc_logpdf(UnitPair p, const CopulaNatural& c);
inline bool is_overflow_sentinel(double log_density) { return log_density <= kLogDensityFloor; }

struct NaturalGradient {
  double d_theta = 0.0;
  double d_delta = 0.0;
};
struct UnitGradient {
  double d_u = 0.0;
  double d_v = 0.0;
};
NaturalGradient grad_logpdf_natural(UnitPair p, const CopulaNatural& c);
UnitGradient grad_logpdf_u(UnitPair p, const CopulaNatural& c);

// Tail dependence maps and their inverses.
struct TailDependence {
  double lambda_l = 0.0;
  double lambda_u = 0.0;
};
TailDependence tail_maps(const CopulaNatural& c);
double lambda_l_from_delta(double delta);
double lambda_u_from_theta(double theta);
double delta_from_lambda_l(double lambda_l);
double theta_from_lambda_u(double lambda_u);
double dlambda_l_ddelta(double delta);

double kendall_tau(const CopulaNatural& c);
double dtau_dtheta(const CopulaNatural& c);
double dtau_ddelta(const CopulaNatural& c);

struct TauGradient {
  double d_theta = 0.0;
  double d_delta = 0.0;
};
// Both tau derivatives in one evaluation, no validation.
TauGradient tau_gradient(double theta, double delta);

struct TauWithSlope {
  double tau = 0.0;
  double dtau_dtheta = 0.0;
};
TauWithSlope kendall_tau_with_slope(double theta, double delta);

// Smallest attainable tau for a given delta (the theta = 1 Clayton edge).
double tau_lower_bound(double delta);
// Largest lambda_L compatible with tau: 2^(1/2 - 1/(2 tau)).
double lambda_l_frontier(double tau);
bool is_feasible(const CopulaFeatures& f);

// Solves kendall_tau(theta, delta) = tau for theta >= 1. The hint (if finite
// and >= 1) seeds the safeguarded Newton iteration; otherwise the grid does.
// Throws InfeasibleError when tau is below tau_lower_bound(delta).
double theta_for_tau(double tau, double delta, double theta_hint = std::numeric_limits<double>::quiet_NaN(),
                     const TauGrid* grid = nullptr);

double tau_from_features(double lambda_l, double lambda_u);
double tau_inverse_upper(double lambda_l, double tau, const TauGrid* grid = nullptr);

CopulaNatural to_natural(const CopulaFeatures& f, const TauGrid* grid = nullptr);
CopulaFeatures to_features(const CopulaNatural& c);

enum class Rotation { kNone = 0, k90 = 90, k180 = 180, k270 = 270 };
Rotation rotation_from_degrees(int degrees);
int rotation_degrees(Rotation r);
UnitPair rotate(UnitPair p, Rotation r);
inline bool flips_u(Rotation r) { return r == Rotation::k90 || r == Rotation::k180; }
inline bool flips_v(Rotation r) { return r == Rotation::k270 || r == Rotation::k180; }

// Solves jc_conditional_cdf({u, v}, c) = prob for v.
double jc_conditional_quantile(double u, double prob, const CopulaNatural& c);

// Draws pairs with u uniform and v from numeric inversion of dC/du.
std::vector<UnitPair> jc_sample(const CopulaNatural& c, std::size_t count, std::uint64_t seed);

}  // namespace cdcopula
