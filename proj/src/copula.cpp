#include "cdcopula/copula.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <random>
#include <string>

#include "cdcopula/errors.hpp"
#include "cdcopula/special_functions.hpp"
#include "cdcopula/tau_grid.hpp"

namespace cdcopula {

using special::digamma;
using special::kLn2;
using special::kPi;
using special::log_beta;
using special::trigamma;

namespace {

// Intermediates of the density shared by the value and all gradients.
// T1(s) = 1 - (1 - s)^theta, T2(s) = (1 - s)^(theta - 1),
// L1 = T1(u)^-delta + T1(v)^-delta - 1, all carried in log space.
struct Intermediates {
  double log_t1_u = 0.0;
  double log_t1_v = 0.0;
  double log_b_u = 0.0;  // log(1 - u)
  double log_b_v = 0.0;
  double log_l1 = 0.0;
  double share_u = 0.0;  // T1(u)^-delta / L1
  double share_v = 0.0;
  double w = 0.0;        // L1^(-1/delta)
  double one_minus_w = 0.0;
  double log_one_minus_w = 0.0;
  double x = 0.0;        // log(L1) / delta
};

double log_t1(double log_b, double theta) {
  const double e = theta * log_b;
  return e < -kLn2 ? std::log1p(-std::exp(e)) : std::log(-std::expm1(e));
}

Intermediates intermediates(double u, double v, double theta, double delta) {
  Intermediates m;
  m.log_b_u = std::log1p(-u);
  m.log_b_v = std::log1p(-v);
  m.log_t1_u = log_t1(m.log_b_u, theta);
  m.log_t1_v = log_t1(m.log_b_v, theta);
  const double a_u = -delta * m.log_t1_u;
  const double a_v = -delta * m.log_t1_v;
  const double a_max = std::max(a_u, a_v);
  if (a_max < 1.0) {
    m.log_l1 = std::log1p(std::expm1(a_u) + std::expm1(a_v));
  } else {
    m.log_l1 = a_max + std::log(std::exp(a_u - a_max) + std::exp(a_v - a_max) - std::exp(-a_max));
  }
  m.share_u = std::exp(a_u - m.log_l1);
  m.share_v = std::exp(a_v - m.log_l1);
  m.x = m.log_l1 / delta;
  m.w = std::exp(-m.x);
  m.one_minus_w = -std::expm1(-m.x);
  m.log_one_minus_w = m.w < 0.5 ? std::log1p(-m.w) : std::log(m.one_minus_w);
  return m;
}

void check_unit(UnitPair p) {
  if (!(p.u >= 0.0 && p.u <= 1.0) || !(p.v >= 0.0 && p.v <= 1.0)) {
    throw DomainError("copula: (u, v) must lie in the unit square");
  }
}

// sin and cos of 2 pi / theta through the offset from pi, which keeps full
// relative accuracy as theta -> 2.
double sin_two_pi_over(double theta) { return std::sin(kPi * (theta - 2.0) / theta); }
double cos_two_pi_over(double theta) { return -std::cos(kPi * (theta - 2.0) / theta); }

// --- Kendall's tau branches ---------------------------------------------

double tau_at_two(double delta) { return 1.0 - (digamma(2.0 + delta) - digamma(1.0) - 1.0) / delta; }

double tau_generic(double theta, double delta) {
  const double head = 1.0 - 2.0 / (delta * (2.0 - theta));
  if (theta < 2.0) {
    return head + 4.0 * std::exp(log_beta(delta + 2.0, (2.0 - theta) / theta)) / (theta * theta * delta);
  }
  const double beta = std::exp(log_beta(1.0 + delta + 2.0 / theta, 2.0 - 2.0 / theta));
  return head - 4.0 * kPi / (theta * theta * delta * (2.0 + delta) * sin_two_pi_over(theta) * beta);
}

double dtau_dtheta_at_two(double delta) {
  const double p1 = digamma(1.0);
  const double p2 = digamma(2.0 + delta);
  const double numer = 12.0 + 24.0 * p1 + 6.0 * p1 * p1 + kPi * kPi - 12.0 * (2.0 + p1) * p2 + 6.0 * p2 * p2 -
                       6.0 * trigamma(2.0 + delta);
  return -numer / (24.0 * delta);
}

double dtau_ddelta_at_two(double delta) {
  return (digamma(2.0 + delta) - delta * trigamma(2.0 + delta) - digamma(1.0) - 1.0) / (delta * delta);
}

struct TauDerivs {
  double d_theta = 0.0;
  double d_delta = 0.0;
};

TauDerivs dtau_generic(double theta, double delta) {
  TauDerivs d;
  const double h = theta - 2.0;
  const double t2 = theta * theta;
  const double t4 = t2 * t2;
  if (theta < 2.0) {
    const double z = (2.0 - theta) / theta;
    const double b = std::exp(log_beta(2.0 + delta, z));
    const double psi_mid = digamma(2.0 / theta + delta + 1.0);
    d.d_theta = -2.0 / (h * h * delta) - 8.0 * b * (theta + digamma(z) - psi_mid) / (t4 * delta);
    d.d_delta = -2.0 / (h * delta * delta) + 4.0 * b * (digamma(2.0 + delta) - psi_mid - 1.0 / delta) / (t2 * delta);
    return d;
  }
  const double b = std::exp(log_beta(1.0 + delta + 2.0 / theta, 2.0 - 2.0 / theta));
  const double s = sin_two_pi_over(theta);
  const double c = cos_two_pi_over(theta);
  const double psi_x = digamma(1.0 + delta + 2.0 / theta);
  const double numer = -2.0 * (2.0 + delta) * t4 * b - 8.0 * kPi * kPi * h * h * c / (s * s) -
                       8.0 * kPi * h * h * (psi_x - digamma(2.0 - 2.0 / theta) - theta) / s;
  d.d_theta = numer / (delta * (2.0 + delta) * h * h * t4 * b);
  d.d_delta = -2.0 / (h * delta * delta) -
              4.0 * kPi * (digamma(3.0 + delta) - psi_x - 2.0 * (1.0 + delta) / (2.0 * delta + delta * delta)) /
                  ((2.0 + delta) * delta * t2 * s * b);
  return d;
}

// The generic derivative formulas cancel catastrophically as theta -> 2
// (terms of order (theta - 2)^-2). Inside the window the derivative is the
// degree-6 interpolant through the exact theta = 2 value and generic values
// at theta = 2 +- k * window, k = 1..3, where cancellation is mild.
TauDerivs dtau_near_two(double theta, double delta) {
  constexpr int kNodes = 7;
  std::array<double, kNodes> eps{};
  std::array<TauDerivs, kNodes> val{};
  for (int k = 0; k < kNodes; ++k) {
    eps[k] = (k - 3) * kThetaTwoDerivWindow;
    if (k == 3) {
      val[k] = {dtau_dtheta_at_two(delta), dtau_ddelta_at_two(delta)};
    } else {
      val[k] = dtau_generic(2.0 + eps[k], delta);
    }
  }
  const double e = theta - 2.0;
  TauDerivs out;
  for (int k = 0; k < kNodes; ++k) {
    double weight = 1.0;
    for (int j = 0; j < kNodes; ++j) {
      if (j != k) weight *= (e - eps[j]) / (eps[k] - eps[j]);
    }
    out.d_theta += weight * val[k].d_theta;
    out.d_delta += weight * val[k].d_delta;
  }
  return out;
}

TauDerivs dtau(double theta, double delta) {
  if (std::fabs(theta - 2.0) < kThetaTwoDerivWindow) return dtau_near_two(theta, delta);
  return dtau_generic(theta, delta);
}

double tau_value(double theta, double delta) {
  if (std::fabs(theta - 2.0) < kThetaTwoWindow) return tau_at_two(delta);
  return tau_generic(theta, delta);
}

// Root-finding only needs a rough slope: the theta = 2 value stands in near
// the removable point, and the delta derivative is skipped.
double newton_slope(double theta, double delta) {
  if (std::fabs(theta - 2.0) < 1e-2) return dtau_dtheta_at_two(delta);
  const double h = theta - 2.0;
  const double t2 = theta * theta;
  const double t4 = t2 * t2;
  if (theta < 2.0) {
    const double z = (2.0 - theta) / theta;
    const double b = std::exp(log_beta(2.0 + delta, z));
    const double psi_mid = digamma(2.0 / theta + delta + 1.0);
    return -2.0 / (h * h * delta) - 8.0 * b * (theta + digamma(z) - psi_mid) / (t4 * delta);
  }
  const double b = std::exp(log_beta(1.0 + delta + 2.0 / theta, 2.0 - 2.0 / theta));
  const double s = sin_two_pi_over(theta);
  const double c = cos_two_pi_over(theta);
  const double psi_x = digamma(1.0 + delta + 2.0 / theta);
  const double numer = -2.0 * (2.0 + delta) * t4 * b - 8.0 * kPi * kPi * h * h * c / (s * s) -
                       8.0 * kPi * h * h * (psi_x - digamma(2.0 - 2.0 / theta) - theta) / s;
  return numer / (delta * (2.0 + delta) * h * h * t4 * b);
}

}  // namespace

void validate(const CopulaNatural& c) {
  if (!(c.theta >= 1.0) || !std::isfinite(c.theta)) throw DomainError("copula: theta must be >= 1");
  if (!(c.delta > 0.0) || !std::isfinite(c.delta)) throw DomainError("copula: delta must be > 0");
}

void validate(const CopulaFeatures& f) {
  if (!(f.lambda_l > 0.0 && f.lambda_l < 1.0)) throw DomainError("copula: lambda_L must lie in (0, 1)");
  if (!(f.tau > 0.0 && f.tau < 1.0)) throw DomainError("copula: tau must lie in (0, 1)");
  if (!is_feasible(f)) {
    throw InfeasibleError("copula: lambda_L exceeds 2^(1/2 - 1/(2 tau)) for tau = " + std::to_string(f.tau));
  }
}

UnitPair clamp_unit(UnitPair p) {
  p.u = std::clamp(p.u, kUnitClamp, 1.0 - kUnitClamp);
  p.v = std::clamp(p.v, kUnitClamp, 1.0 - kUnitClamp);
  return p;
}

double jc_cdf(UnitPair p, const CopulaNatural& c) {
  check_unit(p);
  validate(c);
  if (p.u == 0.0 || p.v == 0.0) return 0.0;
  if (p.u == 1.0) return p.v;
  if (p.v == 1.0) return p.u;
  const Intermediates m = intermediates(p.u, p.v, c.theta, c.delta);
  return -std::expm1(m.log_one_minus_w / c.theta);
}

double jc_conditional_cdf(UnitPair p, const CopulaNatural& c) {
  check_unit(p);
  if (p.v <= 0.0) return 0.0;
  if (p.v >= 1.0) return 1.0;
  const double u = std::clamp(p.u, kUnitClamp, 1.0 - kUnitClamp);
  const Intermediates m = intermediates(u, p.v, c.theta, c.delta);
  const double log_h = (1.0 / c.theta - 1.0) * m.log_one_minus_w - (1.0 / c.delta + 1.0) * m.log_l1 -
                       (c.delta + 1.0) * m.log_t1_u + (c.theta - 1.0) * m.log_b_u;
  return std::min(1.0, std::exp(log_h));
}

JcLogDensity jc_logpdf_full(UnitPair p, const CopulaNatural& c, bool with_gradients) {
  p = clamp_unit(p);
  const double theta = c.theta;
  const double delta = c.delta;
  const Intermediates m = intermediates(p.u, p.v, theta, delta);

  // K / L1^(1/delta) where K = (1 + delta) theta L1^(1/delta) - theta delta - 1.
  const double k_ratio = theta - 1.0 + (theta * delta + 1.0) * m.one_minus_w;
  JcLogDensity out;
  out.value = -(1.0 + delta) * (m.log_t1_u + m.log_t1_v) + (theta - 1.0) * (m.log_b_u + m.log_b_v) -
              2.0 * (1.0 + delta) / delta * m.log_l1 + (1.0 / theta - 2.0) * m.log_one_minus_w + m.x +
              std::log(k_ratio);
  if (!std::isfinite(out.value)) {
    out.value = kLogDensityFloor;
    out.overflow = true;
    return out;
  }
  if (!with_gradients) return out;

  const double w_ratio = m.w / m.one_minus_w;  // L1^(-1/delta) / (1 - L1^(-1/delta))
  const double tail_coef = 1.0 / theta - 2.0;

  // delta: dlogL1/ddelta is Delta1 / L1.
  const double dlogl_ddelta = -(m.share_u * m.log_t1_u + m.share_v * m.log_t1_v);
  const double dx_ddelta = dlogl_ddelta / delta - m.log_l1 / (delta * delta);
  out.d_delta = -(m.log_t1_u + m.log_t1_v) + 2.0 * m.log_l1 / (delta * delta) -
                2.0 * (1.0 + delta) * dlogl_ddelta / delta + tail_coef * w_ratio * dx_ddelta +
                theta * (m.one_minus_w + (1.0 + delta) * dx_ddelta) / k_ratio;

  // theta: dlogT1(s)/dtheta from the Delta2 terms.
  const double dlogt1_dtheta_u = -std::exp(theta * m.log_b_u - m.log_t1_u) * m.log_b_u;
  const double dlogt1_dtheta_v = -std::exp(theta * m.log_b_v - m.log_t1_v) * m.log_b_v;
  const double dlogl_dtheta = -delta * (m.share_u * dlogt1_dtheta_u + m.share_v * dlogt1_dtheta_v);
  out.d_theta = -(1.0 + delta) * (dlogt1_dtheta_u + dlogt1_dtheta_v) + (m.log_b_u + m.log_b_v) -
                2.0 * (1.0 + delta) * dlogl_dtheta / delta - m.log_one_minus_w / (theta * theta) +
                tail_coef * w_ratio * dlogl_dtheta / delta +
                ((1.0 + delta) * (1.0 + theta * dlogl_dtheta / delta) - delta * m.w) / k_ratio;

  // u and v by exchangeability (the Delta4 terms).
  auto d_unit = [&](double s, double log_b, double log_t1, double share) {
    const double dlogt1 = theta * std::exp((theta - 1.0) * log_b - log_t1);
    const double dlogl = -delta * share * dlogt1;
    return -(1.0 + delta) * dlogt1 - (theta - 1.0) / (1.0 - s) - 2.0 * (1.0 + delta) * dlogl / delta +
           tail_coef * w_ratio * dlogl / delta + theta * (1.0 + delta) * dlogl / (delta * k_ratio);
  };
  out.d_u = d_unit(p.u, m.log_b_u, m.log_t1_u, m.share_u);
  out.d_v = d_unit(p.v, m.log_b_v, m.log_t1_v, m.share_v);

  if (!std::isfinite(out.d_delta) || !std::isfinite(out.d_theta) || !std::isfinite(out.d_u) ||
      !std::isfinite(out.d_v)) {
    out.value = kLogDensityFloor;
    out.overflow = true;
  }
  return out;
}

double jc_logpdf(UnitPair p, const CopulaNatural& c) {
  check_unit(p);
  validate(c);
  return jc_logpdf_full(p, c, false).value;
}

NaturalGradient grad_logpdf_natural(UnitPair p, const CopulaNatural& c) {
  check_unit(p);
  validate(c);
  const JcLogDensity r = jc_logpdf_full(p, c, true);
  return {r.d_theta, r.d_delta};
}

UnitGradient grad_logpdf_u(UnitPair p, const CopulaNatural& c) {
  check_unit(p);
  validate(c);
  const JcLogDensity r = jc_logpdf_full(p, c, true);
  return {r.d_u, r.d_v};
}

double lambda_l_from_delta(double delta) {
  if (!(delta > 0.0)) throw DomainError("lambda_l_from_delta: delta must be > 0");
  return std::exp2(-1.0 / delta);
}

double lambda_u_from_theta(double theta) {
  if (!(theta >= 1.0)) throw DomainError("lambda_u_from_theta: theta must be >= 1");
  return 2.0 - std::exp2(1.0 / theta);
}

double delta_from_lambda_l(double lambda_l) {
  if (!(lambda_l > 0.0 && lambda_l < 1.0)) throw DomainError("delta_from_lambda_l: lambda_L must lie in (0, 1)");
  return -kLn2 / std::log(lambda_l);
}

double theta_from_lambda_u(double lambda_u) {
  if (!(lambda_u > 0.0 && lambda_u < 1.0)) throw DomainError("theta_from_lambda_u: lambda_U must lie in (0, 1)");
  return kLn2 / std::log(2.0 - lambda_u);
}

double dlambda_l_ddelta(double delta) {
  if (!(delta > 0.0)) throw DomainError("dlambda_l_ddelta: delta must be > 0");
  return std::exp2(-1.0 / delta) * kLn2 / (delta * delta);
}

TailDependence tail_maps(const CopulaNatural& c) {
  validate(c);
  return {lambda_l_from_delta(c.delta), lambda_u_from_theta(c.theta)};
}

double kendall_tau(const CopulaNatural& c) {
  validate(c);
  return tau_value(c.theta, c.delta);
}

double dtau_dtheta(const CopulaNatural& c) {
  validate(c);
  return dtau(c.theta, c.delta).d_theta;
}

double dtau_ddelta(const CopulaNatural& c) {
  validate(c);
  return dtau(c.theta, c.delta).d_delta;
}

TauGradient tau_gradient(double theta, double delta) {
  const TauDerivs d = dtau(theta, delta);
  return {d.d_theta, d.d_delta};
}

TauWithSlope kendall_tau_with_slope(double theta, double delta) {
  return {tau_value(theta, delta), dtau(theta, delta).d_theta};
}

double tau_lower_bound(double delta) { return delta / (delta + 2.0); }

double lambda_l_frontier(double tau) { return std::exp2(0.5 - 0.5 / tau); }

bool is_feasible(const CopulaFeatures& f) { return f.lambda_l <= lambda_l_frontier(f.tau); }

double theta_for_tau(double tau, double delta, double theta_hint, const TauGrid* grid) {
  if (!(delta > 0.0) || !std::isfinite(delta)) throw DomainError("theta_for_tau: delta must be > 0");
  if (!(tau < 1.0)) throw DomainError("theta_for_tau: tau must be < 1");
  const double tau_min = tau_lower_bound(delta);
  if (tau < tau_min - 1e-12) {
    throw InfeasibleError("theta_for_tau: tau below the attainable range for this lambda_L");
  }
  if (tau <= tau_min + 1e-15) return 1.0;

  double theta = theta_hint;
  if (!(theta >= 1.0) || !std::isfinite(theta)) {
    theta = std::numeric_limits<double>::quiet_NaN();
    if (grid != nullptr) {
      const double lu = grid->guess_lambda_u(lambda_l_from_delta(delta), tau);
      if (lu > 0.0 && lu < 1.0) theta = theta_from_lambda_u(lu);
    }
    if (!std::isfinite(theta)) theta = 2.0;
  }

  // Safeguarded Newton on f(theta) = tau(theta) - tau, f increasing; f(1) < 0.
  double lo = 1.0;
  double hi = std::numeric_limits<double>::infinity();
  constexpr double kThetaMax = 1e8;
  for (int iter = 0; iter < 200; ++iter) {
    const double f = tau_value(theta, delta) - tau;
    if (f < 0.0) {
      lo = theta;
    } else {
      hi = theta;
    }
    if (std::fabs(f) < 2e-15) return theta;
    double next = theta - f / newton_slope(theta, delta);
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      next = std::isfinite(hi) ? 0.5 * (lo + hi) : std::min(2.0 * lo, kThetaMax);
    }
    if (std::fabs(next - theta) <= 4e-15 * theta) return next;
    if (std::isfinite(hi) && hi - lo <= 1e-15 * hi) return 0.5 * (lo + hi);
    if (lo >= kThetaMax) throw DomainError("theta_for_tau: tau too close to 1");
    theta = next;
  }
  throw NumericalError("theta_for_tau: no convergence");
}

double tau_from_features(double lambda_l, double lambda_u) {
  return tau_value(theta_from_lambda_u(lambda_u), delta_from_lambda_l(lambda_l));
}

double tau_inverse_upper(double lambda_l, double tau, const TauGrid* grid) {
  if (!(tau > 0.0 && tau < 1.0)) throw DomainError("tau_inverse_upper: tau must lie in (0, 1)");
  const double theta = theta_for_tau(tau, delta_from_lambda_l(lambda_l), std::numeric_limits<double>::quiet_NaN(), grid);
  return lambda_u_from_theta(theta);
}

CopulaNatural to_natural(const CopulaFeatures& f, const TauGrid* grid) {
  validate(f);
  const double delta = delta_from_lambda_l(f.lambda_l);
  return {theta_for_tau(f.tau, delta, std::numeric_limits<double>::quiet_NaN(), grid), delta};
}

CopulaFeatures to_features(const CopulaNatural& c) {
  validate(c);
  return {lambda_l_from_delta(c.delta), tau_value(c.theta, c.delta)};
}

Rotation rotation_from_degrees(int degrees) {
  switch (degrees) {
    case 0:
      return Rotation::kNone;
    case 90:
      return Rotation::k90;
    case 180:
      return Rotation::k180;
    case 270:
      return Rotation::k270;
    default:
      throw DomainError("rotation must be one of 0, 90, 180, 270; got " + std::to_string(degrees));
  }
}

int rotation_degrees(Rotation r) { return static_cast<int>(r); }

UnitPair rotate(UnitPair p, Rotation r) {
  if (flips_u(r)) p.u = 1.0 - p.u;
  if (flips_v(r)) p.v = 1.0 - p.v;
  return p;
}

double jc_conditional_quantile(double u, double prob, const CopulaNatural& c) {
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("jc_conditional_quantile: prob must lie in (0, 1)");
  double lo = 0.0;
  double hi = 1.0;
  double v = prob;
  for (int iter = 0; iter < 300; ++iter) {
    const double h = jc_conditional_cdf({u, v}, c) - prob;
    if (h < 0.0) {
      lo = v;
    } else {
      hi = v;
    }
    if (std::fabs(h) <= 1e-15 * std::max(prob, 1e-300) || hi - lo <= 1e-15 * std::max(v, 1e-300)) return v;
    const double dens = std::exp(jc_logpdf_full({u, v}, c, false).value);
    double next = v - h / dens;
    if (!(next > lo && next < hi) || !std::isfinite(next)) {
      // Bisect geometrically near zero so tiny quantiles keep relative accuracy.
      next = lo > 0.0 ? std::sqrt(lo * hi) : 0.5 * hi;
      if (hi - lo > 0.25) next = 0.5 * (lo + hi);
    }
    if (std::fabs(next - v) <= 1e-15 * v) return next;
    v = next;
  }
  if (hi - lo <= 1e-9 * hi) return 0.5 * (lo + hi);
  throw NumericalError("jc_conditional_quantile: inversion did not converge");
}

std::vector<UnitPair> jc_sample(const CopulaNatural& c, std::size_t count, std::uint64_t seed) {
  validate(c);
  std::mt19937_64 rng(seed);
  auto uniform_open = [&rng]() { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; };
  std::vector<UnitPair> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    const double u = uniform_open();
    const double prob = uniform_open();
    out.push_back({u, jc_conditional_quantile(u, prob, c)});
  }
  return out;
}

}  // namespace cdcopula
