#include "cdcopula/split_t.hpp"

#include <cmath>
#include <limits>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/gauss_kronrod.hpp>

#include "cdcopula/errors.hpp"
#include "cdcopula/special_functions.hpp"

namespace cdcopula {

using special::digamma;
using special::log_beta;
using special::reg_inc_beta;

void validate(const SplitTParams& p) {
  if (!std::isfinite(p.mu)) throw DomainError("split-t: mu must be finite");
  if (!(p.phi > 0.0) || !std::isfinite(p.phi)) throw DomainError("split-t: phi must be positive");
  if (!(p.nu > 0.0) || !std::isfinite(p.nu)) throw DomainError("split-t: nu must be positive");
  if (!(p.kappa > 0.0) || !std::isfinite(p.kappa)) throw DomainError("split-t: kappa must be positive");
}

namespace {

struct Pieces {
  double d = 0.0;      // y - mu
  double scale = 0.0;  // I * phi
  double z = 0.0;      // d / scale
  double log_norm = 0.0;
  double log1p_z2 = 0.0;  // log(1 + z^2 / nu)
  bool right = false;
};

Pieces pieces(double y, const SplitTParams& p) {
  Pieces r;
  r.d = y - p.mu;
  r.right = r.d > 0.0;
  r.scale = (r.right ? p.kappa : 1.0) * p.phi;
  r.z = r.d / r.scale;
  r.log_norm = std::log(2.0) - std::log1p(p.kappa) - std::log(p.phi) - 0.5 * std::log(p.nu) - log_beta(0.5 * p.nu, 0.5);
  r.log1p_z2 = std::log1p(r.z * r.z / p.nu);
  return r;
}

// A = nu / (nu + z^2), written so that 1 - A keeps relative accuracy.
double a_arg(double z, double nu) { return nu / (nu + z * z); }
double one_minus_a(double z, double nu) { return z * z / (nu + z * z); }

// I_A(nu/2, 1/2), evaluated through the complement when A is close to 1.
double tail_mass(double z, double nu) {
  const double a = a_arg(z, nu);
  if (a > 0.5) return 1.0 - reg_inc_beta(one_minus_a(z, nu), 0.5, 0.5 * nu);
  return reg_inc_beta(a, 0.5 * nu, 0.5);
}

// d/d nu of the standard Student-t density t_nu(s).
double dt_dnu(double s, double nu, double psi_term, double log_norm_t) {
  const double s2 = s * s;
  const double l = std::log1p(s2 / nu);
  const double logt = log_norm_t - 0.5 * (nu + 1.0) * l;
  const double score = -0.5 / nu + psi_term - 0.5 * l + 0.5 * (nu + 1.0) * s2 / (nu * (nu + s2));
  return std::exp(logt) * score;
}

// Integral of d t_nu / d nu over [0, a].
double integral_dt_dnu(double a, double nu) {
  const double psi_term = 0.5 * (digamma(0.5 * (nu + 1.0)) - digamma(0.5 * nu));
  const double log_norm_t = -0.5 * std::log(nu) - log_beta(0.5 * nu, 0.5);
  auto g = [&](double s) { return dt_dnu(s, nu, psi_term, log_norm_t); };
  if (a <= 4.0) {
    // Smooth integrand; the score carries cancellation noise near 1e-16/|score|, so
    // deep adaptive refinement only chases rounding.
    return boost::math::quadrature::gauss_kronrod<double, 31>::integrate(g, 0.0, a, 3, 1e-11);
  }
  // The integral over the whole half line is zero (t_nu integrates to 1/2 there).
  boost::math::quadrature::exp_sinh<double> integrator(6);
  return -integrator.integrate(g, a, std::numeric_limits<double>::infinity(), 1e-11);
}

}  // namespace

double split_t_logpdf(double y, const SplitTParams& p) {
  validate(p);
  const Pieces r = pieces(y, p);
  return r.log_norm - 0.5 * (p.nu + 1.0) * r.log1p_z2;
}

SplitTLogpdfGrad split_t_logpdf_grad(double y, const SplitTParams& p) {
  validate(p);
  const Pieces r = pieces(y, p);
  const double nu = p.nu;
  const double z2 = r.z * r.z;
  const double w = (nu + 1.0) * z2 / (nu + z2);
  SplitTLogpdfGrad g;
  g.value = r.log_norm - 0.5 * (nu + 1.0) * r.log1p_z2;
  g.d_mu = (nu + 1.0) * r.z / ((nu + z2) * r.scale);
  g.d_phi = (w - 1.0) / p.phi;
  g.d_kappa = -1.0 / (1.0 + p.kappa) + (r.right ? w / p.kappa : 0.0);
  g.d_nu = -0.5 / nu - 0.5 * digamma(0.5 * nu) + 0.5 * digamma(0.5 * (nu + 1.0)) - 0.5 * r.log1p_z2 + 0.5 * w / nu;
  return g;
}

double split_t_cdf(double y, const SplitTParams& p) {
  validate(p);
  const Pieces r = pieces(y, p);
  const double mass = tail_mass(r.z, p.nu);
  if (!r.right) return mass / (1.0 + p.kappa);
  return 1.0 - p.kappa / (1.0 + p.kappa) * mass;
}

double split_t_quantile(double prob, const SplitTParams& p) {
  validate(p);
  if (!(prob > 0.0 && prob < 1.0)) throw DomainError("split_t_quantile: prob must lie in (0, 1)");
  const boost::math::students_t_distribution<double> t(p.nu);
  const double left_mass = 1.0 / (1.0 + p.kappa);
  if (prob <= left_mass) {
    // F = 2 T(z) / (1 + kappa)
    return p.mu + p.phi * boost::math::quantile(t, 0.5 * prob * (1.0 + p.kappa));
  }
  // 1 - F = 2 kappa (1 - T(z)) / (1 + kappa)
  const double upper = 0.5 * (1.0 - prob) * (1.0 + p.kappa) / p.kappa;
  return p.mu + p.kappa * p.phi * boost::math::quantile(boost::math::complement(t, upper));
}

bool hypergeometric_3f2(double a, double x, double& result, int max_terms) {
  double term = 1.0;
  double sum = 1.0;
  for (int k = 0; k < max_terms; ++k) {
    const double kk = static_cast<double>(k);
    const double r = (a + kk) / (a + 1.0 + kk);
    term *= r * r * (0.5 + kk) / (kk + 1.0) * x;
    sum += term;
    if (std::fabs(term) <= 1e-14 * std::fabs(sum)) {
      result = sum;
      return true;
    }
  }
  result = sum;
  return false;
}

SplitTCdfGrad split_t_cdf_grads(double y, const SplitTParams& p, NuGradientMethod method, bool with_nu) {
  validate(p);
  const Pieces r = pieces(y, p);
  const double nu = p.nu;
  const double dens = std::exp(r.log_norm - 0.5 * (nu + 1.0) * r.log1p_z2);
  const double mass = tail_mass(r.z, nu);
  const double k1 = 1.0 + p.kappa;

  SplitTCdfGrad g;
  g.cdf = r.right ? 1.0 - p.kappa / k1 * mass : mass / k1;
  g.d_mu = -dens;
  g.d_phi = -(r.d / p.phi) * dens;
  g.d_kappa = -mass / (k1 * k1) - (r.right ? (r.d / p.kappa) * dens : 0.0);
  if (!with_nu) return g;

  // Branch weight: F = w0 + sign * weight * I_A with d F / d nu = sign * weight * d I_A / d nu.
  const double weight = r.right ? -p.kappa / k1 : 1.0 / k1;
  const double a = a_arg(r.z, nu);
  const double oma = one_minus_a(r.z, nu);

  bool use_integral = method == NuGradientMethod::kIntegral;
  double series = 0.0;
  if (method == NuGradientMethod::kAuto) {
    use_integral = nu > kNuFallbackAbove || a > kNuSeriesMaxA;
  }
  if (!use_integral) {
    const bool ok = hypergeometric_3f2(0.5 * nu, a, series);
    if (!ok && method == NuGradientMethod::kAuto) use_integral = true;
  }
  if (!use_integral) {
    const double lb = log_beta(0.5 * nu, 0.5);
    const double a_pow = std::exp(0.5 * nu * std::log(a) - lb);  // A^(nu/2) / B
    const double d_mass = 0.5 * mass * (std::log(a) - digamma(0.5 * nu) + digamma(0.5 * (nu + 1.0))) -
                          2.0 * a_pow * series / (nu * nu) + a_pow * std::sqrt(oma) / nu;
    g.d_nu = weight * d_mass;
    g.nu_fallback = false;
  } else {
    // F(mu) = 1/(1 + kappa) does not move with nu, so d F / d nu integrates d f / d nu from mu to y.
    const double inner = integral_dt_dnu(std::fabs(r.z), nu);
    g.d_nu = r.right ? 2.0 * p.kappa / k1 * inner : -2.0 / k1 * inner;
    g.nu_fallback = true;
  }
  return g;
}

}  // namespace cdcopula
