#include "cdcopula/priors.hpp"

#include <cmath>
#include <limits>

#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/quadrature/tanh_sinh.hpp>

#include "cdcopula/errors.hpp"
#include "cdcopula/special_functions.hpp"

namespace cdcopula {

using special::digamma;
using special::kPi;
using special::trigamma;

BetaShapes gbeta_shapes(const GBetaSpec& spec) {
  if (!(spec.a < spec.b)) throw DomainError("gBeta: need a < b");
  const double width = spec.b - spec.a;
  const double m = (spec.m - spec.a) / width;
  const double s = spec.sigma / width;
  if (!(m > 0.0 && m < 1.0)) throw DomainError("gBeta: mean outside the support");
  const double var = s * s;
  if (!(var > 0.0) || var >= m * (1.0 - m)) {
    throw DomainError("gBeta: variance must be below m(1 - m) on the standardized scale");
  }
  const double k = m * (1.0 - m) / var - 1.0;
  return {m * k, (1.0 - m) * k};
}

double gbeta_draw(const GBetaSpec& spec, std::mt19937_64& rng) {
  const BetaShapes sh = gbeta_shapes(spec);
  std::gamma_distribution<double> g1(sh.alpha1, 1.0);
  std::gamma_distribution<double> g2(sh.alpha2, 1.0);
  const double x1 = g1(rng);
  const double x2 = g2(rng);
  return spec.a + (spec.b - spec.a) * x1 / (x1 + x2);
}

namespace {

GBetaSpec as_gbeta(const ElicitedPrior& p) { return {p.a, p.b, p.m, p.sigma}; }

void check_elicited(const ElicitedPrior& p) {
  if (!(p.sigma > 0.0)) throw DomainError("elicited prior: sigma must be positive");
  if (p.kind == ElicitKind::kLogNormal && !(p.m > 0.0)) throw DomainError("log-normal prior: mean must be positive");
  if (p.kind == ElicitKind::kGBeta) gbeta_shapes(as_gbeta(p));
}

}  // namespace

NormalMoments intercept_prior_moments_quadrature(const LinkSpec& link, const ElicitedPrior& prior) {
  check_elicited(prior);
  double e1 = 0.0;
  double e2 = 0.0;
  if (prior.kind == ElicitKind::kGBeta) {
    const BetaShapes sh = gbeta_shapes(as_gbeta(prior));
    boost::math::quadrature::tanh_sinh<double> integrator;
    auto moment = [&](int power) {
      return integrator.integrate(
          [&](double t, double tc) {
            // tc is the distance to the nearer endpoint, which keeps log(1 - t) accurate near 1.
            const double one_minus_t = t > 0.5 ? tc : 1.0 - t;
            const double x = t > 0.5 ? prior.b - (prior.b - prior.a) * one_minus_t : prior.a + (prior.b - prior.a) * t;
            const double dens = std::exp((sh.alpha1 - 1.0) * std::log(t) + (sh.alpha2 - 1.0) * std::log(one_minus_t) -
                                         special::log_beta(sh.alpha1, sh.alpha2));
            if (dens == 0.0) return 0.0;
            // On a matching support the (g)logit is log(t / (1 - t)) exactly,
            // even where x itself rounds onto an endpoint.
            const bool same_support = (link.kind == LinkKind::kLogit && prior.a == 0.0 && prior.b == 1.0) ||
                                      (link.kind == LinkKind::kGlogit && prior.a == link.a && prior.b == link.b);
            const double eta = same_support ? std::log(t) - std::log(one_minus_t) : link_forward(link, x);
            return std::pow(eta, power) * dens;
          },
          0.0, 1.0);
    };
    e1 = moment(1);
    e2 = moment(2);
  } else {
    // X = g(z), z standard normal; g is the identity or exp of a normal.
    double loc = prior.m;
    double scale = prior.sigma;
    if (prior.kind == ElicitKind::kLogNormal) {
      const double s2 = std::log(prior.sigma * prior.sigma / (prior.m * prior.m) + 1.0);
      loc = std::log(prior.m) - 0.5 * s2;
      scale = std::sqrt(s2);
    }
    boost::math::quadrature::sinh_sinh<double> integrator;
    auto moment = [&](int power) {
      return integrator.integrate([&](double z) {
        const double phi = std::exp(-0.5 * z * z) / std::sqrt(2.0 * kPi);
        if (phi == 0.0) return 0.0;
        const double y = loc + scale * z;
        const double x = prior.kind == ElicitKind::kLogNormal ? std::exp(y) : y;
        return std::pow(link_forward(link, x), power) * phi;
      });
    };
    e1 = moment(1);
    e2 = moment(2);
  }
  return {e1, e2 - e1 * e1};
}

NormalMoments intercept_prior_moments(const LinkSpec& link, const ElicitedPrior& prior) {
  check_elicited(prior);
  validate(link);
  if (link.kind == LinkKind::kIdentity && prior.kind == ElicitKind::kNormal) {
    return {prior.m, prior.sigma * prior.sigma};
  }
  if (link.kind == LinkKind::kLog && prior.kind == ElicitKind::kLogNormal) {
    const double s2 = std::log(prior.sigma * prior.sigma / (prior.m * prior.m) + 1.0);
    return {std::log(prior.m) - 0.5 * s2, s2};
  }
  if (prior.kind == ElicitKind::kGBeta) {
    const bool logit_match = link.kind == LinkKind::kLogit && prior.a == 0.0 && prior.b == 1.0;
    const bool glogit_match = link.kind == LinkKind::kGlogit && prior.a == link.a && prior.b == link.b;
    if (logit_match || glogit_match) {
      const BetaShapes sh = gbeta_shapes(as_gbeta(prior));
      return {digamma(sh.alpha1) - digamma(sh.alpha2), trigamma(sh.alpha1) + trigamma(sh.alpha2)};
    }
  }
  return intercept_prior_moments_quadrature(link, prior);
}

double normal_logpdf(double x, const NormalMoments& m) {
  const double d = x - m.mean;
  return -0.5 * (std::log(2.0 * kPi * m.variance) + d * d / m.variance);
}

namespace {

Eigen::MatrixXd slope_covariance(const SlopePrior& prior, Eigen::Index d) {
  if (prior.precision.size() == 0) return Eigen::MatrixXd::Identity(d, d) * (prior.c * prior.c);
  if (prior.precision.rows() != d || prior.precision.cols() != d) {
    throw DimensionError("slope prior: precision matrix has wrong dimension");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(prior.precision);
  if (llt.info() != Eigen::Success) throw DomainError("slope prior: precision matrix is not positive definite");
  return llt.solve(Eigen::MatrixXd::Identity(d, d)) * (prior.c * prior.c);
}

}  // namespace

ConditionalNormal slope_conditional_moments(const SlopePrior& prior, const Eigen::VectorXd& beta,
                                            const std::vector<bool>& included) {
  const Eigen::Index d = beta.size();
  if (static_cast<Eigen::Index>(included.size()) != d) throw DimensionError("slope prior: indicator length mismatch");
  const Eigen::MatrixXd sigma = slope_covariance(prior, d);
  std::vector<Eigen::Index> in;
  std::vector<Eigen::Index> out;
  for (Eigen::Index j = 0; j < d; ++j) (included[j] ? in : out).push_back(j);
  const auto ni = static_cast<Eigen::Index>(in.size());
  const auto no = static_cast<Eigen::Index>(out.size());
  ConditionalNormal r;
  r.mean = Eigen::VectorXd::Zero(ni);
  r.cov = sigma(in, in);
  if (no > 0 && ni > 0) {
    const Eigen::MatrixXd s_oo = sigma(out, out);
    const Eigen::MatrixXd s_io = sigma(in, out);
    Eigen::LLT<Eigen::MatrixXd> llt(s_oo);
    if (llt.info() != Eigen::Success) throw DomainError("slope prior: covariance is not positive definite");
    Eigen::VectorXd beta_out(no);
    for (Eigen::Index k = 0; k < no; ++k) beta_out(k) = beta(out[k]);
    r.mean = s_io * llt.solve(beta_out);
    r.cov -= s_io * llt.solve(s_io.transpose());
  }
  return r;
}

double slope_prior_logdensity(const SlopePrior& prior, const Eigen::VectorXd& beta,
                              const std::vector<bool>& included) {
  const double p = prior.inclusion_prob;
  if (!(p > 0.0 && p < 1.0)) throw DomainError("slope prior: inclusion probability must lie in (0, 1)");
  double lp = 0.0;
  Eigen::Index ni = 0;
  for (bool b : included) {
    lp += b ? std::log(p) : std::log1p(-p);
    ni += b ? 1 : 0;
  }
  if (ni == 0) {
    if (static_cast<Eigen::Index>(included.size()) != beta.size()) {
      throw DimensionError("slope prior: indicator length mismatch");
    }
    return lp;
  }
  const ConditionalNormal cn = slope_conditional_moments(prior, beta, included);
  Eigen::VectorXd x(ni);
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < beta.size(); ++j) {
    if (included[j]) x(k++) = beta(j);
  }
  Eigen::LLT<Eigen::MatrixXd> llt(cn.cov);
  if (llt.info() != Eigen::Success) throw DomainError("slope prior: conditional covariance is not positive definite");
  const Eigen::VectorXd dev = x - cn.mean;
  const Eigen::VectorXd z = llt.matrixL().solve(dev);
  const double log_det = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  lp += -0.5 * (static_cast<double>(ni) * std::log(2.0 * kPi) + log_det + z.squaredNorm());
  return lp;
}

}  // namespace cdcopula
