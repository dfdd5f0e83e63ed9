#include <cmath>
#include <random>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "doctest.h"

#include "cdcopula/copula.hpp"
#include "cdcopula/errors.hpp"
#include "cdcopula/links.hpp"
#include "cdcopula/priors.hpp"
#include "cdcopula/special_functions.hpp"

using namespace cdcopula;

namespace {
template <class F>
double fd5(F f, double x, double h) {
  return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h);
}
}  // namespace

TEST_CASE("link evaluation and inverses") {
  const LinkSpec g{LinkKind::kGlogit, 0.2, 1.0};
  CHECK(link_eval(g, 0.0) == doctest::Approx(0.6).epsilon(1e-15));
  const LinkSpec g01{LinkKind::kGlogit, 0.0, 1.0};
  const LinkSpec lo{LinkKind::kLogit};
  CHECK(link_eval(g01, 1.7) == doctest::Approx(link_eval(lo, 1.7)).epsilon(1e-15));
  CHECK(link_eval(lo, 1.7) == doctest::Approx(1.0 / (1.0 + std::exp(-1.7))).epsilon(1e-15));

  const LinkSpec lg{LinkKind::kLog};
  CHECK(link_jacobian(lg, 2.5) == doctest::Approx(0.4).epsilon(1e-15));
  CHECK(std::fabs(link_jacobian(lg, 2.5) - fd5([&](double v) { return link_forward(lg, v); }, 2.5, 1e-3)) < 1e-8);

  for (const LinkSpec s : {LinkSpec{LinkKind::kIdentity}, lg, lo, g, LinkSpec{LinkKind::kGlogit, -3.0, 5.0}}) {
    for (double eta : {-3.0, -0.4, 0.0, 1.1, 4.0}) {
      const double v = link_eval(s, eta);
      CHECK(link_forward(s, v) == doctest::Approx(eta).epsilon(1e-10));
      CHECK(link_eval_derivative(s, eta) == doctest::Approx(fd5([&](double e) { return link_eval(s, e); }, eta, 1e-3)).epsilon(1e-8));
      CHECK(link_jacobian(s, v) * link_eval_derivative(s, eta) == doctest::Approx(1.0).epsilon(1e-10));
    }
  }
  CHECK_THROWS_AS(link_forward(lg, -1.0), DomainError);
  CHECK_THROWS_AS(link_forward(g, 0.1), DomainError);
  CHECK_THROWS_AS(validate(LinkSpec{LinkKind::kGlogit, 1.0, 0.5}), DomainError);
  CHECK(link_kind_from_string(to_string(LinkKind::kGlogit)) == LinkKind::kGlogit);
}

TEST_CASE("conditional tau link") {
  CHECK(conditional_tau_lower_bound(0.5) == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(conditional_tau_lower_bound(1e-12) < 0.03);
  CHECK(conditional_tau_lower_bound(1e-300) < 1e-2);
  const LinkSpec s = conditional_tau_link(0.3);
  CHECK(s.kind == LinkKind::kGlogit);
  CHECK(s.b == 1.0);
  CHECK(s.a == doctest::Approx(special::kLn2 / (special::kLn2 - std::log(0.3))));

  double prev = 0.0;
  for (double l = 0.01; l < 1.0; l += 0.01) {
    const double a = conditional_tau_lower_bound(l);
    CHECK(a > prev);
    prev = a;
    const double fd = fd5([](double x) { return conditional_tau_lower_bound(x); }, l, 1e-5 * std::min(l, 1 - l));
    CHECK(conditional_tau_lower_bound_derivative(l) == doctest::Approx(fd).epsilon(1e-7));
  }

  // The bound lies at or above the Clayton-edge frontier tau = ln2 / (ln2 - 2 ln lambda).
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> ul(1e-4, 0.999), ue(-8.0, 8.0);
  for (int k = 0; k < 1000; ++k) {
    const double l = ul(rng);
    const double tau = link_eval(conditional_tau_link(l), ue(rng));
    CHECK(lambda_l_frontier(tau) >= l * (1.0 - 1e-12));
    CHECK(lambda_l_frontier(conditional_tau_lower_bound(l)) >= l);
    const double edge = special::kLn2 / (special::kLn2 - 2.0 * std::log(l));
    CHECK(lambda_l_frontier(edge) == doctest::Approx(l).epsilon(1e-12));
    CHECK(edge == doctest::Approx(tau_lower_bound(delta_from_lambda_l(l))).epsilon(1e-12));
  }
}

TEST_CASE("gBeta shapes and draws") {
  const GBetaSpec s{0.0, 1.0, 0.3, 0.2};
  const BetaShapes b = gbeta_shapes(s);
  const double mean = b.alpha1 / (b.alpha1 + b.alpha2);
  const double var = b.alpha1 * b.alpha2 / ((b.alpha1 + b.alpha2) * (b.alpha1 + b.alpha2) * (b.alpha1 + b.alpha2 + 1));
  CHECK(mean == doctest::Approx(0.3).epsilon(1e-14));
  CHECK(std::sqrt(var) == doctest::Approx(0.2).epsilon(1e-14));
  CHECK_THROWS_AS(gbeta_shapes({0.0, 1.0, 0.5, 0.5}), DomainError);
  CHECK_THROWS_AS(gbeta_shapes({0.0, 1.0, 1.5, 0.1}), DomainError);

  const GBetaSpec t{0.4, 2.0, 0.9, 0.25};
  std::mt19937_64 rng(2);
  const int n = 100000;
  double sum = 0.0, ss = 0.0;
  for (int k = 0; k < n; ++k) {
    const double x = gbeta_draw(t, rng);
    CHECK((x > t.a && x < t.b));
    sum += x;
    ss += x * x;
  }
  const double m = sum / n;
  const double sd = std::sqrt(ss / n - m * m);
  CHECK(std::fabs(m - t.m) < 3.0 * t.sigma / std::sqrt(n));
  // sd of the sample sd is about sigma / sqrt(2n) for near-normal shapes; allow kurtosis.
  CHECK(std::fabs(sd - t.sigma) < 3.0 * t.sigma / std::sqrt(n));
}

TEST_CASE("intercept prior moments") {
  const LinkSpec logit{LinkKind::kLogit};
  {
    const NormalMoments m = intercept_prior_moments(logit, {ElicitKind::kGBeta, 0.5, 0.1, 0.0, 1.0});
    CHECK(std::fabs(m.mean) < 1e-14);
  }
  {
    // Closed form: psi(a1) - psi(a2), psi1(a1) + psi1(a2).
    const ElicitedPrior e{ElicitKind::kGBeta, 0.3, 0.1, 0.0, 1.0};
    const NormalMoments m = intercept_prior_moments(logit, e);
    const BetaShapes b = gbeta_shapes({0.0, 1.0, 0.3, 0.1});
    CHECK(m.mean == doctest::Approx(boost::math::digamma(b.alpha1) - boost::math::digamma(b.alpha2)).epsilon(1e-12));
    CHECK(m.variance == doctest::Approx(boost::math::trigamma(b.alpha1) + boost::math::trigamma(b.alpha2)).epsilon(1e-12));
    // Monte Carlo of logit(X).
    std::mt19937_64 rng(3);
    const int n = 1000000;
    double s = 0.0, ss = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = gbeta_draw({0.0, 1.0, 0.3, 0.1}, rng);
      const double eta = std::log(x / (1 - x));
      s += eta;
      ss += eta * eta;
    }
    const double mc_mean = s / n, mc_var = ss / n - mc_mean * mc_mean;
    CHECK(std::fabs(m.mean - mc_mean) < 3.0 * std::sqrt(mc_var / n));
    CHECK(std::fabs(m.variance - mc_var) < 3.0 * mc_var * std::sqrt(2.0 / n) * 1.5);
    const NormalMoments q = intercept_prior_moments_quadrature(logit, e);
    CHECK(q.mean == doctest::Approx(m.mean).epsilon(1e-8));
    CHECK(q.variance == doctest::Approx(m.variance).epsilon(1e-8));
  }
  {
    const LinkSpec lg{LinkKind::kLog};
    const ElicitedPrior e{ElicitKind::kLogNormal, 1.0, 1.0};
    const NormalMoments m = intercept_prior_moments(lg, e);
    CHECK(m.mean == doctest::Approx(-std::log(2.0) / 2.0).epsilon(1e-14));
    CHECK(m.variance == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    std::mt19937_64 rng(4);
    std::lognormal_distribution<double> ln(m.mean, std::sqrt(m.variance));
    const int n = 200000;
    double s = 0.0, ss = 0.0;
    for (int k = 0; k < n; ++k) {
      const double x = ln(rng);
      s += x;
      ss += x * x;
    }
    CHECK(std::fabs(s / n - 1.0) < 3.0 * 1.0 / std::sqrt(n));
    const NormalMoments q = intercept_prior_moments_quadrature(lg, e);
    CHECK(q.mean == doctest::Approx(m.mean).epsilon(1e-8));
    CHECK(q.variance == doctest::Approx(m.variance).epsilon(1e-8));
  }
  {
    const ElicitedPrior e{ElicitKind::kGBeta, 0.5, 0.2, 0.365, 1.0};
    const LinkSpec gl{LinkKind::kGlogit, 0.365, 1.0};
    const NormalMoments m = intercept_prior_moments(gl, e);
    const NormalMoments q = intercept_prior_moments_quadrature(gl, e);
    CHECK(q.mean == doctest::Approx(m.mean).epsilon(1e-8));
    CHECK(q.variance == doctest::Approx(m.variance).epsilon(1e-8));
  }
  {
    const NormalMoments m = intercept_prior_moments(LinkSpec{LinkKind::kIdentity}, {ElicitKind::kNormal, 0.0, 1.0});
    CHECK(m.mean == 0.0);
    CHECK(m.variance == 1.0);
  }
  CHECK_THROWS_AS(intercept_prior_moments(logit, {ElicitKind::kGBeta, 0.3, 0.6, 0.0, 1.0}), DomainError);
}

TEST_CASE("slope prior") {
  SlopePrior p;
  p.c = 10.0;
  p.inclusion_prob = 0.5;
  const int d = 3;
  const double expect = -0.5 * d * std::log(2 * special::kPi * 100.0) + d * std::log(0.5);
  CHECK(slope_prior_logdensity(p, Eigen::VectorXd::Zero(d), {true, true, true}) == doctest::Approx(expect).epsilon(1e-14));

  // Identity precision: excluded coordinates do not shift the others.
  Eigen::VectorXd beta(2);
  beta << 0.7, 0.0;
  const ConditionalNormal c = slope_conditional_moments(p, beta, {true, false});
  CHECK(c.mean(0) == 0.0);
  CHECK(c.cov(0, 0) == doctest::Approx(100.0));

  // Correlated precision: compare with direct 2 x 2 conditioning.
  SlopePrior q;
  q.c = 2.0;
  q.precision.resize(2, 2);
  q.precision << 2.0, 0.8, 0.8, 1.0;
  const Eigen::Matrix2d sigma = q.c * q.c * q.precision.inverse();
  Eigen::VectorXd b(2);
  b << 0.0, 1.3;  // coordinate 1 excluded at a nonzero value
  const ConditionalNormal r = slope_conditional_moments(q, b, {true, false});
  CHECK(r.mean(0) == doctest::Approx(sigma(0, 1) / sigma(1, 1) * 1.3).epsilon(1e-12));
  CHECK(r.cov(0, 0) == doctest::Approx(sigma(0, 0) - sigma(0, 1) * sigma(0, 1) / sigma(1, 1)).epsilon(1e-12));

  Eigen::VectorXd b2(2);
  b2 << 0.4, -0.2;
  const double lp = slope_prior_logdensity(q, b2, {true, true});
  const double quad = b2.dot(sigma.inverse() * b2);
  const double ref = -std::log(2 * special::kPi) - 0.5 * std::log(sigma.determinant()) - 0.5 * quad + 2 * std::log(0.5);
  CHECK(lp == doctest::Approx(ref).epsilon(1e-12));

  SlopePrior bad;
  bad.precision = Eigen::MatrixXd::Identity(2, 2) * -1.0;
  CHECK_THROWS_AS(slope_prior_logdensity(bad, b2, {true, true}), DomainError);
}
