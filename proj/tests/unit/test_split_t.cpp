#include <cmath>
#include <random>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/quadrature/sinh_sinh.hpp>
#include <boost/math/special_functions/hypergeometric_pFq.hpp>

#include "doctest.h"

#include "cdcopula/errors.hpp"
#include "cdcopula/model.hpp"
#include "cdcopula/special_functions.hpp"
#include "cdcopula/split_t.hpp"

using namespace cdcopula;

namespace {

bool close_rel(double a, double b, double rel, double floor = 1e-9) {
  return std::fabs(a - b) <= rel * std::max(std::fabs(b), floor / rel);
}

template <class F>
double fd5(F f, double x, double h) {
  return (f(x - 2 * h) - 8 * f(x - h) + 8 * f(x + h) - f(x + 2 * h)) / (12 * h);
}

struct CdfFd {
  double mu, phi, kappa, nu;
};

CdfFd cdf_fd(double y, const SplitTParams& p) {
  auto at = [&](SplitTParams q) { return split_t_cdf(y, q); };
  CdfFd r{};
  r.mu = fd5([&](double x) { SplitTParams q = p; q.mu = x; return at(q); }, p.mu, 1e-4);
  r.phi = fd5([&](double x) { SplitTParams q = p; q.phi = x; return at(q); }, p.phi, 1e-4 * p.phi);
  r.kappa = fd5([&](double x) { SplitTParams q = p; q.kappa = x; return at(q); }, p.kappa, 1e-4 * p.kappa);
  r.nu = fd5([&](double x) { SplitTParams q = p; q.nu = x; return at(q); }, p.nu, 1e-4 * p.nu);
  return r;
}

}  // namespace

TEST_CASE("log density: symmetry, normalisation, mode") {
  const SplitTParams s{0.2, 0.8, 5.0, 1.0};
  CHECK(split_t_logpdf(0.2 + 1.3, s) == doctest::Approx(split_t_logpdf(0.2 - 1.3, s)).epsilon(1e-14));

  for (const SplitTParams p : {SplitTParams{0.0, 1.0, 4.0, 2.0}, SplitTParams{-1.0, 0.3, 1.5, 0.4}}) {
    boost::math::quadrature::sinh_sinh<double> ss;
    const double mass = ss.integrate([&](double y) { return std::exp(split_t_logpdf(y, p)); }, 1e-12);
    CHECK(mass == doctest::Approx(1.0).epsilon(1e-6));
    CHECK(split_t_logpdf(p.mu, p) >= split_t_logpdf(p.mu + 1e-3, p));
    CHECK(split_t_logpdf(p.mu, p) >= split_t_logpdf(p.mu - 1e-3, p));
  }
  CHECK_THROWS_AS(split_t_logpdf(0.0, {0.0, -1.0, 5.0, 1.0}), DomainError);
  CHECK_THROWS_AS(split_t_logpdf(0.0, {0.0, 1.0, 0.0, 1.0}), DomainError);
  CHECK_THROWS_AS(split_t_logpdf(0.0, {0.0, 1.0, 5.0, -1.0}), DomainError);
}

TEST_CASE("log density gradient") {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> yy(-4, 4), mu(-1, 1), lg(-1, 1), nu(0.7, 40);
  for (int k = 0; k < 100; ++k) {
    const SplitTParams p{mu(rng), std::exp(lg(rng)), nu(rng), std::exp(lg(rng))};
    const double y = yy(rng);
    const SplitTLogpdfGrad g = split_t_logpdf_grad(y, p);
    CHECK(g.value == doctest::Approx(split_t_logpdf(y, p)).epsilon(1e-13));
    auto lp = [&](SplitTParams q) { return split_t_logpdf(y, q); };
    CHECK(close_rel(g.d_mu, fd5([&](double x) { SplitTParams q = p; q.mu = x; return lp(q); }, p.mu, 1e-4), 1e-6));
    CHECK(close_rel(g.d_phi, fd5([&](double x) { SplitTParams q = p; q.phi = x; return lp(q); }, p.phi, 1e-4 * p.phi), 1e-6));
    CHECK(close_rel(g.d_nu, fd5([&](double x) { SplitTParams q = p; q.nu = x; return lp(q); }, p.nu, 1e-4 * p.nu), 1e-6));
    CHECK(close_rel(g.d_kappa, fd5([&](double x) { SplitTParams q = p; q.kappa = x; return lp(q); }, p.kappa, 1e-4 * p.kappa), 1e-6));
  }
}

TEST_CASE("CDF reference values") {
  CHECK(split_t_cdf(0.0, {0.0, 1.0, 5.0, 3.0}) == doctest::Approx(0.25).epsilon(1e-14));
  CHECK(split_t_cdf(1.0, {1.0, 2.0, 3.0, 1.0}) == doctest::Approx(0.5).epsilon(1e-14));
  const SplitTParams p{0.3, 1.2, 4.0, 1.7};
  const double far = split_t_cdf(p.mu + 1e6 * p.phi, p);
  CHECK(far < 1.0 + 1e-15);
  CHECK(1.0 - far < 1e-9);
  // Left-branch mass by quadrature.
  boost::math::quadrature::exp_sinh<double> es;
  const SplitTParams q{0.0, 1.0, 5.0, 3.0};
  const double left = es.integrate([&](double t) { return std::exp(split_t_logpdf(-t, q)); }, 0.0, INFINITY);
  CHECK(left == doctest::Approx(0.25).epsilon(1e-9));
}

TEST_CASE("CDF derivative in y is the density; CDF is monotone") {
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> yy(-5, 5), mu(-1, 1), lg(-1, 1), nu(0.7, 60);
  for (int k = 0; k < 100; ++k) {
    const SplitTParams p{mu(rng), std::exp(lg(rng)), nu(rng), std::exp(lg(rng))};
    const double y = yy(rng);
    const double fd = fd5([&](double x) { return split_t_cdf(x, p); }, y, 1e-4);
    CHECK(close_rel(fd, std::exp(split_t_logpdf(y, p)), 1e-5));
  }
  const SplitTParams p{0.1, 0.9, 3.0, 0.6};
  double prev = 0.0;
  for (double y = -20; y <= 20; y += 0.05) {
    const double f = split_t_cdf(y, p);
    CHECK(f >= prev);
    prev = f;
  }
}

TEST_CASE("sub-family collapses") {
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> yy(-6, 6), nu(0.5, 80);
  for (int k = 0; k < 100; ++k) {
    const double n = nu(rng), y = yy(rng);
    const boost::math::students_t_distribution<double> t(n);
    CHECK(std::fabs(split_t_cdf(0.4 + 1.3 * y, {0.4, 1.3, n, 1.0}) - boost::math::cdf(t, y)) < 1e-10);
  }
  // nu -> infinity: split normal, scale 1 left and kappa right.
  const boost::math::normal_distribution<double> z;
  for (double y : {-2.0, -0.5, 0.7, 2.2}) {
    const double kappa = 1.8;
    const double ref = y < 0 ? 2.0 / (1.0 + kappa) * boost::math::cdf(z, y)
                             : 1.0 - 2.0 * kappa / (1.0 + kappa) * boost::math::cdf(boost::math::complement(z, y / kappa));
    CHECK(std::fabs(split_t_cdf(y, {0.0, 1.0, 1e6, kappa}) - ref) < 1e-4);
  }
}

TEST_CASE("quantile inverts the CDF") {
  const SplitTParams p{-0.2, 1.4, 3.5, 0.7};
  for (double q : {1e-6, 0.01, 0.3, 0.5, 0.77, 0.999}) {
    CHECK(split_t_cdf(split_t_quantile(q, p), p) == doctest::Approx(q).epsilon(1e-10));
  }
  CHECK_THROWS_AS(split_t_quantile(0.0, p), DomainError);
}

TEST_CASE("CDF gradients match finite differences") {
  {
    const SplitTParams p{0.0, 1.0, 6.0, 1.5};
    const SplitTCdfGrad g = split_t_cdf_grads(0.7, p);
    const CdfFd fd = cdf_fd(0.7, p);
    CHECK(close_rel(g.d_mu, fd.mu, 1e-5));
    CHECK(close_rel(g.d_phi, fd.phi, 1e-5));
    CHECK(close_rel(g.d_kappa, fd.kappa, 1e-5));
    CHECK(close_rel(g.d_nu, fd.nu, 1e-5));
  }
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> yy(-6, 6), mu(-1, 1), lg(-1, 1), nu(0.8, 120);
  for (int k = 0; k < 150; ++k) {
    const SplitTParams p{mu(rng), std::exp(lg(rng)), nu(rng), std::exp(lg(rng))};
    const double y = yy(rng);
    const SplitTCdfGrad g = split_t_cdf_grads(y, p);
    const CdfFd fd = cdf_fd(y, p);
    INFO("y " << y << " mu " << p.mu << " phi " << p.phi << " nu " << p.nu << " kappa " << p.kappa);
    CHECK(g.cdf == doctest::Approx(split_t_cdf(y, p)).epsilon(1e-14));
    CHECK(close_rel(g.d_mu, fd.mu, 1e-5));
    CHECK(close_rel(g.d_phi, fd.phi, 1e-5));
    CHECK(close_rel(g.d_kappa, fd.kappa, 1e-5));
    CHECK(close_rel(g.d_nu, fd.nu, 1e-5));
    CHECK(g.d_mu < 0.0);
  }
  for (double y : {-2.0, 0.0, 2.0}) CHECK(split_t_cdf_grads(y, {0.0, 1.0, 4.0, 1.3}).d_mu < 0.0);
}

TEST_CASE("kappa derivative at the mode") {
  const SplitTParams p{0.5, 1.0, 5.0, 1.0};
  const SplitTCdfGrad g = split_t_cdf_grads(0.5, p);
  // A = 1 at the mode, so the left-branch value is -I_1(nu/2, 1/2)/4 = -1/4.
  CHECK(g.d_kappa == doctest::Approx(-special::reg_inc_beta(1.0, 2.5, 0.5) / 4.0).epsilon(1e-12));
  const double h = 1e-7;
  const double one_sided = (split_t_cdf(0.5, {0.5, 1.0, 5.0, 1.0 + h}) - split_t_cdf(0.5, p)) / h;
  CHECK(g.d_kappa == doctest::Approx(one_sided).epsilon(1e-5));
}

TEST_CASE("nu derivative: closed form and integral agree where both are stable") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> yy(-8, 8), lg(-0.7, 0.7), nu(1.0, 40);
  int compared = 0;
  for (int k = 0; k < 400 && compared < 100; ++k) {
    const SplitTParams p{0.0, std::exp(lg(rng)), nu(rng), std::exp(lg(rng))};
    const double y = yy(rng);
    const double i2 = (y > 0 ? p.kappa * p.kappa : 1.0) * p.nu * p.phi * p.phi;
    const double a = i2 / (y * y + i2);
    if (a > 0.9) continue;
    const SplitTCdfGrad closed = split_t_cdf_grads(y, p, NuGradientMethod::kClosedForm);
    const SplitTCdfGrad integ = split_t_cdf_grads(y, p, NuGradientMethod::kIntegral);
    CHECK_FALSE(closed.nu_fallback);
    CHECK(integ.nu_fallback);
    CHECK(close_rel(closed.d_nu, integ.d_nu, 1e-4));
    ++compared;
  }
  CHECK(compared == 100);
  // Large nu takes the integral automatically.
  CHECK(split_t_cdf_grads(1.0, {0.0, 1.0, 80.0, 1.0}).nu_fallback);
}

TEST_CASE("3F2 series against boost") {
  for (double a : {0.6, 2.5, 11.0}) {
    for (double x : {0.1, 0.5, 0.9}) {
      double r = 0.0;
      REQUIRE(hypergeometric_3f2(a, x, r));
      const double ref = boost::math::hypergeometric_pFq({0.5, a, a}, {a + 1.0, a + 1.0}, x);
      CHECK(r == doctest::Approx(ref).epsilon(1e-12));
    }
  }
}

TEST_CASE("margin log-likelihood gradient through the links") {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> z;
  const int n = 200;
  Eigen::VectorXd y(n);
  Eigen::MatrixXd x(n, 2);
  const SplitTParams truth{0.1, 1.2, 6.0, 1.3};
  std::uniform_real_distribution<double> un(0.0, 1.0);
  for (int i = 0; i < n; ++i) {
    y(i) = split_t_quantile(un(rng), truth);
    x(i, 0) = z(rng);
    x(i, 1) = z(rng);
  }
  std::array<ParamBlock, 4> blocks;
  const double b0[4] = {0.05, std::log(1.1), std::log(5.0), std::log(1.2)};
  for (int k = 0; k < 4; ++k) {
    blocks[k].beta0 = b0[k];
    blocks[k].beta = Eigen::VectorXd::Zero(2);
    blocks[k].included = {true, true};
  }
  blocks[0].beta(0) = 0.1;
  blocks[1].beta(1) = -0.2;
  const MarginLoglik m = margin_loglik_and_grad(y, x, blocks);
  for (int k = 0; k < 4; ++k) {
    for (int j = 0; j < 3; ++j) {
      auto f = [&](double v) {
        auto b = blocks;
        if (j == 0) b[k].beta0 = v; else b[k].beta(j - 1) = v;
        return margin_loglik_and_grad(y, x, b).loglik;
      };
      const double at = j == 0 ? blocks[k].beta0 : blocks[k].beta(j - 1);
      CHECK(close_rel(m.grad[k](j), fd5(f, at, 1e-4), 1e-5, 1e-6));
    }
  }

  // A duplicated covariate column duplicates its gradient coordinate.
  Eigen::MatrixXd x3(n, 3);
  x3 << x, x.col(0);
  auto b3 = blocks;
  for (auto& b : b3) {
    b.beta.conservativeResize(3);
    b.beta(2) = 0.0;
    b.included.push_back(true);
  }
  const MarginLoglik m3 = margin_loglik_and_grad(y, x3, b3);
  for (int k = 0; k < 4; ++k) CHECK(m3.grad[k](3) == doctest::Approx(m3.grad[k](1)).epsilon(1e-14));

  Eigen::MatrixXd bad(n - 1, 2);
  CHECK_THROWS_AS(margin_loglik_and_grad(y, bad, blocks), DimensionError);
}

TEST_CASE("score is small at the data-generating coefficients") {
  std::mt19937_64 rng(7);
  std::normal_distribution<double> z;
  std::uniform_real_distribution<double> un(0.0, 1.0);
  const int n = 50000;
  Eigen::MatrixXd x(n, 2);
  Eigen::VectorXd y(n);
  std::array<ParamBlock, 4> blocks;
  const double b0[4] = {0.1, std::log(1.0), std::log(8.0), std::log(0.8)};
  for (int k = 0; k < 4; ++k) {
    blocks[k].beta0 = b0[k];
    blocks[k].beta = Eigen::VectorXd::Zero(2);
    blocks[k].included = {true, true};
  }
  blocks[0].beta << 0.3, 0.0;
  blocks[1].beta << 0.3, -0.1;
  for (int i = 0; i < n; ++i) {
    x(i, 0) = z(rng);
    x(i, 1) = z(rng);
    const SplitTParams p{blocks[0].beta0 + x.row(i).dot(blocks[0].beta), std::exp(blocks[1].beta0 + x.row(i).dot(blocks[1].beta)),
                         std::exp(blocks[2].beta0), std::exp(blocks[3].beta0)};
    y(i) = split_t_quantile(un(rng), p);
  }
  const MarginLoglik m = margin_loglik_and_grad(y, x, blocks);
  double norm2 = 0.0;
  for (int k = 0; k < 4; ++k) norm2 += m.grad[k].squaredNorm();
  CHECK(std::sqrt(norm2) / n < 0.05);
}
