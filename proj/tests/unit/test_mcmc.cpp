#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <random>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/tools/minima.hpp>

#include "doctest.h"

#include "cdcopula/errors.hpp"
#include "cdcopula/mcmc.hpp"
#include "cdcopula/model.hpp"
#include "cdcopula/simulate.hpp"

using namespace cdcopula;

namespace {

// Linear regression with unit noise, N(0, 100) intercept and N(0, 1) slopes
// for the included coordinates. Exact derivatives.
class RegressionTarget : public SelectionTarget {
 public:
  RegressionTarget(Eigen::VectorXd y, Eigen::MatrixXd x) : y_(std::move(y)), x_(std::move(x)) {}
  int num_slopes() const override { return static_cast<int>(x_.cols()); }

  Eigen::MatrixXd design(const std::vector<bool>& inc) const {
    Eigen::MatrixXd z(x_.rows(), 1 + std::count(inc.begin(), inc.end(), true));
    z.col(0).setOnes();
    Eigen::Index k = 1;
    for (std::size_t j = 0; j < inc.size(); ++j) {
      if (inc[j]) z.col(k++) = x_.col(static_cast<Eigen::Index>(j));
    }
    return z;
  }
  Eigen::VectorXd prior_precision(Eigen::Index k) const {
    Eigen::VectorXd p = Eigen::VectorXd::Ones(k);
    p(0) = 0.01;
    return p;
  }
  double log_density(const Eigen::VectorXd& c, const std::vector<bool>& inc) const override {
    const Eigen::MatrixXd z = design(inc);
    const Eigen::VectorXd r = y_ - z * c;
    const Eigen::VectorXd p = prior_precision(c.size());
    const double k = static_cast<double>(c.size());
    return -0.5 * r.squaredNorm() - 0.5 * (c.array().square() * p.array()).sum() + 0.5 * p.array().log().sum() -
           0.5 * k * std::log(2.0 * M_PI);
  }
  TargetDerivs derivatives(const Eigen::VectorXd& c, const std::vector<bool>& inc) const override {
    const Eigen::MatrixXd z = design(inc);
    const Eigen::VectorXd p = prior_precision(c.size());
    TargetDerivs d;
    d.value = log_density(c, inc);
    d.grad = z.transpose() * (y_ - z * c) - p.cwiseProduct(c);
    d.hess = -(z.transpose() * z);
    d.hess.diagonal() -= p;
    return d;
  }
  // log of the coefficient integral for one model (the Bernoulli factors cancel at p = 1/2)
  double log_marginal(const std::vector<bool>& inc) const {
    const Eigen::MatrixXd z = design(inc);
    Eigen::MatrixXd h = z.transpose() * z;
    h.diagonal() += prior_precision(z.cols());
    const Eigen::VectorXd m = h.llt().solve(z.transpose() * y_);
    const double log_det = 2.0 * h.llt().matrixLLT().diagonal().array().log().sum();
    return log_density(m, inc) + 0.5 * static_cast<double>(z.cols()) * std::log(2.0 * M_PI) - 0.5 * log_det;
  }

 private:
  Eigen::VectorXd y_;
  Eigen::MatrixXd x_;
};

int model_code(const std::vector<bool>& inc) {
  int c = 0;
  for (std::size_t j = 0; j < inc.size(); ++j) c |= inc[j] ? 1 << j : 0;
  return c;
}

std::vector<bool> model_of(int code, int d) {
  std::vector<bool> inc(d);
  for (int j = 0; j < d; ++j) inc[j] = (code >> j) & 1;
  return inc;
}

SimulatedData sample(Eigen::Index n, std::uint64_t seed) { return simulate(default_simulation_spec(n, seed)); }

}  // namespace

TEST_CASE("Newton proposal on a quadratic lands on the mode in one step") {
  Eigen::Matrix2d a;
  a << 2.0, 0.6, 0.6, 1.0;
  const Eigen::Vector2d m(1.5, -0.7);
  LogDensityFn logp = [&](const Eigen::VectorXd& x) { return -0.5 * (x - m).dot(a * (x - m)); };
  DerivsFn derivs = [&](const Eigen::VectorXd& x) {
    TargetDerivs d;
    d.value = logp(x);
    d.grad = -a * (x - m);
    d.hess = -a;
    return d;
  };
  ProposalConfig cfg;
  cfg.newton_steps = 1;
  const NewtonProposal p = newton_proposal(logp, derivs, Eigen::Vector2d(-4.0, 9.0), cfg);
  CHECK(p.steps == 1);
  CHECK_FALSE(p.fallback);
  CHECK((p.location - m).norm() < 1e-12);
  CHECK((p.scale - a.inverse()).norm() < 1e-12);

  // curvature from finite differences of the gradient
  GradientFn grad = [&](const Eigen::VectorXd& x) -> Eigen::VectorXd { return -a * (x - m); };
  const NewtonProposal q = newton_proposal(logp, grad, Eigen::Vector2d(3.0, 3.0), ProposalConfig{});
  CHECK((q.location - m).norm() < 1e-8);
  CHECK((q.scale - a.inverse()).norm() < 1e-6);
}

TEST_CASE("Newton proposal finds the mode of a logistic regression posterior") {
  std::mt19937_64 rng(2);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 200;
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x(i) = normal(rng);
    y(i) = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < 1.0 / (1.0 + std::exp(-1.2 * x(i))) ? 1.0 : 0.0;
  }
  auto f = [&](double b) {
    double s = -0.5 * b * b;
    for (int i = 0; i < n; ++i) s += y(i) * b * x(i) - std::log1p(std::exp(b * x(i)));
    return s;
  };
  LogDensityFn logp = [&](const Eigen::VectorXd& b) { return f(b(0)); };
  GradientFn grad = [&](const Eigen::VectorXd& b) {
    double g = -b(0);
    for (int i = 0; i < n; ++i) g += x(i) * (y(i) - 1.0 / (1.0 + std::exp(-b(0) * x(i))));
    return Eigen::VectorXd::Constant(1, g);
  };
  ProposalConfig cfg;
  cfg.newton_steps = 20;
  const NewtonProposal p = newton_proposal(logp, grad, Eigen::VectorXd::Constant(1, -3.0), cfg);
  const auto best = boost::math::tools::brent_find_minima([&](double b) { return -f(b); }, -5.0, 5.0, 40);
  CHECK(p.location(0) == doctest::Approx(best.first).epsilon(1e-3));
}

TEST_CASE("Hessian repair is negative definite and keeps eigenvectors") {
  Eigen::Matrix2d h;
  h << 1.0, 0.0, 0.0, -3.0;
  Eigen::MatrixXd r;
  REQUIRE(regularize_hessian(h, r));
  CHECK(r(0, 0) == doctest::Approx(-1.0));
  CHECK(r(1, 1) == doctest::Approx(-3.0));
  CHECK(std::fabs(r(0, 1)) < 1e-14);
  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(2, 2);
  REQUIRE(regularize_hessian(z, r));
  CHECK(r(0, 0) <= -1e-8);
  Eigen::MatrixXd bad = h;
  bad(0, 0) = std::nan("");
  CHECK_FALSE(regularize_hessian(bad, r));
}

TEST_CASE("multivariate t density and draws") {
  const Eigen::VectorXd loc = Eigen::VectorXd::Constant(1, 0.3);
  const Eigen::MatrixXd scale = Eigen::MatrixXd::Constant(1, 1, 2.25);
  const boost::math::students_t t(6.0);
  for (double x : {-3.0, 0.0, 0.3, 2.5}) {
    const double expect = std::log(boost::math::pdf(t, (x - 0.3) / 1.5) / 1.5);
    CHECK(mvt_logpdf(Eigen::VectorXd::Constant(1, x), loc, scale, 6.0) == doctest::Approx(expect).epsilon(1e-12));
  }
  Eigen::Matrix2d s;
  s << 1.0, 0.5, 0.5, 2.0;
  const Eigen::Vector2d mu(1.0, -2.0);
  std::mt19937_64 rng(9);
  const int draws = 200000;
  Eigen::Vector2d mean = Eigen::Vector2d::Zero();
  Eigen::Matrix2d second = Eigen::Matrix2d::Zero();
  for (int i = 0; i < draws; ++i) {
    const Eigen::VectorXd z = mvt_draw(mu, s, 8.0, rng);
    mean += z;
    second += (z - mu) * (z - mu).transpose();
  }
  mean /= draws;
  second /= draws;
  CHECK((mean - mu).cwiseAbs().maxCoeff() < 0.02);
  // covariance of a t with df 8 is 8/6 times the scale
  CHECK(((second - s * 8.0 / 6.0).cwiseAbs().array() < 0.06).all());
  CHECK(std::isnan(mvt_logpdf(mu, mu, -s, 8.0)));
  CHECK_THROWS_AS(mvt_draw(mu, -s, 8.0, rng), NumericalError);
}

TEST_CASE("indicator proposals flip each coordinate with probability p") {
  std::mt19937_64 rng(4);
  const int d = 10;
  const int reps = 20000;
  const double p = 0.2;
  std::vector<int> counts(d + 1, 0);
  const std::vector<bool> cur(d, false);
  for (int r = 0; r < reps; ++r) {
    const auto next = propose_indicators(cur, p, rng);
    counts[std::count(next.begin(), next.end(), true)]++;
  }
  // pool the sparse upper tail into one cell
  double chi2 = 0.0;
  int cells = 0;
  double tail_obs = 0.0, tail_exp = 0.0;
  for (int k = 0; k <= d; ++k) {
    const double e = reps * std::exp(std::lgamma(d + 1.0) - std::lgamma(k + 1.0) - std::lgamma(d - k + 1.0)) *
                     std::pow(p, k) * std::pow(1.0 - p, d - k);
    if (k >= 6) {
      tail_obs += counts[k];
      tail_exp += e;
      continue;
    }
    chi2 += (counts[k] - e) * (counts[k] - e) / e;
    ++cells;
  }
  chi2 += (tail_obs - tail_exp) * (tail_obs - tail_exp) / tail_exp;
  ++cells;
  const boost::math::chi_squared dist(cells - 1);
  CHECK(boost::math::cdf(boost::math::complement(dist, chi2)) > 1e-3);
  CHECK(propose_indicators(cur, 0.0, rng) == cur);
  CHECK(propose_indicators(cur, 1.0, rng) == std::vector<bool>(d, true));
}

TEST_CASE("active and full coordinate maps") {
  const Eigen::VectorXd full = (Eigen::VectorXd(4) << 1.0, 2.0, 0.0, 4.0).finished();
  const std::vector<bool> inc{true, false, true};
  const Eigen::VectorXd a = active_coords(full, inc);
  CHECK(a.size() == 3);
  CHECK(a(2) == 4.0);
  CHECK(full_coords(a, inc) == full);
}

TEST_CASE("MH within selection recovers exact model probabilities") {
  std::mt19937_64 gen(21);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 40;
  const int d = 3;
  Eigen::MatrixXd x(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) x(i, j) = normal(gen);
  }
  Eigen::VectorXd y(n);
  for (int i = 0; i < n; ++i) y(i) = 0.5 + 1.0 * x(i, 0) + 0.3 * x(i, 2) + normal(gen);
  const RegressionTarget target(y, x);

  std::vector<double> exact(1 << d);
  double norm = 0.0;
  for (int c = 0; c < (1 << d); ++c) {
    exact[c] = std::exp(target.log_marginal(model_of(c, d)));
    norm += exact[c];
  }
  for (double& e : exact) e /= norm;

  ProposalConfig cfg;
  std::mt19937_64 rng(8);
  Eigen::VectorXd full = Eigen::VectorXd::Zero(1 + d);
  std::vector<bool> inc(d, true);
  const int iters = 8000;
  std::vector<Eigen::VectorXd> ind(d, Eigen::VectorXd(iters));
  std::map<std::pair<int, int>, int> moves;
  int accepted = 0;
  for (int t = 0; t < iters; ++t) {
    const int from = model_code(inc);
    const MhOutcome r = mh_update(target, full, inc, true, cfg, rng);
    accepted += r.accepted ? 1 : 0;
    CHECK_FALSE(r.degenerate);
    const int to = model_code(inc);
    if (from != to) moves[{from, to}]++;
    for (int j = 0; j < d; ++j) ind[j](t) = inc[j] ? 1.0 : 0.0;
    for (int j = 0; j < d; ++j) {
      if (!inc[j]) REQUIRE(full(1 + j) == 0.0);
    }
  }
  CHECK(accepted > iters / 5);
  for (int j = 0; j < d; ++j) {
    double p_exact = 0.0;
    for (int c = 0; c < (1 << d); ++c) p_exact += (c >> j) & 1 ? exact[c] : 0.0;
    const double p_hat = ind[j].mean();
    CAPTURE(j);
    CAPTURE(p_exact);
    if (p_exact > 1e-6 && p_exact < 1.0 - 1e-6 && p_hat > 0.0 && p_hat < 1.0) {
      const double se = std::sqrt(p_exact * (1.0 - p_exact) * inefficiency_factor(ind[j]) / iters);
      CHECK(std::fabs(p_hat - p_exact) < 4.0 * se + 0.005);
    } else {
      CHECK(std::fabs(p_hat - p_exact) < 0.01);
    }
  }
  // reversibility: transitions between two models balance in both directions
  for (const auto& [key, count] : moves) {
    const int back = moves.count({key.second, key.first}) ? moves[{key.second, key.first}] : 0;
    CHECK(std::fabs(count - back) <= 5.0 * std::sqrt(count + back) + 3.0);
  }
}

TEST_CASE("MH keeps a correlated Gaussian invariant") {
  Eigen::Matrix2d cov;
  cov << 1.0, 0.8, 0.8, 1.0;
  const Eigen::Matrix2d prec = cov.inverse();
  const Eigen::Vector2d m(0.5, -1.0);
  // heavier-than-Gaussian tails so the t proposal is not exact
  auto logp = [&](const Eigen::VectorXd& z) {
    const double q = (z - m).dot(prec * (z - m));
    return -2.5 * std::log1p(q / 4.0);
  };
  auto grad = [&](const Eigen::VectorXd& z) -> Eigen::VectorXd {
    const double q = (z - m).dot(prec * (z - m));
    return -2.5 / (1.0 + q / 4.0) * (prec * (z - m)) / 2.0;
  };
  const FunctionTarget target(1, logp, grad);
  ProposalConfig cfg;
  std::mt19937_64 rng(13);
  Eigen::VectorXd full = Eigen::Vector2d(3.0, 3.0);
  std::vector<bool> inc{true};
  const int iters = 30000;
  Eigen::MatrixXd draws(iters, 2);
  for (int t = 0; t < iters; ++t) {
    mh_update(target, full, inc, false, cfg, rng);
    draws.row(t) = full.transpose();
  }
  // bivariate t with df 3 and scale cov: mean m, covariance 3 * cov
  const Eigen::MatrixXd kept = draws.bottomRows(iters - 1000);
  const Eigen::RowVectorXd mean = kept.colwise().mean();
  for (int j = 0; j < 2; ++j) {
    const double se = std::sqrt(3.0 * cov(j, j) * inefficiency_factor(kept.col(j)) / kept.rows());
    CHECK(std::fabs(mean(j) - m(j)) < 4.0 * se);
  }
  const Eigen::MatrixXd c = kept.rowwise() - mean;
  const Eigen::MatrixXd emp = c.transpose() * c / static_cast<double>(kept.rows());
  // variance of a df-3 t has infinite fourth moment; only a loose check of the correlation
  CHECK(emp(0, 1) / std::sqrt(emp(0, 0) * emp(1, 1)) == doctest::Approx(0.8).epsilon(0.05));
}

TEST_CASE("inefficiency factor") {
  std::mt19937_64 rng(17);
  std::normal_distribution<double> normal(0.0, 1.0);
  const int n = 100000;
  Eigen::VectorXd iid(n), ar(n), alt(n);
  double prev = 0.0;
  for (int i = 0; i < n; ++i) {
    iid(i) = normal(rng);
    prev = 0.5 * prev + std::sqrt(0.75) * normal(rng);
    ar(i) = prev;
    alt(i) = i % 2 == 0 ? 1.0 : -1.0;
  }
  CHECK(inefficiency_factor(iid) == doctest::Approx(1.0).epsilon(0.05));
  // (1 + rho) / (1 - rho)
  CHECK(inefficiency_factor(ar) == doctest::Approx(3.0).epsilon(0.1));
  CHECK(inefficiency_factor(alt) > 0.0);
  CHECK(inefficiency_factor(alt) == doctest::Approx(1.0 / n));
  CHECK_THROWS_AS(inefficiency_factor(Eigen::VectorXd::Zero(50)), DimensionError);
  CHECK_THROWS_AS(inefficiency_factor(Eigen::VectorXd::Ones(200)), DomainError);
}

TEST_CASE("proposal config validation") {
  ProposalConfig c;
  CHECK_NOTHROW(validate(c));
  c.df = 2.0;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ProposalConfig{};
  c.p_prop = 1.5;
  CHECK_THROWS_AS(validate(c), ConfigError);
  c = ProposalConfig{};
  c.newton_steps = -1;
  CHECK_THROWS_AS(validate(c), ConfigError);
}

TEST_CASE("copula model: sweeps, determinism, draws files") {
  const SimulatedData sim = sample(300, 5);
  const PosteriorModel model(sim.data.data, default_model_spec());
  InitReport rep;
  const ChainState start = model.initial_state();
  const ChainState init = init_by_optimization(model, &rep);
  CHECK(rep.converged);
  CHECK(model.log_posterior(init) > model.log_posterior(start));
  CHECK(rep.log_posterior == doctest::Approx(model.log_posterior(init)));

  InitReport again;
  const ChainState init2 = init_by_optimization(model, init, &again);
  CHECK(model.log_posterior(init2) >= model.log_posterior(init) - 1e-6);
  CHECK(model.log_posterior(init2) - model.log_posterior(init) < 0.05);

  SUBCASE("one sweep visits every block once") {
    ChainState s = init;
    ChainDiagnostics diag;
    std::mt19937_64 rng(1);
    gibbs_sweep(model, s, ProposalConfig{}, rng, diag);
    CHECK(diag.sweeps == 1);
    for (int i = 0; i < kNumBlocks; ++i) {
      CHECK(diag.visits[i] == 1);
      CHECK(diag.blocks[i].proposals == 1);
    }
    ChainState r = s;
    model.refresh(r);
    CHECK(model.log_posterior(s) == doctest::Approx(model.log_posterior(r)).epsilon(1e-12));
  }

  SUBCASE("acceptance, determinism and draws round trip") {
    RunConfig rc;
    rc.sweeps = 60;
    rc.burn_in = 0.0;
    rc.seed = 42;
    const ChainOutput a = run_chain(model, init, rc);
    const ChainOutput b = run_chain(model, init, rc);
    CHECK(a.draws == b.draws);
    CHECK(a.draws.rows() == 60);
    CHECK(a.log_posterior.allFinite());
    long prop = 0, acc = 0;
    for (int i = 0; i < kNumBlocks; ++i) {
      const BlockDiagnostics& bd = a.diagnostics.blocks[i];
      CAPTURE(block_name(block_at(i)));
      CAPTURE(bd.acceptance());
      CHECK(bd.proposals == 60);
      CHECK(bd.accepts > 0);
      prop += bd.proposals;
      acc += bd.accepts;
    }
    const double rate = static_cast<double>(acc) / prop;
    CHECK(rate > 0.1);
    CHECK(rate < 0.95);

    // flatten and rebuild
    const ChainState back = state_from_row(model, a.draws.row(59).transpose());
    CHECK(model.log_posterior(back) == doctest::Approx(a.log_posterior(59)).epsilon(1e-12));
    CHECK(flatten_state(model, back) == a.draws.row(59).transpose());

    const std::string path = (std::filesystem::temp_directory_path() / "cdcopula_draws_test.csv").string();
    write_draws_csv(path, {a, b});
    const Eigen::MatrixXd read = read_draws_csv(path, draw_columns(model));
    REQUIRE(read.rows() == 120);
    CHECK((read.topRows(60) - a.draws).cwiseAbs().maxCoeff() == 0.0);
    std::vector<std::string> wrong = draw_columns(model);
    wrong[1] = "something_else";
    CHECK_THROWS(read_draws_csv(path, wrong));
    std::remove(path.c_str());

    RunConfig thin = rc;
    thin.sweeps = 10;
    thin.burn_in = 0.2;
    thin.thin = 3;
    CHECK(run_chain(model, init, thin).draws.rows() == 3);
    thin.thin = 0;
    CHECK_THROWS_AS(run_chain(model, init, thin), ConfigError);
  }

  SUBCASE("parallel chains do not depend on the thread count") {
    RunConfig rc;
    rc.sweeps = 4;
    rc.burn_in = 0.0;
    rc.seed = 3;
    const auto one = run_chains(model, init, rc, 2, 1);
    const auto two = run_chains(model, init, rc, 2, 2);
    CHECK(one[0].draws == two[0].draws);
    CHECK(one[1].draws == two[1].draws);
    CHECK(one[0].draws != one[1].draws);
  }
}
