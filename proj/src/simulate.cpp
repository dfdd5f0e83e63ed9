#include "cdcopula/simulate.hpp"

#include <cmath>
#include <cstdio>
#include <random>
#include <string>

#include "cdcopula/errors.hpp"
#include "cdcopula/mcmc.hpp"
#include "cdcopula/special_functions.hpp"

namespace cdcopula {

void mark_included(std::array<ParamBlock, kNumBlocks>& blocks) {
  for (auto& b : blocks) {
    b.included.resize(static_cast<std::size_t>(b.beta.size()));
    for (Eigen::Index j = 0; j < b.beta.size(); ++j) b.included[j] = b.beta(j) != 0.0;
  }
}

SimulationSpec default_simulation_spec(Eigen::Index n, std::uint64_t seed) {
  SimulationSpec s;
  s.n = n;
  s.seed = seed;
  s.covariates_per_margin = 2;
  auto set = [&](BlockId b, double beta0, std::initializer_list<double> slopes) {
    ParamBlock& pb = s.truth[index(b)];
    pb.beta0 = beta0;
    pb.beta = Eigen::VectorXd(static_cast<Eigen::Index>(slopes.size()));
    Eigen::Index j = 0;
    for (double v : slopes) pb.beta(j++) = v;
  };
  for (int m = 0; m < 2; ++m) {
    const int o = 4 * m;
    set(block_at(o + 0), m == 0 ? 0.05 : -0.05, {0.3, 0.0});
    set(block_at(o + 1), std::log(1.0), {0.3, 0.0});
    set(block_at(o + 2), std::log(8.0), {0.0, 0.0});
    set(block_at(o + 3), std::log(m == 0 ? 0.8 : 1.2), {0.0, 0.0});
  }
  set(BlockId::kLambda, std::log(0.3 / 0.7), {0.6, 0.0, -0.4, 0.0});
  set(BlockId::kTau, 0.0, {0.5, 0.0, 0.5, 0.0});
  mark_included(s.truth);
  return s;
}

SimulatedData simulate(const SimulationSpec& spec) {
  if (spec.n < 2) throw ConfigError("simulation needs n >= 2");
  if (spec.covariates_per_margin < 0) throw ConfigError("covariates_per_margin must be >= 0");
  if (!(std::fabs(spec.ar) < 1.0)) throw ConfigError("AR coefficient must lie in (-1, 1)");
  const Eigen::Index n = spec.n;
  const Eigen::Index d = spec.covariates_per_margin;
  for (int i = 0; i < kNumBlocks; ++i) {
    const Eigen::Index want = margin_of(block_at(i)) < 0 ? 2 * d : d;
    if (spec.truth[i].beta.size() != want) {
      throw ConfigError("true slopes of block " + block_name(block_at(i)) + " need " + std::to_string(want) + " entries");
    }
  }
  std::mt19937_64 rng(spec.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SimulatedData out;
  ModelData& md = out.data.data;
  const double innov = std::sqrt(1.0 - spec.ar * spec.ar);
  for (int m = 0; m < 2; ++m) {
    Eigen::MatrixXd& x = m == 0 ? md.x1 : md.x2;
    x.resize(n, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      double prev = normal(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        if (i > 0) prev = spec.ar * prev + innov * normal(rng);
        x(i, j) = prev;
      }
    }
    auto& names = m == 0 ? md.names1 : md.names2;
    for (Eigen::Index j = 0; j < d; ++j) names.push_back("x" + std::to_string(j + 1));
  }
  Eigen::MatrixXd xc(n, 2 * d);
  xc << md.x1, md.x2;

  auto eta = [&](BlockId b, Eigen::Index i) {
    const ParamBlock& pb = spec.truth[index(b)];
    const Eigen::MatrixXd& x = margin_of(b) == 0 ? md.x1 : (margin_of(b) == 1 ? md.x2 : xc);
    return pb.beta0 + x.row(i).dot(pb.beta);
  };

  out.lambda.resize(n);
  out.tau.resize(n);
  out.delta.resize(n);
  out.theta.resize(n);
  out.u[0].resize(n);
  out.u[1].resize(n);
  md.y1.resize(n);
  md.y2.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double lambda = special::logistic(eta(BlockId::kLambda, i));
    const double delta = delta_from_lambda_l(lambda);
    const double te = eta(BlockId::kTau, i);
    double tau = 0.0;
    if (spec.link_mode == CopulaLinkMode::kConditional) {
      tau = link_eval(conditional_tau_link(lambda), te);
    } else {
      tau = special::logistic(te);
    }
    const double theta = theta_for_tau(tau, delta);
    out.lambda(i) = lambda;
    out.delta(i) = delta;
    out.tau(i) = tau;
    out.theta(i) = theta;

    const CopulaNatural c{theta, delta};
    const double u0 = uniform_open(rng);
    const double w = uniform_open(rng);
    const UnitPair p = rotate(UnitPair{u0, jc_conditional_quantile(u0, w, c)}, spec.rotation);
    out.u[0](i) = p.u;
    out.u[1](i) = p.v;
    for (int m = 0; m < 2; ++m) {
      const int o = 4 * m;
      SplitTParams sp;
      sp.mu = eta(block_at(o), i);
      sp.phi = std::exp(eta(block_at(o + 1), i));
      sp.nu = std::exp(eta(block_at(o + 2), i));
      sp.kappa = std::exp(eta(block_at(o + 3), i));
      (m == 0 ? md.y1 : md.y2)(i) = split_t_quantile(m == 0 ? p.u : p.v, sp);
    }
    char label[32];
    std::snprintf(label, sizeof label, "t%06ld", static_cast<long>(i));
    out.data.dates.push_back(label);
  }
  md.validate();
  return out;
}

}  // namespace cdcopula
