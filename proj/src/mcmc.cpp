#include "cdcopula/mcmc.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <mutex>
#include <thread>
#include <vector>

#include "cdcopula/errors.hpp"
#include "cdcopula/special_functions.hpp"

namespace cdcopula {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr double kEigenFloor = 1e-8;

}  // namespace

void validate(const ProposalConfig& c) {
  if (c.newton_steps < 0) throw ConfigError("newton_steps must be >= 0");
  if (!(c.df > 2.0)) throw ConfigError("proposal df must exceed 2");
  if (!(c.p_prop >= 0.0 && c.p_prop <= 1.0)) throw ConfigError("p_prop must lie in [0, 1]");
  if (c.max_halvings < 0) throw ConfigError("max_halvings must be >= 0");
  if (!(c.fd_step > 0.0) || !(c.rw_scale > 0.0)) throw ConfigError("fd_step and rw_scale must be positive");
}

Eigen::MatrixXd fd_hessian(const GradientFn& grad, const Eigen::VectorXd& x, double step) {
  const Eigen::Index k = x.size();
  const Eigen::VectorXd g0 = grad(x);
  Eigen::MatrixXd h(k, k);
  Eigen::VectorXd xp = x;
  for (Eigen::Index j = 0; j < k; ++j) {
    const double hj = step * std::max(1.0, std::fabs(x(j)));
    xp(j) = x(j) + hj;
    h.col(j) = (grad(xp) - g0) / hj;
    xp(j) = x(j);
  }
  return 0.5 * (h + h.transpose());
}

bool regularize_hessian(const Eigen::MatrixXd& hess, Eigen::MatrixXd& repaired) {
  if (!hess.allFinite()) return false;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (hess + hess.transpose()));
  if (es.info() != Eigen::Success) return false;
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index j = 0; j < ev.size(); ++j) ev(j) = -std::max(std::fabs(ev(j)), kEigenFloor);
  repaired = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
  return repaired.allFinite();
}

NewtonProposal newton_proposal(const LogDensityFn& logp, const DerivsFn& derivs, const Eigen::VectorXd& start,
                               const ProposalConfig& config) {
  NewtonProposal out;
  const Eigen::Index k = start.size();
  auto fallback = [&](const Eigen::VectorXd& at) {
    out.location = at;
    out.scale = Eigen::MatrixXd::Identity(k, k) * (config.rw_scale * config.rw_scale);
    out.fallback = true;
    return out;
  };

  Eigen::VectorXd x = start;
  TargetDerivs d = derivs(x);
  out.start_value = d.value;
  if (!std::isfinite(d.value)) return fallback(start);
  Eigen::MatrixXd neg_h;
  for (int step = 0; step < config.newton_steps; ++step) {
    Eigen::MatrixXd h;
    if (!d.grad.allFinite() || !regularize_hessian(d.hess, h)) return fallback(x);
    neg_h = -h;
    const Eigen::LLT<Eigen::MatrixXd> llt(neg_h);
    if (llt.info() != Eigen::Success) return fallback(x);
    const Eigen::VectorXd dir = llt.solve(d.grad);
    const double decrement = std::sqrt(std::max(0.0, d.grad.dot(dir)));
    if (decrement < config.newton_tol) break;
    // The full step is tried with derivatives attached since it is usually taken.
    TargetDerivs next = derivs(x + dir);
    bool improved = std::isfinite(next.value) && next.value >= d.value;
    Eigen::VectorXd trial = x + dir;
    double t = 0.5;
    for (int half = 1; !improved && half <= config.max_halvings; ++half) {
      trial = x + t * dir;
      const double f = logp(trial);
      if (std::isfinite(f) && f >= d.value) {
        improved = true;
        next = derivs(trial);
      }
      t *= 0.5;
    }
    if (!improved) break;
    x = trial;
    d = next;
    ++out.steps;
    if (!std::isfinite(d.value)) return fallback(start);
  }
  Eigen::MatrixXd h;
  if (!d.grad.allFinite() || !regularize_hessian(d.hess, h)) return fallback(x);
  const Eigen::LLT<Eigen::MatrixXd> llt(-h);
  if (llt.info() != Eigen::Success) return fallback(x);
  out.location = x;
  out.scale = llt.solve(Eigen::MatrixXd::Identity(k, k));
  if (!out.scale.allFinite()) return fallback(x);
  return out;
}

NewtonProposal newton_proposal(const LogDensityFn& logp, const GradientFn& grad, const Eigen::VectorXd& start,
                               const ProposalConfig& config) {
  DerivsFn derivs = [&](const Eigen::VectorXd& x) {
    TargetDerivs d;
    d.value = logp(x);
    d.grad = grad(x);
    d.hess = fd_hessian(grad, x, config.fd_step);
    return d;
  };
  return newton_proposal(logp, derivs, start, config);
}

double mvt_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& location, const Eigen::MatrixXd& scale,
                  double df) {
  const Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) return std::numeric_limits<double>::quiet_NaN();
  const double p = static_cast<double>(x.size());
  const Eigen::VectorXd z = llt.matrixL().solve(x - location);
  const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  return special::log_gamma(0.5 * (df + p)) - special::log_gamma(0.5 * df) - 0.5 * p * std::log(df * special::kPi) -
         0.5 * log_det - 0.5 * (df + p) * std::log1p(z.squaredNorm() / df);
}

Eigen::VectorXd mvt_draw(const Eigen::VectorXd& location, const Eigen::MatrixXd& scale, double df,
                         std::mt19937_64& rng) {
  const Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success) throw NumericalError("mvt_draw: scale is not positive definite");
  std::normal_distribution<double> normal(0.0, 1.0);
  std::chi_squared_distribution<double> chi(df);
  Eigen::VectorXd z(location.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) z(j) = normal(rng);
  const double w = chi(rng);
  return location + llt.matrixL() * z * std::sqrt(df / w);
}

double uniform_open(std::mt19937_64& rng) { return (static_cast<double>(rng() >> 11) + 0.5) * 0x1.0p-53; }

bool mh_accept(double log_ratio, std::mt19937_64& rng) {
  if (std::isnan(log_ratio)) return false;
  return std::log(uniform_open(rng)) < log_ratio;
}

std::vector<bool> propose_indicators(const std::vector<bool>& current, double p_prop, std::mt19937_64& rng) {
  std::vector<bool> out = current;
  for (std::size_t j = 0; j < out.size(); ++j) {
    if (uniform_open(rng) < p_prop) out[j] = !out[j];
  }
  return out;
}

Eigen::VectorXd active_coords(const Eigen::VectorXd& full, const std::vector<bool>& included) {
  Eigen::VectorXd a(1 + std::count(included.begin(), included.end(), true));
  a(0) = full(0);
  Eigen::Index k = 1;
  for (std::size_t j = 0; j < included.size(); ++j) {
    if (included[j]) a(k++) = full(1 + static_cast<Eigen::Index>(j));
  }
  return a;
}

Eigen::VectorXd full_coords(const Eigen::VectorXd& active, const std::vector<bool>& included) {
  Eigen::VectorXd f = Eigen::VectorXd::Zero(1 + static_cast<Eigen::Index>(included.size()));
  f(0) = active(0);
  Eigen::Index k = 1;
  for (std::size_t j = 0; j < included.size(); ++j) {
    if (included[j]) f(1 + static_cast<Eigen::Index>(j)) = active(k++);
  }
  return f;
}

FunctionTarget::FunctionTarget(int num_slopes, LogDensityFn logp, GradientFn grad, double fd_step)
    : d_(num_slopes), logp_(std::move(logp)), grad_(std::move(grad)), fd_step_(fd_step) {}

Eigen::VectorXd FunctionTarget::expand(const Eigen::VectorXd& coords, const std::vector<bool>& included) const {
  return full_coords(coords, included);
}

double FunctionTarget::log_density(const Eigen::VectorXd& coords, const std::vector<bool>& included) const {
  return logp_(expand(coords, included));
}

TargetDerivs FunctionTarget::derivatives(const Eigen::VectorXd& coords, const std::vector<bool>& included) const {
  auto active_grad = [&](const Eigen::VectorXd& c) { return active_coords(grad_(expand(c, included)), included); };
  TargetDerivs d;
  d.value = log_density(coords, included);
  d.grad = active_grad(coords);
  d.hess = fd_hessian(active_grad, coords, fd_step_);
  return d;
}

MhOutcome mh_update(const SelectionTarget& target, Eigen::VectorXd& full, std::vector<bool>& included,
                    bool selection, const ProposalConfig& config, std::mt19937_64& rng) {
  MhOutcome out;
  const std::vector<bool> inc_p =
      selection && !included.empty() ? propose_indicators(included, config.p_prop, rng) : included;

  auto logp_for = [&](const std::vector<bool>& inc) {
    return [&target, &inc](const Eigen::VectorXd& c) { return target.log_density(c, inc); };
  };
  auto derivs_for = [&](const std::vector<bool>& inc) {
    return [&target, &inc](const Eigen::VectorXd& c) { return target.derivatives(c, inc); };
  };

  const bool same = inc_p == included;
  const Eigen::VectorXd cur_active = active_coords(full, included);

  // Forward: Newton from the current draw in the proposed subspace.
  const NewtonProposal fwd = newton_proposal(logp_for(inc_p), derivs_for(inc_p), active_coords(full, inc_p), config);
  // Both Newton runs evaluate their start point, which doubles as the target value when the subspace is unchanged.
  const double logp_cur = same ? fwd.start_value : target.log_density(cur_active, included);
  Eigen::VectorXd prop_active;
  try {
    prop_active = mvt_draw(fwd.location, fwd.scale, config.df, rng);
  } catch (const NumericalError&) {
    out.degenerate = true;
    return out;
  }
  out.fallback = fwd.fallback;
  double logp_prop = same ? 0.0 : target.log_density(prop_active, inc_p);
  if (!same && !std::isfinite(logp_prop)) {
    out.log_ratio = kNegInf;
    return out;
  }
  const Eigen::VectorXd prop_full = full_coords(prop_active, inc_p);

  // Reverse: Newton from the proposal in the current subspace.
  const NewtonProposal rev =
      newton_proposal(logp_for(included), derivs_for(included), active_coords(prop_full, included), config);
  if (same) logp_prop = rev.start_value;
  if (!std::isfinite(logp_prop)) {
    out.log_ratio = kNegInf;
    return out;
  }
  out.fallback = out.fallback || rev.fallback;
  const double log_q_fwd = mvt_logpdf(prop_active, fwd.location, fwd.scale, config.df);
  const double log_q_rev = mvt_logpdf(cur_active, rev.location, rev.scale, config.df);
  if (!std::isfinite(log_q_fwd) || !std::isfinite(log_q_rev)) {
    out.degenerate = true;
    return out;
  }
  out.log_ratio = logp_prop - logp_cur + log_q_rev - log_q_fwd;
  if (mh_accept(out.log_ratio, rng)) {
    out.accepted = true;
    full = prop_full;
    included = inc_p;
  }
  return out;
}

ModelBlockTarget::ModelBlockTarget(const PosteriorModel& model, const ChainState& state, BlockId block,
                                   double fd_step)
    : model_(model), state_(state), block_(block), fd_step_(fd_step) {}

int ModelBlockTarget::num_slopes() const { return static_cast<int>(model_.num_covariates(block_)); }

ParamBlock ModelBlockTarget::to_block(const Eigen::VectorXd& coords, const std::vector<bool>& included) const {
  const Eigen::VectorXd f = full_coords(coords, included);
  ParamBlock pb;
  pb.beta0 = f(0);
  pb.beta = f.tail(f.size() - 1);
  pb.included = included;
  return pb;
}

double ModelBlockTarget::log_density(const Eigen::VectorXd& coords, const std::vector<bool>& included) const {
  if (!coords.allFinite()) return kNegInf;
  const ParamBlock pb = to_block(coords, included);
  const BlockTerms t = model_.block_terms(state_, block_, model_.linear_predictor(block_, pb), false);
  if (!t.feasible) return kNegInf;
  return t.loglik + model_.block_log_prior(block_, pb);
}

TargetDerivs ModelBlockTarget::derivatives(const Eigen::VectorXd& coords, const std::vector<bool>& included) const {
  TargetDerivs d;
  const Eigen::Index k = coords.size();
  d.grad = Eigen::VectorXd::Constant(k, std::numeric_limits<double>::quiet_NaN());
  d.hess = Eigen::MatrixXd::Constant(k, k, std::numeric_limits<double>::quiet_NaN());
  if (!coords.allFinite()) {
    d.value = kNegInf;
    return d;
  }
  const ParamBlock pb = to_block(coords, included);
  const Eigen::VectorXd eta = model_.linear_predictor(block_, pb);
  const BlockTerms t = model_.block_terms(state_, block_, eta, true);
  if (!t.feasible) {
    d.value = kNegInf;
    return d;
  }
  d.value = t.loglik + model_.block_log_prior(block_, pb);

  // Each observation's term depends on eta_i alone, so the likelihood Hessian
  // is X' diag(h) X with h_i the forward difference of d loglik_i / d eta_i.
  const double h = fd_step_;
  const BlockTerms tp = model_.block_terms(state_, block_, eta.array() + h, true);
  Eigen::VectorXd curv;
  if (tp.feasible) {
    curv = (tp.grad - t.grad) / h;
  } else {
    const BlockTerms tm = model_.block_terms(state_, block_, eta.array() - h, true);
    if (!tm.feasible) return d;
    curv = (t.grad - tm.grad) / h;
  }

  const Eigen::MatrixXd& x = model_.design(block_);
  Eigen::MatrixXd xa(x.rows(), k);
  xa.col(0).setOnes();
  Eigen::Index c = 1;
  for (std::size_t j = 0; j < included.size(); ++j) {
    if (included[j]) xa.col(c++) = x.col(static_cast<Eigen::Index>(j));
  }
  d.grad = xa.transpose() * t.grad;
  d.hess = xa.transpose() * curv.asDiagonal() * xa;

  const BlockSpec& bs = model_.spec()[block_];
  d.grad(0) -= (pb.beta0 - bs.intercept.mean) / bs.intercept.variance;
  d.hess(0, 0) -= 1.0 / bs.intercept.variance;
  if (k > 1) {
    const ConditionalNormal cn = slope_conditional_moments(bs.slopes, pb.beta, included);
    const Eigen::MatrixXd prec = cn.cov.llt().solve(Eigen::MatrixXd::Identity(k - 1, k - 1));
    d.grad.tail(k - 1) -= prec * (coords.tail(k - 1) - cn.mean);
    d.hess.bottomRightCorner(k - 1, k - 1) -= prec;
  }
  return d;
}

void gibbs_sweep(const PosteriorModel& model, ChainState& state, const ProposalConfig& config,
                 std::mt19937_64& rng, ChainDiagnostics& diag) {
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    const BlockSpec& bs = model.spec()[b];
    ++diag.visits[i];
    if (!bs.update) continue;
    if (!model.spec().copula_enabled && margin_of(b) < 0) continue;
    const ModelBlockTarget target(model, state, b, config.fd_step);
    ParamBlock& pb = state[b];
    Eigen::VectorXd full(1 + pb.beta.size());
    full(0) = pb.beta0;
    full.tail(pb.beta.size()) = pb.beta;
    std::vector<bool> inc = pb.included;
    const MhOutcome r = mh_update(target, full, inc, bs.variable_selection, config, rng);
    BlockDiagnostics& bd = diag.blocks[i];
    ++bd.proposals;
    if (r.fallback) ++bd.fallbacks;
    if (r.degenerate) ++bd.degenerate;
    if (r.accepted) {
      ++bd.accepts;
      ParamBlock next;
      next.beta0 = full(0);
      next.beta = full.tail(full.size() - 1);
      next.included = inc;
      model.set_block(state, b, next);
    }
  }
  ++diag.sweeps;
}

std::vector<std::string> draw_columns(const PosteriorModel& model) {
  std::vector<std::string> cols;
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    const std::string name = block_name(b);
    cols.push_back(name + ".beta0");
    const auto cov = model.covariate_names(b);
    for (const auto& c : cov) cols.push_back(name + "." + c);
    for (const auto& c : cov) cols.push_back(name + ".I." + c);
  }
  return cols;
}

Eigen::VectorXd flatten_state(const PosteriorModel& model, const ChainState& state) {
  std::vector<double> v;
  for (int i = 0; i < kNumBlocks; ++i) {
    const ParamBlock& pb = state.blocks[i];
    (void)model;
    v.push_back(pb.beta0);
    for (Eigen::Index j = 0; j < pb.beta.size(); ++j) v.push_back(pb.beta(j));
    for (bool b : pb.included) v.push_back(b ? 1.0 : 0.0);
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

ChainState state_from_row(const PosteriorModel& model, const Eigen::VectorXd& row) {
  ChainState s;
  Eigen::Index k = 0;
  for (int i = 0; i < kNumBlocks; ++i) {
    const Eigen::Index d = model.num_covariates(block_at(i));
    if (k + 1 + 2 * d > row.size()) throw DimensionError("state_from_row: row too short");
    ParamBlock& pb = s.blocks[i];
    pb.beta0 = row(k++);
    pb.beta = row.segment(k, d);
    k += d;
    pb.included.resize(static_cast<std::size_t>(d));
    for (Eigen::Index j = 0; j < d; ++j) pb.included[j] = row(k++) > 0.5;
  }
  if (k != row.size()) throw DimensionError("state_from_row: row length does not match the model");
  model.refresh(s);
  return s;
}

ChainOutput run_chain(const PosteriorModel& model, const ChainState& start, const RunConfig& config) {
  validate(config.proposal);
  if (config.sweeps < 1) throw ConfigError("sweeps must be positive");
  if (!(config.burn_in >= 0.0 && config.burn_in < 1.0)) throw ConfigError("burn_in must lie in [0, 1)");
  if (config.thin < 1) throw ConfigError("thin must be >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  ChainOutput out;
  out.columns = draw_columns(model);
  ChainState state = start;
  std::mt19937_64 rng(config.seed);
  const int burn = static_cast<int>(std::floor(config.burn_in * config.sweeps));
  const int kept = (config.sweeps - burn + config.thin - 1) / config.thin;
  out.draws.resize(kept, static_cast<Eigen::Index>(out.columns.size()));
  out.log_posterior.resize(kept);
  int row = 0;
  for (int sweep = 0; sweep < config.sweeps; ++sweep) {
    gibbs_sweep(model, state, config.proposal, rng, out.diagnostics);
    if (sweep >= burn && (sweep - burn) % config.thin == 0) {
      out.draws.row(row) = flatten_state(model, state).transpose();
      out.log_posterior(row) = model.log_posterior(state);
      ++row;
    }
  }
  out.final_state = state;
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return out;
}

std::vector<ChainOutput> run_chains(const PosteriorModel& model, const ChainState& start, const RunConfig& config,
                                    int chains, int threads) {
  if (chains < 1) throw ConfigError("chains must be >= 1");
  threads = std::clamp(threads, 1, chains);
  std::vector<ChainOutput> out(static_cast<std::size_t>(chains));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(chains));
  std::mutex mutex;
  int next = 0;
  auto worker = [&]() {
    for (;;) {
      int c = 0;
      {
        std::lock_guard<std::mutex> lock(mutex);
        if (next >= chains) return;
        c = next++;
      }
      try {
        RunConfig rc = config;
        std::seed_seq seq{static_cast<std::uint32_t>(config.seed), static_cast<std::uint32_t>(config.seed >> 32),
                          static_cast<std::uint32_t>(c)};
        std::uint32_t words[2];
        seq.generate(words, words + 2);
        rc.seed = c == 0 ? config.seed : (static_cast<std::uint64_t>(words[0]) << 32 | words[1]);
        out[c] = run_chain(model, start, rc);
      } catch (...) {
        errors[c] = std::current_exception();
      }
    }
  };
  std::vector<std::thread> pool;
  for (int t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double inefficiency_factor(const Eigen::VectorXd& chain) {
  const Eigen::Index n = chain.size();
  if (n < 100) throw DimensionError("inefficiency_factor: need at least 100 draws");
  const double mean = chain.mean();
  const Eigen::VectorXd c = chain.array() - mean;
  const double c0 = c.squaredNorm() / static_cast<double>(n);
  if (!(c0 > 0.0)) throw DomainError("inefficiency_factor: chain is constant");
  constexpr Eigen::Index kMaxLag = 500;
  double sum = 0.0;
  for (Eigen::Index k = 1; k <= std::min(kMaxLag, n - 1); ++k) {
    const double rho = c.head(n - k).dot(c.tail(n - k)) / (static_cast<double>(n) * c0);
    sum += rho;
    if (rho < 0.01) break;
  }
  return std::max(1.0 + 2.0 * sum, 1.0 / static_cast<double>(n));
}

namespace {

// Newton ascent of one block at fixed other blocks, all indicators on.
// Returns the increase of the log posterior.
double optimize_block(const PosteriorModel& model, ChainState& state, BlockId b) {
  ProposalConfig cfg;
  cfg.newton_steps = 10;  // later cycles revisit the block anyway
  cfg.newton_tol = 1e-7;
  cfg.max_halvings = 30;
  ParamBlock& pb = state[b];
  std::fill(pb.included.begin(), pb.included.end(), true);
  const ModelBlockTarget target(model, state, b, cfg.fd_step);
  Eigen::VectorXd x(1 + pb.beta.size());
  x(0) = pb.beta0;
  x.tail(pb.beta.size()) = pb.beta;
  const std::vector<bool> inc = pb.included;
  const double before = target.log_density(x, inc);
  const NewtonProposal np = newton_proposal([&](const Eigen::VectorXd& c) { return target.log_density(c, inc); },
                                            [&](const Eigen::VectorXd& c) { return target.derivatives(c, inc); },
                                            x, cfg);
  if (np.fallback) return 0.0;
  const double after = target.log_density(np.location, inc);
  if (!(after > before)) return 0.0;
  ParamBlock next = pb;
  next.beta0 = np.location(0);
  next.beta = np.location.tail(np.location.size() - 1);
  model.set_block(state, b, next);
  return after - before;
}

int coordinate_ascent(const PosteriorModel& model, ChainState& state, int max_cycles, bool copula_only,
                      bool& converged) {
  converged = false;
  for (int cycle = 1; cycle <= max_cycles; ++cycle) {
    double gain = 0.0;
    for (int i = 0; i < kNumBlocks; ++i) {
      const BlockId b = block_at(i);
      if (!model.spec()[b].update) continue;
      const bool copula_block = margin_of(b) < 0;
      if (copula_block && !model.spec().copula_enabled) continue;
      if (copula_only && !copula_block) continue;
      gain += optimize_block(model, state, b);
    }
    // A starting point for MCMC needs no more than this.
    if (gain < 1e-3) {
      converged = true;
      return cycle;
    }
  }
  return max_cycles;
}

std::vector<BlockId> free_blocks(const PosteriorModel& model) {
  std::vector<BlockId> out;
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    if (!model.spec()[b].update) continue;
    if (margin_of(b) < 0 && !model.spec().copula_enabled) continue;
    out.push_back(b);
  }
  return out;
}

Eigen::VectorXd pack(const ChainState& state, const std::vector<BlockId>& blocks) {
  std::vector<double> v;
  for (BlockId b : blocks) {
    v.push_back(state[b].beta0);
    for (Eigen::Index j = 0; j < state[b].beta.size(); ++j) v.push_back(state[b].beta(j));
  }
  return Eigen::Map<Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

void unpack(const PosteriorModel& model, ChainState& state, const std::vector<BlockId>& blocks,
            const Eigen::VectorXd& x) {
  Eigen::Index k = 0;
  for (BlockId b : blocks) {
    state[b].beta0 = x(k++);
    for (Eigen::Index j = 0; j < state[b].beta.size(); ++j) state[b].beta(j) = x(k++);
  }
  model.refresh(state);
}

Eigen::VectorXd joint_gradient(const PosteriorModel& model, const ChainState& state,
                               const std::vector<BlockId>& blocks) {
  std::vector<Eigen::VectorXd> parts;
  Eigen::Index total = 0;
  for (BlockId b : blocks) {
    parts.push_back(model.block_gradient(state, b));
    total += parts.back().size();
  }
  Eigen::VectorXd g(total);
  Eigen::Index k = 0;
  for (const auto& p : parts) {
    g.segment(k, p.size()) = p;
    k += p.size();
  }
  return g;
}

// BFGS ascent over every free coefficient at once (all indicators on).
// Block-wise Newton crawls when blocks are strongly coupled, as location
// and skewness of a split-t margin are.
void joint_ascent(const PosteriorModel& model, ChainState& state, int max_iter, bool& converged) {
  converged = false;
  const std::vector<BlockId> blocks = free_blocks(model);
  Eigen::VectorXd x = pack(state, blocks);
  double f = model.log_posterior(state);
  if (!std::isfinite(f)) return;
  Eigen::VectorXd g = joint_gradient(model, state, blocks);
  const Eigen::Index dim = x.size();
  Eigen::MatrixXd h = Eigen::MatrixXd::Identity(dim, dim);  // inverse curvature of -f
  bool fresh = true;
  ChainState trial_state = state;
  for (int iter = 0; iter < max_iter; ++iter) {
    if (g.lpNorm<Eigen::Infinity>() < 1e-4) {
      converged = true;
      break;
    }
    Eigen::VectorXd dir = h * g;
    if (!(dir.dot(g) > 0.0)) {
      h.setIdentity();
      dir = g;
      fresh = true;
    }
    if (fresh) dir *= std::min(1.0, 1.0 / dir.lpNorm<Eigen::Infinity>());
    double t = 1.0;
    bool moved = false;
    Eigen::VectorXd x_new;
    double f_new = kNegInf;
    for (int half = 0; half < 40; ++half, t *= 0.5) {
      x_new = x + t * dir;
      unpack(model, trial_state, blocks, x_new);
      f_new = model.log_posterior(trial_state);
      if (std::isfinite(f_new) && f_new >= f + 1e-4 * t * dir.dot(g)) {
        moved = true;
        break;
      }
    }
    if (!moved) {
      if (fresh) break;
      h.setIdentity();
      fresh = true;
      continue;
    }
    const Eigen::VectorXd g_new = joint_gradient(model, trial_state, blocks);
    const Eigen::VectorXd sk = x_new - x;
    const Eigen::VectorXd yk = g - g_new;  // gradient change of -f
    const double sy = sk.dot(yk);
    if (sy > 1e-12 * sk.norm() * yk.norm()) {
      if (fresh) h *= sy / yk.squaredNorm();
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd left = Eigen::MatrixXd::Identity(dim, dim) - rho * sk * yk.transpose();
      h = left * h * left.transpose() + rho * sk * sk.transpose();
      fresh = false;
    }
    const double gain = f_new - f;
    x = x_new;
    f = f_new;
    g = g_new;
    state = trial_state;
    if (gain < 1e-9 * std::max(1.0, std::fabs(f))) {
      converged = true;
      break;
    }
  }
}

ChainState all_included(const PosteriorModel& model, ChainState s) {
  for (auto& pb : s.blocks) std::fill(pb.included.begin(), pb.included.end(), true);
  model.refresh(s);
  return s;
}

}  // namespace

ChainState init_by_optimization(const PosteriorModel& model, InitReport* report, int max_cycles) {
  return init_by_optimization(model, model.initial_state(), report, max_cycles);
}

ChainState init_by_optimization(const PosteriorModel& model, const ChainState& start, InitReport* report,
                                int max_cycles) {
  InitReport rep;
  ChainState state = all_included(model, start);
  bool joint_ok = false;
  try {
    if (!std::isfinite(model.log_posterior(state))) throw NumericalError("start is outside the support");
    bool converged = false;
    rep.cycles = coordinate_ascent(model, state, std::min(max_cycles, 5), false, converged);
    if (!converged) {
      joint_ascent(model, state, 50 * max_cycles, converged);
      rep.cycles += coordinate_ascent(model, state, max_cycles, false, converged);
    }
    rep.converged = converged;
    joint_ok = std::isfinite(model.log_posterior(state)) && converged;
    if (!converged) rep.message = "joint block search did not converge";
  } catch (const std::exception& e) {
    rep.message = std::string("joint block search failed: ") + e.what();
  }
  if (!joint_ok) {
    // Margins under the independence copula first, then the copula given the margins.
    ModelSpec margin_spec = model.spec();
    margin_spec.copula_enabled = false;
    const PosteriorModel margins(model.data(), margin_spec, model.grid());
    ChainState ms = all_included(margins, model.initial_state());
    bool converged = false;
    rep.cycles = coordinate_ascent(margins, ms, max_cycles, false, converged);
    ChainState two = ms;
    model.refresh(two);
    if (!std::isfinite(model.log_posterior(two))) {
      two = all_included(model, model.initial_state());
      for (int i = 0; i < 8; ++i) two.blocks[i] = ms.blocks[i];
      model.refresh(two);
    }
    bool conv_c = false;
    rep.cycles += coordinate_ascent(model, two, max_cycles, true, conv_c);
    bool conv_all = false;
    rep.cycles += coordinate_ascent(model, two, max_cycles, false, conv_all);
    rep.two_stage = true;
    rep.converged = conv_all;
    const double lp_two = model.log_posterior(two);
    if (std::isfinite(lp_two) && (!std::isfinite(model.log_posterior(state)) || lp_two > model.log_posterior(state))) {
      state = two;
    }
    if (!conv_all && rep.message.empty()) rep.message = "two-stage search did not converge";
  }
  rep.log_posterior = model.log_posterior(state);
  if (report != nullptr) *report = rep;
  return state;
}

}  // namespace cdcopula
