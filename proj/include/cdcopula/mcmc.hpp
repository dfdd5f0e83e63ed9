#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdcopula/model.hpp"

// Metropolis-Hastings within Gibbs with Newton-tailored multivariate-t
// proposals and joint updates of coefficients and selection indicators.

namespace cdcopula {

struct ProposalConfig {
  int newton_steps = 3;
  double df = 6.0;
  double p_prop = 0.2;      // per-indicator flip probability
  int max_halvings = 8;
  double newton_tol = 1e-4;  // stop when the Newton decrement falls below this
  double fd_step = 1e-5;     // finite-difference step for curvature
  double rw_scale = 0.05;    // random-walk fallback scale
};

void validate(const ProposalConfig& c);

struct TargetDerivs {
  double value = 0.0;
  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
};

using LogDensityFn = std::function<double(const Eigen::VectorXd&)>;
using GradientFn = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;
using DerivsFn = std::function<TargetDerivs(const Eigen::VectorXd&)>;

// Symmetrized forward-difference Jacobian of a gradient.
Eigen::MatrixXd fd_hessian(const GradientFn& grad, const Eigen::VectorXd& x, double step);

// Negative-definite repair: non-negative eigenvalues flip sign, magnitudes
// are floored at 1e-8. Returns false when the eigen-solver fails.
bool regularize_hessian(const Eigen::MatrixXd& hess, Eigen::MatrixXd& repaired);

struct NewtonProposal {
  Eigen::VectorXd location;
  Eigen::MatrixXd scale;   // negative inverse of the repaired Hessian at the endpoint
  double start_value = 0.0;  // log density at the start point
  int steps = 0;
  bool fallback = false;   // random-walk scale was used
};

NewtonProposal newton_proposal(const LogDensityFn& logp, const DerivsFn& derivs, const Eigen::VectorXd& start,
                               const ProposalConfig& config);
// Convenience form with the Hessian from finite differences of the gradient.
NewtonProposal newton_proposal(const LogDensityFn& logp, const GradientFn& grad, const Eigen::VectorXd& start,
                               const ProposalConfig& config);

double mvt_logpdf(const Eigen::VectorXd& x, const Eigen::VectorXd& location, const Eigen::MatrixXd& scale, double df);
Eigen::VectorXd mvt_draw(const Eigen::VectorXd& location, const Eigen::MatrixXd& scale, double df,
                         std::mt19937_64& rng);

double uniform_open(std::mt19937_64& rng);
// Accept iff log U < log_ratio.
bool mh_accept(double log_ratio, std::mt19937_64& rng);

// Each indicator flips independently with probability p_prop.
std::vector<bool> propose_indicators(const std::vector<bool>& current, double p_prop, std::mt19937_64& rng);

// A block's conditional posterior over (intercept, included slopes).
class SelectionTarget {
 public:
  virtual ~SelectionTarget() = default;
  virtual int num_slopes() const = 0;
  virtual double log_density(const Eigen::VectorXd& coords, const std::vector<bool>& included) const = 0;
  virtual TargetDerivs derivatives(const Eigen::VectorXd& coords, const std::vector<bool>& included) const = 0;
};

// Target from closures over the full vector (intercept, all slopes); excluded
// slopes are passed as zero. Hessian by finite differences of the gradient.
class FunctionTarget : public SelectionTarget {
 public:
  FunctionTarget(int num_slopes, LogDensityFn logp, GradientFn grad, double fd_step = 1e-5);
  int num_slopes() const override { return d_; }
  double log_density(const Eigen::VectorXd& coords, const std::vector<bool>& included) const override;
  TargetDerivs derivatives(const Eigen::VectorXd& coords, const std::vector<bool>& included) const override;

 private:
  Eigen::VectorXd expand(const Eigen::VectorXd& coords, const std::vector<bool>& included) const;
  int d_;
  LogDensityFn logp_;
  GradientFn grad_;
  double fd_step_;
};

// Full coefficient vector (intercept, all d slopes) <-> active coordinates.
Eigen::VectorXd active_coords(const Eigen::VectorXd& full, const std::vector<bool>& included);
Eigen::VectorXd full_coords(const Eigen::VectorXd& active, const std::vector<bool>& included);

struct MhOutcome {
  bool accepted = false;
  bool fallback = false;    // either proposal used the random-walk scale
  bool degenerate = false;  // proposal density not computable, auto-rejected
  double log_ratio = 0.0;
};

// One joint (indicators, coefficients) update. full and included are updated in place on acceptance.
MhOutcome mh_update(const SelectionTarget& target, Eigen::VectorXd& full, std::vector<bool>& included,
                    bool selection, const ProposalConfig& config, std::mt19937_64& rng);

// Conditional posterior of one block of the copula model at a fixed chain state.
class ModelBlockTarget : public SelectionTarget {
 public:
  ModelBlockTarget(const PosteriorModel& model, const ChainState& state, BlockId block, double fd_step = 1e-5);
  int num_slopes() const override;
  double log_density(const Eigen::VectorXd& coords, const std::vector<bool>& included) const override;
  TargetDerivs derivatives(const Eigen::VectorXd& coords, const std::vector<bool>& included) const override;

 private:
  ParamBlock to_block(const Eigen::VectorXd& coords, const std::vector<bool>& included) const;
  const PosteriorModel& model_;
  const ChainState& state_;
  BlockId block_;
  double fd_step_;
};

struct BlockDiagnostics {
  long proposals = 0;
  long accepts = 0;
  long fallbacks = 0;
  long degenerate = 0;
  double acceptance() const { return proposals > 0 ? static_cast<double>(accepts) / proposals : 0.0; }
};

struct ChainDiagnostics {
  std::array<BlockDiagnostics, kNumBlocks> blocks;
  std::array<long, kNumBlocks> visits{};  // block updates attempted per sweep bookkeeping
  long sweeps = 0;
};

// Updates every block once in the order mu1, phi1, nu1, kappa1, mu2, ...,
// kappa2, lambda, tau.
void gibbs_sweep(const PosteriorModel& model, ChainState& state, const ProposalConfig& config,
                 std::mt19937_64& rng, ChainDiagnostics& diag);

struct RunConfig {
  int sweeps = 2000;
  double burn_in = 0.2;  // fraction discarded
  int thin = 1;
  std::uint64_t seed = 1;
  ProposalConfig proposal;
};

struct ChainOutput {
  std::vector<std::string> columns;
  Eigen::MatrixXd draws;       // retained sweeps x columns
  Eigen::VectorXd log_posterior;  // per retained sweep
  ChainDiagnostics diagnostics;
  ChainState final_state;
  double seconds = 0.0;
};

// Column layout: for every block "<block>.beta0", "<block>.<cov>" per slope,
// then "<block>.I.<cov>" per indicator.
std::vector<std::string> draw_columns(const PosteriorModel& model);
Eigen::VectorXd flatten_state(const PosteriorModel& model, const ChainState& state);
// Inverse of flatten_state; caches are refreshed.
ChainState state_from_row(const PosteriorModel& model, const Eigen::VectorXd& row);

// Delimited draws file: columns chain, sweep, log_posterior, then
// draw_columns order. One row per retained sweep.
void write_draws_csv(const std::string& path, const std::vector<ChainOutput>& chains);
// Reads the draw columns back (chains stacked); the header must match
// `expected` exactly.
Eigen::MatrixXd read_draws_csv(const std::string& path, const std::vector<std::string>& expected);

ChainOutput run_chain(const PosteriorModel& model, const ChainState& start, const RunConfig& config);

// Independent chains with seeds derived from config.seed, run on up to
// `threads` worker threads.
std::vector<ChainOutput> run_chains(const PosteriorModel& model, const ChainState& start, const RunConfig& config,
                                    int chains, int threads);

// IF = 1 + 2 sum rho_k, truncated at the first lag with rho_k < 0.01 (that
// lag included) or lag 500. Floored at 1/n.
double inefficiency_factor(const Eigen::VectorXd& chain);

struct InitReport {
  bool converged = false;
  bool two_stage = false;
  int cycles = 0;
  double log_posterior = 0.0;
  std::string message;
};

// Block-coordinate Newton ascent on the joint posterior with all indicators
// on; falls back to margins-first then copula when the joint search fails.
ChainState init_by_optimization(const PosteriorModel& model, InitReport* report = nullptr, int max_cycles = 50);
ChainState init_by_optimization(const PosteriorModel& model, const ChainState& start, InitReport* report = nullptr,
                                int max_cycles = 50);

}  // namespace cdcopula
