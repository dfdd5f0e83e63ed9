#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdcopula/copula.hpp"
#include "cdcopula/links.hpp"
#include "cdcopula/priors.hpp"
#include "cdcopula/split_t.hpp"

// Joint posterior of the bivariate model: two split-t margins whose four
// parameters each have their own covariate block, and a Joe-Clayton copula
// with covariate-dependent lambda_L and tau.

namespace cdcopula {

class TauGrid;

enum class BlockId : int { kMu1 = 0, kPhi1, kNu1, kKappa1, kMu2, kPhi2, kNu2, kKappa2, kLambda, kTau };
inline constexpr int kNumBlocks = 10;

inline int index(BlockId b) { return static_cast<int>(b); }
inline BlockId block_at(int i) { return static_cast<BlockId>(i); }
// 0 or 1 for margin blocks, -1 for copula blocks.
inline int margin_of(BlockId b) { return index(b) < 4 ? 0 : (index(b) < 8 ? 1 : -1); }
// 0 mu, 1 phi, 2 nu, 3 kappa for margin blocks.
inline int margin_param_of(BlockId b) { return index(b) % 4; }
std::string block_name(BlockId b);
BlockId block_from_name(const std::string& name);

enum class CopulaLinkMode {
  kIndependent,  // logit link for tau, prior truncated to the feasible region
  kConditional,  // glogit link for tau with lower bound a(lambda_L)
};

// Observed pairs and standardized covariates (no intercept column).
struct ModelData {
  Eigen::VectorXd y1;
  Eigen::VectorXd y2;
  Eigen::MatrixXd x1;  // covariates of margin 1
  Eigen::MatrixXd x2;  // covariates of margin 2
  std::vector<std::string> names1;
  std::vector<std::string> names2;

  Eigen::Index size() const { return y1.size(); }
  void validate() const;
};

// Copula covariates are the union of both margins' columns, labelled by margin.
Eigen::MatrixXd copula_design(const ModelData& data);
std::vector<std::string> copula_covariate_names(const ModelData& data);

struct BlockSpec {
  LinkSpec link;                // for tau under the conditional mode the bounds are per observation
  ElicitedPrior elicited;       // prior on the parameter at mean covariates
  NormalMoments intercept;      // implied normal prior on the intercept
  SlopePrior slopes;
  bool use_covariates = true;
  bool variable_selection = true;  // false keeps every indicator at 1
  bool update = true;              // false holds the block fixed during sampling
};

struct ModelSpec {
  std::array<BlockSpec, kNumBlocks> blocks;
  CopulaLinkMode link_mode = CopulaLinkMode::kConditional;
  Rotation rotation = Rotation::kNone;
  bool copula_enabled = true;  // false gives the independence copula (log c = 0)

  BlockSpec& operator[](BlockId b) { return blocks[index(b)]; }
  const BlockSpec& operator[](BlockId b) const { return blocks[index(b)]; }
};

// Documented defaults. Margin intercept priors: mu ~ N(0, 1); phi, nu, kappa
// log-normal with (mean, sd) = (1, 1), (10, 10), (1, 0.5). lambda_L ~
// gBeta(0, 1, 0.3, 0.2); tau ~ gBeta(a, 1, 0.5, 0.2) with a = a(0.3) in the
// conditional mode, gBeta(0, 1, 0.5, 0.2) otherwise. Slopes c = 10, P = I, p = 0.5.
ModelSpec default_model_spec(CopulaLinkMode mode = CopulaLinkMode::kConditional);

// Recomputes every BlockSpec::intercept from its elicited prior and link.
// In the conditional mode the tau prior is elicited at the lambda_L prior mean.
void resolve_intercept_priors(ModelSpec& spec);

// Coefficients of one feature: eta = beta0 + x' beta.
struct ParamBlock {
  double beta0 = 0.0;
  Eigen::VectorXd beta;
  std::vector<bool> included;  // excluded coordinates hold beta exactly 0

  int num_included() const;
};

// Sampler position plus per-observation caches consistent with it.
struct ChainState {
  std::array<ParamBlock, kNumBlocks> blocks;

  Eigen::MatrixXd eta;  // n x kNumBlocks linear predictors
  std::array<Eigen::VectorXd, 2> mu, phi, nu, kappa, logf, u;
  Eigen::VectorXd lambda, tau, delta, theta, logc;
  bool feasible = true;

  ParamBlock& operator[](BlockId b) { return blocks[index(b)]; }
  const ParamBlock& operator[](BlockId b) const { return blocks[index(b)]; }
};

// Per-observation terms that move with one block's linear predictor.
struct BlockTerms {
  double loglik = 0.0;     // sum over observations of the affected terms
  Eigen::VectorXd grad;    // d loglik_i / d eta_i
  bool feasible = true;
  int fd_fallbacks = 0;    // observations whose derivative needed finite differences
};

class PosteriorModel {
 public:
  PosteriorModel(const ModelData& data, ModelSpec spec, const TauGrid* grid = nullptr);

  const ModelData& data() const { return data_; }
  const ModelSpec& spec() const { return spec_; }
  Eigen::Index n() const { return data_.size(); }
  const TauGrid* grid() const { return grid_; }

  // Design matrix for a block (empty columns when covariates are off).
  const Eigen::MatrixXd& design(BlockId b) const;
  Eigen::Index num_covariates(BlockId b) const { return design(b).cols(); }
  std::vector<std::string> covariate_names(BlockId b) const;

  // Intercepts at their prior means, slopes zero, indicators on (or as
  // dictated by variable_selection = false). Caches are refreshed.
  ChainState initial_state() const;

  // Recomputes every cache from the coefficients.
  void refresh(ChainState& state) const;

  double log_likelihood(const ChainState& state) const;
  double log_prior(const ChainState& state) const;
  double log_posterior(const ChainState& state) const;

  double block_log_prior(BlockId b, const ParamBlock& block) const;

  // Affected likelihood terms when block b's predictor is replaced by eta.
  BlockTerms block_terms(const ChainState& state, BlockId b, const Eigen::VectorXd& eta, bool with_grad) const;

  Eigen::VectorXd linear_predictor(BlockId b, const ParamBlock& block) const;

  // Replaces block b and updates the caches it influences.
  void set_block(ChainState& state, BlockId b, const ParamBlock& block) const;

  // Full gradient of the log posterior w.r.t. (beta0, included slopes) of block b.
  Eigen::VectorXd block_gradient(const ChainState& state, BlockId b) const;

  // Per-observation parameter values from an eta column.
  double parameter_value(BlockId b, double eta, double lambda_for_tau) const;

 private:
  const ModelData& data_;
  ModelSpec spec_;
  const TauGrid* grid_;
  Eigen::MatrixXd x_copula_;
  Eigen::MatrixXd x_empty_;
};

// Log-likelihood of one split-t margin and its gradient per block (intercept
// first, then every slope coordinate) through the links mu identity,
// phi/nu/kappa log. Copula terms are not included.
struct MarginLoglik {
  double loglik = 0.0;
  std::array<Eigen::VectorXd, 4> grad;
};
MarginLoglik margin_loglik_and_grad(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                    const std::array<ParamBlock, 4>& blocks);

}  // namespace cdcopula
