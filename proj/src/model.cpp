#include "cdcopula/model.hpp"

#include <cmath>
#include <limits>

#include "cdcopula/errors.hpp"
#include "cdcopula/special_functions.hpp"
#include "cdcopula/tau_grid.hpp"

namespace cdcopula {

using special::logistic;

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();
constexpr const char* kBlockNames[kNumBlocks] = {"mu1", "phi1", "nu1", "kappa1", "mu2",
                                                 "phi2", "nu2", "kappa2", "lambda", "tau"};
// Features closer than this to 0 or 1 are treated as outside the support.
constexpr double kFeatureEdge = 1e-12;
constexpr double kFdStep = 1e-6;

struct CopulaEval {
  double logc = 0.0;
  double d_u1 = 0.0;
  double d_u2 = 0.0;
  double d_theta = 0.0;
  double d_delta = 0.0;
  bool overflow = false;
};

CopulaEval eval_copula(double u1, double u2, double delta, double theta, Rotation rot, bool with_grad) {
  const UnitPair p = rotate({u1, u2}, rot);
  const JcLogDensity r = jc_logpdf_full(p, {theta, delta}, with_grad);
  CopulaEval e;
  e.logc = r.value;
  e.overflow = r.overflow;
  if (with_grad && !r.overflow) {
    e.d_u1 = flips_u(rot) ? -r.d_u : r.d_u;
    e.d_u2 = flips_v(rot) ? -r.d_v : r.d_v;
    e.d_theta = r.d_theta;
    e.d_delta = r.d_delta;
  }
  return e;
}

bool interior_feature(double x) { return x > kFeatureEdge && x < 1.0 - kFeatureEdge; }

bool tau_attainable(double tau, double delta);

// theta for (tau, delta); false outside the numerically supported region.
bool solve_theta(double tau, double delta, double hint, const TauGrid* grid, double& theta) {
  if (!tau_attainable(tau, delta)) return false;
  try {
    theta = theta_for_tau(tau, delta, hint, grid);
  } catch (const DomainError&) {
    return false;
  } catch (const NumericalError&) {
    return false;
  }
  return true;
}

// tau is attainable for delta (strictly above the theta = 1 edge up to rounding) and below 1.
bool tau_attainable(double tau, double delta) {
  return interior_feature(tau) && tau >= tau_lower_bound(delta) - 1e-12;
}

void set_param(SplitTParams& p, int k, double v) {
  switch (k) {
    case 0:
      p.mu = v;
      break;
    case 1:
      p.phi = v;
      break;
    case 2:
      p.nu = v;
      break;
    default:
      p.kappa = v;
      break;
  }
}

bool valid_margin(const SplitTParams& p) {
  return std::isfinite(p.mu) && p.phi > 0.0 && std::isfinite(p.phi) && p.nu > 0.0 && std::isfinite(p.nu) &&
         p.kappa > 0.0 && std::isfinite(p.kappa);
}

}  // namespace

std::string block_name(BlockId b) { return kBlockNames[index(b)]; }

BlockId block_from_name(const std::string& name) {
  for (int i = 0; i < kNumBlocks; ++i) {
    if (name == kBlockNames[i]) return block_at(i);
  }
  throw ConfigError("unknown block '" + name + "'");
}

void ModelData::validate() const {
  const Eigen::Index n = y1.size();
  if (n < 2) throw DimensionError("model data: need at least two observations");
  if (y2.size() != n) throw DimensionError("model data: y1 and y2 differ in length");
  if (x1.rows() != n || x2.rows() != n) throw DimensionError("model data: covariate rows differ from n");
  if (!names1.empty() && static_cast<Eigen::Index>(names1.size()) != x1.cols()) {
    throw DimensionError("model data: names1 does not match x1");
  }
  if (!names2.empty() && static_cast<Eigen::Index>(names2.size()) != x2.cols()) {
    throw DimensionError("model data: names2 does not match x2");
  }
  if (!y1.allFinite() || !y2.allFinite() || !x1.allFinite() || !x2.allFinite()) {
    throw DataError("model data: non-finite values");
  }
}

Eigen::MatrixXd copula_design(const ModelData& data) {
  Eigen::MatrixXd x(data.size(), data.x1.cols() + data.x2.cols());
  x << data.x1, data.x2;
  return x;
}

std::vector<std::string> copula_covariate_names(const ModelData& data) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < data.x1.cols(); ++j) {
    names.push_back("m1:" + (data.names1.empty() ? "x" + std::to_string(j + 1) : data.names1[j]));
  }
  for (Eigen::Index j = 0; j < data.x2.cols(); ++j) {
    names.push_back("m2:" + (data.names2.empty() ? "x" + std::to_string(j + 1) : data.names2[j]));
  }
  return names;
}

ModelSpec default_model_spec(CopulaLinkMode mode) {
  ModelSpec spec;
  spec.link_mode = mode;
  for (int m = 0; m < 2; ++m) {
    BlockSpec& mu = spec.blocks[4 * m + 0];
    mu.link = {LinkKind::kIdentity};
    mu.elicited = {ElicitKind::kNormal, 0.0, 1.0};
    BlockSpec& phi = spec.blocks[4 * m + 1];
    phi.link = {LinkKind::kLog};
    phi.elicited = {ElicitKind::kLogNormal, 1.0, 1.0};
    BlockSpec& nu = spec.blocks[4 * m + 2];
    nu.link = {LinkKind::kLog};
    nu.elicited = {ElicitKind::kLogNormal, 10.0, 10.0};
    BlockSpec& kappa = spec.blocks[4 * m + 3];
    kappa.link = {LinkKind::kLog};
    kappa.elicited = {ElicitKind::kLogNormal, 1.0, 0.5};
  }
  BlockSpec& lambda = spec[BlockId::kLambda];
  lambda.link = {LinkKind::kLogit};
  lambda.elicited = {ElicitKind::kGBeta, 0.3, 0.2, 0.0, 1.0};
  BlockSpec& tau = spec[BlockId::kTau];
  tau.link = {LinkKind::kLogit};
  tau.elicited = {ElicitKind::kGBeta, 0.5, 0.2, 0.0, 1.0};
  resolve_intercept_priors(spec);
  return spec;
}

void resolve_intercept_priors(ModelSpec& spec) {
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    BlockSpec& bs = spec.blocks[i];
    try {
      if (b == BlockId::kTau && spec.link_mode == CopulaLinkMode::kConditional) {
        const double a = conditional_tau_lower_bound(spec[BlockId::kLambda].elicited.m);
        bs.link = {LinkKind::kGlogit, a, 1.0};
        if (!(bs.elicited.m > a)) {
          throw ConfigError("tau prior mean " + std::to_string(bs.elicited.m) +
                            " is not above the conditional lower bound " + std::to_string(a) +
                            " implied by the lambda prior mean");
        }
        ElicitedPrior e = bs.elicited;
        e.kind = ElicitKind::kGBeta;
        e.a = a;
        e.b = 1.0;
        bs.intercept = intercept_prior_moments(bs.link, e);
      } else {
        if (b == BlockId::kTau) bs.link = {LinkKind::kLogit};
        bs.intercept = intercept_prior_moments(bs.link, bs.elicited);
      }
    } catch (const DomainError& e) {
      throw ConfigError("prior for block " + block_name(b) + ": " + e.what());
    }
  }
}

int ParamBlock::num_included() const {
  int k = 0;
  for (bool b : included) k += b ? 1 : 0;
  return k;
}

PosteriorModel::PosteriorModel(const ModelData& data, ModelSpec spec, const TauGrid* grid)
    : data_(data), spec_(std::move(spec)), grid_(grid) {
  data_.validate();
  x_copula_ = copula_design(data_);
  x_empty_ = Eigen::MatrixXd(data_.size(), 0);
}

const Eigen::MatrixXd& PosteriorModel::design(BlockId b) const {
  if (!spec_[b].use_covariates) return x_empty_;
  switch (margin_of(b)) {
    case 0:
      return data_.x1;
    case 1:
      return data_.x2;
    default:
      return x_copula_;
  }
}

double PosteriorModel::parameter_value(BlockId b, double eta, double lambda_for_tau) const {
  if (b == BlockId::kTau && spec_.link_mode == CopulaLinkMode::kConditional) {
    const double a = conditional_tau_lower_bound(lambda_for_tau);
    return a + (1.0 - a) * logistic(eta);
  }
  return link_eval(spec_[b].link, eta);
}

std::vector<std::string> PosteriorModel::covariate_names(BlockId b) const {
  const Eigen::Index d = num_covariates(b);
  std::vector<std::string> names;
  if (d == 0) return names;
  const int m = margin_of(b);
  if (m < 0) return copula_covariate_names(data_);
  const std::vector<std::string>& given = m == 0 ? data_.names1 : data_.names2;
  for (Eigen::Index j = 0; j < d; ++j) names.push_back(given.empty() ? "x" + std::to_string(j + 1) : given[j]);
  return names;
}

Eigen::VectorXd PosteriorModel::linear_predictor(BlockId b, const ParamBlock& block) const {
  const Eigen::MatrixXd& x = design(b);
  Eigen::VectorXd eta = Eigen::VectorXd::Constant(n(), block.beta0);
  if (x.cols() > 0) eta.noalias() += x * block.beta;
  return eta;
}

ChainState PosteriorModel::initial_state() const {
  ChainState s;
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    ParamBlock& pb = s.blocks[i];
    pb.beta0 = spec_.blocks[i].intercept.mean;
    const Eigen::Index d = num_covariates(b);
    pb.beta = Eigen::VectorXd::Zero(d);
    pb.included.assign(static_cast<std::size_t>(d), true);
  }
  refresh(s);
  return s;
}

void PosteriorModel::refresh(ChainState& s) const {
  const Eigen::Index nn = n();
  s.eta.resize(nn, kNumBlocks);
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    if (s.blocks[i].beta.size() != num_covariates(b) ||
        static_cast<Eigen::Index>(s.blocks[i].included.size()) != num_covariates(b)) {
      throw DimensionError("chain state: block " + block_name(b) + " has the wrong number of slopes");
    }
    s.eta.col(i) = linear_predictor(b, s.blocks[i]);
  }
  s.feasible = true;
  for (int m = 0; m < 2; ++m) {
    s.mu[m].resize(nn);
    s.phi[m].resize(nn);
    s.nu[m].resize(nn);
    s.kappa[m].resize(nn);
    s.logf[m].resize(nn);
    s.u[m].resize(nn);
    const Eigen::VectorXd& y = m == 0 ? data_.y1 : data_.y2;
    for (Eigen::Index i = 0; i < nn; ++i) {
      SplitTParams p;
      for (int k = 0; k < 4; ++k) set_param(p, k, link_eval(spec_.blocks[4 * m + k].link, s.eta(i, 4 * m + k)));
      s.mu[m](i) = p.mu;
      s.phi[m](i) = p.phi;
      s.nu[m](i) = p.nu;
      s.kappa[m](i) = p.kappa;
      if (!valid_margin(p)) {
        s.feasible = false;
        s.logf[m](i) = kNegInf;
        s.u[m](i) = 0.5;
        continue;
      }
      s.logf[m](i) = split_t_logpdf(y(i), p);
      s.u[m](i) = split_t_cdf(y(i), p);
    }
  }
  const bool had_theta = s.theta.size() == nn;
  s.lambda.resize(nn);
  s.tau.resize(nn);
  s.delta.resize(nn);
  if (!had_theta) s.theta = Eigen::VectorXd::Constant(nn, std::numeric_limits<double>::quiet_NaN());
  s.logc.resize(nn);
  for (Eigen::Index i = 0; i < nn; ++i) {
    const double lambda = link_eval(spec_[BlockId::kLambda].link, s.eta(i, index(BlockId::kLambda)));
    s.lambda(i) = lambda;
    if (!interior_feature(lambda)) {
      s.feasible = false;
      s.logc(i) = kNegInf;
      continue;
    }
    s.delta(i) = delta_from_lambda_l(lambda);
    s.tau(i) = parameter_value(BlockId::kTau, s.eta(i, index(BlockId::kTau)), lambda);
    if (!solve_theta(s.tau(i), s.delta(i), s.theta(i), grid_, s.theta(i))) {
      s.feasible = false;
      s.logc(i) = kNegInf;
      continue;
    }
    s.logc(i) = spec_.copula_enabled ? eval_copula(s.u[0](i), s.u[1](i), s.delta(i), s.theta(i), spec_.rotation, false).logc
                                     : 0.0;
  }
}

double PosteriorModel::log_likelihood(const ChainState& s) const {
  if (!s.feasible) return kNegInf;
  double ll = s.logf[0].sum() + s.logf[1].sum();
  if (spec_.copula_enabled) ll += s.logc.sum();
  return ll;
}

double PosteriorModel::block_log_prior(BlockId b, const ParamBlock& block) const {
  const BlockSpec& bs = spec_[b];
  double lp = normal_logpdf(block.beta0, bs.intercept);
  if (block.beta.size() > 0) {
    lp += slope_prior_logdensity(bs.slopes, block.beta, block.included);
    if (!bs.variable_selection) {
      // indicators are fixed, not random: drop their Bernoulli mass
      lp -= static_cast<double>(block.beta.size()) * std::log(bs.slopes.inclusion_prob);
    }
  }
  return lp;
}

double PosteriorModel::log_prior(const ChainState& s) const {
  double lp = 0.0;
  for (int i = 0; i < kNumBlocks; ++i) lp += block_log_prior(block_at(i), s.blocks[i]);
  return lp;
}

double PosteriorModel::log_posterior(const ChainState& s) const {
  const double ll = log_likelihood(s);
  if (ll == kNegInf) return kNegInf;
  return ll + log_prior(s);
}

BlockTerms PosteriorModel::block_terms(const ChainState& s, BlockId b, const Eigen::VectorXd& eta,
                                       bool with_grad) const {
  const Eigen::Index nn = n();
  if (eta.size() != nn) throw DimensionError("block_terms: eta has the wrong length");
  BlockTerms out;
  if (with_grad) out.grad = Eigen::VectorXd::Zero(nn);
  const int m = margin_of(b);
  const Rotation rot = spec_.rotation;
  const bool copula = spec_.copula_enabled;
  const LinkSpec& link = spec_[b].link;
  const bool conditional = spec_.link_mode == CopulaLinkMode::kConditional;

  // Returns false when the observation leaves the support. li and gi receive
  // the affected log-likelihood term and its eta-derivative.
  auto obs = [&](Eigen::Index i, double e, bool g, double& li, double& gi) -> bool {
    gi = 0.0;
    if (m >= 0) {
      const int k = margin_param_of(b);
      SplitTParams p{s.mu[m](i), s.phi[m](i), s.nu[m](i), s.kappa[m](i)};
      set_param(p, k, link_eval(link, e));
      if (!valid_margin(p)) return false;
      const double y = m == 0 ? data_.y1(i) : data_.y2(i);
      double lf = 0.0;
      double u = 0.0;
      SplitTLogpdfGrad lg;
      SplitTCdfGrad cg;
      if (g) {
        lg = split_t_logpdf_grad(y, p);
        cg = split_t_cdf_grads(y, p, NuGradientMethod::kAuto, k == 2);
        lf = lg.value;
        u = cg.cdf;
      } else {
        lf = split_t_logpdf(y, p);
        u = split_t_cdf(y, p);
      }
      li = lf;
      double dlc_du = 0.0;
      if (copula) {
        const double u1 = m == 0 ? u : s.u[0](i);
        const double u2 = m == 1 ? u : s.u[1](i);
        const CopulaEval ce = eval_copula(u1, u2, s.delta(i), s.theta(i), rot, g);
        li += ce.logc;
        dlc_du = m == 0 ? ce.d_u1 : ce.d_u2;
      }
      if (g) {
        const double dlf[4] = {lg.d_mu, lg.d_phi, lg.d_nu, lg.d_kappa};
        const double dF[4] = {cg.d_mu, cg.d_phi, cg.d_nu, cg.d_kappa};
        gi = (dlf[k] + dlc_du * dF[k]) * link_eval_derivative(link, e);
      }
      return true;
    }
    if (!copula) {
      li = 0.0;
      return true;
    }
    double lambda = s.lambda(i);
    double delta = s.delta(i);
    double tau = 0.0;
    double dtau_deta = 0.0;  // tau block
    double tau_share = 0.0;  // 1 - logistic(eta_tau), conditional lambda pathway
    if (b == BlockId::kLambda) {
      lambda = link_eval(link, e);
      if (!interior_feature(lambda)) return false;
      delta = delta_from_lambda_l(lambda);
      if (conditional) {
        const double a = conditional_tau_lower_bound(lambda);
        const double sg = logistic(s.eta(i, index(BlockId::kTau)));
        tau = a + (1.0 - a) * sg;
        tau_share = 1.0 - sg;
      } else {
        tau = s.tau(i);
      }
    } else {
      if (conditional) {
        const double a = conditional_tau_lower_bound(lambda);
        const double sg = logistic(e);
        tau = a + (1.0 - a) * sg;
        dtau_deta = (1.0 - a) * sg * logistic(-e);
      } else {
        tau = link_eval(link, e);
        dtau_deta = link_eval_derivative(link, e);
      }
    }
    double theta = 0.0;
    if (!solve_theta(tau, delta, s.theta(i), grid_, theta)) return false;
    const CopulaEval ce = eval_copula(s.u[0](i), s.u[1](i), delta, theta, rot, g);
    li = ce.logc;
    if (g && !ce.overflow) {
      const TauGradient tg = tau_gradient(theta, delta);
      if (b == BlockId::kTau) {
        gi = ce.d_theta / tg.d_theta * dtau_deta;
      } else {
        // tau held fixed: theta moves with delta along the tau level set.
        double dl = (ce.d_delta - ce.d_theta * tg.d_delta / tg.d_theta) / dlambda_l_ddelta(delta);
        if (conditional) dl += ce.d_theta / tg.d_theta * conditional_tau_lower_bound_derivative(lambda) * tau_share;
        gi = dl * link_eval_derivative(link, e);
      }
    }
    return true;
  };

  for (Eigen::Index i = 0; i < nn; ++i) {
    double li = 0.0;
    double gi = 0.0;
    if (!obs(i, eta(i), with_grad, li, gi)) {
      out.loglik = kNegInf;
      out.feasible = false;
      return out;
    }
    out.loglik += li;
    if (with_grad) {
      if (!std::isfinite(gi)) {
        // Singular chain-rule factor: central difference of this observation's term.
        const double h = kFdStep * std::max(1.0, std::fabs(eta(i)));
        double lp = 0.0;
        double lm = 0.0;
        double dummy = 0.0;
        const bool ok = obs(i, eta(i) + h, false, lp, dummy) && obs(i, eta(i) - h, false, lm, dummy);
        gi = ok ? (lp - lm) / (2.0 * h) : 0.0;
        ++out.fd_fallbacks;
      }
      out.grad(i) = gi;
    }
  }
  return out;
}

void PosteriorModel::set_block(ChainState& s, BlockId b, const ParamBlock& block) const {
  s[b] = block;
  s.eta.col(index(b)) = linear_predictor(b, block);
  const Eigen::Index nn = n();
  const int m = margin_of(b);
  s.feasible = true;
  if (m >= 0) {
    const int k = margin_param_of(b);
    const Eigen::VectorXd& y = m == 0 ? data_.y1 : data_.y2;
    Eigen::VectorXd* vals[4] = {&s.mu[m], &s.phi[m], &s.nu[m], &s.kappa[m]};
    for (Eigen::Index i = 0; i < nn; ++i) {
      (*vals[k])(i) = link_eval(spec_[b].link, s.eta(i, index(b)));
      const SplitTParams p{s.mu[m](i), s.phi[m](i), s.nu[m](i), s.kappa[m](i)};
      if (!valid_margin(p)) {
        s.feasible = false;
        continue;
      }
      s.logf[m](i) = split_t_logpdf(y(i), p);
      s.u[m](i) = split_t_cdf(y(i), p);
      if (spec_.copula_enabled) {
        s.logc(i) = eval_copula(s.u[0](i), s.u[1](i), s.delta(i), s.theta(i), spec_.rotation, false).logc;
      }
    }
    return;
  }
  for (Eigen::Index i = 0; i < nn; ++i) {
    if (b == BlockId::kLambda) {
      s.lambda(i) = link_eval(spec_[b].link, s.eta(i, index(b)));
      if (!interior_feature(s.lambda(i))) {
        s.feasible = false;
        continue;
      }
      s.delta(i) = delta_from_lambda_l(s.lambda(i));
      if (spec_.link_mode == CopulaLinkMode::kConditional) {
        s.tau(i) = parameter_value(BlockId::kTau, s.eta(i, index(BlockId::kTau)), s.lambda(i));
      }
    } else {
      s.tau(i) = parameter_value(BlockId::kTau, s.eta(i, index(BlockId::kTau)), s.lambda(i));
    }
    if (!solve_theta(s.tau(i), s.delta(i), s.theta(i), grid_, s.theta(i))) {
      s.feasible = false;
      continue;
    }
    if (spec_.copula_enabled) {
      s.logc(i) = eval_copula(s.u[0](i), s.u[1](i), s.delta(i), s.theta(i), spec_.rotation, false).logc;
    }
  }
}

Eigen::VectorXd PosteriorModel::block_gradient(const ChainState& s, BlockId b) const {
  const ParamBlock& pb = s[b];
  const BlockTerms t = block_terms(s, b, s.eta.col(index(b)), true);
  if (!t.feasible) throw DomainError("block_gradient: state outside the support");
  const Eigen::MatrixXd& x = design(b);
  const BlockSpec& bs = spec_[b];
  std::vector<Eigen::Index> active;
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    if (pb.included[j]) active.push_back(j);
  }
  Eigen::VectorXd g(1 + active.size());
  g(0) = t.grad.sum() - (pb.beta0 - bs.intercept.mean) / bs.intercept.variance;
  if (!active.empty()) {
    const ConditionalNormal cn = slope_conditional_moments(bs.slopes, pb.beta, pb.included);
    Eigen::VectorXd beta_in(active.size());
    for (std::size_t k = 0; k < active.size(); ++k) beta_in(k) = pb.beta(active[k]);
    const Eigen::VectorXd prior_grad = -cn.cov.llt().solve(beta_in - cn.mean);
    for (std::size_t k = 0; k < active.size(); ++k) {
      g(1 + k) = x.col(active[k]).dot(t.grad) + prior_grad(k);
    }
  }
  return g;
}

MarginLoglik margin_loglik_and_grad(const Eigen::VectorXd& y, const Eigen::MatrixXd& x,
                                    const std::array<ParamBlock, 4>& blocks) {
  const Eigen::Index n = y.size();
  if (x.rows() != n) throw DimensionError("margin_loglik_and_grad: covariate rows differ from n");
  for (const ParamBlock& pb : blocks) {
    if (pb.beta.size() != 0 && pb.beta.size() != x.cols()) {
      throw DimensionError("margin_loglik_and_grad: slope length differs from covariate count");
    }
  }
  auto eta = [&](int k, Eigen::Index i) {
    double e = blocks[k].beta0;
    if (blocks[k].beta.size() > 0) e += x.row(i).dot(blocks[k].beta);
    return e;
  };
  MarginLoglik out;
  std::array<Eigen::VectorXd, 4> g;
  for (int k = 0; k < 4; ++k) g[k] = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const SplitTParams p{eta(0, i), std::exp(eta(1, i)), std::exp(eta(2, i)), std::exp(eta(3, i))};
    const SplitTLogpdfGrad lg = split_t_logpdf_grad(y(i), p);
    out.loglik += lg.value;
    g[0](i) = lg.d_mu;
    g[1](i) = lg.d_phi * p.phi;
    g[2](i) = lg.d_nu * p.nu;
    g[3](i) = lg.d_kappa * p.kappa;
  }
  for (int k = 0; k < 4; ++k) {
    const Eigen::Index d = blocks[k].beta.size();
    out.grad[k].resize(1 + d);
    out.grad[k](0) = g[k].sum();
    if (d > 0) out.grad[k].tail(d) = x.transpose() * g[k];
  }
  return out;
}

}  // namespace cdcopula
