#pragma once

#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdcopula/links.hpp"

namespace cdcopula {

// x in (a, b) with (x - a)/(b - a) ~ Beta having mean (m - a)/(b - a) and
// standard deviation sigma/(b - a).
struct GBetaSpec {
  double a = 0.0;
  double b = 1.0;
  double m = 0.5;
  double sigma = 0.1;
};

struct BetaShapes {
  double alpha1 = 1.0;
  double alpha2 = 1.0;
};

// Throws DomainError when sigma^2 reaches the largest beta variance for m.
BetaShapes gbeta_shapes(const GBetaSpec& spec);
double gbeta_draw(const GBetaSpec& spec, std::mt19937_64& rng);

enum class ElicitKind { kNormal, kLogNormal, kGBeta };

// Prior placed on the model parameter itself (covariates at their means).
struct ElicitedPrior {
  ElicitKind kind = ElicitKind::kNormal;
  double m = 0.0;      // mean of the parameter
  double sigma = 1.0;  // standard deviation of the parameter
  double a = 0.0;      // gBeta support
  double b = 1.0;
};

struct NormalMoments {
  double mean = 0.0;
  double variance = 1.0;
};

// Moments of eta = link_forward(X) for X from the elicited prior; closed forms
// for identity+normal, log+log-normal, logit/glogit+gBeta on the same support.
NormalMoments intercept_prior_moments(const LinkSpec& link, const ElicitedPrior& prior);
// Always by numerical integration.
NormalMoments intercept_prior_moments_quadrature(const LinkSpec& link, const ElicitedPrior& prior);

double normal_logpdf(double x, const NormalMoments& m);

// beta ~ N(0, c^2 P^-1), indicators iid Bernoulli(p).
struct SlopePrior {
  double c = 10.0;
  Eigen::MatrixXd precision;  // P; empty means identity
  double inclusion_prob = 0.5;
};

struct ConditionalNormal {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;
};

// Included coordinates given the excluded ones:
// mean Sigma_IE Sigma_E^-1 beta_E, covariance Sigma_I - Sigma_IE Sigma_E^-1 Sigma_EI.
ConditionalNormal slope_conditional_moments(const SlopePrior& prior, const Eigen::VectorXd& beta,
                                            const std::vector<bool>& included);

// Normal log density of the included slopes plus log Bernoulli mass of all indicators.
double slope_prior_logdensity(const SlopePrior& prior, const Eigen::VectorXd& beta,
                              const std::vector<bool>& included);

}  // namespace cdcopula
