#pragma once

#include <string>
#include <vector>

#include <Eigen/Dense>

#include "cdcopula/model.hpp"

// One-step-ahead predictive densities and the log predictive score, reusing
// a single posterior sample for every test point.

namespace cdcopula {

inline constexpr int kDefaultLpsBatches = 20;

// log((1/S) sum_s exp(l_s)). Throws on an empty draw set; -inf only when
// every term is -inf.
double predictive_logdensity(const Eigen::VectorXd& loglik_per_draw);

// S x n joint log-likelihood of every observation of `model` at every draw.
// Rows of `draws` follow draw_columns(model).
Eigen::MatrixXd pointwise_loglik(const PosteriorModel& model, const Eigen::MatrixXd& draws, int threads = 1);

struct LpsReport {
  std::string label;
  double total = 0.0;
  Eigen::VectorXd per_observation;
  double nse = 0.0;
  Eigen::Index draws = 0;
};

// Batch-means standard error of the total LPS: draws are cut into
// contiguous batches, the LPS is recomputed within each batch, and the
// spread of the batch totals is scaled by 1/sqrt(batches).
double numerical_standard_error(const Eigen::MatrixXd& pointwise, int batches = kDefaultLpsBatches);

LpsReport lps_from_pointwise(const Eigen::MatrixXd& pointwise, const std::string& label,
                             int batches = kDefaultLpsBatches);

LpsReport lps(const PosteriorModel& test_model, const Eigen::MatrixXd& draws, const std::string& label,
              int threads = 1, int batches = kDefaultLpsBatches);

// Table with columns model, LPS, nse.
void write_lps_table(const std::string& path, const std::vector<LpsReport>& reports);
// Per-observation terms: columns model, index, logpd.
void write_lps_terms(const std::string& path, const std::vector<LpsReport>& reports);

}  // namespace cdcopula
