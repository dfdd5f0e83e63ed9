#pragma once

#include <array>
#include <cstdint>

#include <Eigen/Dense>

#include "cdcopula/data.hpp"
#include "cdcopula/model.hpp"

// Synthetic datasets from the model itself: AR(1) covariates, per-observation
// margin and copula parameters through the links, Joe-Clayton pairs by
// conditional inversion, split-t quantiles.

namespace cdcopula {

struct SimulationSpec {
  Eigen::Index n = 2000;
  std::uint64_t seed = 1;
  int covariates_per_margin = 2;
  double ar = 0.5;  // AR(1) coefficient of every covariate; unit stationary variance
  CopulaLinkMode link_mode = CopulaLinkMode::kConditional;
  Rotation rotation = Rotation::kNone;
  // Slopes of margin blocks have covariates_per_margin entries, copula
  // blocks 2 * covariates_per_margin (margin 1 columns first).
  std::array<ParamBlock, kNumBlocks> truth;
};

// Reference design: two covariates per margin; lambda and tau depend on
// m1:x1 and m2:x1 while m1:x2 and m2:x2 are inactive.
SimulationSpec default_simulation_spec(Eigen::Index n = 2000, std::uint64_t seed = 1);

struct SimulatedData {
  DatedData data;
  Eigen::VectorXd lambda, tau, delta, theta;
  std::array<Eigen::VectorXd, 2> u;
};

// Throws InfeasibleError when the truth implies an unattainable (lambda_L, tau).
SimulatedData simulate(const SimulationSpec& spec);

// Sets indicators from the non-zero pattern of every slope vector.
void mark_included(std::array<ParamBlock, kNumBlocks>& blocks);

}  // namespace cdcopula
