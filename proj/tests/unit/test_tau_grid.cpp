#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

#include "doctest.h"

#include "cdcopula/copula.hpp"
#include "cdcopula/errors.hpp"
#include "cdcopula/tau_grid.hpp"

using namespace cdcopula;

namespace {
const TauGrid& grid512() {
  static const TauGrid g = TauGrid::build();
  return g;
}
}  // namespace

TEST_CASE("grid layout") {
  const TauGrid& g = grid512();
  CHECK(g.rows() == 512);
  CHECK(g.cols() == 512);
  CHECK(g.lambda_l_axis().front() == TauGrid::kAxisLow);
  CHECK(g.lambda_l_axis().back() == TauGrid::kAxisHigh);
  for (std::size_t k = 1; k < g.rows(); ++k) CHECK(g.lambda_l_axis()[k] > g.lambda_l_axis()[k - 1]);
  CHECK(g.tau(100, 200) == kendall_tau({theta_from_lambda_u(g.lambda_u_axis()[200]), delta_from_lambda_l(g.lambda_l_axis()[100])}));
  CHECK_THROWS_AS(TauGrid::build(1, 5), DimensionError);
}

TEST_CASE("rows increase in lambda_U below the high lower-tail region") {
  const TauGrid& g = grid512();
  for (std::size_t i = 0; i < g.rows(); ++i) {
    if (g.lambda_l_axis()[i] > 0.81) break;
    for (std::size_t j = 1; j < g.cols(); ++j) CHECK(g.tau(i, j) > g.tau(i, j - 1));
  }
  // Rows above lambda_L = 0.8176 dip below the Clayton edge first.
  const std::size_t last = g.rows() - 1;
  bool dips = false;
  for (std::size_t j = 1; j < g.cols(); ++j) dips = dips || g.tau(last, j) < g.tau(last, 0);
  CHECK(dips);
}

TEST_CASE("inversion error below 1e-5") {
  const TauGrid& g = grid512();
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> ul(0.01, 0.8), uu(0.01, 0.99);
  double worst = 0.0;
  for (int k = 0; k < 2000; ++k) {
    const double ll = ul(rng), lu = uu(rng);
    const double tau = tau_from_features(ll, lu);
    worst = std::max(worst, std::fabs(g.inverse_upper(ll, tau) - lu));
    const double guess = g.guess_lambda_u(ll, tau);
    // Rows are interpolated linearly, so tau values right at a row's end can fall
    // outside the tabulated range (NaN); otherwise the guess is close.
    if (!std::isnan(guess)) CHECK(std::fabs(guess - lu) < 0.05);
  }
  CHECK(worst < 1e-5);
  CHECK(std::isnan(g.guess_lambda_u(0.3, 0.01)));
}

TEST_CASE("frontier matches the lambda_U -> 0 edge of the grid") {
  const TauGrid& g = grid512();
  for (std::size_t i = 0; i < g.rows(); i += 7) {
    const double ll = g.lambda_l_axis()[i];
    if (ll > 0.81) break;
    // The first column sits at lambda_U = 1e-4, a hair above the theta = 1 edge.
    CHECK(std::fabs(lambda_l_frontier(g.tau(i, 0)) - ll) < 1e-4);
    for (std::size_t j = 0; j < g.cols(); j += 5) CHECK(ll <= lambda_l_frontier(g.tau(i, j)) + 1e-12);
  }
}

TEST_CASE("save and load round trip bit for bit") {
  const TauGrid g = TauGrid::build(40, 30);
  const std::string path = (std::filesystem::temp_directory_path() / "cdcopula_taugrid_test.bin").string();
  g.save(path);
  const TauGrid h = TauGrid::load(path);
  CHECK(h == g);
  {
    std::FILE* f = std::fopen(path.c_str(), "r+b");
    std::fputc('X', f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(TauGrid::load(path), DataError);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(TauGrid::load(path), DataError);
}

TEST_CASE("grid-seeded theta_for_tau agrees with the unseeded solve") {
  const TauGrid& g = grid512();
  std::mt19937_64 rng(10);
  std::uniform_real_distribution<double> ul(0.01, 0.8), uu(0.01, 0.99);
  for (int k = 0; k < 200; ++k) {
    const double ll = ul(rng), lu = uu(rng);
    const double delta = delta_from_lambda_l(ll);
    const double tau = tau_from_features(ll, lu);
    CHECK(theta_for_tau(tau, delta, NAN, &g) == doctest::Approx(theta_for_tau(tau, delta)).epsilon(1e-10));
  }
}
