#include "cdcopula/evaluation.hpp"

#include <cmath>
#include <exception>
#include <fstream>
#include <iomanip>
#include <limits>
#include <thread>

#include "cdcopula/errors.hpp"
#include "cdcopula/mcmc.hpp"

namespace cdcopula {

double predictive_logdensity(const Eigen::VectorXd& l) {
  if (l.size() == 0) throw DimensionError("predictive_logdensity: no draws");
  const double mx = l.maxCoeff();
  if (std::isnan(mx)) throw NumericalError("predictive_logdensity: NaN log-likelihood");
  if (mx == -std::numeric_limits<double>::infinity()) return mx;
  const double s = (l.array() - mx).exp().sum();
  return mx + std::log(s) - std::log(static_cast<double>(l.size()));
}

Eigen::MatrixXd pointwise_loglik(const PosteriorModel& model, const Eigen::MatrixXd& draws, int threads) {
  const Eigen::Index ns = draws.rows();
  const Eigen::Index n = model.n();
  Eigen::MatrixXd out(ns, n);
  const bool copula = model.spec().copula_enabled;
  auto work = [&](Eigen::Index from, Eigen::Index to) {
    for (Eigen::Index s = from; s < to; ++s) {
      const ChainState st = state_from_row(model, draws.row(s).transpose());
      Eigen::VectorXd row = st.logf[0] + st.logf[1];
      if (copula) row += st.logc;
      // NaN can only arise from -inf + inf; a failed observation has zero density.
      out.row(s) = row.unaryExpr([](double v) { return std::isnan(v) ? -std::numeric_limits<double>::infinity() : v; });
    }
  };
  threads = std::max(1, std::min<int>(threads, static_cast<int>(std::max<Eigen::Index>(ns, 1))));
  if (threads == 1) {
    work(0, ns);
    return out;
  }
  std::vector<std::thread> pool;
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(threads));
  const Eigen::Index chunk = (ns + threads - 1) / threads;
  for (int t = 0; t < threads; ++t) {
    pool.emplace_back([&, t]() {
      try {
        work(std::min(ns, t * chunk), std::min(ns, (t + 1) * chunk));
      } catch (...) {
        errors[t] = std::current_exception();
      }
    });
  }
  for (auto& th : pool) th.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
  return out;
}

double numerical_standard_error(const Eigen::MatrixXd& pointwise, int batches) {
  const Eigen::Index ns = pointwise.rows();
  if (batches < 2) throw ConfigError("numerical_standard_error: need at least two batches");
  if (ns < batches) throw DimensionError("numerical_standard_error: need at least as many draws as batches");
  const Eigen::Index size = ns / batches;
  Eigen::VectorXd totals(batches);
  for (int b = 0; b < batches; ++b) {
    const auto block = pointwise.middleRows(b * size, size);
    double t = 0.0;
    for (Eigen::Index i = 0; i < pointwise.cols(); ++i) t += predictive_logdensity(block.col(i));
    totals(b) = t;
  }
  if (!totals.allFinite()) return std::numeric_limits<double>::infinity();
  const double var = (totals.array() - totals.mean()).square().sum() / static_cast<double>(batches - 1);
  return std::sqrt(var / static_cast<double>(batches));
}

LpsReport lps_from_pointwise(const Eigen::MatrixXd& pointwise, const std::string& label, int batches) {
  LpsReport r;
  r.label = label;
  r.draws = pointwise.rows();
  r.per_observation.resize(pointwise.cols());
  for (Eigen::Index i = 0; i < pointwise.cols(); ++i) r.per_observation(i) = predictive_logdensity(pointwise.col(i));
  r.total = r.per_observation.sum();
  r.nse = numerical_standard_error(pointwise, batches);
  return r;
}

LpsReport lps(const PosteriorModel& test_model, const Eigen::MatrixXd& draws, const std::string& label, int threads,
              int batches) {
  if (draws.rows() == 0) throw DimensionError("lps: no posterior draws");
  return lps_from_pointwise(pointwise_loglik(test_model, draws, threads), label, batches);
}

void write_lps_table(const std::string& path, const std::vector<LpsReport>& reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(10) << "model,LPS,nse\n";
  for (const auto& r : reports) out << r.label << ',' << r.total << ',' << r.nse << '\n';
}

void write_lps_terms(const std::string& path, const std::vector<LpsReport>& reports) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(12) << "model,index,logpd\n";
  for (const auto& r : reports) {
    for (Eigen::Index i = 0; i < r.per_observation.size(); ++i) out << r.label << ',' << i << ',' << r.per_observation(i) << '\n';
  }
}

}  // namespace cdcopula
