// Command-line driver: prepare, simulate, fit, eval, tau-table, empirical-copula.

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <memory>
#include <numeric>

#include <CLI11.hpp>

#include "cdcopula/config.hpp"
#include "cdcopula/data.hpp"
#include "cdcopula/empirical_copula.hpp"
#include "cdcopula/errors.hpp"
#include "cdcopula/evaluation.hpp"
#include "cdcopula/mcmc.hpp"
#include "cdcopula/simulate.hpp"
#include "cdcopula/tau_grid.hpp"

namespace fs = std::filesystem;
using namespace cdcopula;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;
constexpr int kExitNumerical = 4;
constexpr const char* kResolvedName = "config.resolved";

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string seed, chains, threads, out;
};

Config load_config(const Common& o) {
  Config c;
  if (!o.config_path.empty()) c.load(o.config_path);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.seed.empty()) c.set("seed", o.seed);
  if (!o.chains.empty()) c.set("chains", o.chains);
  if (!o.threads.empty()) c.set("threads", o.threads);
  if (!o.out.empty()) c.set("out", o.out);
  c.validate();
  return c;
}

fs::path prepare_out(const Config& c) {
  const fs::path dir = c.get("out");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw DataError("cannot create output directory " + dir.string() + ": " + ec.message());
  c.write((dir / kResolvedName).string());
  return dir;
}

std::unique_ptr<TauGrid> tau_grid_for(const Config& c) {
  const std::string path = c.get("tau_grid");
  if (path.empty()) return nullptr;
  if (fs::exists(path)) return std::make_unique<TauGrid>(TauGrid::load(path));
  auto g = std::make_unique<TauGrid>(TauGrid::build(c.get_int("tau_grid.rows"), c.get_int("tau_grid.cols")));
  g->save(path);
  return g;
}

TrainTest load_split(const Config& c) {
  if (c.get("data").empty()) throw ConfigError("config key 'data' (dataset file) is required");
  DatedData d = read_dataset_csv(c.get("data"));
  d.data = select_covariates(d.data, c.get_strings("covariates"));
  return split_train_test(d, c.get_double("train_fraction"));
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

Eigen::MatrixXd stack_draws(const std::vector<ChainOutput>& chains) {
  Eigen::Index rows = 0;
  for (const auto& c : chains) rows += c.draws.rows();
  Eigen::MatrixXd all(rows, chains.front().draws.cols());
  Eigen::Index r = 0;
  for (const auto& c : chains) {
    all.middleRows(r, c.draws.rows()) = c.draws;
    r += c.draws.rows();
  }
  return all;
}

// Posterior summary shaped like a coefficient table: one row per coefficient.
void write_summary(const fs::path& path, const PosteriorModel& model, const std::vector<ChainOutput>& chains) {
  const Eigen::MatrixXd all = stack_draws(chains);
  std::ofstream out(path);
  out << std::setprecision(8) << "block,covariate,mean,sd,q05,q95,inclusion,inefficiency\n";
  Eigen::Index col = 0;
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    const auto names = model.covariate_names(b);
    const Eigen::Index d = model.num_covariates(b);
    for (Eigen::Index j = 0; j <= d; ++j) {
      const Eigen::VectorXd x = all.col(col + j);
      const double inclusion = j == 0 ? 1.0 : all.col(col + d + j).mean();
      std::vector<double> v(x.data(), x.data() + x.size());
      const double mean = x.mean();
      const double sd = x.size() > 1 ? std::sqrt((x.array() - mean).square().sum() / (x.size() - 1)) : 0.0;
      double ineff = std::numeric_limits<double>::quiet_NaN();
      try {
        ineff = inefficiency_factor(chains.front().draws.col(col + j));
      } catch (const std::exception&) {
      }
      out << block_name(b) << ',' << (j == 0 ? "(Intercept)" : names[j - 1]) << ',' << mean << ',' << sd << ','
          << quantile(v, 0.05) << ',' << quantile(v, 0.95) << ',' << inclusion << ',' << ineff << '\n';
    }
    col += 1 + 2 * d;
  }
}

void write_diagnostics(const fs::path& path, const std::vector<ChainOutput>& chains) {
  std::ofstream out(path);
  out << std::setprecision(6) << "chain,block,proposals,acceptance,fallbacks,degenerate,seconds\n";
  for (std::size_t k = 0; k < chains.size(); ++k) {
    for (int i = 0; i < kNumBlocks; ++i) {
      const auto& d = chains[k].diagnostics.blocks[i];
      out << k << ',' << block_name(block_at(i)) << ',' << d.proposals << ',' << d.acceptance() << ',' << d.fallbacks
          << ',' << d.degenerate << ',' << chains[k].seconds << '\n';
    }
  }
}

// Posterior mean and 90% band of lambda_L and tau per date, train and test.
void write_feature_series(const fs::path& path, const Config& c, const TrainTest& split, const Eigen::MatrixXd& draws,
                          const TauGrid* grid) {
  DatedData full = split.train;
  const Eigen::Index nt = split.train.data.size(), ne = split.test.data.size();
  if (ne > 0) {
    full.dates.insert(full.dates.end(), split.test.dates.begin(), split.test.dates.end());
    auto cat = [](const auto& a, const auto& b) {
      std::decay_t<decltype(a)> r(a.rows() + b.rows(), a.cols());
      r << a, b;
      return r;
    };
    full.data.y1 = cat(split.train.data.y1, split.test.data.y1);
    full.data.y2 = cat(split.train.data.y2, split.test.data.y2);
    full.data.x1 = cat(split.train.data.x1, split.test.data.x1);
    full.data.x2 = cat(split.train.data.x2, split.test.data.x2);
  }
  const PosteriorModel model(full.data, model_spec_from_config(c), grid);
  const Eigen::Index keep = std::min<Eigen::Index>(200, draws.rows());
  const Eigen::Index n = full.data.size();
  Eigen::MatrixXd lam(keep, n), tau(keep, n);
  for (Eigen::Index k = 0; k < keep; ++k) {
    const Eigen::Index r = keep == 1 ? 0 : k * (draws.rows() - 1) / (keep - 1);
    const ChainState s = state_from_row(model, draws.row(r).transpose());
    lam.row(k) = s.lambda.transpose();
    tau.row(k) = s.tau.transpose();
  }
  std::ofstream out(path);
  out << std::setprecision(8) << "date,part,lambda_l_mean,lambda_l_q05,lambda_l_q95,tau_mean,tau_q05,tau_q95\n";
  for (Eigen::Index i = 0; i < n; ++i) {
    const std::vector<double> l(lam.col(i).data(), lam.col(i).data() + keep);
    const std::vector<double> t(tau.col(i).data(), tau.col(i).data() + keep);
    out << full.dates[i] << ',' << (i < nt ? "train" : "test") << ',' << lam.col(i).mean() << ',' << quantile(l, 0.05)
        << ',' << quantile(l, 0.95) << ',' << tau.col(i).mean() << ',' << quantile(t, 0.05) << ','
        << quantile(t, 0.95) << '\n';
  }
}

std::vector<ChainOutput> fit_model(const Config& c, const PosteriorModel& model, std::ostream& log) {
  ChainState start = model.initial_state();
  if (c.get("init") == "optimize") {
    InitReport rep;
    start = init_by_optimization(model, &rep, c.get_int("init.max_cycles"));
    log << "init: log posterior " << rep.log_posterior << (rep.converged ? " (converged" : " (not converged")
        << (rep.two_stage ? ", two-stage)" : ")") << (rep.message.empty() ? "" : ": " + rep.message) << '\n';
  }
  if (!std::isfinite(model.log_posterior(start))) throw NumericalError("starting point has zero posterior density");
  return run_chains(model, start, run_config_from_config(c), c.get_int("chains"), c.get_int("threads"));
}

int cmd_fit(const Common& o) {
  const Config c = load_config(o);
  const fs::path dir = prepare_out(c);
  const TrainTest split = load_split(c);
  const auto grid = tau_grid_for(c);
  const PosteriorModel model(split.train.data, model_spec_from_config(c), grid.get());
  const auto chains = fit_model(c, model, std::cout);
  write_draws_csv((dir / "draws.csv").string(), chains);
  write_summary(dir / "summary.csv", model, chains);
  write_diagnostics(dir / "diagnostics.csv", chains);
  write_scaler_csv((dir / "scaler.csv").string(), split);
  write_feature_series(dir / "features_timeseries.csv", c, split, stack_draws(chains), grid.get());
  for (int i = 0; i < kNumBlocks; ++i) {
    std::cout << std::setw(7) << block_name(block_at(i)) << "  acceptance "
              << chains.front().diagnostics.blocks[i].acceptance() << '\n';
  }
  std::cout << "wrote " << dir.string() << '\n';
  return 0;
}

// Refits on a growing window before every test point (small n only).
LpsReport sequential_lps(const Config& c, const TrainTest& split, const TauGrid* grid, const std::string& label) {
  const Eigen::Index nt = split.train.data.size(), ne = split.test.data.size();
  LpsReport r;
  r.label = label;
  r.per_observation.resize(ne);
  Config ci = c;
  ci.set("chains", "1");
  for (Eigen::Index i = 0; i < ne; ++i) {
    ModelData window;
    window.names1 = split.train.data.names1;
    window.names2 = split.train.data.names2;
    auto grow = [&](const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
      Eigen::VectorXd r2(nt + i);
      r2 << a, b.head(i);
      return r2;
    };
    auto grow_m = [&](const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
      Eigen::MatrixXd r2(nt + i, a.cols());
      r2 << a, b.topRows(i);
      return r2;
    };
    window.y1 = grow(split.train.data.y1, split.test.data.y1);
    window.y2 = grow(split.train.data.y2, split.test.data.y2);
    window.x1 = grow_m(split.train.data.x1, split.test.data.x1);
    window.x2 = grow_m(split.train.data.x2, split.test.data.x2);
    const PosteriorModel fit(window, model_spec_from_config(ci), grid);
    std::ostringstream sink;
    const auto chains = fit_model(ci, fit, sink);
    ModelData point;
    point.names1 = window.names1;
    point.names2 = window.names2;
    point.y1 = split.test.data.y1.segment(i, 1);
    point.y2 = split.test.data.y2.segment(i, 1);
    point.x1 = split.test.data.x1.middleRows(i, 1);
    point.x2 = split.test.data.x2.middleRows(i, 1);
    const PosteriorModel pm(point, model_spec_from_config(ci), grid);
    r.per_observation(i) = predictive_logdensity(pointwise_loglik(pm, chains.front().draws).col(0));
  }
  r.total = r.per_observation.sum();
  r.nse = std::numeric_limits<double>::quiet_NaN();
  return r;
}

int cmd_eval(const Common& o, const std::vector<std::string>& fits) {
  Config base = load_config(o);
  const fs::path dir = prepare_out(base);
  std::vector<LpsReport> reports;
  for (const auto& f : fits) {
    Config c;
    c.load((fs::path(f) / kResolvedName).string());
    if (!o.threads.empty()) c.set("threads", o.threads);
    c.validate();
    const TrainTest split = load_split(c);
    if (split.test.data.size() == 0) throw ConfigError(f + ": train_fraction leaves no test data");
    const auto grid = tau_grid_for(c);
    const PosteriorModel test_model(split.test.data, model_spec_from_config(c), grid.get());
    const std::string label = fs::path(f).lexically_normal().filename().string().empty()
                                  ? fs::path(f).lexically_normal().parent_path().filename().string()
                                  : fs::path(f).lexically_normal().filename().string();
    if (c.get_bool("lps.refit")) {
      reports.push_back(sequential_lps(c, split, grid.get(), label));
    } else {
      Eigen::MatrixXd draws = read_draws_csv((fs::path(f) / "draws.csv").string(), draw_columns(test_model));
      const int max_draws = c.get_int("lps.max_draws");
      if (max_draws > 0 && draws.rows() > max_draws) {
        Eigen::MatrixXd sub(max_draws, draws.cols());
        for (int k = 0; k < max_draws; ++k) sub.row(k) = draws.row(k * (draws.rows() - 1) / std::max(1, max_draws - 1));
        draws = sub;
      }
      reports.push_back(lps(test_model, draws, label, c.get_int("threads"), c.get_int("lps.batches")));
    }
    std::cout << std::setprecision(8) << label << "  LPS " << reports.back().total << "  nse " << reports.back().nse
              << '\n';
  }
  write_lps_table((dir / "lps.csv").string(), reports);
  write_lps_terms((dir / "lps_terms.csv").string(), reports);
  return 0;
}

int cmd_simulate(const Common& o) {
  const Config c = load_config(o);
  const fs::path dir = prepare_out(c);
  const SimulationSpec spec = simulation_spec_from_config(c);
  const SimulatedData sim = simulate(spec);
  write_dataset_csv((dir / "dataset.csv").string(), sim.data);
  std::ofstream truth(dir / "truth.csv");
  truth << std::setprecision(17) << "block,index,value\n";
  for (int i = 0; i < kNumBlocks; ++i) {
    const ParamBlock& b = spec.truth[i];
    truth << block_name(block_at(i)) << ",0," << b.beta0 << '\n';
    for (Eigen::Index j = 0; j < b.beta.size(); ++j) truth << block_name(block_at(i)) << ',' << j + 1 << ',' << b.beta(j) << '\n';
  }
  std::ofstream feat(dir / "features_true.csv");
  feat << std::setprecision(12) << "date,lambda_l,tau,delta,theta,u1,u2\n";
  for (Eigen::Index i = 0; i < sim.lambda.size(); ++i) {
    feat << sim.data.dates[i] << ',' << sim.lambda(i) << ',' << sim.tau(i) << ',' << sim.delta(i) << ','
         << sim.theta(i) << ',' << sim.u[0](i) << ',' << sim.u[1](i) << '\n';
  }
  std::cout << "wrote " << (dir / "dataset.csv").string() << " (" << spec.n << " rows)\n";
  return 0;
}

int cmd_prepare(const Common& o) {
  const Config c = load_config(o);
  const fs::path dir = prepare_out(c);
  if (c.get("series1").empty() || c.get("series2").empty()) throw ConfigError("prepare needs series1 and series2");
  const int warmup = c.get_int("warmup");
  const CovariateTable a = build_covariates(read_series_csv(c.get("series1")), warmup);
  const CovariateTable b = build_covariates(read_series_csv(c.get("series2")), warmup);
  for (const auto* t : {&a, &b}) {
    for (const auto& w : t->warnings) std::cerr << "warning: " << w << '\n';
  }
  const DatedData joined = join_on_dates(a, b);
  write_dataset_csv((dir / "dataset.csv").string(), joined);
  const TrainTest split = split_train_test(joined, c.get_double("train_fraction"));
  write_scaler_csv((dir / "scaler.csv").string(), split);
  std::cout << "wrote " << (dir / "dataset.csv").string() << " (" << joined.data.size() << " rows, train "
            << split.train.data.size() << ")\n";
  return 0;
}

int cmd_tau_table(const Common& o) {
  const Config c = load_config(o);
  const fs::path dir = prepare_out(c);
  const TauGrid g = TauGrid::build(c.get_int("tau_grid.rows"), c.get_int("tau_grid.cols"));
  const fs::path path = c.get("tau_grid").empty() ? dir / "taugrid.bin" : fs::path(c.get("tau_grid"));
  g.save(path.string());
  if (!(TauGrid::load(path.string()) == g)) throw NumericalError("tau grid round trip mismatch");
  std::cout << "wrote " << path.string() << " (" << g.rows() << " x " << g.cols() << ")\n";
  return 0;
}

int cmd_empirical_copula(const Common& o) {
  const Config c = load_config(o);
  const fs::path dir = prepare_out(c);
  if (c.get("data").empty()) throw ConfigError("config key 'data' (dataset file) is required");
  const DatedData d = read_dataset_csv(c.get("data"));
  const std::vector<double> y1(d.data.y1.data(), d.data.y1.data() + d.data.size());
  const std::vector<double> y2(d.data.y2.data(), d.data.y2.data() + d.data.size());
  const std::size_t m = static_cast<std::size_t>(c.get_int("empcopula.grid"));
  const Eigen::MatrixXd grid = empirical_copula_grid(y1, y2, m);
  std::ofstream out(dir / "empcopula.csv");
  out << std::setprecision(10) << "u,v,C\n";
  for (Eigen::Index i = 0; i < grid.rows(); ++i) {
    for (Eigen::Index j = 0; j < grid.cols(); ++j) {
      out << static_cast<double>(i + 1) / grid.rows() << ',' << static_cast<double>(j + 1) / grid.cols() << ','
          << grid(i, j) << '\n';
    }
  }
  std::cout << "wrote " << (dir / "empcopula.csv").string() << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Covariate-dependent Joe-Clayton copula models with split-t margins"};
  app.require_subcommand(1);
  Common opts;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opts.config_path, "flat key = value config file");
    sub->add_option("--set", opts.overrides, "override a config key (key=value), repeatable");
    sub->add_option("--seed", opts.seed, "random seed");
    sub->add_option("--chains", opts.chains, "number of chains");
    sub->add_option("--threads", opts.threads, "worker threads");
    sub->add_option("--out", opts.out, "output directory");
  };
  std::vector<std::string> fits;
  auto* fit = app.add_subcommand("fit", "fit the model by MCMC");
  auto* sim = app.add_subcommand("simulate", "write a synthetic dataset");
  auto* ev = app.add_subcommand("eval", "log predictive score of fitted models on held-out data");
  auto* tt = app.add_subcommand("tau-table", "build and cache the Kendall's tau grid");
  auto* ec = app.add_subcommand("empirical-copula", "empirical copula grid of a dataset");
  auto* pr = app.add_subcommand("prepare", "covariates from two price series");
  for (auto* s : {fit, sim, ev, tt, ec, pr}) add_common(s);
  ev->add_option("--fit", fits, "fit output directory, repeatable")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }
  try {
    if (fit->parsed()) return cmd_fit(opts);
    if (sim->parsed()) return cmd_simulate(opts);
    if (ev->parsed()) return cmd_eval(opts, fits);
    if (tt->parsed()) return cmd_tau_table(opts);
    if (ec->parsed()) return cmd_empirical_copula(opts);
    if (pr->parsed()) return cmd_prepare(opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "numerical failure: " << e.what() << '\n';
    return kExitNumerical;
  }
  return 0;
}
