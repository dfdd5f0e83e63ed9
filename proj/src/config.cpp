#include "cdcopula/config.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "cdcopula/errors.hpp"

namespace cdcopula {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string format_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Default {
  std::string key;
  std::string value;
};

std::vector<Default> default_table() {
  std::vector<Default> t = {
      {"data", ""},
      {"series1", ""},
      {"series2", ""},
      {"warmup", "250"},
      {"train_fraction", "0.8"},
      {"covariates", ""},
      {"out", "out"},
      {"link_mode", "conditional"},
      {"rotation", "0"},
      {"copula", "true"},
      {"margin_covariates", "true"},
      {"margin_selection", "true"},
      {"copula_covariates", "true"},
      {"copula_selection", "true"},
  };
  const ModelSpec spec = default_model_spec(CopulaLinkMode::kConditional);
  for (int i = 0; i < kNumBlocks; ++i) {
    const std::string b = block_name(block_at(i));
    t.push_back({"prior." + b + ".m", format_double(spec.blocks[i].elicited.m)});
    t.push_back({"prior." + b + ".sigma", format_double(spec.blocks[i].elicited.sigma)});
  }
  const std::vector<Default> rest = {
      {"prior.slope_c", "10"},
      {"prior.inclusion_prob", "0.5"},
      {"sweeps", "2000"},
      {"burn_in", "0.2"},
      {"thin", "1"},
      {"seed", "1"},
      {"chains", "1"},
      {"threads", "1"},
      {"proposal.newton_steps", "3"},
      {"proposal.df", "6"},
      {"proposal.p_prop", "0.2"},
      {"proposal.max_halvings", "8"},
      {"proposal.newton_tol", "0.0001"},
      {"proposal.fd_step", "1e-05"},
      {"proposal.rw_scale", "0.05"},
      {"init", "optimize"},
      {"init.max_cycles", "50"},
      {"tau_grid", ""},
      {"tau_grid.rows", "512"},
      {"tau_grid.cols", "512"},
      {"lps.batches", "20"},
      {"lps.max_draws", "0"},
      {"lps.refit", "false"},
      {"empcopula.grid", "100"},
      {"sim.n", "2000"},
      {"sim.seed", "1"},
      {"sim.covariates", "2"},
      {"sim.ar", "0.5"},
      {"sim.link_mode", "conditional"},
      {"sim.rotation", "0"},
  };
  t.insert(t.end(), rest.begin(), rest.end());
  for (int i = 0; i < kNumBlocks; ++i) {
    t.push_back({"sim.truth." + block_name(block_at(i)), ""});
  }
  return t;
}

}  // namespace

Config::Config() {
  for (const auto& d : default_table()) {
    values_[d.key] = d.value;
    order_.push_back(d.key);
  }
}

void Config::set(const std::string& key, const std::string& value) {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void Config::parse(std::istream& in, const std::string& source) {
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": expected key = value");
    }
    try {
      set(trim(t.substr(0, eq)), t.substr(eq + 1));
    } catch (const ConfigError& e) {
      throw ConfigError(source + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
}

void Config::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  parse(in, path);
}

const std::string& Config::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double Config::get_double(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(s.c_str(), &end);
  if (s.empty() || end != s.c_str() + s.size() || errno != 0 || !std::isfinite(v)) {
    throw ConfigError(key + ": expected a number, got '" + s + "'");
  }
  return v;
}

int Config::get_int(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(s.c_str(), &end, 10);
  if (s.empty() || end != s.c_str() + s.size() || errno != 0 || v < INT32_MIN || v > INT32_MAX) {
    throw ConfigError(key + ": expected an integer, got '" + s + "'");
  }
  return static_cast<int>(v);
}

std::uint64_t Config::get_uint64(const std::string& key) const {
  const std::string& s = get(key);
  char* end = nullptr;
  errno = 0;
  const unsigned long long v = std::strtoull(s.c_str(), &end, 10);
  if (s.empty() || s[0] == '-' || end != s.c_str() + s.size() || errno != 0) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + s + "'");
  }
  return static_cast<std::uint64_t>(v);
}

bool Config::get_bool(const std::string& key) const {
  std::string s = get(key);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "true" || s == "1" || s == "yes" || s == "on") return true;
  if (s == "false" || s == "0" || s == "no" || s == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + s + "'");
}

std::vector<std::string> Config::get_strings(const std::string& key) const {
  std::vector<std::string> out;
  std::stringstream ss(get(key));
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

std::vector<double> Config::get_doubles(const std::string& key) const {
  std::vector<double> out;
  for (const auto& s : get_strings(key)) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end != s.c_str() + s.size() || !std::isfinite(v)) throw ConfigError(key + ": bad number '" + s + "'");
    out.push_back(v);
  }
  return out;
}

CopulaLinkMode link_mode_from_string(const std::string& s) {
  if (s == "conditional") return CopulaLinkMode::kConditional;
  if (s == "independent") return CopulaLinkMode::kIndependent;
  throw ConfigError("link_mode must be 'conditional' or 'independent', got '" + s + "'");
}

std::string to_string(CopulaLinkMode m) { return m == CopulaLinkMode::kConditional ? "conditional" : "independent"; }

void Config::validate() const {
  auto positive = [&](const std::string& k) {
    if (!(get_double(k) > 0.0)) throw ConfigError(k + " must be positive");
  };
  if (get_int("warmup") < 0) throw ConfigError("warmup must be >= 0");
  const double f = get_double("train_fraction");
  if (!(f > 0.0 && f <= 1.0)) throw ConfigError("train_fraction must lie in (0, 1]");
  link_mode_from_string(get("link_mode"));
  link_mode_from_string(get("sim.link_mode"));
  try {
    rotation_from_degrees(get_int("rotation"));
    rotation_from_degrees(get_int("sim.rotation"));
  } catch (const DomainError& e) {
    throw ConfigError(e.what());
  }
  for (const char* k : {"copula", "margin_covariates", "margin_selection", "copula_covariates", "copula_selection",
                        "lps.refit"}) {
    get_bool(k);
  }
  positive("prior.slope_c");
  const double p = get_double("prior.inclusion_prob");
  if (!(p > 0.0 && p < 1.0)) throw ConfigError("prior.inclusion_prob must lie in (0, 1)");
  if (get_int("sweeps") < 1) throw ConfigError("sweeps must be >= 1");
  const double b = get_double("burn_in");
  if (!(b >= 0.0 && b < 1.0)) throw ConfigError("burn_in must lie in [0, 1)");
  if (get_int("thin") < 1) throw ConfigError("thin must be >= 1");
  get_uint64("seed");
  get_uint64("sim.seed");
  if (get_int("chains") < 1) throw ConfigError("chains must be >= 1");
  if (get_int("threads") < 1) throw ConfigError("threads must be >= 1");
  cdcopula::validate(run_config_from_config(*this).proposal);
  const std::string init = get("init");
  if (init != "optimize" && init != "prior") throw ConfigError("init must be 'optimize' or 'prior'");
  if (get_int("init.max_cycles") < 1) throw ConfigError("init.max_cycles must be >= 1");
  if (get_int("tau_grid.rows") < 2 || get_int("tau_grid.cols") < 2) throw ConfigError("tau_grid dimensions must be >= 2");
  if (get_int("lps.batches") < 2) throw ConfigError("lps.batches must be >= 2");
  if (get_int("lps.max_draws") < 0) throw ConfigError("lps.max_draws must be >= 0");
  if (get_int("empcopula.grid") < 1) throw ConfigError("empcopula.grid must be >= 1");
  if (get_int("sim.n") < 2) throw ConfigError("sim.n must be >= 2");
  if (get_int("sim.covariates") < 0) throw ConfigError("sim.covariates must be >= 0");
  if (!(std::fabs(get_double("sim.ar")) < 1.0)) throw ConfigError("sim.ar must lie in (-1, 1)");
  model_spec_from_config(*this);
  simulation_spec_from_config(*this);
}

void Config::write(std::ostream& out) const {
  out << "# resolved configuration\n";
  for (const auto& k : order_) out << k << " = " << values_.at(k) << '\n';
}

void Config::write(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path);
  write(out);
}

ModelSpec model_spec_from_config(const Config& c) {
  ModelSpec spec = default_model_spec(link_mode_from_string(c.get("link_mode")));
  spec.rotation = rotation_from_degrees(c.get_int("rotation"));
  spec.copula_enabled = c.get_bool("copula");
  for (int i = 0; i < kNumBlocks; ++i) {
    const BlockId b = block_at(i);
    BlockSpec& bs = spec.blocks[i];
    bs.elicited.m = c.get_double("prior." + block_name(b) + ".m");
    bs.elicited.sigma = c.get_double("prior." + block_name(b) + ".sigma");
    if (!(bs.elicited.sigma > 0.0)) throw ConfigError("prior." + block_name(b) + ".sigma must be positive");
    bs.slopes.c = c.get_double("prior.slope_c");
    bs.slopes.inclusion_prob = c.get_double("prior.inclusion_prob");
    const bool copula_block = margin_of(b) < 0;
    bs.use_covariates = c.get_bool(copula_block ? "copula_covariates" : "margin_covariates");
    bs.variable_selection = c.get_bool(copula_block ? "copula_selection" : "margin_selection");
    if (copula_block && !spec.copula_enabled) bs.update = false;
  }
  resolve_intercept_priors(spec);
  return spec;
}

RunConfig run_config_from_config(const Config& c) {
  RunConfig r;
  r.sweeps = c.get_int("sweeps");
  r.burn_in = c.get_double("burn_in");
  r.thin = c.get_int("thin");
  r.seed = c.get_uint64("seed");
  r.proposal.newton_steps = c.get_int("proposal.newton_steps");
  r.proposal.df = c.get_double("proposal.df");
  r.proposal.p_prop = c.get_double("proposal.p_prop");
  r.proposal.max_halvings = c.get_int("proposal.max_halvings");
  r.proposal.newton_tol = c.get_double("proposal.newton_tol");
  r.proposal.fd_step = c.get_double("proposal.fd_step");
  r.proposal.rw_scale = c.get_double("proposal.rw_scale");
  return r;
}

SimulationSpec simulation_spec_from_config(const Config& c) {
  SimulationSpec s = default_simulation_spec(c.get_int("sim.n"), c.get_uint64("sim.seed"));
  const int d = c.get_int("sim.covariates");
  s.ar = c.get_double("sim.ar");
  s.link_mode = link_mode_from_string(c.get("sim.link_mode"));
  s.rotation = rotation_from_degrees(c.get_int("sim.rotation"));
  if (d != s.covariates_per_margin) {
    // Without explicit truths the extra slopes are zero.
    s.covariates_per_margin = d;
    for (int i = 0; i < kNumBlocks; ++i) {
      const Eigen::Index want = margin_of(block_at(i)) < 0 ? 2 * d : d;
      Eigen::VectorXd beta = Eigen::VectorXd::Zero(want);
      const ParamBlock& old = s.truth[i];
      if (margin_of(block_at(i)) < 0) {
        const Eigen::Index h = std::min<Eigen::Index>(d, old.beta.size() / 2);
        beta.head(h) = old.beta.head(h);
        beta.segment(d, h) = old.beta.segment(old.beta.size() / 2, h);
      } else {
        const Eigen::Index h = std::min<Eigen::Index>(d, old.beta.size());
        beta.head(h) = old.beta.head(h);
      }
      s.truth[i].beta = beta;
    }
  }
  for (int i = 0; i < kNumBlocks; ++i) {
    const std::string key = "sim.truth." + block_name(block_at(i));
    const auto v = c.get_doubles(key);
    if (v.empty()) continue;
    const Eigen::Index want = 1 + (margin_of(block_at(i)) < 0 ? 2 * d : d);
    if (static_cast<Eigen::Index>(v.size()) != want) {
      throw ConfigError(key + " needs " + std::to_string(want) + " values (intercept then slopes)");
    }
    s.truth[i].beta0 = v[0];
    s.truth[i].beta = Eigen::Map<const Eigen::VectorXd>(v.data() + 1, want - 1);
  }
  mark_included(s.truth);
  return s;
}

ModelData select_covariates(const ModelData& d, const std::vector<std::string>& keep) {
  if (keep.empty()) return d;
  ModelData out = d;
  for (int m = 0; m < 2; ++m) {
    const auto& names = m == 0 ? d.names1 : d.names2;
    const Eigen::MatrixXd& x = m == 0 ? d.x1 : d.x2;
    std::vector<Eigen::Index> cols;
    std::vector<std::string> kept;
    for (std::size_t j = 0; j < names.size(); ++j) {
      if (std::find(keep.begin(), keep.end(), names[j]) != keep.end()) {
        cols.push_back(static_cast<Eigen::Index>(j));
        kept.push_back(names[j]);
      }
    }
    (m == 0 ? out.x1 : out.x2) = x(Eigen::all, cols);
    (m == 0 ? out.names1 : out.names2) = kept;
  }
  for (const auto& k : keep) {
    if (std::find(out.names1.begin(), out.names1.end(), k) == out.names1.end() &&
        std::find(out.names2.begin(), out.names2.end(), k) == out.names2.end()) {
      throw ConfigError("covariates: no column named '" + k + "'");
    }
  }
  return out;
}

}  // namespace cdcopula
