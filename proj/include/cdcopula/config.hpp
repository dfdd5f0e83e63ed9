#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "cdcopula/mcmc.hpp"
#include "cdcopula/model.hpp"
#include "cdcopula/simulate.hpp"

// Flat "key = value" run configuration. Every key has an explicit default;
// unknown keys are rejected. Lines starting with '#' are comments.

namespace cdcopula {

class Config {
 public:
  Config();  // all defaults

  void parse(std::istream& in, const std::string& source = "config");
  void load(const std::string& path);
  void set(const std::string& key, const std::string& value);
  bool has(const std::string& key) const { return values_.count(key) > 0; }

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  int get_int(const std::string& key) const;
  std::uint64_t get_uint64(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_doubles(const std::string& key) const;  // comma separated, may be empty
  std::vector<std::string> get_strings(const std::string& key) const;

  // Parses every typed key and checks ranges; throws ConfigError.
  void validate() const;

  // All keys in declaration order, defaults included.
  void write(std::ostream& out) const;
  void write(const std::string& path) const;

  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

CopulaLinkMode link_mode_from_string(const std::string& s);
std::string to_string(CopulaLinkMode m);

ModelSpec model_spec_from_config(const Config& c);
RunConfig run_config_from_config(const Config& c);
SimulationSpec simulation_spec_from_config(const Config& c);

// Keeps the covariate columns named in `covariates` (all when empty).
ModelData select_covariates(const ModelData& d, const std::vector<std::string>& keep);

}  // namespace cdcopula
