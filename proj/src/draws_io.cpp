#include <algorithm>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "cdcopula/data.hpp"
#include "cdcopula/errors.hpp"
#include "cdcopula/mcmc.hpp"

namespace cdcopula {

void write_draws_csv(const std::string& path, const std::vector<ChainOutput>& chains) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(17) << "chain,sweep,log_posterior";
  if (!chains.empty()) {
    for (const auto& c : chains.front().columns) out << ',' << c;
  }
  out << '\n';
  for (std::size_t k = 0; k < chains.size(); ++k) {
    const ChainOutput& c = chains[k];
    for (Eigen::Index r = 0; r < c.draws.rows(); ++r) {
      out << k << ',' << r << ',' << c.log_posterior(r);
      for (Eigen::Index j = 0; j < c.draws.cols(); ++j) out << ',' << c.draws(r, j);
      out << '\n';
    }
  }
}

Eigen::MatrixXd read_draws_csv(const std::string& path, const std::vector<std::string>& expected) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  std::string line;
  if (!std::getline(in, line)) throw DataError(path + ": empty draws file");
  const auto header = split_fields(line, ',');
  if (header.size() != expected.size() + 3 ||
      !std::equal(expected.begin(), expected.end(), header.begin() + 3)) {
    throw DataError(path + ": draw columns do not match the model");
  }
  std::vector<double> values;
  Eigen::Index rows = 0;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_fields(line, ',');
    if (f.size() != header.size()) throw DataError(path + ": ragged row " + std::to_string(rows + 2));
    for (std::size_t j = 3; j < f.size(); ++j) {
      char* end = nullptr;
      const double v = std::strtod(f[j].c_str(), &end);
      if (end == f[j].c_str()) throw DataError(path + ": bad number '" + f[j] + "'");
      values.push_back(v);
    }
    ++rows;
  }
  const Eigen::Index cols = static_cast<Eigen::Index>(expected.size());
  return Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(values.data(), rows, cols);
}

}  // namespace cdcopula
