#include "cdcopula/tau_grid.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>

#include "cdcopula/copula.hpp"
#include "cdcopula/errors.hpp"

namespace cdcopula {
namespace {

constexpr char kMagic[8] = {'C', 'D', 'T', 'A', 'U', 'G', 'R', 'D'};
constexpr std::uint32_t kVersion = 1;

std::vector<double> geometric_axis(std::size_t n) {
  if (n < 2) throw DimensionError("TauGrid: need at least 2 nodes per axis");
  std::vector<double> axis(n);
  const double log_lo = std::log(TauGrid::kAxisLow);
  const double log_hi = std::log(TauGrid::kAxisHigh);
  for (std::size_t k = 0; k < n; ++k) {
    axis[k] = std::exp(log_lo + (log_hi - log_lo) * static_cast<double>(k) / static_cast<double>(n - 1));
  }
  axis.front() = TauGrid::kAxisLow;
  axis.back() = TauGrid::kAxisHigh;
  return axis;
}

template <typename T>
void write_raw(std::ofstream& out, const T& value) {
  out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
void read_raw(std::ifstream& in, T& value) {
  in.read(reinterpret_cast<char*>(&value), sizeof(T));
  if (!in) throw DataError("TauGrid: truncated file");
}

void read_doubles(std::ifstream& in, std::vector<double>& v, std::size_t n) {
  v.resize(n);
  in.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw DataError("TauGrid: truncated file");
}

}  // namespace

TauGrid TauGrid::build(std::size_t rows, std::size_t cols) {
  TauGrid g;
  g.lambda_l_ = geometric_axis(rows);
  g.lambda_u_ = geometric_axis(cols);
  g.tau_.resize(rows * cols);
  std::vector<double> theta(cols);
  for (std::size_t j = 0; j < cols; ++j) theta[j] = theta_from_lambda_u(g.lambda_u_[j]);
  for (std::size_t i = 0; i < rows; ++i) {
    const double delta = delta_from_lambda_l(g.lambda_l_[i]);
    for (std::size_t j = 0; j < cols; ++j) {
      g.tau_[i * cols + j] = kendall_tau({theta[j], delta});
    }
  }
  return g;
}

double TauGrid::guess_lambda_u(double lambda_l, double tau) const {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  if (!(lambda_l > 0.0 && lambda_l < 1.0)) return nan;
  const double ll = std::clamp(lambda_l, lambda_l_.front(), lambda_l_.back());
  auto it = std::upper_bound(lambda_l_.begin(), lambda_l_.end(), ll);
  std::size_t i1 = static_cast<std::size_t>(it - lambda_l_.begin());
  i1 = std::clamp<std::size_t>(i1, 1, rows() - 1);
  const std::size_t i0 = i1 - 1;
  const double t = (std::log(ll) - std::log(lambda_l_[i0])) / (std::log(lambda_l_[i1]) - std::log(lambda_l_[i0]));

  auto row_tau = [&](std::size_t j) { return (1.0 - t) * tau_[i0 * cols() + j] + t * tau_[i1 * cols() + j]; };
  if (tau < row_tau(0) || tau > row_tau(cols() - 1)) return nan;

  std::size_t lo = 0;
  std::size_t hi = cols() - 1;
  while (hi - lo > 1) {
    const std::size_t mid = (lo + hi) / 2;
    if (row_tau(mid) <= tau) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  const double t_lo = row_tau(lo);
  const double t_hi = row_tau(hi);
  const double s = t_hi > t_lo ? (tau - t_lo) / (t_hi - t_lo) : 0.0;
  return lambda_u_[lo] + s * (lambda_u_[hi] - lambda_u_[lo]);
}

double TauGrid::inverse_upper(double lambda_l, double tau) const {
  return tau_inverse_upper(lambda_l, tau, this);
}

void TauGrid::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("TauGrid: cannot open " + path + " for writing");
  out.write(kMagic, sizeof(kMagic));
  write_raw(out, kVersion);
  write_raw(out, static_cast<std::uint64_t>(rows()));
  write_raw(out, static_cast<std::uint64_t>(cols()));
  out.write(reinterpret_cast<const char*>(lambda_l_.data()), static_cast<std::streamsize>(rows() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(lambda_u_.data()), static_cast<std::streamsize>(cols() * sizeof(double)));
  out.write(reinterpret_cast<const char*>(tau_.data()), static_cast<std::streamsize>(tau_.size() * sizeof(double)));
  if (!out) throw DataError("TauGrid: write failed for " + path);
}

TauGrid TauGrid::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("TauGrid: cannot open " + path);
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) throw DataError("TauGrid: bad magic in " + path);
  std::uint32_t version = 0;
  read_raw(in, version);
  if (version != kVersion) throw DataError("TauGrid: unsupported version " + std::to_string(version));
  std::uint64_t rows = 0;
  std::uint64_t cols = 0;
  read_raw(in, rows);
  read_raw(in, cols);
  if (rows < 2 || cols < 2 || rows > 100000 || cols > 100000) throw DataError("TauGrid: bad resolution header");
  TauGrid g;
  read_doubles(in, g.lambda_l_, rows);
  read_doubles(in, g.lambda_u_, cols);
  read_doubles(in, g.tau_, rows * cols);
  return g;
}

}  // namespace cdcopula
