#include "cdcopula/data.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "cdcopula/errors.hpp"

namespace cdcopula {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n\"");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n\"");
  return s.substr(b, e - b + 1);
}

std::string lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

double parse_number(const std::string& field, std::size_t line_no) {
  const std::string t = trim(field);
  char* end = nullptr;
  const double v = std::strtod(t.c_str(), &end);
  if (t.empty() || end != t.c_str() + t.size() || !std::isfinite(v)) {
    throw DataError("line " + std::to_string(line_no) + ": cannot parse number '" + t + "'");
  }
  return v;
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

void check_dates(const std::vector<std::string>& dates) {
  for (std::size_t i = 1; i < dates.size(); ++i) {
    if (!(dates[i - 1] < dates[i])) {
      throw DataError("dates must be strictly increasing (ISO yyyy-mm-dd); offending date " + dates[i]);
    }
  }
}

Eigen::VectorXd to_vector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

}  // namespace

std::vector<std::string> split_fields(const std::string& line, char delim) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == delim) {
      out.push_back(trim(cur));
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(trim(cur));
  return out;
}

char detect_delimiter(const std::string& header) {
  for (char c : {',', ';', '\t'}) {
    if (header.find(c) != std::string::npos) return c;
  }
  return ',';
}

void Series::validate() const {
  if (static_cast<Eigen::Index>(dates.size()) != close.size()) throw DataError("series: dates and prices differ in length");
  if (high.size() != low.size()) throw DataError("series: high and low differ in length");
  if (high.size() != 0 && high.size() != close.size()) throw DataError("series: high/low length mismatch");
  if ((close.array() <= 0.0).any()) throw DataError("series: prices must be positive");
  if (high.size() != 0 && ((low.array() <= 0.0).any() || (high.array() < low.array()).any())) {
    throw DataError("series: require 0 < low <= high");
  }
  check_dates(dates);
}

Series read_series_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("series file is empty");
  const char delim = detect_delimiter(line);
  const auto header = split_fields(line, delim);
  int c_date = -1, c_close = -1, c_high = -1, c_low = -1;
  for (std::size_t j = 0; j < header.size(); ++j) {
    const std::string h = lower(header[j]);
    if (h == "date") c_date = static_cast<int>(j);
    else if (h == "close") c_close = static_cast<int>(j);
    else if (h == "high") c_high = static_cast<int>(j);
    else if (h == "low") c_low = static_cast<int>(j);
  }
  if (c_date < 0 || c_close < 0) throw DataError("series header needs date and close columns");
  const bool range = c_high >= 0 && c_low >= 0;
  Series s;
  std::vector<double> close, high, low;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line, delim);
    if (f.size() != header.size()) throw DataError("line " + std::to_string(line_no) + ": wrong number of fields");
    s.dates.push_back(f[c_date]);
    close.push_back(parse_number(f[c_close], line_no));
    if (range) {
      high.push_back(parse_number(f[c_high], line_no));
      low.push_back(parse_number(f[c_low], line_no));
    }
  }
  s.close = to_vector(close);
  if (range) {
    s.high = to_vector(high);
    s.low = to_vector(low);
  }
  s.validate();
  return s;
}

Series read_series_csv(const std::string& path) {
  auto in = open_input(path);
  return read_series_csv(in);
}

Eigen::VectorXd log_returns(const Eigen::VectorXd& close) {
  if (close.size() < 2) return Eigen::VectorXd();
  return 100.0 * (close.tail(close.size() - 1).array() / close.head(close.size() - 1).array()).log();
}

Eigen::VectorXd geometric_average(const Eigen::VectorXd& z, double rho, int lag) {
  if (!(rho >= 0.0 && rho < 1.0) || lag < 0) throw DomainError("geometric_average: need 0 <= rho < 1, lag >= 0");
  Eigen::VectorXd g(z.size());
  double prev = 0.0;
  for (Eigen::Index t = 0; t < z.size(); ++t) {
    const double zt = t - lag >= 0 ? z(t - lag) : 0.0;
    prev = rho * prev + (1.0 - rho) * zt;
    g(t) = prev;
  }
  return g;
}

double geometric_average_direct(const Eigen::VectorXd& z, double rho, int lag, Eigen::Index t) {
  double sum = 0.0;
  double w = 1.0 - rho;
  for (Eigen::Index k = t - lag; k >= 0; --k) {
    sum += w * z(k);
    w *= rho;
  }
  return sum;
}

CovariateTable build_covariates(const Series& s, int warmup) {
  s.validate();
  if (warmup < 0) throw ConfigError("warmup must be >= 0");
  const Eigen::VectorXd y = log_returns(s.close);
  const Eigen::Index start = std::max<Eigen::Index>(warmup, 20);
  if (y.size() <= start) {
    throw DataError("series too short: need more than " + std::to_string(start + 1) + " prices");
  }
  CovariateTable out;
  std::vector<Eigen::VectorXd> cols;
  auto add = [&](const std::string& name, const Eigen::VectorXd& c) {
    out.names.push_back(name);
    cols.push_back(c);
  };
  const Eigen::Index n = y.size();
  Eigen::VectorXd rm1 = Eigen::VectorXd::Zero(n), rm5 = rm1, rm20 = rm1;
  for (Eigen::Index t = 1; t < n; ++t) {
    rm1(t) = y(t - 1);
    rm5(t) = y.segment(std::max<Eigen::Index>(0, t - 5), std::min<Eigen::Index>(5, t)).sum();
    rm20(t) = y.segment(std::max<Eigen::Index>(0, t - 20), std::min<Eigen::Index>(20, t)).sum();
  }
  add("RM1", rm1);
  add("RM5", rm5);
  add("RM20", rm20);
  const Eigen::VectorXd abs_y = y.cwiseAbs();
  const Eigen::VectorXd sq_y = y.cwiseAbs2();
  add("CloseAbs95", geometric_average(abs_y, 0.95, 2));
  add("CloseAbs80", geometric_average(abs_y, 0.80, 2));
  if (s.has_range()) {
    // Price index t + 1 carries return t; the range enters with lag one on price dates.
    const Eigen::VectorXd range = (s.high.array().log() - s.low.array().log()).matrix();
    for (double rho : {0.95, 0.80}) {
      const Eigen::VectorXd g = geometric_average(range, rho, 1);
      add(rho > 0.9 ? "MaxMin95" : "MaxMin80", g.tail(n));
    }
  } else {
    out.warnings.push_back("high/low columns missing: MaxMin95 and MaxMin80 omitted");
  }
  add("CloseSqr95", geometric_average(sq_y, 0.95, 2).cwiseSqrt());
  add("CloseSqr80", geometric_average(sq_y, 0.80, 2).cwiseSqrt());

  const Eigen::Index rows = n - start;
  out.y = y.tail(rows);
  out.x.resize(rows, static_cast<Eigen::Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) out.x.col(static_cast<Eigen::Index>(j)) = cols[j].tail(rows);
  out.dates.assign(s.dates.end() - rows, s.dates.end());
  return out;
}

DatedData join_on_dates(const CovariateTable& a, const CovariateTable& b) {
  std::map<std::string, Eigen::Index> pos_b;
  for (std::size_t i = 0; i < b.dates.size(); ++i) pos_b[b.dates[i]] = static_cast<Eigen::Index>(i);
  std::vector<Eigen::Index> ia, ib;
  DatedData out;
  for (std::size_t i = 0; i < a.dates.size(); ++i) {
    const auto it = pos_b.find(a.dates[i]);
    if (it == pos_b.end()) continue;
    ia.push_back(static_cast<Eigen::Index>(i));
    ib.push_back(it->second);
    out.dates.push_back(a.dates[i]);
  }
  if (out.dates.empty()) throw DataError("the two series share no dates");
  ModelData& d = out.data;
  d.y1 = a.y(ia);
  d.y2 = b.y(ib);
  d.x1 = a.x(ia, Eigen::all);
  d.x2 = b.x(ib, Eigen::all);
  d.names1 = a.names;
  d.names2 = b.names;
  d.validate();
  return out;
}

Scaler Scaler::fit(const Eigen::MatrixXd& x) {
  Scaler s;
  if (x.rows() < 2) throw DataError("standardization needs at least two rows");
  s.mean = x.colwise().mean();
  s.sd = ((x.rowwise() - s.mean).array().square().colwise().sum() / static_cast<double>(x.rows() - 1)).sqrt();
  for (Eigen::Index j = 0; j < s.sd.size(); ++j) {
    if (!(s.sd(j) > 0.0)) throw DataError("covariate column " + std::to_string(j) + " is constant on the training window");
  }
  return s;
}

Eigen::MatrixXd Scaler::apply(const Eigen::MatrixXd& x) const {
  if (x.cols() != mean.size()) throw DimensionError("scaler: column count mismatch");
  return ((x.rowwise() - mean).array().rowwise() / sd.array()).matrix();
}

TrainTest split_train_test(const DatedData& d, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw ConfigError("train fraction must lie in (0, 1]");
  const Eigen::Index n = d.data.size();
  const Eigen::Index nt = static_cast<Eigen::Index>(std::floor(fraction * static_cast<double>(n) + 1e-9));
  if (nt < 2) throw DataError("training window too short");
  TrainTest out;
  auto part = [&](Eigen::Index from, Eigen::Index count) {
    DatedData p;
    p.dates.assign(d.dates.begin() + from, d.dates.begin() + from + count);
    p.data.y1 = d.data.y1.segment(from, count);
    p.data.y2 = d.data.y2.segment(from, count);
    p.data.x1 = d.data.x1.middleRows(from, count);
    p.data.x2 = d.data.x2.middleRows(from, count);
    p.data.names1 = d.data.names1;
    p.data.names2 = d.data.names2;
    return p;
  };
  out.train = part(0, nt);
  out.test = part(nt, n - nt);
  out.scaler1 = Scaler::fit(out.train.data.x1);
  out.scaler2 = Scaler::fit(out.train.data.x2);
  out.train.data.x1 = out.scaler1.apply(out.train.data.x1);
  out.train.data.x2 = out.scaler2.apply(out.train.data.x2);
  out.test.data.x1 = out.scaler1.apply(out.test.data.x1);
  out.test.data.x2 = out.scaler2.apply(out.test.data.x2);
  return out;
}

void write_dataset_csv(const std::string& path, const DatedData& d) {
  d.data.validate();
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(17);
  out << "date,y1,y2";
  for (const auto& n : d.data.names1) out << ",m1:" << n;
  for (const auto& n : d.data.names2) out << ",m2:" << n;
  out << '\n';
  for (Eigen::Index i = 0; i < d.data.size(); ++i) {
    out << (d.dates.empty() ? std::to_string(i) : d.dates[i]) << ',' << d.data.y1(i) << ',' << d.data.y2(i);
    for (Eigen::Index j = 0; j < d.data.x1.cols(); ++j) out << ',' << d.data.x1(i, j);
    for (Eigen::Index j = 0; j < d.data.x2.cols(); ++j) out << ',' << d.data.x2(i, j);
    out << '\n';
  }
}

DatedData read_dataset_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("dataset file is empty");
  const char delim = detect_delimiter(line);
  const auto header = split_fields(line, delim);
  if (header.size() < 3 || lower(header[0]) != "date" || header[1] != "y1" || header[2] != "y2") {
    throw DataError("dataset header must start with date,y1,y2");
  }
  DatedData out;
  std::vector<int> which;  // 1 or 2 per covariate column
  for (std::size_t j = 3; j < header.size(); ++j) {
    const std::string& h = header[j];
    if (h.rfind("m1:", 0) == 0) {
      out.data.names1.push_back(h.substr(3));
      which.push_back(1);
    } else if (h.rfind("m2:", 0) == 0) {
      out.data.names2.push_back(h.substr(3));
      which.push_back(2);
    } else {
      throw DataError("dataset column '" + h + "' must be prefixed m1: or m2:");
    }
  }
  std::vector<double> y1, y2, x1, x2;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line, delim);
    if (f.size() != header.size()) throw DataError("line " + std::to_string(line_no) + ": wrong number of fields");
    out.dates.push_back(f[0]);
    y1.push_back(parse_number(f[1], line_no));
    y2.push_back(parse_number(f[2], line_no));
    for (std::size_t j = 3; j < f.size(); ++j) {
      (which[j - 3] == 1 ? x1 : x2).push_back(parse_number(f[j], line_no));
    }
  }
  const Eigen::Index n = static_cast<Eigen::Index>(y1.size());
  if (n == 0) throw DataError("dataset has no rows");
  const Eigen::Index d1 = static_cast<Eigen::Index>(out.data.names1.size());
  const Eigen::Index d2 = static_cast<Eigen::Index>(out.data.names2.size());
  out.data.y1 = to_vector(y1);
  out.data.y2 = to_vector(y2);
  out.data.x1 = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x1.data(), n, d1);
  out.data.x2 = Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(x2.data(), n, d2);
  out.data.validate();
  return out;
}

DatedData read_dataset_csv(const std::string& path) {
  auto in = open_input(path);
  return read_dataset_csv(in);
}

void write_scaler_csv(const std::string& path, const TrainTest& split) {
  std::ofstream out(path);
  if (!out) throw DataError("cannot write " + path);
  out << std::setprecision(17) << "margin,name,mean,sd\n";
  for (int m = 0; m < 2; ++m) {
    const Scaler& s = m == 0 ? split.scaler1 : split.scaler2;
    const auto& names = m == 0 ? split.train.data.names1 : split.train.data.names2;
    for (Eigen::Index j = 0; j < s.mean.size(); ++j) {
      out << (m + 1) << ',' << names[j] << ',' << s.mean(j) << ',' << s.sd(j) << '\n';
    }
  }
}

}  // namespace cdcopula
