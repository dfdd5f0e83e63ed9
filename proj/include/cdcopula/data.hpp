#pragma once

#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "cdcopula/model.hpp"

// Price series ingestion, lagged volatility covariates, date alignment,
// train/test split and standardization.

namespace cdcopula {

inline constexpr int kDefaultWarmup = 250;

// One index: dates ascending, closing prices, optional daily high and low.
struct Series {
  std::vector<std::string> dates;
  Eigen::VectorXd close;
  Eigen::VectorXd high;  // empty when absent
  Eigen::VectorXd low;

  Eigen::Index size() const { return close.size(); }
  bool has_range() const { return high.size() == close.size() && low.size() == close.size() && size() > 0; }
  void validate() const;
};

// Header row with columns date, close and optionally high, low (any order,
// case-insensitive). Comma, semicolon or tab separated.
Series read_series_csv(std::istream& in);
Series read_series_csv(const std::string& path);

// y_t = 100 ln(p_t / p_{t-1}); element k belongs to dates[k + 1].
Eigen::VectorXd log_returns(const Eigen::VectorXd& close);

// g_t = (1 - rho) sum_{s>=0} rho^s z_{t-lag-s}, with z taken as zero before
// the first element. Recursive and direct forms.
Eigen::VectorXd geometric_average(const Eigen::VectorXd& z, double rho, int lag);
double geometric_average_direct(const Eigen::VectorXd& z, double rho, int lag, Eigen::Index t);

// Returns and their covariates, one row per date.
struct CovariateTable {
  std::vector<std::string> dates;
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  std::vector<std::string> names;
  std::vector<std::string> warnings;
};

// RM1, RM5, RM20, CloseAbs95, CloseAbs80, MaxMin95, MaxMin80, CloseSqr95,
// CloseSqr80; MaxMin columns are dropped when the series lacks high/low.
// Every value at t uses data strictly before t. The first `warmup` returns
// are discarded.
CovariateTable build_covariates(const Series& s, int warmup = kDefaultWarmup);

// Model data with dates attached.
struct DatedData {
  std::vector<std::string> dates;
  ModelData data;
};

// Inner join of two tables on date.
DatedData join_on_dates(const CovariateTable& a, const CovariateTable& b);

struct Scaler {
  Eigen::RowVectorXd mean;
  Eigen::RowVectorXd sd;

  static Scaler fit(const Eigen::MatrixXd& x);
  Eigen::MatrixXd apply(const Eigen::MatrixXd& x) const;
};

struct TrainTest {
  DatedData train;
  DatedData test;
  Scaler scaler1;
  Scaler scaler2;
};

// Contiguous split: the first floor(fraction * n) rows train. Covariates are
// standardized with train moments on both parts. fraction = 1 leaves the
// test part empty.
TrainTest split_train_test(const DatedData& d, double fraction = 0.8);

// Dataset file: columns date, y1, y2, then margin 1 covariates as "m1:<name>"
// and margin 2 covariates as "m2:<name>".
void write_dataset_csv(const std::string& path, const DatedData& d);
DatedData read_dataset_csv(std::istream& in);
DatedData read_dataset_csv(const std::string& path);

// Standardization metadata: rows margin,name,mean,sd.
void write_scaler_csv(const std::string& path, const TrainTest& split);

// Splits a delimited line; delimiter auto-detected from the header.
std::vector<std::string> split_fields(const std::string& line, char delim);
char detect_delimiter(const std::string& header);

}  // namespace cdcopula
