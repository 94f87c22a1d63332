#pragma once

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace pv {

struct RocPoint {
  double threshold = 0.0;  // predicted positive iff score >= threshold
  double tpr = 0.0;
  double fpr = 0.0;
  friend bool operator==(const RocPoint&, const RocPoint&) = default;
};

// Points run from the +inf sentinel (0,0) down to the -inf sentinel (1,1).
// Positive class is label 1 (occupied).
struct RocCurve {
  std::vector<RocPoint> points;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;
};

// Thresholds are every distinct score except the smallest (whose operating
// point coincides with the -inf sentinel). Throws ValidationError unless both
// labels are present and lengths agree.
RocCurve roc(std::span<const double> scores, std::span<const int> labels);

// Trapezoidal area under the curve.
double auc(const RocCurve& curve);
double auc(std::span<const double> scores, std::span<const int> labels);

struct ErrorRates {
  double fpr = 0.0;
  double fnr = 0.0;
};

ErrorRates rates_at(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

struct EvalReport {
  std::vector<std::string> train_lots;
  std::vector<std::string> test_lots;
  double auc = 0.0;
  double fpr_at_half = 0.0;
  double fnr_at_half = 0.0;
  std::size_t positive_count = 0;
  std::size_t negative_count = 0;
  RocCurve curve;
};

EvalReport make_report(std::vector<std::string> train_lots, std::vector<std::string> test_lots,
                       std::span<const double> scores, std::span<const int> labels);

// "PUC" or "PUC+UFPR04" for multi-lot sets.
std::string lot_set_name(std::span<const std::string> lots);

// Writes report.csv and one roc_<train>_<test>.csv per report. Returns the files written.
std::vector<std::filesystem::path> emit(std::span<const EvalReport> reports, const std::filesystem::path& out_dir);

}  // namespace pv
