#include "parkvision/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>

#include <fmt/format.h>
#include <fmt/ranges.h>

#include "parkvision/errors.hpp"

namespace fs = std::filesystem;

namespace pv {

namespace {

void check_inputs(std::span<const double> scores, std::span<const int> labels, std::size_t& pos, std::size_t& neg) {
  if (scores.size() != labels.size()) {
    throw ValidationError(fmt::format("{} scores but {} labels", scores.size(), labels.size()));
  }
  pos = neg = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] == 1) {
      ++pos;
    } else if (labels[i] == 0) {
      ++neg;
    } else {
      throw ValidationError(fmt::format("label {} at {} is not 0 or 1", labels[i], i));
    }
    if (std::isnan(scores[i])) throw ValidationError(fmt::format("score at {} is NaN", i));
  }
  if (pos == 0 || neg == 0) throw ValidationError("ROC analysis needs both positive and negative samples");
}

}  // namespace

RocCurve roc(std::span<const double> scores, std::span<const int> labels) {
  RocCurve curve;
  check_inputs(scores, labels, curve.positive_count, curve.negative_count);

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

  const double p = static_cast<double>(curve.positive_count);
  const double n = static_cast<double>(curve.negative_count);
  const double lowest = scores[order.back()];
  curve.points.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < order.size();) {
    const double s = scores[order[i]];
    if (s == lowest) break;
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    curve.points.push_back({s, static_cast<double>(tp) / p, static_cast<double>(fp) / n});
  }
  curve.points.push_back({-std::numeric_limits<double>::infinity(), 1.0, 1.0});
  return curve;
}

double auc(const RocCurve& curve) {
  double area = 0.0;
  for (std::size_t i = 1; i < curve.points.size(); ++i) {
    const RocPoint& a = curve.points[i - 1];
    const RocPoint& b = curve.points[i];
    area += (b.fpr - a.fpr) * (a.tpr + b.tpr) * 0.5;
  }
  return area;
}

double auc(std::span<const double> scores, std::span<const int> labels) { return auc(roc(scores, labels)); }

ErrorRates rates_at(std::span<const double> scores, std::span<const int> labels, double threshold) {
  std::size_t pos = 0, neg = 0;
  check_inputs(scores, labels, pos, neg);
  std::size_t fp = 0, fn = 0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted_positive = scores[i] >= threshold;
    if (labels[i] == 0 && predicted_positive) ++fp;
    if (labels[i] == 1 && !predicted_positive) ++fn;
  }
  return {static_cast<double>(fp) / static_cast<double>(neg), static_cast<double>(fn) / static_cast<double>(pos)};
}

EvalReport make_report(std::vector<std::string> train_lots, std::vector<std::string> test_lots,
                       std::span<const double> scores, std::span<const int> labels) {
  EvalReport r;
  r.train_lots = std::move(train_lots);
  r.test_lots = std::move(test_lots);
  r.curve = roc(scores, labels);
  r.auc = auc(r.curve);
  const ErrorRates rates = rates_at(scores, labels, 0.5);
  r.fpr_at_half = rates.fpr;
  r.fnr_at_half = rates.fnr;
  r.positive_count = r.curve.positive_count;
  r.negative_count = r.curve.negative_count;
  return r;
}

std::string lot_set_name(std::span<const std::string> lots) { return fmt::format("{}", fmt::join(lots, "+")); }

namespace {

class CsvFile {
 public:
  explicit CsvFile(const fs::path& path) : path_(path), out_(path, std::ios::binary | std::ios::trunc) {
    if (!out_) throw IoError(fmt::format("cannot write '{}'", path.string()));
  }
  void line(const std::string& text) { out_ << text << '\n'; }
  void close() {
    out_.close();
    if (!out_) throw IoError(fmt::format("write failed for '{}'", path_.string()));
  }

 private:
  fs::path path_;
  std::ofstream out_;
};

std::string f6(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

std::vector<fs::path> emit(std::span<const EvalReport> reports, const fs::path& out_dir) {
  if (reports.empty()) throw ValidationError("emit needs at least one report");
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) throw IoError(fmt::format("cannot create '{}': {}", out_dir.string(), ec.message()));

  std::vector<fs::path> written;
  CsvFile summary(out_dir / "report.csv");
  summary.line("train,test,auc,fpr,fnr,positives,negatives");
  for (const EvalReport& r : reports) {
    const std::string train = lot_set_name(r.train_lots);
    const std::string test = lot_set_name(r.test_lots);
    summary.line(fmt::format("{},{},{},{},{},{},{}", train, test, f6(r.auc), f6(r.fpr_at_half), f6(r.fnr_at_half),
                             r.positive_count, r.negative_count));

    const fs::path roc_path = out_dir / fmt::format("roc_{}_{}.csv", train, test);
    CsvFile curve(roc_path);
    curve.line("threshold,fpr,tpr");
    for (const RocPoint& p : r.curve.points) curve.line(fmt::format("{},{},{}", f6(p.threshold), f6(p.fpr), f6(p.tpr)));
    curve.close();
    written.push_back(roc_path);
  }
  summary.close();
  written.insert(written.begin(), out_dir / "report.csv");
  return written;
}

}  // namespace pv
