#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <limits>
#include <random>
#include <sstream>

#include "fixtures.hpp"
#include "oracles.hpp"
#include "parkvision/errors.hpp"
#include "parkvision/metrics.hpp"

namespace pv {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

TEST(Roc, PerfectSeparationPassesThroughTopLeft) {
  const std::vector<double> s{0.9, 0.1};
  const std::vector<int> l{1, 0};
  const RocCurve c = roc(s, l);
  bool top_left = false;
  for (const auto& p : c.points) top_left = top_left || (p.fpr == 0.0 && p.tpr == 1.0);
  EXPECT_TRUE(top_left);
  EXPECT_EQ(auc(c), 1.0);
}

TEST(Roc, AllEqualScoresIsDiagonal) {
  const std::vector<double> s{0.3, 0.3, 0.3, 0.3};
  const std::vector<int> l{1, 0, 1, 0};
  const RocCurve c = roc(s, l);
  ASSERT_EQ(c.points.size(), 2u);
  EXPECT_EQ(c.points[0], (RocPoint{kInf, 0.0, 0.0}));
  EXPECT_EQ(c.points[1], (RocPoint{-kInf, 1.0, 1.0}));
  EXPECT_EQ(auc(c), 0.5);
}

TEST(Roc, HandEnumeration) {
  const std::vector<double> s{0.8, 0.4, 0.6, 0.2};
  const std::vector<int> l{1, 1, 0, 0};
  const RocCurve c = roc(s, l);
  // threshold >= 0.8: TP 1; >= 0.6: TP 1 FP 1; >= 0.4: TP 2 FP 1; -inf: everything.
  const std::vector<RocPoint> expected{
      {kInf, 0.0, 0.0}, {0.8, 0.5, 0.0}, {0.6, 0.5, 0.5}, {0.4, 1.0, 0.5}, {-kInf, 1.0, 1.0}};
  EXPECT_EQ(c.points, expected);
  EXPECT_EQ(c.positive_count, 2u);
  EXPECT_EQ(c.negative_count, 2u);
  EXPECT_DOUBLE_EQ(auc(c), 0.75);
}

TEST(Roc, ValidationErrors) {
  const std::vector<double> s{0.1, 0.2};
  const std::vector<int> same{1, 1};
  const std::vector<int> bad{1, 2};
  const std::vector<int> shorter{1};
  EXPECT_THROW(roc(s, same), ValidationError);
  EXPECT_THROW(roc(s, bad), ValidationError);
  EXPECT_THROW(roc(s, shorter), ValidationError);
  EXPECT_THROW(rates_at(s, same), ValidationError);
}

TEST(Auc, MatchesPairwiseOracleWithTies) {
  std::mt19937_64 rng(61);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng() % 49;
    std::vector<double> s(n);
    std::vector<int> l(n);
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = static_cast<double>(rng() % 8) / 8.0;  // coarse grid forces ties
      l[i] = static_cast<int>(rng() % 2);
    }
    l[0] = 0;
    l[1] = 1;
    EXPECT_NEAR(auc(s, l), testing::pairwise_auc(s, l), 1e-9);
  }
}

TEST(Auc, MonotoneTransformAndLabelSwap) {
  std::mt19937_64 rng(67);
  std::uniform_real_distribution<double> d(0, 1);
  std::vector<double> s(60);
  std::vector<int> l(60);
  for (std::size_t i = 0; i < 60; ++i) {
    s[i] = std::round(d(rng) * 20) / 20;
    l[i] = static_cast<int>(i % 2);
  }
  std::vector<double> t(s.size());
  for (std::size_t i = 0; i < s.size(); ++i) t[i] = std::exp(3 * s[i]) - 7;
  EXPECT_NEAR(auc(s, l), auc(t, l), 1e-12);
  std::vector<int> swapped(l.size());
  for (std::size_t i = 0; i < l.size(); ++i) swapped[i] = 1 - l[i];
  EXPECT_NEAR(auc(s, swapped), 1.0 - auc(s, l), 1e-12);
}

TEST(Roc, EndpointsAndMonotonicity) {
  std::mt19937_64 rng(71);
  std::uniform_real_distribution<double> d(0, 1);
  std::vector<double> s(100);
  std::vector<int> l(100);
  for (std::size_t i = 0; i < 100; ++i) {
    s[i] = d(rng);
    l[i] = static_cast<int>(rng() % 2);
  }
  const RocCurve c = roc(s, l);
  EXPECT_EQ(c.points.front().fpr, 0.0);
  EXPECT_EQ(c.points.front().tpr, 0.0);
  EXPECT_EQ(c.points.back().fpr, 1.0);
  EXPECT_EQ(c.points.back().tpr, 1.0);
  for (std::size_t i = 1; i < c.points.size(); ++i) {
    EXPECT_LT(c.points[i].threshold, c.points[i - 1].threshold);
    EXPECT_GE(c.points[i].fpr, c.points[i - 1].fpr);
    EXPECT_GE(c.points[i].tpr, c.points[i - 1].tpr);
  }
}

TEST(Auc, SimpleCases) {
  const std::vector<double> sep{0.9, 0.8, 0.2, 0.1};
  const std::vector<int> sep_l{1, 1, 0, 0};
  EXPECT_EQ(auc(sep, sep_l), 1.0);
  const std::vector<double> same{0.5, 0.5, 0.5};
  const std::vector<int> same_l{1, 0, 0};
  EXPECT_EQ(auc(same, same_l), 0.5);
  const std::vector<double> s{0.8, 0.4, 0.6, 0.2};
  const std::vector<int> l{1, 1, 0, 0};
  EXPECT_DOUBLE_EQ(auc(s, l), 0.75);
}

TEST(RatesAt, Examples) {
  const std::vector<double> s{0.9, 0.6, 0.2, 0.4};
  const std::vector<int> l{1, 0, 0, 0};
  EXPECT_DOUBLE_EQ(rates_at(s, l).fpr, 1.0 / 3.0);
  EXPECT_DOUBLE_EQ(rates_at(s, l).fnr, 0.0);
  const std::vector<double> good{0.99, 0.98, 0.01, 0.02};
  const std::vector<int> good_l{1, 1, 0, 0};
  EXPECT_EQ(rates_at(good, good_l).fpr, 0.0);
  EXPECT_EQ(rates_at(good, good_l).fnr, 0.0);
  EXPECT_EQ(rates_at(good, good_l, 0.0).fpr, 1.0);
  const std::vector<double> tie{0.5, 0.5};
  const std::vector<int> tie_l{1, 0};
  EXPECT_EQ(rates_at(tie, tie_l).fpr, 1.0);  // score == threshold is predicted positive
  EXPECT_EQ(rates_at(tie, tie_l).fnr, 0.0);
}

std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    EXPECT_EQ(line.find('\r'), std::string::npos);
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST(Emit, WritesReportAndRocFiles) {
  testing::TempDir dir;
  const std::vector<double> s{0.8, 0.4, 0.6, 0.2, 0.123456789};
  const std::vector<int> l{1, 1, 0, 0, 1};
  const std::vector<EvalReport> reports{make_report({"PUC"}, {"UFPR04"}, s, l)};
  const auto files = emit(reports, dir.path() / "out");
  ASSERT_EQ(files.size(), 2u);
  EXPECT_EQ(files[0].filename(), "report.csv");
  EXPECT_EQ(files[1].filename(), "roc_PUC_UFPR04.csv");

  const auto rows = read_csv(files[0]);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"train", "test", "auc", "fpr", "fnr", "positives", "negatives"}));
  EXPECT_EQ(rows[1][0], "PUC");
  EXPECT_EQ(rows[1][1], "UFPR04");
  EXPECT_NEAR(std::stod(rows[1][2]), reports[0].auc, 5e-7);
  EXPECT_NEAR(std::stod(rows[1][3]), reports[0].fpr_at_half, 5e-7);
  EXPECT_NEAR(std::stod(rows[1][4]), reports[0].fnr_at_half, 5e-7);
  EXPECT_EQ(rows[1][5], "3");
  EXPECT_EQ(rows[1][6], "2");

  const auto roc_rows = read_csv(files[1]);
  EXPECT_EQ(roc_rows[0], (std::vector<std::string>{"threshold", "fpr", "tpr"}));
  EXPECT_EQ(roc_rows[1], (std::vector<std::string>{"inf", "0.000000", "0.000000"}));
  EXPECT_EQ(roc_rows.back()[1], "1.000000");
  EXPECT_EQ(roc_rows.size(), reports[0].curve.points.size() + 1);
  for (std::size_t i = 2; i + 1 < roc_rows.size(); ++i) {
    EXPECT_NEAR(std::stod(roc_rows[i][0]), reports[0].curve.points[i - 1].threshold, 5e-7);
  }
}

TEST(Emit, MultiLotNamesAndEmptyInput) {
  testing::TempDir dir;
  const std::vector<double> s{0.9, 0.1};
  const std::vector<int> l{1, 0};
  const std::vector<EvalReport> reports{make_report({"A", "B"}, {"C"}, s, l)};
  const auto files = emit(reports, dir.path());
  EXPECT_EQ(files[1].filename(), "roc_A+B_C.csv");
  EXPECT_THROW(emit(std::vector<EvalReport>{}, dir.path()), ValidationError);
}

}  // namespace
}  // namespace pv
