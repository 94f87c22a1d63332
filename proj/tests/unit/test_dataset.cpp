#include <gtest/gtest.h>

#include <fstream>

#include <algorithm>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "fixtures.hpp"
#include "parkvision/dataset.hpp"
#include "parkvision/errors.hpp"

namespace fs = std::filesystem;

namespace pv {
namespace {

void put_png(const fs::path& p, std::uint8_t value = 100) {
  fs::create_directories(p.parent_path());
  write_png(Image(6, 5, value), p);
}

double mean_brightness(const Image& img) {
  return std::accumulate(img.rgb.begin(), img.rgb.end(), 0.0) / static_cast<double>(img.rgb.size());
}

TEST(ScanTree, TwoLotsTwoLabelsThreeImages) {
  testing::TempDir dir;
  for (const char* lot : {"A", "B"}) {
    for (const char* label : {"Empty", "Occupied"}) {
      for (int i = 0; i < 3; ++i) put_png(dir.path() / lot / label / ("img" + std::to_string(i) + ".png"));
    }
  }
  const DatasetIndex idx = scan_tree(dir.path());
  EXPECT_EQ(idx.size(), 12u);
  EXPECT_EQ(idx.counts().at("A"), (LotLabelCount{3, 3}));
  EXPECT_EQ(idx.counts().at("B"), (LotLabelCount{3, 3}));
  EXPECT_EQ(idx.lots(), (std::vector<std::string>{"A", "B"}));
  EXPECT_EQ(idx.label_count(Occupancy::kOccupied), 6u);
}

TEST(ScanTree, OtherFoldersAndExtensionsIgnored) {
  testing::TempDir dir;
  put_png(dir.path() / "A" / "Empty" / "a.png");
  put_png(dir.path() / "A" / "Occupied" / "b.png");
  put_png(dir.path() / "A" / "Maybe" / "c.png");
  put_png(dir.path() / "A" / "empty_ish" / "d.png");
  fs::create_directories(dir.path() / "A" / "Empty");
  std::ofstream(dir.path() / "A" / "Empty" / "notes.txt") << "x";
  EXPECT_EQ(scan_tree(dir.path()).size(), 2u);
}

TEST(ScanTree, PkLotNesting) {
  testing::TempDir dir;
  const fs::path file = dir.path() / "PUC" / "Sunny" / "2012-09-12" / "Occupied" / "x.jpg";
  fs::create_directories(file.parent_path());
  const auto jpg = encode_jpeg(Image(8, 8, 90));
  write_file(file, jpg);
  const DatasetIndex idx = scan_tree(dir.path());
  ASSERT_EQ(idx.size(), 1u);
  EXPECT_EQ(idx[0].lot, "PUC");
  EXPECT_EQ(idx[0].label, Occupancy::kOccupied);
  EXPECT_EQ(idx[0].weather, Weather::kSunny);
  EXPECT_EQ(idx[0].captured_at, std::optional<std::string>("2012-09-12"));
}

TEST(ScanTree, WeatherUnknownWhenAbsent) {
  testing::TempDir dir;
  put_png(dir.path() / "L" / "Empty" / "a.png");
  EXPECT_EQ(scan_tree(dir.path())[0].weather, Weather::kUnknown);
  EXPECT_FALSE(scan_tree(dir.path())[0].captured_at.has_value());
}

TEST(ScanTree, EmptyTreeIsError) {
  testing::TempDir dir;
  EXPECT_THROW(scan_tree(dir.path()), EmptyIndexError);
  put_png(dir.path() / "A" / "Other" / "a.png");
  EXPECT_THROW(scan_tree(dir.path()), EmptyIndexError);
}

TEST(ScanTree, UnreadableFileSkipped) {
  testing::TempDir dir;
  put_png(dir.path() / "A" / "Empty" / "ok.png");
  fs::create_directories(dir.path() / "A" / "Occupied");
  fs::create_symlink(dir.path() / "nowhere.png", dir.path() / "A" / "Occupied" / "dangling.png");
  const DatasetIndex idx = scan_tree(dir.path());
  EXPECT_EQ(idx.size(), 1u);
}

TEST(ScanTree, RenamingLabelFolderFlipsLabels) {
  testing::TempDir dir;
  for (int i = 0; i < 4; ++i) put_png(dir.path() / "A" / "Empty" / ("e" + std::to_string(i) + ".png"));
  put_png(dir.path() / "A" / "Occupied" / "o.png");
  EXPECT_EQ(scan_tree(dir.path()).counts().at("A"), (LotLabelCount{4, 1}));
  fs::rename(dir.path() / "A" / "Empty", dir.path() / "A" / "tmp");
  fs::rename(dir.path() / "A" / "Occupied", dir.path() / "A" / "Empty");
  fs::rename(dir.path() / "A" / "tmp", dir.path() / "A" / "Occupied");
  EXPECT_EQ(scan_tree(dir.path()).counts().at("A"), (LotLabelCount{1, 4}));
}

TEST(DatasetIndex, RejectsDuplicatePaths) {
  SampleRecord r{"/x/A/Empty/a.png", "A", Occupancy::kVacant, Weather::kUnknown, std::nullopt};
  EXPECT_THROW(DatasetIndex({r, r}), ValidationError);
}

DatasetIndex synthetic_records(std::size_t n, const std::string& root = "/data") {
  std::vector<SampleRecord> recs;
  for (std::size_t i = 0; i < n; ++i) {
    const bool occ = i % 2 == 1;
    const std::string lot = i % 3 == 0 ? "A" : "B";
    recs.push_back({fs::path(root) / lot / (occ ? "Occupied" : "Empty") / ("img" + std::to_string(i) + ".png"), lot,
                    occ ? Occupancy::kOccupied : Occupancy::kVacant, Weather::kUnknown, std::nullopt});
  }
  return DatasetIndex(std::move(recs));
}

TEST(Split, RatioWithinTwoPercent) {
  const DatasetIndex idx = synthetic_records(1000);
  for (std::uint64_t seed : {0ull, 1ull, 99ull}) {
    const Split s = split(idx, 0.5, seed);
    EXPECT_GE(s.train.size(), 480u);
    EXPECT_LE(s.train.size(), 520u);
  }
  for (double ratio : {0.1, 0.3, 0.77}) {
    for (std::size_t n : {100u, 101u, 257u}) {
      const Split s = split(synthetic_records(n), ratio, 3);
      EXPECT_LE(std::abs(static_cast<double>(s.train.size()) / static_cast<double>(n) - ratio), 0.02) << ratio << " " << n;
    }
  }
}

TEST(Split, PartitionAndDeterminism) {
  const DatasetIndex idx = synthetic_records(300);
  const Split a = split(idx, 0.5, 7);
  const Split b = split(idx, 0.5, 7);
  EXPECT_EQ(a.train.records(), b.train.records());
  std::set<fs::path> train_paths;
  for (const auto& r : a.train.records()) train_paths.insert(r.path);
  for (const auto& r : a.test.records()) EXPECT_EQ(train_paths.count(r.path), 0u);
  EXPECT_EQ(a.train.size() + a.test.size(), idx.size());
  EXPECT_NE(split(idx, 0.5, 8).train.records(), a.train.records());
}

TEST(Split, IndependentOfRootAndOrder) {
  const Split a = split(synthetic_records(200, "/one"), 0.5, 1);
  const Split b = split(synthetic_records(200, "/elsewhere/two"), 0.5, 1);
  ASSERT_EQ(a.train.size(), b.train.size());
  for (std::size_t i = 0; i < a.train.size(); ++i) EXPECT_EQ(split_key(a.train[i]), split_key(b.train[i]));
}

TEST(Split, RatioOutOfRange) {
  const DatasetIndex idx = synthetic_records(10);
  EXPECT_THROW(split(idx, 0.0, 0), ValidationError);
  EXPECT_THROW(split(idx, 1.0, 0), ValidationError);
}

TEST(LoadBatch, ShapeLabelsAndRange) {
  testing::TempDir dir;
  SynthOptions opts;
  opts.n_per_label = 2;
  synth_generate(dir.path(), opts);
  const DatasetIndex idx = scan_tree(dir.path());
  const std::vector<std::size_t> ids{0, 3};
  const Batch b = load_batch(idx, ids, {64, 64, {0.5f, 0.5f, 0.5f}});
  EXPECT_EQ(b.inputs.shape(), (Shape{2, 3, 64, 64}));
  EXPECT_EQ(b.labels[0], static_cast<int>(idx[0].label));
  EXPECT_EQ(b.labels[1], static_cast<int>(idx[3].label));
  for (float v : b.inputs.data()) {
    EXPECT_GE(v, -1.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(LoadBatch, CorruptFileNamed) {
  testing::TempDir dir;
  put_png(dir.path() / "A" / "Empty" / "good.png");
  fs::create_directories(dir.path() / "A" / "Occupied");
  std::ofstream(dir.path() / "A" / "Occupied" / "bad.png") << "not a png at all";
  const DatasetIndex idx = scan_tree(dir.path());
  std::vector<std::size_t> ids(idx.size());
  std::iota(ids.begin(), ids.end(), 0);
  try {
    load_batch(idx, ids, {8, 8});
    FAIL() << "expected LoadError";
  } catch (const LoadError& e) {
    EXPECT_NE(e.path().find("bad.png"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("bad.png"), std::string::npos);
  }
}

TEST(Synth, CountsAndLayout) {
  testing::TempDir dir;
  SynthOptions opts;
  opts.n_per_label = 10;
  const fs::path lot = synth_generate(dir.path(), opts);
  EXPECT_EQ(lot, dir.path() / "SYNTH");
  const DatasetIndex idx = scan_tree(dir.path());
  EXPECT_EQ(idx.size(), 20u);
  EXPECT_EQ(idx.counts().at("SYNTH"), (LotLabelCount{10, 10}));
}

TEST(Synth, SameSeedBitIdentical) {
  testing::TempDir a;
  testing::TempDir b;
  SynthOptions opts;
  opts.n_per_label = 5;
  opts.seed = 42;
  synth_generate(a.path(), opts);
  synth_generate(b.path(), opts);
  const DatasetIndex ia = scan_tree(a.path());
  const DatasetIndex ib = scan_tree(b.path());
  ASSERT_EQ(ia.size(), ib.size());
  for (std::size_t i = 0; i < ia.size(); ++i) EXPECT_EQ(read_file(ia[i].path), read_file(ib[i].path));
}

TEST(Synth, EveryOccupiedBrighterThanEveryVacant) {
  testing::TempDir dir;
  SynthOptions opts;
  opts.n_per_label = 100;
  opts.seed = 3;
  synth_generate(dir.path(), opts);
  double min_occ = 1e9;
  double max_vac = -1e9;
  const DatasetIndex idx = scan_tree(dir.path());
  for (const auto& r : idx.records()) {
    const double m = mean_brightness(read_image(r.path));
    if (r.label == Occupancy::kOccupied) {
      min_occ = std::min(min_occ, m);
    } else {
      max_vac = std::max(max_vac, m);
    }
  }
  EXPECT_GT(min_occ, max_vac);
}

TEST(Jsonl, RoundTrip) {
  testing::TempDir dir;
  put_png(dir.path() / "PUC" / "Rainy" / "2012-10-01" / "Empty" / "a.png");
  put_png(dir.path() / "PUC" / "Cloudy" / "Occupied" / "b.png");
  const DatasetIndex idx = scan_tree(dir.path());
  std::stringstream ss;
  write_jsonl(idx, ss);
  const std::string text = ss.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
  EXPECT_NE(text.find("\"weather\":\"rainy\""), std::string::npos) << text;
  const DatasetIndex back = read_jsonl(ss);
  ASSERT_EQ(back.size(), 2u);
  for (std::size_t i = 0; i < 2; ++i) {
    EXPECT_EQ(back[i].path, idx[i].path);
    EXPECT_EQ(back[i].lot, idx[i].lot);
    EXPECT_EQ(back[i].label, idx[i].label);
    EXPECT_EQ(back[i].weather, idx[i].weather);
  }
}

}  // namespace
}  // namespace pv
