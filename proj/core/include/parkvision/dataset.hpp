#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "parkvision/image.hpp"
#include "parkvision/model.hpp"
#include "parkvision/tensor.hpp"

namespace pv {

enum class Weather { kSunny, kRainy, kCloudy, kUnknown };

const char* to_string(Weather w) noexcept;
std::optional<Weather> parse_weather(std::string_view text) noexcept;

struct SampleRecord {
  std::filesystem::path path;
  std::string lot;
  Occupancy label = Occupancy::kVacant;
  Weather weather = Weather::kUnknown;
  std::optional<std::string> captured_at;  // YYYY-MM-DD folder, when present

  friend bool operator==(const SampleRecord&, const SampleRecord&) = default;
};

struct LotLabelCount {
  std::size_t vacant = 0;
  std::size_t occupied = 0;
  std::size_t total() const noexcept { return vacant + occupied; }
  friend bool operator==(const LotLabelCount&, const LotLabelCount&) = default;
};

// Labelled crop inventory. Records are kept sorted by path and unique.
class DatasetIndex {
 public:
  DatasetIndex() = default;
  explicit DatasetIndex(std::vector<SampleRecord> records);

  const std::vector<SampleRecord>& records() const noexcept { return records_; }
  const std::map<std::string, LotLabelCount>& counts() const noexcept { return counts_; }
  std::size_t size() const noexcept { return records_.size(); }
  bool empty() const noexcept { return records_.empty(); }
  const SampleRecord& operator[](std::size_t i) const { return records_[i]; }

  std::vector<std::string> lots() const;
  bool has_lot(const std::string& lot) const { return counts_.contains(lot); }
  std::size_t label_count(Occupancy label) const;
  DatasetIndex filter_lots(std::span<const std::string> lots) const;

 private:
  std::vector<SampleRecord> records_;
  std::map<std::string, LotLabelCount> counts_;
};

// Indexes <root>/<lot>/.../{Empty|Occupied}/*.{jpg,jpeg,png}. Labels come only
// from the immediate parent folder; weather and date from intermediate folders.
// Throws EmptyIndexError when nothing matches.
DatasetIndex scan_tree(const std::filesystem::path& root);

struct Split {
  DatasetIndex train;
  DatasetIndex test;
};

// Records are ranked by a hash of (seed, lot-relative path) and the lowest
// round(ratio * n) go to train, so the result does not depend on input order
// or on where the dataset root lives.
Split split(const DatasetIndex& index, double ratio = 0.5, std::uint64_t seed = 0);
std::uint64_t split_hash(std::uint64_t seed, std::string_view key) noexcept;
// "<lot>/.../<label>/<file>" portion of the record path.
std::string split_key(const SampleRecord& record);

struct Batch {
  Tensor inputs;            // [B,3,H,W]
  std::vector<int> labels;  // 0 vacant, 1 occupied
};

// Throws LoadError naming the first file that cannot be decoded.
Batch load_batch(const DatasetIndex& index, std::span<const std::size_t> ids, const InputFormat& format);

// Per-channel mean of the [0,1]-scaled resized inputs.
std::array<float, 3> channel_means(const DatasetIndex& index, const InputFormat& format);

void write_jsonl(const DatasetIndex& index, std::ostream& out);
DatasetIndex read_jsonl(std::istream& in);

struct SynthOptions {
  std::size_t n_per_label = 100;
  std::uint64_t seed = 0;
  std::string lot = "SYNTH";
  std::size_t min_size = 48;
  std::size_t max_size = 72;
};

// Single crop of the synthetic generator (the variant drawn by `draw_index`).
Image synth_crop(Occupancy label, std::uint64_t seed, std::size_t draw_index, std::size_t width,
                 std::size_t height);

// Writes n occupied and n vacant crops under <out_dir>/<lot>/Sunny/<date>/{Empty,Occupied}/.
// Returns the lot directory.
std::filesystem::path synth_generate(const std::filesystem::path& out_dir, const SynthOptions& options);

}  // namespace pv
