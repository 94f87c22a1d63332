#include "parkvision/dataset.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>

#include <fmt/format.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "parkvision/errors.hpp"

namespace fs = std::filesystem;

namespace pv {

const char* to_string(Weather w) noexcept {
  switch (w) {
    case Weather::kSunny:
      return "sunny";
    case Weather::kRainy:
      return "rainy";
    case Weather::kCloudy:
      return "cloudy";
    case Weather::kUnknown:
      break;
  }
  return "unknown";
}

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

bool is_date_folder(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return false;
  for (std::size_t i : {0u, 1u, 2u, 3u, 5u, 6u, 8u, 9u}) {
    if (!std::isdigit(static_cast<unsigned char>(s[i]))) return false;
  }
  return true;
}

bool is_image_extension(const fs::path& p) {
  const std::string ext = lower(p.extension().string());
  return ext == ".jpg" || ext == ".jpeg" || ext == ".png";
}

std::optional<Occupancy> label_from_folder(const std::string& name) {
  if (name == "Empty") return Occupancy::kVacant;
  if (name == "Occupied") return Occupancy::kOccupied;
  return std::nullopt;
}

}  // namespace

std::optional<Weather> parse_weather(std::string_view text) noexcept {
  const std::string t = lower(text);
  if (t == "sunny") return Weather::kSunny;
  if (t == "rainy") return Weather::kRainy;
  if (t == "cloudy") return Weather::kCloudy;
  if (t == "unknown") return Weather::kUnknown;
  return std::nullopt;
}

DatasetIndex::DatasetIndex(std::vector<SampleRecord> records) : records_(std::move(records)) {
  std::sort(records_.begin(), records_.end(),
            [](const SampleRecord& a, const SampleRecord& b) { return a.path < b.path; });
  for (std::size_t i = 1; i < records_.size(); ++i) {
    if (records_[i].path == records_[i - 1].path) {
      throw ValidationError(fmt::format("duplicate dataset path '{}'", records_[i].path.string()));
    }
  }
  for (const auto& r : records_) {
    auto& c = counts_[r.lot];
    (r.label == Occupancy::kOccupied ? c.occupied : c.vacant)++;
  }
}

std::vector<std::string> DatasetIndex::lots() const {
  std::vector<std::string> out;
  for (const auto& [lot, _] : counts_) out.push_back(lot);
  return out;
}

std::size_t DatasetIndex::label_count(Occupancy label) const {
  std::size_t n = 0;
  for (const auto& [_, c] : counts_) n += label == Occupancy::kOccupied ? c.occupied : c.vacant;
  return n;
}

DatasetIndex DatasetIndex::filter_lots(std::span<const std::string> lots) const {
  const std::set<std::string> wanted(lots.begin(), lots.end());
  std::vector<SampleRecord> out;
  for (const auto& r : records_) {
    if (wanted.contains(r.lot)) out.push_back(r);
  }
  return DatasetIndex(std::move(out));
}

DatasetIndex scan_tree(const fs::path& root) {
  if (!fs::is_directory(root)) throw EmptyIndexError(fmt::format("dataset root '{}' is not a directory", root.string()));
  std::vector<SampleRecord> records;
  for (auto it = fs::recursive_directory_iterator(root, fs::directory_options::skip_permission_denied);
       it != fs::recursive_directory_iterator(); ++it) {
    if (!it->is_regular_file() || !is_image_extension(it->path())) continue;
    const fs::path rel = fs::relative(it->path(), root);
    std::vector<std::string> parts;
    for (const auto& part : rel) parts.push_back(part.string());
    if (parts.size() < 3) continue;  // need <lot>/<label>/<file> at minimum
    const auto label = label_from_folder(parts[parts.size() - 2]);
    if (!label) continue;

    SampleRecord rec;
    rec.path = it->path();
    rec.lot = parts.front();
    rec.label = *label;
    for (std::size_t i = 1; i + 2 < parts.size(); ++i) {
      if (auto w = parse_weather(parts[i])) rec.weather = *w;
      if (is_date_folder(parts[i])) rec.captured_at = parts[i];
    }
    std::ifstream probe(rec.path, std::ios::binary);
    if (!probe) {
      spdlog::warn("skipping unreadable dataset file {}", rec.path.string());
      continue;
    }
    records.push_back(std::move(rec));
  }
  if (records.empty()) {
    throw EmptyIndexError(fmt::format("no <lot>/.../{{Empty,Occupied}}/*.{{jpg,png}} files under '{}'", root.string()));
  }
  return DatasetIndex(std::move(records));
}

std::uint64_t split_hash(std::uint64_t seed, std::string_view key) noexcept {
  // FNV-1a over the seed bytes and key, then a splitmix64 finaliser for avalanche.
  std::uint64_t h = 0xcbf29ce484222325ull;
  auto mix = [&h](unsigned char b) {
    h ^= b;
    h *= 0x100000001b3ull;
  };
  for (int i = 0; i < 8; ++i) mix(static_cast<unsigned char>(seed >> (8 * i)));
  for (char c : key) mix(static_cast<unsigned char>(c));
  h ^= h >> 30;
  h *= 0xbf58476d1ce4e5b9ull;
  h ^= h >> 27;
  h *= 0x94d049bb133111ebull;
  h ^= h >> 31;
  return h;
}

std::string split_key(const SampleRecord& record) {
  std::vector<std::string> parts;
  for (const auto& part : record.path) parts.push_back(part.generic_string());
  // The lot folder is the nearest ancestor named like the lot above the label folder.
  std::size_t start = 0;
  for (std::size_t i = parts.size() >= 2 ? parts.size() - 2 : 0; i-- > 0;) {
    if (parts[i] == record.lot) {
      start = i;
      break;
    }
  }
  std::string key;
  for (std::size_t i = start; i < parts.size(); ++i) {
    if (!key.empty()) key += '/';
    key += parts[i];
  }
  return key;
}

Split split(const DatasetIndex& index, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw ValidationError(fmt::format("split ratio {} not in (0, 1)", ratio));
  struct Ranked {
    std::uint64_t hash;
    std::string key;
    std::size_t index;
  };
  std::vector<Ranked> ranked;
  ranked.reserve(index.size());
  for (std::size_t i = 0; i < index.size(); ++i) {
    std::string key = split_key(index[i]);
    ranked.push_back({split_hash(seed, key), std::move(key), i});
  }
  std::sort(ranked.begin(), ranked.end(), [](const Ranked& a, const Ranked& b) {
    return a.hash != b.hash ? a.hash < b.hash : a.key < b.key;
  });
  const auto n_train = static_cast<std::size_t>(std::llround(ratio * static_cast<double>(index.size())));
  std::vector<SampleRecord> train, test;
  for (std::size_t r = 0; r < ranked.size(); ++r) {
    (r < n_train ? train : test).push_back(index[ranked[r].index]);
  }
  return {DatasetIndex(std::move(train)), DatasetIndex(std::move(test))};
}

Batch load_batch(const DatasetIndex& index, std::span<const std::size_t> ids, const InputFormat& format) {
  if (ids.empty()) throw ValidationError("load_batch needs at least one record id");
  Batch batch{Tensor({ids.size(), 3, format.height, format.width}), std::vector<int>(ids.size())};
  for (std::size_t b = 0; b < ids.size(); ++b) {
    if (ids[b] >= index.size()) {
      throw ValidationError(fmt::format("record id {} out of range ({} records)", ids[b], index.size()));
    }
    const SampleRecord& rec = index[ids[b]];
    Image image;
    try {
      image = read_image(rec.path);
    } catch (const Error& e) {
      throw LoadError(rec.path.string(), e.what());
    }
    preprocess_into(image, format, batch.inputs, b);
    batch.labels[b] = rec.label == Occupancy::kOccupied ? 1 : 0;
  }
  return batch;
}

std::array<float, 3> channel_means(const DatasetIndex& index, const InputFormat& format) {
  if (index.empty()) throw ValidationError("cannot compute channel means of an empty index");
  std::array<double, 3> sum{};
  const std::size_t plane = format.height * format.width;
  for (const auto& rec : index.records()) {
    Image image;
    try {
      image = read_image(rec.path);
    } catch (const Error& e) {
      throw LoadError(rec.path.string(), e.what());
    }
    const auto unit = resize_bilinear_unit(image, format.height, format.width);
    for (std::size_t c = 0; c < 3; ++c) {
      double s = 0;
      for (std::size_t i = 0; i < plane; ++i) s += unit[c * plane + i];
      sum[c] += s / static_cast<double>(plane);
    }
  }
  std::array<float, 3> out{};
  for (std::size_t c = 0; c < 3; ++c) out[c] = static_cast<float>(sum[c] / static_cast<double>(index.size()));
  return out;
}

void write_jsonl(const DatasetIndex& index, std::ostream& out) {
  for (const auto& r : index.records()) {
    nlohmann::ordered_json j;
    j["path"] = r.path.generic_string();
    j["lot"] = r.lot;
    j["label"] = to_string(r.label);
    j["weather"] = to_string(r.weather);
    out << j.dump() << '\n';
  }
}

DatasetIndex read_jsonl(std::istream& in) {
  std::vector<SampleRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      SampleRecord r;
      r.path = j.at("path").get<std::string>();
      r.lot = j.at("lot").get<std::string>();
      const std::string label = j.at("label").get<std::string>();
      if (label == "occupied") {
        r.label = Occupancy::kOccupied;
      } else if (label == "vacant") {
        r.label = Occupancy::kVacant;
      } else {
        throw ValidationError(fmt::format("unknown label '{}'", label));
      }
      r.weather = parse_weather(j.value("weather", "unknown")).value_or(Weather::kUnknown);
      records.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw ValidationError(fmt::format("index line {}: {}", line_no, e.what()));
    } catch (const ValidationError& e) {
      throw ValidationError(fmt::format("index line {}: {}", line_no, e.what()));
    }
  }
  return DatasetIndex(std::move(records));
}

}  // namespace pv
