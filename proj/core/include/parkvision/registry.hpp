#pragma once

#include <cstdint>
#include <filesystem>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "parkvision/time_util.hpp"

struct sqlite3;

namespace pv {

enum class StallStatus { kVacant, kOccupied, kUnknown };

const char* to_string(StallStatus s) noexcept;
std::optional<StallStatus> parse_stall_status(std::string_view text) noexcept;

// Rectangle in camera-image pixel space.
struct BBox {
  std::int64_t x = 0;
  std::int64_t y = 0;
  std::int64_t w = 0;
  std::int64_t h = 0;

  bool valid() const noexcept { return x >= 0 && y >= 0 && w > 0 && h > 0; }
  friend bool operator==(const BBox&, const BBox&) = default;
};

struct StallRecord {
  std::string lot_id;
  std::int64_t stall_id = 0;
  BBox bbox;
  std::string camera_id;
  std::vector<std::uint8_t> blob;  // PNG of the latest crop; empty before the first observation
  StallStatus status = StallStatus::kUnknown;
  Timestamp updated_at{};

  friend bool operator==(const StallRecord&, const StallRecord&) = default;
};

struct LotRecord {
  std::string lot_id;
  std::string display_name;
  std::vector<std::string> camera_ids;

  friend bool operator==(const LotRecord&, const LotRecord&) = default;
};

struct CameraConfig {
  std::string camera_id;
  std::string lot_id;
  std::string snapshot_url;
  double poll_interval_s = 10.0;
  double timeout_s = 5.0;
  std::string username;  // Basic auth when non-empty
  std::string password;

  friend bool operator==(const CameraConfig&, const CameraConfig&) = default;
};

// Throws ValidationError for a non-positive interval/timeout or malformed URL.
void validate(const CameraConfig& camera);

struct LotSummary {
  std::int64_t free = 0;
  std::int64_t total = 0;
  std::int64_t unknown = 0;
  friend bool operator==(const LotSummary&, const LotSummary&) = default;
};

struct CachedFrame {
  std::vector<std::uint8_t> png;
  Timestamp captured_at{};
};

// Durable store of lots, cameras, stalls and the latest frame per camera,
// backed by a single SQLite file. All methods are thread-safe; each call is
// one transaction.
class Registry {
 public:
  // ":memory:" opens a private in-memory database.
  explicit Registry(const std::filesystem::path& db_path, NowFn now = Clock::now);
  ~Registry();
  Registry(const Registry&) = delete;
  Registry& operator=(const Registry&) = delete;

  static int schema_version();

  void upsert_lot(const LotRecord& lot);
  std::optional<LotRecord> find_lot(const std::string& lot_id) const;
  std::vector<LotRecord> list_lots() const;

  // The lot must exist.
  void upsert_camera(const CameraConfig& camera);
  std::optional<CameraConfig> find_camera(const std::string& camera_id) const;
  std::vector<CameraConfig> list_cameras(const std::optional<std::string>& lot_id = std::nullopt) const;

  // Creates or rebinds a stall. A changed bbox resets status to unknown.
  StallRecord upsert_stall(const std::string& lot_id, std::int64_t stall_id, const BBox& bbox,
                           const std::string& camera_id);
  bool delete_stall(const std::string& lot_id, std::int64_t stall_id);
  std::optional<StallRecord> find_stall(const std::string& lot_id, std::int64_t stall_id,
                                        bool include_blob = true) const;

  // Status is occupied iff occupied_prob >= 0.5. Blob and status change together.
  StallRecord record_observation(const std::string& lot_id, std::int64_t stall_id, std::vector<std::uint8_t> blob,
                                 double occupied_prob, Timestamp observed_at);

  // Stalls ordered by stall_id; blobs only when asked for.
  std::vector<StallRecord> lot_status(const std::string& lot_id, bool include_blobs = false) const;
  std::vector<StallRecord> camera_stalls(const std::string& camera_id) const;
  LotSummary summary(const std::string& lot_id) const;

  // Sets every observed stall of `camera_id` last updated before `cutoff` to unknown.
  // Returns the number of stalls changed.
  std::size_t mark_stale(const std::string& camera_id, Timestamp cutoff);

  void store_frame(const std::string& camera_id, const CachedFrame& frame);
  std::optional<CachedFrame> latest_frame(const std::string& camera_id) const;

 private:
  void migrate();
  void require_lot(const std::string& lot_id) const;

  sqlite3* db_ = nullptr;
  NowFn now_;
  mutable std::mutex mutex_;
};

}  // namespace pv
