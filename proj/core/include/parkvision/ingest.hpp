#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include "parkvision/errors.hpp"
#include "parkvision/image.hpp"
#include "parkvision/model.hpp"
#include "parkvision/registry.hpp"
#include "parkvision/time_util.hpp"

namespace pv {

struct Frame {
  std::string camera_id;
  Timestamp captured_at{};
  Image image;
};

// HTTP GET of the camera's still-image URL. Throws FetchError with kind
// kTimeout, kConnection, kHttpStatus, kDecode or kInvalidUrl.
Frame fetch_snapshot(const CameraConfig& camera, const NowFn& now = Clock::now);

// Pixel-exact sub-rectangle. A box overhanging the frame is clamped (with a
// warning); a box with no overlap throws CropError.
Image crop(const Image& frame, const BBox& bbox);

// Occupancy classifier used by the ingest loop.
class Detector {
 public:
  virtual ~Detector() = default;
  virtual double occupied_probability(const Image& crop) = 0;
};

// Wraps a trained model; calls are serialised through one inference lock.
class CnnDetector final : public Detector {
 public:
  explicit CnnDetector(Model model) : model_(std::move(model)) {}
  double occupied_probability(const Image& crop) override;
  const Model& model() const noexcept { return model_; }

 private:
  Model model_;
  std::mutex mutex_;
};

struct CameraHealth {
  std::optional<Timestamp> last_success;
  std::optional<Timestamp> last_failure;
  std::optional<FetchError::Kind> last_error_kind;
  std::string last_error;
  std::size_t consecutive_failures = 0;
  std::size_t polls = 0;
};

struct IngestStats {
  std::size_t stalls_updated = 0;
  std::size_t failures = 0;
  friend bool operator==(const IngestStats&, const IngestStats&) = default;
};

using SnapshotFn = std::function<Frame(const CameraConfig&)>;

// Number of poll intervals without a successful observation after which a
// stall is reported as unknown.
inline constexpr double kStaleIntervals = 3.0;

class Ingestor {
 public:
  // `snapshot` defaults to fetch_snapshot.
  Ingestor(Registry& registry, Detector& detector, NowFn now = Clock::now, SnapshotFn snapshot = {});

  // Fetch once per camera of the lot, classify each bound stall, then apply
  // the staleness rule. Throws ConfigError if the lot has no cameras.
  IngestStats ingest_cycle(const std::string& lot_id);
  IngestStats ingest_camera(const CameraConfig& camera);

  CameraHealth health(const std::string& camera_id) const;

 private:
  Registry& registry_;
  Detector& detector_;
  NowFn now_;
  SnapshotFn snapshot_;
  mutable std::mutex health_mutex_;
  std::map<std::string, CameraHealth> health_;
};

}  // namespace pv
