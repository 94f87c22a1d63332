#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "parkvision/image.hpp"
#include "parkvision/ingest.hpp"
#include "parkvision/registry.hpp"

namespace pv::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  TempDir();
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const noexcept { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Minimal HTTP camera serving GET /snapshot from a loopback port.
class StubCamera {
 public:
  StubCamera();
  ~StubCamera();
  StubCamera(const StubCamera&) = delete;
  StubCamera& operator=(const StubCamera&) = delete;

  std::string url(const std::string& path = "/snapshot") const;
  int port() const noexcept { return port_; }

  void set_body(std::vector<std::uint8_t> body, std::string content_type = "image/png");
  void set_image(const Image& image);  // served as PNG
  void set_status(int status);
  void set_delay(std::chrono::milliseconds delay);
  // Basic auth "user:pass" required when non-empty.
  void require_auth(const std::string& user, const std::string& pass);
  std::size_t hits() const noexcept { return hits_; }

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
  std::thread thread_;
  int port_ = 0;
  std::atomic<std::size_t> hits_{0};
};

// Classifies by mean brightness: > 128 means occupied.
class BrightnessDetector final : public Detector {
 public:
  double occupied_probability(const Image& crop) override;
  std::size_t calls() const noexcept { return calls_; }

 private:
  std::atomic<std::size_t> calls_{0};
};

// Manually advanced wall clock.
class ManualClock {
 public:
  explicit ManualClock(Timestamp start = from_unix_millis(1'700'000'000'000)) : now_(start) {}
  Timestamp now() const {
    std::lock_guard lock(mutex_);
    return now_;
  }
  void advance(std::chrono::milliseconds d) {
    std::lock_guard lock(mutex_);
    now_ += d;
  }
  NowFn fn() {
    return [this] { return now(); };
  }

 private:
  mutable std::mutex mutex_;
  Timestamp now_;
};

struct StallLayout {
  std::int64_t stall_id;
  BBox bbox;
  bool occupied;
};

// Lot image on dark tarmac with `stalls` painted at their boxes. With
// `synthetic_crops`, each stall is a synthetic-generator crop (what a trained
// model has seen); otherwise a flat fill that BrightnessDetector reads exactly.
Image compose_lot(std::size_t width, std::size_t height, const std::vector<StallLayout>& stalls,
                  bool synthetic_crops, std::uint64_t seed = 0);

// Six stalls on a 3x2 grid of 64x64 boxes, statuses V O O V O V.
std::vector<StallLayout> six_stall_layout();

}  // namespace pv::testing
