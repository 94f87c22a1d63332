#include "parkvision/scheduler.hpp"

#include <chrono>

#include <spdlog/spdlog.h>

namespace pv {

Scheduler::Scheduler(Ingestor& ingestor, std::vector<CameraConfig> cameras)
    : ingestor_(ingestor), cameras_(std::move(cameras)) {
  for (const auto& cam : cameras_) validate(cam);
}

Scheduler::~Scheduler() { stop(); }

std::vector<CameraConfig> Scheduler::persisted_cameras(const Registry& registry) { return registry.list_cameras(); }

void Scheduler::start() {
  if (!threads_.empty()) return;
  for (const auto& cam : cameras_) {
    threads_.emplace_back([this, &cam](std::stop_token token) { run(token, cam); });
  }
  spdlog::info("scheduler started for {} cameras", cameras_.size());
}

void Scheduler::stop() {
  if (threads_.empty()) return;
  for (auto& t : threads_) t.request_stop();
  wake_.notify_all();
  threads_.clear();  // jthread joins
  spdlog::info("scheduler stopped");
}

bool Scheduler::running() const { return !threads_.empty(); }

std::size_t Scheduler::poll_count(const std::string& camera_id) const {
  std::lock_guard lock(mutex_);
  auto it = polls_.find(camera_id);
  return it == polls_.end() ? 0 : it->second;
}

void Scheduler::run(std::stop_token token, const CameraConfig& camera) {
  using SteadyClock = std::chrono::steady_clock;
  const auto interval =
      std::chrono::duration_cast<SteadyClock::duration>(std::chrono::duration<double>(camera.poll_interval_s));
  auto next = SteadyClock::now();
  while (!token.stop_requested()) {
    try {
      const IngestStats stats = ingestor_.ingest_camera(camera);
      spdlog::debug("camera '{}': {} stalls updated, {} failures", camera.camera_id, stats.stalls_updated,
                    stats.failures);
    } catch (const std::exception& e) {
      spdlog::error("camera '{}': ingest failed: {}", camera.camera_id, e.what());
    }
    {
      std::lock_guard lock(mutex_);
      ++polls_[camera.camera_id];
    }
    next += interval;
    const auto now = SteadyClock::now();
    if (next < now) next = now;  // overran; skip missed ticks rather than bursting
    std::unique_lock lock(mutex_);
    wake_.wait_until(lock, token, next, [] { return false; });
  }
}

}  // namespace pv
