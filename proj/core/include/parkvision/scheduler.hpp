#pragma once

#include <condition_variable>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include "parkvision/ingest.hpp"

namespace pv {

// One poller thread per camera. Each camera is polled immediately on start
// and then every poll_interval_s on a monotonic cadence. stop() lets any
// in-flight cycle finish before joining.
class Scheduler {
 public:
  Scheduler(Ingestor& ingestor, std::vector<CameraConfig> cameras);
  ~Scheduler();
  Scheduler(const Scheduler&) = delete;
  Scheduler& operator=(const Scheduler&) = delete;

  // Cameras as currently persisted in the registry.
  static std::vector<CameraConfig> persisted_cameras(const Registry& registry);

  void start();
  void stop();
  bool running() const;

  std::size_t poll_count(const std::string& camera_id) const;

 private:
  void run(std::stop_token token, const CameraConfig& camera);

  Ingestor& ingestor_;
  std::vector<CameraConfig> cameras_;
  std::vector<std::jthread> threads_;
  mutable std::mutex mutex_;
  std::condition_variable_any wake_;
  std::map<std::string, std::size_t> polls_;
};

}  // namespace pv
