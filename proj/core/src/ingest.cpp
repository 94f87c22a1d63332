#include "parkvision/ingest.hpp"

#include <algorithm>
#include <chrono>
#include <regex>

#include <fmt/format.h>
#include <httplib.h>
#include <spdlog/spdlog.h>

namespace pv {

namespace {

struct ParsedUrl {
  std::string origin;  // scheme://host[:port]
  std::string target;  // path + query
};

ParsedUrl parse_url(const std::string& url) {
  static const std::regex kUrl(R"(^(https?)://([^/\s:]+)(:(\d+))?(/\S*)?$)", std::regex::icase);
  std::smatch m;
  if (!std::regex_match(url, m, kUrl)) {
    throw FetchError(FetchError::Kind::kInvalidUrl, fmt::format("'{}' is not an http(s) URL", url));
  }
  std::string scheme = m[1].str();
  std::transform(scheme.begin(), scheme.end(), scheme.begin(), [](unsigned char c) { return std::tolower(c); });
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
  if (scheme == "https") throw FetchError(FetchError::Kind::kInvalidUrl, "https snapshot URLs need OpenSSL support");
#endif
  ParsedUrl out;
  out.origin = scheme + "://" + m[2].str() + (m[3].matched ? m[3].str() : "");
  out.target = m[5].matched ? m[5].str() : "/";
  return out;
}

std::chrono::microseconds to_micros(double seconds) {
  return std::chrono::microseconds(static_cast<std::int64_t>(seconds * 1e6));
}

}  // namespace

Frame fetch_snapshot(const CameraConfig& camera, const NowFn& now) {
  const ParsedUrl url = parse_url(camera.snapshot_url);
  httplib::Client client(url.origin);
  const auto timeout = to_micros(camera.timeout_s);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
  const auto usecs = timeout - secs;
  client.set_connection_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  client.set_read_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  client.set_write_timeout(static_cast<time_t>(secs.count()), static_cast<time_t>(usecs.count()));
  client.set_follow_location(true);
  client.set_keep_alive(false);
  if (!camera.username.empty()) client.set_basic_auth(camera.username, camera.password);

  const auto started = std::chrono::steady_clock::now();
  httplib::Headers headers{{"Accept", "image/jpeg, image/png"}};
  auto res = client.Get(url.target, headers);
  if (!res) {
    const auto err = res.error();
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
    const bool timed_out =
        err == httplib::Error::ConnectionTimeout || (err == httplib::Error::Read && elapsed >= 0.9 * camera.timeout_s);
    throw FetchError(timed_out ? FetchError::Kind::kTimeout : FetchError::Kind::kConnection,
                     fmt::format("camera '{}': GET {} failed: {}", camera.camera_id, camera.snapshot_url,
                                 httplib::to_string(err)));
  }
  if (res->status < 200 || res->status >= 300) {
    throw FetchError(FetchError::Kind::kHttpStatus,
                     fmt::format("camera '{}': GET {} returned HTTP {}", camera.camera_id, camera.snapshot_url,
                                 res->status),
                     res->status);
  }
  Frame frame;
  frame.camera_id = camera.camera_id;
  frame.captured_at = now();
  try {
    const auto* data = reinterpret_cast<const std::uint8_t*>(res->body.data());
    frame.image = decode_image(std::span<const std::uint8_t>(data, res->body.size()));
  } catch (const DecodeError& e) {
    throw FetchError(FetchError::Kind::kDecode,
                     fmt::format("camera '{}': snapshot body is not a decodable image: {}", camera.camera_id, e.what()));
  }
  return frame;
}

Image crop(const Image& frame, const BBox& bbox) {
  if (frame.empty()) throw CropError("cannot crop an empty frame");
  if (bbox.w <= 0 || bbox.h <= 0) throw CropError("bbox has no area");
  const auto fw = static_cast<std::int64_t>(frame.width);
  const auto fh = static_cast<std::int64_t>(frame.height);
  const std::int64_t x0 = std::max<std::int64_t>(bbox.x, 0);
  const std::int64_t y0 = std::max<std::int64_t>(bbox.y, 0);
  const std::int64_t x1 = std::min(bbox.x + bbox.w, fw);
  const std::int64_t y1 = std::min(bbox.y + bbox.h, fh);
  if (x0 >= x1 || y0 >= y1) {
    throw CropError(fmt::format("bbox ({},{},{},{}) does not intersect the {}x{} frame", bbox.x, bbox.y, bbox.w,
                                bbox.h, fw, fh));
  }
  if (x0 != bbox.x || y0 != bbox.y || x1 != bbox.x + bbox.w || y1 != bbox.y + bbox.h) {
    spdlog::warn("bbox ({},{},{},{}) overhangs the {}x{} frame; clamped to ({},{},{},{})", bbox.x, bbox.y, bbox.w,
                 bbox.h, fw, fh, x0, y0, x1 - x0, y1 - y0);
  }
  Image out(static_cast<std::size_t>(x1 - x0), static_cast<std::size_t>(y1 - y0));
  const std::size_t row_bytes = out.width * 3;
  for (std::size_t y = 0; y < out.height; ++y) {
    const std::uint8_t* src = frame.pixel(static_cast<std::size_t>(x0), static_cast<std::size_t>(y0) + y);
    std::copy(src, src + row_bytes, out.rgb.data() + y * row_bytes);
  }
  return out;
}

double CnnDetector::occupied_probability(const Image& crop) {
  std::lock_guard lock(mutex_);
  return predict_image(model_, crop).occupied_prob;
}

Ingestor::Ingestor(Registry& registry, Detector& detector, NowFn now, SnapshotFn snapshot)
    : registry_(registry), detector_(detector), now_(std::move(now)), snapshot_(std::move(snapshot)) {
  if (!snapshot_) {
    snapshot_ = [now = now_](const CameraConfig& cam) { return fetch_snapshot(cam, now); };
  }
}

IngestStats Ingestor::ingest_cycle(const std::string& lot_id) {
  if (!registry_.find_lot(lot_id)) throw NotFoundError(fmt::format("lot '{}' not found", lot_id));
  const auto cameras = registry_.list_cameras(lot_id);
  if (cameras.empty()) throw ConfigError(fmt::format("lot '{}' has no cameras", lot_id));
  IngestStats total;
  for (const auto& cam : cameras) {
    const IngestStats s = ingest_camera(cam);
    total.stalls_updated += s.stalls_updated;
    total.failures += s.failures;
  }
  return total;
}

IngestStats Ingestor::ingest_camera(const CameraConfig& camera) {
  IngestStats stats;
  std::optional<Frame> frame;
  try {
    frame = snapshot_(camera);
    std::lock_guard lock(health_mutex_);
    auto& h = health_[camera.camera_id];
    ++h.polls;
    h.last_success = frame->captured_at;
    h.consecutive_failures = 0;
  } catch (const FetchError& e) {
    spdlog::warn("{}", e.what());
    std::lock_guard lock(health_mutex_);
    auto& h = health_[camera.camera_id];
    ++h.polls;
    h.last_failure = now_();
    h.last_error_kind = e.kind();
    h.last_error = e.what();
    ++h.consecutive_failures;
    stats.failures = 1;
  }

  if (frame) {
    registry_.store_frame(camera.camera_id, {encode_png(frame->image), frame->captured_at});
    for (const StallRecord& stall : registry_.camera_stalls(camera.camera_id)) {
      try {
        Image patch = crop(frame->image, stall.bbox);
        const double prob = detector_.occupied_probability(patch);
        registry_.record_observation(stall.lot_id, stall.stall_id, encode_png(patch), prob, frame->captured_at);
        ++stats.stalls_updated;
      } catch (const CropError& e) {
        spdlog::warn("camera '{}' stall {}/{}: {}", camera.camera_id, stall.lot_id, stall.stall_id, e.what());
        ++stats.failures;
      } catch (const NotFoundError&) {
        // Stall deleted between listing and writing.
      }
    }
  }

  const auto window = std::chrono::duration_cast<Clock::duration>(
      std::chrono::duration<double>(kStaleIntervals * camera.poll_interval_s));
  const std::size_t stale = registry_.mark_stale(camera.camera_id, now_() - window);
  if (stale > 0) spdlog::warn("camera '{}': {} stalls went stale and are now unknown", camera.camera_id, stale);
  return stats;
}

CameraHealth Ingestor::health(const std::string& camera_id) const {
  std::lock_guard lock(health_mutex_);
  auto it = health_.find(camera_id);
  return it == health_.end() ? CameraHealth{} : it->second;
}

}  // namespace pv
