#include "fixtures.hpp"

#include <random>

#include <fmt/format.h>
#include <httplib.h>

#include "parkvision/dataset.hpp"

namespace fs = std::filesystem;

namespace pv::testing {

TempDir::TempDir() {
  std::random_device rd;
  const auto tag = (std::uint64_t{rd()} << 32) ^ rd();
  path_ = fs::temp_directory_path() / fmt::format("parkvision-test-{:016x}", tag);
  fs::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  fs::remove_all(path_, ec);
}

struct StubCamera::Impl {
  httplib::Server server;
  std::mutex mutex;
  std::string body;
  std::string content_type = "image/png";
  int status = 200;
  std::chrono::milliseconds delay{0};
  std::string user;
  std::string pass;
};

StubCamera::StubCamera() : impl_(std::make_unique<Impl>()) {
  impl_->server.Get("/snapshot", [this](const httplib::Request& req, httplib::Response& res) {
    ++hits_;
    std::string body;
    std::string type;
    int status = 0;
    std::chrono::milliseconds delay{};
    std::string user;
    std::string pass;
    {
      std::lock_guard lock(impl_->mutex);
      body = impl_->body;
      type = impl_->content_type;
      status = impl_->status;
      delay = impl_->delay;
      user = impl_->user;
      pass = impl_->pass;
    }
    if (delay.count() > 0) std::this_thread::sleep_for(delay);
    if (!user.empty()) {
      const std::string expected = "Basic " + httplib::detail::base64_encode(user + ":" + pass);
      if (req.get_header_value("Authorization") != expected) {
        res.status = 401;
        return;
      }
    }
    res.status = status;
    if (status >= 200 && status < 300) res.set_content(body, type);
  });
  port_ = impl_->server.bind_to_any_port("127.0.0.1");
  thread_ = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

StubCamera::~StubCamera() {
  impl_->server.stop();
  thread_.join();
}

std::string StubCamera::url(const std::string& path) const { return fmt::format("http://127.0.0.1:{}{}", port_, path); }

void StubCamera::set_body(std::vector<std::uint8_t> body, std::string content_type) {
  std::lock_guard lock(impl_->mutex);
  impl_->body.assign(body.begin(), body.end());
  impl_->content_type = std::move(content_type);
}

void StubCamera::set_image(const Image& image) { set_body(encode_png(image)); }

void StubCamera::set_status(int status) {
  std::lock_guard lock(impl_->mutex);
  impl_->status = status;
}

void StubCamera::set_delay(std::chrono::milliseconds delay) {
  std::lock_guard lock(impl_->mutex);
  impl_->delay = delay;
}

void StubCamera::require_auth(const std::string& user, const std::string& pass) {
  std::lock_guard lock(impl_->mutex);
  impl_->user = user;
  impl_->pass = pass;
}

double BrightnessDetector::occupied_probability(const Image& crop) {
  ++calls_;
  double sum = 0;
  for (auto v : crop.rgb) sum += v;
  return sum / static_cast<double>(crop.rgb.size()) > 128.0 ? 0.9 : 0.1;
}

Image compose_lot(std::size_t width, std::size_t height, const std::vector<StallLayout>& stalls,
                  bool synthetic_crops, std::uint64_t seed) {
  Image lot(width, height, 20);
  for (const auto& s : stalls) {
    const auto w = static_cast<std::size_t>(s.bbox.w);
    const auto h = static_cast<std::size_t>(s.bbox.h);
    Image patch = synthetic_crops
                      ? synth_crop(s.occupied ? Occupancy::kOccupied : Occupancy::kVacant, seed,
                                   static_cast<std::size_t>(s.stall_id), w, h)
                      : Image(w, h, s.occupied ? 220 : 40);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const std::uint8_t* src = patch.pixel(x, y);
        std::uint8_t* dst = lot.pixel(static_cast<std::size_t>(s.bbox.x) + x, static_cast<std::size_t>(s.bbox.y) + y);
        std::copy(src, src + 3, dst);
      }
    }
  }
  return lot;
}

std::vector<StallLayout> six_stall_layout() {
  const bool occupied[] = {false, true, true, false, true, false};
  std::vector<StallLayout> out;
  for (std::int64_t i = 0; i < 6; ++i) {
    const std::int64_t col = i % 3;
    const std::int64_t row = i / 3;
    out.push_back({i + 1, BBox{8 + col * 80, 8 + row * 80, 64, 64}, occupied[i]});
  }
  return out;
}

}  // namespace pv::testing
