#include <gtest/gtest.h>

#include <chrono>

#include "fixtures.hpp"
#include "parkvision/errors.hpp"
#include "parkvision/ingest.hpp"

namespace pv {
namespace {

using namespace std::chrono_literals;

CameraConfig camera_for(const testing::StubCamera& stub, const std::string& id = "cam", double timeout_s = 2.0) {
  CameraConfig c;
  c.camera_id = id;
  c.lot_id = "L";
  c.snapshot_url = stub.url();
  c.poll_interval_s = 10;
  c.timeout_s = timeout_s;
  return c;
}

FetchError::Kind fetch_kind(const CameraConfig& cam) {
  try {
    fetch_snapshot(cam);
  } catch (const FetchError& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected FetchError";
  return FetchError::Kind::kInvalidUrl;
}

TEST(FetchSnapshot, PngFrameHasMatchingDimensions) {
  testing::StubCamera stub;
  stub.set_image(Image(37, 21, 90));
  testing::ManualClock clock;
  const Frame f = fetch_snapshot(camera_for(stub), clock.fn());
  EXPECT_EQ(f.image.width, 37u);
  EXPECT_EQ(f.image.height, 21u);
  EXPECT_EQ(f.captured_at, clock.now());
  EXPECT_EQ(f.camera_id, "cam");
}

TEST(FetchSnapshot, JpegBody) {
  testing::StubCamera stub;
  stub.set_body(encode_jpeg(Image(16, 12, 128)), "image/jpeg");
  const Frame f = fetch_snapshot(camera_for(stub));
  EXPECT_EQ(f.image.width, 16u);
  EXPECT_EQ(f.image.height, 12u);
}

TEST(FetchSnapshot, HttpStatusError) {
  testing::StubCamera stub;
  stub.set_status(404);
  try {
    fetch_snapshot(camera_for(stub));
    FAIL();
  } catch (const FetchError& e) {
    EXPECT_EQ(e.kind(), FetchError::Kind::kHttpStatus);
    EXPECT_EQ(e.http_status(), 404);
  }
}

TEST(FetchSnapshot, UndecodableBody) {
  testing::StubCamera stub;
  stub.set_body({'h', 'e', 'l', 'l', 'o'}, "image/jpeg");
  EXPECT_EQ(fetch_kind(camera_for(stub)), FetchError::Kind::kDecode);
}

TEST(FetchSnapshot, TimeoutWithinBudget) {
  testing::StubCamera stub;
  stub.set_image(Image(4, 4));
  stub.set_delay(2500ms);
  const CameraConfig cam = camera_for(stub, "slow", 1.0);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_EQ(fetch_kind(cam), FetchError::Kind::kTimeout);
  const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  EXPECT_LT(elapsed, cam.timeout_s + 1.0);
}

TEST(FetchSnapshot, ConnectionRefused) {
  CameraConfig cam;
  cam.camera_id = "dead";
  cam.lot_id = "L";
  cam.snapshot_url = "http://127.0.0.1:1/snapshot";
  cam.timeout_s = 1;
  EXPECT_EQ(fetch_kind(cam), FetchError::Kind::kConnection);
  cam.snapshot_url = "not a url";
  EXPECT_EQ(fetch_kind(cam), FetchError::Kind::kInvalidUrl);
}

TEST(FetchSnapshot, BasicAuth) {
  testing::StubCamera stub;
  stub.set_image(Image(3, 3));
  stub.require_auth("viewer", "pw");
  CameraConfig cam = camera_for(stub);
  EXPECT_EQ(fetch_kind(cam), FetchError::Kind::kHttpStatus);
  cam.username = "viewer";
  cam.password = "pw";
  EXPECT_NO_THROW(fetch_snapshot(cam));
}

Image numbered_frame(std::size_t w, std::size_t h) {
  Image img(w, h);
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      img.pixel(x, y)[0] = static_cast<std::uint8_t>(x);
      img.pixel(x, y)[1] = static_cast<std::uint8_t>(y);
      img.pixel(x, y)[2] = static_cast<std::uint8_t>(x * 16 + y);
    }
  }
  return img;
}

TEST(Crop, FullFrameIsIdentity) {
  const Image f = numbered_frame(10, 7);
  EXPECT_EQ(crop(f, {0, 0, 10, 7}), f);
}

TEST(Crop, PixelExactSubRectangle) {
  const Image f = numbered_frame(10, 10);
  const Image c = crop(f, {2, 2, 3, 3});
  ASSERT_EQ(c.width, 3u);
  ASSERT_EQ(c.height, 3u);
  for (std::size_t y = 0; y < 3; ++y) {
    for (std::size_t x = 0; x < 3; ++x) {
      EXPECT_EQ(c.pixel(x, y)[0], x + 2);
      EXPECT_EQ(c.pixel(x, y)[1], y + 2);
    }
  }
}

TEST(Crop, MarkerPixelTranslates) {
  Image f(40, 30, 0);
  f.pixel(17, 11)[1] = 255;
  const Image c = crop(f, {12, 5, 10, 10});
  EXPECT_EQ(c.pixel(5, 6)[1], 255);
  std::size_t lit = 0;
  for (std::size_t i = 1; i < c.rgb.size(); i += 3) lit += c.rgb[i] == 255;
  EXPECT_EQ(lit, 1u);
}

TEST(Crop, OverhangClampedNoOverlapRejected) {
  const Image f = numbered_frame(10, 10);
  const Image c = crop(f, {7, 0, 5, 4});
  EXPECT_EQ(c.width, 3u);
  EXPECT_EQ(c.height, 4u);
  EXPECT_EQ(c.pixel(0, 0)[0], 7);
  EXPECT_THROW(crop(f, {10, 0, 5, 5}), CropError);
  EXPECT_THROW(crop(f, {20, 20, 5, 5}), CropError);
}

class IngestTest : public ::testing::Test {
 protected:
  IngestTest() : reg(":memory:", clock.fn()), ingestor(reg, detector, clock.fn()) {
    reg.upsert_lot({"L", "L", {}});
  }

  void add_camera(testing::StubCamera& stub, const std::string& id, const std::vector<testing::StallLayout>& stalls) {
    reg.upsert_camera(camera_for(stub, id));
    std::int64_t max_x = 0;
    std::int64_t max_y = 0;
    for (const auto& s : stalls) {
      reg.upsert_stall("L", s.stall_id, s.bbox, id);
      max_x = std::max(max_x, s.bbox.x + s.bbox.w);
      max_y = std::max(max_y, s.bbox.y + s.bbox.h);
    }
    stub.set_image(testing::compose_lot(static_cast<std::size_t>(max_x + 8), static_cast<std::size_t>(max_y + 8),
                                        stalls, false));
  }

  testing::ManualClock clock;
  Registry reg;
  testing::BrightnessDetector detector;
  Ingestor ingestor;
};

std::vector<testing::StallLayout> alternating(std::int64_t first_id, std::size_t n) {
  std::vector<testing::StallLayout> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({first_id + static_cast<std::int64_t>(i), BBox{static_cast<std::int64_t>(4 + 24 * i), 4, 20, 20},
                   i % 2 == 1});
  }
  return out;
}

TEST_F(IngestTest, FourStallsMatchStubDetector) {
  testing::StubCamera stub;
  const auto stalls = alternating(1, 4);
  add_camera(stub, "cam", stalls);
  const IngestStats st = ingestor.ingest_cycle("L");
  EXPECT_EQ(st, (IngestStats{4, 0}));
  for (const auto& s : stalls) {
    const auto rec = reg.find_stall("L", s.stall_id);
    EXPECT_EQ(rec->status, s.occupied ? StallStatus::kOccupied : StallStatus::kVacant) << s.stall_id;
    const Image blob = decode_image(rec->blob);
    EXPECT_EQ(blob.width, 20u);
  }
  EXPECT_EQ(stub.hits(), 1u);  // one fetch per camera per cycle
  EXPECT_TRUE(reg.latest_frame("cam").has_value());
}

TEST_F(IngestTest, CameraDownIsIsolated) {
  testing::StubCamera good;
  testing::StubCamera bad;
  add_camera(good, "good", alternating(1, 2));
  add_camera(bad, "bad", alternating(10, 2));
  bad.set_status(500);
  const IngestStats st = ingestor.ingest_cycle("L");
  EXPECT_EQ(st, (IngestStats{2, 1}));
  EXPECT_EQ(reg.find_stall("L", 10)->status, StallStatus::kUnknown);
  EXPECT_TRUE(reg.find_stall("L", 10)->blob.empty());
  EXPECT_FALSE(reg.latest_frame("bad").has_value());
  EXPECT_EQ(reg.find_stall("L", 1)->status, StallStatus::kVacant);
  const CameraHealth h = ingestor.health("bad");
  EXPECT_EQ(h.consecutive_failures, 1u);
  EXPECT_EQ(h.last_error_kind, FetchError::Kind::kHttpStatus);
  EXPECT_TRUE(ingestor.health("good").last_success.has_value());
}

TEST_F(IngestTest, FetchFailureLeavesStatusesUntilStale) {
  testing::StubCamera stub;
  add_camera(stub, "cam", alternating(1, 2));
  ingestor.ingest_cycle("L");
  const auto before = reg.lot_status("L", true);
  stub.set_status(503);
  clock.advance(29s);  // under 3 x 10 s
  EXPECT_EQ(ingestor.ingest_cycle("L"), (IngestStats{0, 1}));
  EXPECT_EQ(reg.lot_status("L", true), before);
  clock.advance(2s);  // now 31 s since the last good observation
  ingestor.ingest_cycle("L");
  for (const auto& s : reg.lot_status("L")) EXPECT_EQ(s.status, StallStatus::kUnknown);
  EXPECT_EQ(reg.summary("L"), (LotSummary{0, 2, 2}));
}

TEST_F(IngestTest, LotWithoutCamerasIsConfigError) { EXPECT_THROW(ingestor.ingest_cycle("L"), ConfigError); }

TEST_F(IngestTest, DeterministicRegistryState) {
  testing::StubCamera stub;
  add_camera(stub, "cam", alternating(1, 4));
  ingestor.ingest_cycle("L");
  const auto first = reg.lot_status("L", true);

  testing::ManualClock clock2;
  Registry reg2(":memory:", clock2.fn());
  testing::BrightnessDetector det2;
  Ingestor ing2(reg2, det2, clock2.fn());
  reg2.upsert_lot({"L", "L", {}});
  reg2.upsert_camera(camera_for(stub, "cam"));
  for (const auto& s : alternating(1, 4)) reg2.upsert_stall("L", s.stall_id, s.bbox, "cam");
  ing2.ingest_cycle("L");
  EXPECT_EQ(reg2.lot_status("L", true), first);
}

TEST_F(IngestTest, StallOutsideFrameCountsAsFailure) {
  testing::StubCamera stub;
  add_camera(stub, "cam", alternating(1, 1));
  reg.upsert_stall("L", 2, {5000, 5000, 10, 10}, "cam");
  EXPECT_EQ(ingestor.ingest_cycle("L"), (IngestStats{1, 1}));
}

}  // namespace
}  // namespace pv
