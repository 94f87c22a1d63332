#include <algorithm>
#include <cmath>
#include <random>

#include <fmt/format.h>

#include "parkvision/dataset.hpp"
#include "parkvision/errors.hpp"

namespace fs = std::filesystem;

namespace pv {

namespace {

class Draw {
 public:
  explicit Draw(std::uint64_t seed) : rng_(seed) {}
  // Integer uniform on [lo, hi].
  int between(int lo, int hi) { return lo + static_cast<int>(rng_() % static_cast<std::uint64_t>(hi - lo + 1)); }
  double unit() { return static_cast<double>(rng_() >> 11) * 0x1.0p-53; }

 private:
  std::mt19937_64 rng_;
};

std::uint8_t clamp_u8(int v) { return static_cast<std::uint8_t>(std::clamp(v, 0, 255)); }

// Ground is dark grey in [30, 60] with +-12 noise; an occupied stall adds a
// bright (170..230) textured body covering 70..90 % of each axis.
constexpr int kGroundLo = 30, kGroundHi = 60, kNoise = 12;
constexpr int kBodyLo = 170, kBodyHi = 230, kTexture = 20;

}  // namespace

Image synth_crop(Occupancy label, std::uint64_t seed, std::size_t draw_index, std::size_t width,
                 std::size_t height) {
  if (width == 0 || height == 0) throw ValidationError("synthetic crop must be non-empty");
  const std::uint64_t stream = split_hash(seed, fmt::format("{}:{}", to_string(label), draw_index));
  Draw d(stream);
  Image img(width, height);
  const int ground = d.between(kGroundLo, kGroundHi);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      std::uint8_t* p = img.pixel(x, y);
      const int n = d.between(-kNoise, kNoise);
      for (int c = 0; c < 3; ++c) p[c] = clamp_u8(ground + n);
    }
  }
  if (label == Occupancy::kOccupied) {
    const auto w = static_cast<std::size_t>(std::lround(static_cast<double>(width) * (0.7 + 0.2 * d.unit())));
    const auto h = static_cast<std::size_t>(std::lround(static_cast<double>(height) * (0.7 + 0.2 * d.unit())));
    const std::size_t x0 = static_cast<std::size_t>(d.between(0, static_cast<int>(width - w)));
    const std::size_t y0 = static_cast<std::size_t>(d.between(0, static_cast<int>(height - h)));
    int tint[3];
    for (int& t : tint) t = d.between(kBodyLo, kBodyHi);
    const double period = 3.0 + 5.0 * d.unit();
    for (std::size_t y = y0; y < y0 + h; ++y) {
      for (std::size_t x = x0; x < x0 + w; ++x) {
        std::uint8_t* p = img.pixel(x, y);
        const int texture = static_cast<int>(std::lround(kTexture * std::sin(static_cast<double>(x + y) / period)));
        const int n = d.between(-kNoise, kNoise);
        for (int c = 0; c < 3; ++c) p[c] = clamp_u8(tint[c] + texture + n);
      }
    }
  }
  return img;
}

fs::path synth_generate(const fs::path& out_dir, const SynthOptions& options) {
  if (options.n_per_label == 0) throw ValidationError("synth_generate needs n_per_label >= 1");
  if (options.min_size == 0 || options.min_size > options.max_size) {
    throw ValidationError("synth_generate size range is empty");
  }
  const fs::path lot_dir = out_dir / options.lot;
  const fs::path day_dir = lot_dir / "Sunny" / "2024-01-15";
  std::error_code ec;
  Draw sizes(split_hash(options.seed, "sizes"));
  for (Occupancy label : {Occupancy::kVacant, Occupancy::kOccupied}) {
    const fs::path dir = day_dir / (label == Occupancy::kOccupied ? "Occupied" : "Empty");
    fs::create_directories(dir, ec);
    if (ec) throw IoError(fmt::format("cannot create '{}': {}", dir.string(), ec.message()));
    for (std::size_t i = 0; i < options.n_per_label; ++i) {
      const auto w = static_cast<std::size_t>(
          sizes.between(static_cast<int>(options.min_size), static_cast<int>(options.max_size)));
      const auto h = static_cast<std::size_t>(
          sizes.between(static_cast<int>(options.min_size), static_cast<int>(options.max_size)));
      write_png(synth_crop(label, options.seed, i, w, h), dir / fmt::format("synth_{:06d}.png", i));
    }
  }
  return lot_dir;
}

}  // namespace pv
