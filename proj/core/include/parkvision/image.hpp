#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace pv {

// 8-bit interleaved RGB raster, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> rgb;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), rgb(w * h * 3, fill) {}

  bool empty() const noexcept { return width == 0 || height == 0; }
  std::uint8_t* pixel(std::size_t x, std::size_t y) noexcept { return &rgb[(y * width + x) * 3]; }
  const std::uint8_t* pixel(std::size_t x, std::size_t y) const noexcept { return &rgb[(y * width + x) * 3]; }

  friend bool operator==(const Image&, const Image&) = default;
};

enum class ImageFormat { kPng, kJpeg, kUnknown };

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) noexcept;

// Decodes PNG or JPEG (grey, RGB, RGBA, palette) into RGB. Throws DecodeError.
Image decode_image(std::span<const std::uint8_t> bytes);
Image read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const Image& image);
std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality = 90);
void write_png(const Image& image, const std::filesystem::path& path);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

// Bilinear resample of one channel-planar float image using pixel-centre
// alignment (src = (dst + 0.5) * in / out - 0.5, clamped to the edge).
// Output is [channels, out_h, out_w] with values scaled to [0, 1].
std::vector<float> resize_bilinear_unit(const Image& image, std::size_t out_h, std::size_t out_w);

}  // namespace pv
