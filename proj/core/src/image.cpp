#include "parkvision/image.hpp"

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include <jpeglib.h>
#include <png.h>

#include <fmt/format.h>

#include "parkvision/errors.hpp"

namespace pv {

ImageFormat sniff_format(std::span<const std::uint8_t> bytes) noexcept {
  static constexpr std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', 0x0D, 0x0A, 0x1A, 0x0A};
  if (bytes.size() >= 8 && std::memcmp(bytes.data(), kPngSig, 8) == 0) return ImageFormat::kPng;
  if (bytes.size() >= 3 && bytes[0] == 0xFF && bytes[1] == 0xD8 && bytes[2] == 0xFF) return ImageFormat::kJpeg;
  return ImageFormat::kUnknown;
}

namespace {

Image decode_png(std::span<const std::uint8_t> bytes) {
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&img, bytes.data(), bytes.size())) {
    throw DecodeError(fmt::format("png header: {}", img.message));
  }
  img.format = PNG_FORMAT_RGB;
  if (img.width == 0 || img.height == 0) {
    png_image_free(&img);
    throw DecodeError("png has zero dimension");
  }
  Image out(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.rgb.data(), 0, nullptr)) {
    std::string msg = img.message;
    png_image_free(&img);
    throw DecodeError(fmt::format("png data: {}", msg));
  }
  return out;
}

struct JpegErrorMgr {
  jpeg_error_mgr pub;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

void jpeg_silence(j_common_ptr, int) {}

// Decodes into a caller-owned buffer. No C++ objects with destructors live
// between setjmp and the possible longjmp.
bool decode_jpeg_raw(const std::uint8_t* data, std::size_t size, std::vector<std::uint8_t>& pixels,
                     std::size_t& width, std::size_t& height, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silence;
  err.message[0] = '\0';
  if (setjmp(err.jump)) {
    std::strncpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_mem_src(&cinfo, data, static_cast<unsigned long>(size));
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  width = cinfo.output_width;
  height = cinfo.output_height;
  pixels.resize(width * height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

Image decode_jpeg(std::span<const std::uint8_t> bytes) {
  Image out;
  char message[JMSG_LENGTH_MAX] = {0};
  if (!decode_jpeg_raw(bytes.data(), bytes.size(), out.rgb, out.width, out.height, message)) {
    throw DecodeError(fmt::format("jpeg: {}", message));
  }
  if (out.empty()) throw DecodeError("jpeg has zero dimension");
  return out;
}

bool encode_jpeg_raw(const Image& image, int quality, unsigned char*& buffer, unsigned long& size, char* message) {
  jpeg_compress_struct cinfo;
  JpegErrorMgr err;
  cinfo.err = jpeg_std_error(&err.pub);
  err.pub.error_exit = jpeg_error_exit;
  err.pub.emit_message = jpeg_silence;
  if (setjmp(err.jump)) {
    std::strncpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_mem_dest(&cinfo, &buffer, &size);
  cinfo.image_width = static_cast<JDIMENSION>(image.width);
  cinfo.image_height = static_cast<JDIMENSION>(image.height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    auto* row = const_cast<JSAMPROW>(image.rgb.data() + static_cast<std::size_t>(cinfo.next_scanline) * image.width * 3);
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

}  // namespace

Image decode_image(std::span<const std::uint8_t> bytes) {
  switch (sniff_format(bytes)) {
    case ImageFormat::kPng:
      return decode_png(bytes);
    case ImageFormat::kJpeg:
      return decode_jpeg(bytes);
    case ImageFormat::kUnknown:
      break;
  }
  throw DecodeError(fmt::format("unrecognised image format ({} bytes)", bytes.size()));
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError(fmt::format("cannot open '{}'", path.string()));
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError(fmt::format("read failed for '{}'", path.string()));
  return bytes;
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError(fmt::format("cannot open '{}' for writing", path.string()));
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError(fmt::format("write failed for '{}'", path.string()));
}

Image read_image(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  try {
    return decode_image(bytes);
  } catch (const DecodeError& e) {
    throw DecodeError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

std::vector<std::uint8_t> encode_png(const Image& image) {
  if (image.empty() || image.rgb.size() != image.width * image.height * 3) {
    throw ValidationError("encode_png: image is empty or has inconsistent buffer size");
  }
  png_image img;
  std::memset(&img, 0, sizeof(img));
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  png_alloc_size_t size = 0;
  if (!png_image_write_to_memory(&img, nullptr, &size, 0, image.rgb.data(), 0, nullptr)) {
    throw IoError(fmt::format("png encode: {}", img.message));
  }
  std::vector<std::uint8_t> out(size);
  if (!png_image_write_to_memory(&img, out.data(), &size, 0, image.rgb.data(), 0, nullptr)) {
    throw IoError(fmt::format("png encode: {}", img.message));
  }
  out.resize(size);
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const Image& image, int quality) {
  if (image.empty()) throw ValidationError("encode_jpeg: empty image");
  unsigned char* buffer = nullptr;
  unsigned long size = 0;
  char message[JMSG_LENGTH_MAX] = {0};
  const bool ok = encode_jpeg_raw(image, quality, buffer, size, message);
  std::vector<std::uint8_t> out;
  if (ok) out.assign(buffer, buffer + size);
  std::free(buffer);
  if (!ok) throw IoError(fmt::format("jpeg encode: {}", message));
  return out;
}

void write_png(const Image& image, const std::filesystem::path& path) { write_file(path, encode_png(image)); }

std::vector<float> resize_bilinear_unit(const Image& image, std::size_t out_h, std::size_t out_w) {
  if (image.empty()) throw ValidationError("cannot resize an empty image");
  if (out_h == 0 || out_w == 0) throw ValidationError("resize target must be non-empty");

  struct Tap {
    std::size_t lo, hi;
    float frac;
  };
  auto taps = [](std::size_t in, std::size_t out) {
    std::vector<Tap> t(out);
    const double scale = static_cast<double>(in) / static_cast<double>(out);
    for (std::size_t i = 0; i < out; ++i) {
      double src = (static_cast<double>(i) + 0.5) * scale - 0.5;
      src = std::clamp(src, 0.0, static_cast<double>(in - 1));
      const auto lo = static_cast<std::size_t>(std::floor(src));
      const std::size_t hi = std::min(lo + 1, in - 1);
      t[i] = {lo, hi, static_cast<float>(src - static_cast<double>(lo))};
    }
    return t;
  };
  const auto ys = taps(image.height, out_h);
  const auto xs = taps(image.width, out_w);

  std::vector<float> out(3 * out_h * out_w);
  constexpr float kScale = 1.0f / 255.0f;
  for (std::size_t oy = 0; oy < out_h; ++oy) {
    const Tap& ty = ys[oy];
    for (std::size_t ox = 0; ox < out_w; ++ox) {
      const Tap& tx = xs[ox];
      const std::uint8_t* p00 = image.pixel(tx.lo, ty.lo);
      const std::uint8_t* p01 = image.pixel(tx.hi, ty.lo);
      const std::uint8_t* p10 = image.pixel(tx.lo, ty.hi);
      const std::uint8_t* p11 = image.pixel(tx.hi, ty.hi);
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = p00[c] + (p01[c] - static_cast<float>(p00[c])) * tx.frac;
        const float bottom = p10[c] + (p11[c] - static_cast<float>(p10[c])) * tx.frac;
        const float v = top + (bottom - top) * ty.frac;
        out[(c * out_h + oy) * out_w + ox] = v * kScale;
      }
    }
  }
  return out;
}

}  // namespace pv
