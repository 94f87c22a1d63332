#include <bit>
#include <cstring>

#include <fmt/format.h>

#include "parkvision/errors.hpp"
#include "parkvision/model.hpp"

namespace pv {

namespace {

constexpr char kMagic[4] = {'P', 'S', 'V', 'I'};
constexpr std::uint32_t kFormatVersion = 1;

class Writer {
 public:
  void u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
  }
  void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
  void raw(const char* p, std::size_t n) { bytes_.insert(bytes_.end(), p, p + n); }
  std::vector<std::uint8_t> take() { return std::move(bytes_); }
  void reserve(std::size_t n) { bytes_.reserve(n); }

 private:
  std::vector<std::uint8_t> bytes_;
};

class Reader {
 public:
  explicit Reader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

  std::uint32_t u32(const char* what) {
    need(4, what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(bytes_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  float f32(const char* what) { return std::bit_cast<float>(u32(what)); }
  void need(std::size_t n, const char* what) const {
    if (bytes_.size() - pos_ < n) {
      throw ParseError(ParseError::Kind::kTruncated,
                       fmt::format("model file truncated while reading {} (offset {}, {} bytes total)", what, pos_,
                                   bytes_.size()));
    }
  }
  std::size_t remaining() const { return bytes_.size() - pos_; }
  std::size_t position() const { return pos_; }
  const std::uint8_t* cursor() const { return bytes_.data() + pos_; }
  void skip(std::size_t n) { pos_ += n; }

 private:
  const std::vector<std::uint8_t>& bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> serialize(const Model& model) {
  const ModelSpec& spec = model.spec();
  Writer w;
  w.reserve(serialized_size(spec));
  w.raw(kMagic, 4);
  w.u32(kFormatVersion);
  w.u32(spec.input_height);
  w.u32(spec.input_width);
  w.u32(spec.input_channels);
  w.u32(static_cast<std::uint32_t>(spec.conv_stages.size()));
  for (const ConvStage& st : spec.conv_stages) {
    w.u32(st.out_channels);
    w.u32(st.kernel);
    w.u32(st.stride);
    w.u32(st.pad);
    w.u32(st.pool_window);
    w.u32(st.pool_stride);
  }
  w.u32(static_cast<std::uint32_t>(spec.fc_sizes.size()));
  for (std::uint32_t m : spec.fc_sizes) w.u32(m);
  for (float m : model.channel_means()) w.f32(m);
  for (const LayerParams& p : model.params()) {
    for (float v : p.weights.data()) w.f32(v);
    for (float v : p.bias.data()) w.f32(v);
  }
  return w.take();
}

Model deserialize(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 4) throw ParseError(ParseError::Kind::kTruncated, "model file shorter than its magic");
  if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
    throw ParseError(ParseError::Kind::kBadMagic, "not a model file (magic is not PSVI)");
  }
  Reader r(bytes);
  r.skip(4);
  const std::uint32_t version = r.u32("version");
  if (version != kFormatVersion) {
    throw ParseError(ParseError::Kind::kUnsupportedVersion,
                     fmt::format("model format version {} is not supported (expected {})", version, kFormatVersion));
  }
  ModelSpec spec;
  spec.input_height = r.u32("input height");
  spec.input_width = r.u32("input width");
  spec.input_channels = r.u32("input channels");
  const std::uint32_t stages = r.u32("stage count");
  // Each stage needs 24 bytes; reject absurd counts before allocating.
  r.need(static_cast<std::size_t>(stages) * 24, "conv stages");
  for (std::uint32_t i = 0; i < stages; ++i) {
    ConvStage st;
    st.out_channels = r.u32("stage");
    st.kernel = r.u32("stage");
    st.stride = r.u32("stage");
    st.pad = r.u32("stage");
    st.pool_window = r.u32("stage");
    st.pool_stride = r.u32("stage");
    spec.conv_stages.push_back(st);
  }
  const std::uint32_t fcs = r.u32("fc count");
  r.need(static_cast<std::size_t>(fcs) * 4, "fc sizes");
  for (std::uint32_t i = 0; i < fcs; ++i) spec.fc_sizes.push_back(r.u32("fc size"));
  std::array<float, 3> means{};
  for (auto& m : means) m = r.f32("channel means");

  try {
    validate_spec(spec);
  } catch (const ConfigError& e) {
    throw ParseError(ParseError::Kind::kInvalidSpec, fmt::format("model file spec block is invalid: {}", e.what()));
  }
  const std::size_t count = parameter_count(spec);
  r.need(count * 4, "parameters");
  if (r.remaining() != count * 4) {
    throw ParseError(ParseError::Kind::kTrailingData,
                     fmt::format("model file has {} unexpected trailing bytes", r.remaining() - count * 4));
  }

  Model model = allocate(spec);
  model.set_channel_means(means);
  for (LayerParams& p : model.params()) {
    for (auto& v : p.weights.data()) v = r.f32("weights");
    for (auto& v : p.bias.data()) v = r.f32("bias");
  }
  return model;
}

void save(const Model& model, const std::filesystem::path& path) { write_file(path, serialize(model)); }

Model load(const std::filesystem::path& path) { return deserialize(read_file(path)); }

}  // namespace pv
