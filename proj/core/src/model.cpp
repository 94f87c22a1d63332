#include "parkvision/model.hpp"

#include <cmath>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "parkvision/errors.hpp"

namespace pv {

const char* to_string(Occupancy o) noexcept { return o == Occupancy::kOccupied ? "occupied" : "vacant"; }

ModelSpec ModelSpec::desk() {
  ModelSpec s;
  s.input_height = 64;
  s.input_width = 64;
  s.input_channels = 3;
  s.conv_stages = {
      {8, 5, 1, 2, 2, 2}, {16, 3, 1, 1, 2, 2}, {32, 3, 1, 1, 2, 2}, {32, 3, 1, 1, 2, 2}, {64, 3, 1, 1, 2, 2},
  };
  s.fc_sizes = {128, 64, 2};
  return s;
}

ModelSpec ModelSpec::full_scale() {
  ModelSpec s;
  s.input_height = 224;
  s.input_width = 224;
  s.input_channels = 3;
  s.conv_stages = {
      {64, 11, 4, 0, 2, 2}, {256, 5, 1, 2, 2, 2}, {256, 3, 1, 1, 2, 2}, {256, 3, 1, 1, 2, 2}, {256, 3, 1, 1, 2, 2},
  };
  s.fc_sizes = {4096, 4096, 2};
  return s;
}

bool ModelSpec::same_topology(const ModelSpec& o) const {
  return input_height == o.input_height && input_width == o.input_width && input_channels == o.input_channels &&
         conv_stages == o.conv_stages && fc_sizes == o.fc_sizes;
}

std::vector<StageGeometry> stage_geometry(const ModelSpec& spec) {
  std::vector<StageGeometry> out;
  std::size_t h = spec.input_height;
  std::size_t w = spec.input_width;
  for (std::size_t i = 0; i < spec.conv_stages.size(); ++i) {
    const ConvStage& st = spec.conv_stages[i];
    if (st.out_channels == 0 || st.kernel == 0 || st.stride == 0 || st.pool_window == 0 || st.pool_stride == 0) {
      throw ConfigError(fmt::format("conv stage {} has a zero channel/kernel/stride/pool field", i + 1));
    }
    const std::size_t ch = conv_output_extent(h, st.kernel, st.stride, st.pad);
    const std::size_t cw = conv_output_extent(w, st.kernel, st.stride, st.pad);
    if (ch == 0 || cw == 0) {
      throw ConfigError(fmt::format("conv stage {}: {}x{} input is smaller than kernel {} with pad {}", i + 1, h, w,
                                    st.kernel, st.pad));
    }
    const std::size_t ph = pool_output_extent(ch, st.pool_window, st.pool_stride);
    const std::size_t pw = pool_output_extent(cw, st.pool_window, st.pool_stride);
    if (ph == 0 || pw == 0) {
      throw ConfigError(fmt::format("conv stage {}: pooling window {} does not fit the {}x{} feature map", i + 1,
                                    st.pool_window, ch, cw));
    }
    out.push_back({ch, cw, ph, pw});
    h = ph;
    w = pw;
  }
  return out;
}

void validate_spec(const ModelSpec& spec) {
  if (spec.input_height == 0 || spec.input_width == 0) throw ConfigError("input size must be non-zero");
  if (spec.input_channels != 3) throw ConfigError("input must have 3 channels (RGB)");
  if (spec.conv_stages.empty()) throw ConfigError("at least one conv stage is required");
  if (spec.fc_sizes.empty()) throw ConfigError("at least one fully connected layer is required");
  if (spec.fc_sizes.back() != 2) {
    throw ConfigError(fmt::format("last fully connected size must be 2 (binary head), got {}", spec.fc_sizes.back()));
  }
  for (std::size_t i = 0; i < spec.fc_sizes.size(); ++i) {
    if (spec.fc_sizes[i] == 0) throw ConfigError(fmt::format("fully connected layer {} has size 0", i));
  }
  stage_geometry(spec);
}

bool has_reference_layout(const ModelSpec& spec) {
  return spec.conv_stages.size() == 5 && spec.fc_sizes.size() == 3 && spec.fc_sizes.back() == 2;
}

std::size_t feature_size(const ModelSpec& spec) {
  const auto geo = stage_geometry(spec);
  return static_cast<std::size_t>(spec.conv_stages.back().out_channels) * geo.back().out_h * geo.back().out_w;
}

std::size_t parameter_count(const ModelSpec& spec) {
  validate_spec(spec);
  std::size_t total = 0;
  std::size_t in_c = spec.input_channels;
  for (const ConvStage& st : spec.conv_stages) {
    total += static_cast<std::size_t>(st.out_channels) * in_c * st.kernel * st.kernel + st.out_channels;
    in_c = st.out_channels;
  }
  std::size_t in = feature_size(spec);
  for (std::uint32_t m : spec.fc_sizes) {
    total += in * m + m;
    in = m;
  }
  return total;
}

std::size_t serialized_size(const ModelSpec& spec) {
  const std::size_t header = 8;  // magic + version
  const std::size_t spec_block =
      4 * (4 + 6 * spec.conv_stages.size() + 1 + spec.fc_sizes.size()) + 3 * sizeof(float);
  return header + spec_block + sizeof(float) * parameter_count(spec);
}

Model::Model(ModelSpec spec, std::vector<LayerParams> params, std::array<float, 3> channel_means)
    : spec_(std::move(spec)), params_(std::move(params)), means_(channel_means) {
  validate_spec(spec_);
  if (params_.size() != spec_.conv_stages.size() + spec_.fc_sizes.size()) {
    throw ConfigError(fmt::format("model has {} parameter blocks, spec needs {}", params_.size(),
                                  spec_.conv_stages.size() + spec_.fc_sizes.size()));
  }
  std::size_t in_c = spec_.input_channels;
  for (std::size_t i = 0; i < spec_.conv_stages.size(); ++i) {
    const ConvStage& st = spec_.conv_stages[i];
    const Shape ws{st.out_channels, in_c, st.kernel, st.kernel};
    if (params_[i].weights.shape() != ws || params_[i].bias.shape() != Shape{st.out_channels}) {
      throw ConfigError(fmt::format("conv layer {} parameters have shape {} but spec implies {}", i,
                                    shape_to_string(params_[i].weights.shape()), shape_to_string(ws)));
    }
    in_c = st.out_channels;
  }
  std::size_t in = feature_size(spec_);
  for (std::size_t j = 0; j < spec_.fc_sizes.size(); ++j) {
    const auto& p = params_[spec_.conv_stages.size() + j];
    const Shape ws{in, spec_.fc_sizes[j]};
    if (p.weights.shape() != ws || p.bias.shape() != Shape{spec_.fc_sizes[j]}) {
      throw ConfigError(fmt::format("fc layer {} parameters have shape {} but spec implies {}", j,
                                    shape_to_string(p.weights.shape()), shape_to_string(ws)));
    }
    in = spec_.fc_sizes[j];
  }
}

InputFormat Model::input_format() const { return {spec_.input_height, spec_.input_width, means_}; }

Tensor Model::features(const Tensor& input) const {
  const Shape expected_tail{spec_.input_channels, spec_.input_height, spec_.input_width};
  if (input.rank() != 4 || Shape(input.shape().begin() + 1, input.shape().end()) != expected_tail) {
    throw DimensionError(fmt::format("model expects input [N,{},{},{}], got {}", spec_.input_channels,
                                     spec_.input_height, spec_.input_width, shape_to_string(input.shape())));
  }
  Tensor x = input;
  for (std::size_t i = 0; i < spec_.conv_stages.size(); ++i) {
    const ConvStage& st = spec_.conv_stages[i];
    x = relu(conv2d(x, params_[i], {st.stride, st.pad}));
    x = maxpool2d(x, st.pool_window, st.pool_stride).output;
  }
  const std::size_t n = x.dim(0);
  const std::size_t f = x.size() / n;
  return std::move(x).reshaped({n, f});
}

Tensor Model::head_logits(const Tensor& features) const {
  Tensor x = features;
  const std::size_t first = spec_.conv_stages.size();
  for (std::size_t j = 0; j < spec_.fc_sizes.size(); ++j) {
    x = linear(x, params_[first + j]);
    if (j + 1 < spec_.fc_sizes.size()) x = relu(x);
  }
  return x;
}

Tensor Model::logits(const Tensor& input) const { return head_logits(features(input)); }

void Model::set_conv_frozen(bool frozen) {
  for (std::size_t i = 0; i < spec_.conv_stages.size(); ++i) params_[i].frozen = frozen;
}

namespace {

// Uniform in [-1, 1) from the top 53 bits of a 64-bit draw; identical on every platform.
float uniform_pm1(std::mt19937_64& rng) {
  const double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  return static_cast<float>(2.0 * u - 1.0);
}

Tensor uniform_tensor(Shape shape, std::size_t fan_in, std::mt19937_64& rng) {
  Tensor t(std::move(shape));
  const float bound = static_cast<float>(std::sqrt(6.0 / static_cast<double>(fan_in)));
  for (auto& v : t.data()) v = bound * uniform_pm1(rng);
  return t;
}

}  // namespace

Model build(const ModelSpec& spec) {
  validate_spec(spec);
  if (!has_reference_layout(spec)) {
    spdlog::warn("model spec has {} conv stages and {} fc layers; reference layout is 5 and 3",
                 spec.conv_stages.size(), spec.fc_sizes.size());
  }
  std::mt19937_64 rng(spec.seed);
  std::vector<LayerParams> params;
  std::size_t in_c = spec.input_channels;
  for (const ConvStage& st : spec.conv_stages) {
    const std::size_t fan_in = in_c * st.kernel * st.kernel;
    params.emplace_back(uniform_tensor({st.out_channels, in_c, st.kernel, st.kernel}, fan_in, rng),
                        Tensor({st.out_channels}));
    in_c = st.out_channels;
  }
  std::size_t in = feature_size(spec);
  for (std::size_t j = 0; j < spec.fc_sizes.size(); ++j) {
    const std::size_t m = spec.fc_sizes[j];
    if (j + 1 == spec.fc_sizes.size()) {
      params.emplace_back(Tensor({in, m}), Tensor({m}));
    } else {
      params.emplace_back(uniform_tensor({in, m}, in, rng), Tensor({m}));
    }
    in = m;
  }
  return Model(spec, std::move(params), {0.5f, 0.5f, 0.5f});
}

Model allocate(const ModelSpec& spec) {
  validate_spec(spec);
  std::vector<LayerParams> params;
  std::size_t in_c = spec.input_channels;
  for (const ConvStage& st : spec.conv_stages) {
    params.emplace_back(Tensor({st.out_channels, in_c, st.kernel, st.kernel}), Tensor({st.out_channels}));
    in_c = st.out_channels;
  }
  std::size_t in = feature_size(spec);
  for (std::uint32_t m : spec.fc_sizes) {
    params.emplace_back(Tensor({in, m}), Tensor({m}));
    in = m;
  }
  return Model(spec, std::move(params), {0.5f, 0.5f, 0.5f});
}

void preprocess_into(const Image& image, const InputFormat& format, Tensor& batch, std::size_t index) {
  if (image.empty()) throw ValidationError("cannot preprocess an image with a zero dimension");
  const Shape expected{3, format.height, format.width};
  if (batch.rank() != 4 || Shape(batch.shape().begin() + 1, batch.shape().end()) != expected ||
      index >= batch.dim(0)) {
    throw DimensionError(fmt::format("batch {} cannot hold slot {} of a 3x{}x{} image",
                                     shape_to_string(batch.shape()), index, format.height, format.width));
  }
  const std::vector<float> unit = resize_bilinear_unit(image, format.height, format.width);
  const std::size_t plane = format.height * format.width;
  float* dst = batch.raw() + index * 3 * plane;
  for (std::size_t c = 0; c < 3; ++c) {
    const float mean = format.channel_means[c];
    for (std::size_t i = 0; i < plane; ++i) dst[c * plane + i] = unit[c * plane + i] - mean;
  }
}

Tensor preprocess(const Image& image, const InputFormat& format) {
  if (image.empty()) throw ValidationError("cannot preprocess an image with a zero dimension");
  Tensor t({1, 3, format.height, format.width});
  preprocess_into(image, format, t, 0);
  return t;
}

double occupied_probability_from_logits(float vacant_logit, float occupied_logit) {
  // Two-class softmax reduces to a logistic of the logit difference.
  const double d = static_cast<double>(occupied_logit) - static_cast<double>(vacant_logit);
  if (d >= 0) return 1.0 / (1.0 + std::exp(-d));
  const double e = std::exp(d);
  return e / (1.0 + e);
}

std::vector<double> occupied_probabilities(const Model& model, const Tensor& batch) {
  const Tensor z = model.logits(batch);
  std::vector<double> out(z.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = occupied_probability_from_logits(z[2 * i], z[2 * i + 1]);
  return out;
}

Prediction predict(const Model& model, const Tensor& input) {
  if (input.rank() != 4 || input.dim(0) != 1) {
    throw DimensionError(fmt::format("predict expects a single [1,3,H,W] input, got {}",
                                     shape_to_string(input.shape())));
  }
  const double p = occupied_probabilities(model, input).front();
  return {p, p >= 0.5 ? Occupancy::kOccupied : Occupancy::kVacant};
}

Prediction predict_image(const Model& model, const Image& image) {
  return predict(model, preprocess(image, model.input_format()));
}

}  // namespace pv
