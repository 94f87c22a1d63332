#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "parkvision/image.hpp"
#include "parkvision/layers.hpp"
#include "parkvision/tensor.hpp"

namespace pv {

enum class Occupancy { kVacant = 0, kOccupied = 1 };

const char* to_string(Occupancy o) noexcept;

// One convolution stage: conv -> ReLU -> max-pool.
struct ConvStage {
  std::uint32_t out_channels = 0;
  std::uint32_t kernel = 3;
  std::uint32_t stride = 1;
  std::uint32_t pad = 1;
  std::uint32_t pool_window = 2;
  std::uint32_t pool_stride = 2;

  friend bool operator==(const ConvStage&, const ConvStage&) = default;
};

struct ModelSpec {
  std::uint32_t input_height = 64;
  std::uint32_t input_width = 64;
  std::uint32_t input_channels = 3;
  std::vector<ConvStage> conv_stages;
  std::vector<std::uint32_t> fc_sizes;  // last entry is the 2-way head
  std::uint64_t seed = 0;

  // 64x64 input, channels 8/16/32/32/64, kernels 5/3/3/3/3, 2x2 pools, fc 128/64/2.
  static ModelSpec desk();
  // 224x224 input with 11/5/3/3/3 kernels and 4096/4096/2 head.
  static ModelSpec full_scale();

  // Same layer layout; seed is not part of the topology.
  bool same_topology(const ModelSpec& other) const;
};

struct StageGeometry {
  std::size_t conv_h, conv_w;  // after convolution
  std::size_t out_h, out_w;    // after pooling
};

// Throws ConfigError naming the offending stage when the spec is unusable.
void validate_spec(const ModelSpec& spec);
// Five conv stages and a three-layer head with a binary output.
bool has_reference_layout(const ModelSpec& spec);

std::vector<StageGeometry> stage_geometry(const ModelSpec& spec);
std::size_t feature_size(const ModelSpec& spec);
std::size_t parameter_count(const ModelSpec& spec);
// Exact byte size of a saved model file for this spec.
std::size_t serialized_size(const ModelSpec& spec);

struct InputFormat {
  std::size_t height = 0;
  std::size_t width = 0;
  std::array<float, 3> channel_means{0.5f, 0.5f, 0.5f};
};

struct Prediction {
  double occupied_prob = 0.0;
  Occupancy label = Occupancy::kVacant;
};

class Model {
 public:
  Model(ModelSpec spec, std::vector<LayerParams> params, std::array<float, 3> channel_means);

  const ModelSpec& spec() const noexcept { return spec_; }
  std::vector<LayerParams>& params() noexcept { return params_; }
  const std::vector<LayerParams>& params() const noexcept { return params_; }
  std::size_t conv_layer_count() const noexcept { return spec_.conv_stages.size(); }

  const std::array<float, 3>& channel_means() const noexcept { return means_; }
  void set_channel_means(const std::array<float, 3>& means) { means_ = means; }
  InputFormat input_format() const;

  // Flattened conv-stack output [N, feature_size].
  Tensor features(const Tensor& input) const;
  // Fully connected head applied to features, giving logits [N,2].
  Tensor head_logits(const Tensor& features) const;
  Tensor logits(const Tensor& input) const;

  void set_conv_frozen(bool frozen);

 private:
  ModelSpec spec_;
  std::vector<LayerParams> params_;
  std::array<float, 3> means_;
};

// Fan-in scaled uniform init from spec.seed. The final layer starts at zero
// so an untrained model is exactly undecided (p = 0.5).
Model build(const ModelSpec& spec);
// Correctly shaped, all-zero parameters.
Model allocate(const ModelSpec& spec);

// Resize to the model input, scale to [0,1], subtract channel means -> [1,3,H,W].
Tensor preprocess(const Image& image, const InputFormat& format);
// Writes one preprocessed image into slot `index` of a [B,3,H,W] batch.
void preprocess_into(const Image& image, const InputFormat& format, Tensor& batch, std::size_t index);

Prediction predict(const Model& model, const Tensor& input);
Prediction predict_image(const Model& model, const Image& image);
// Occupied probability of every row of a [N,3,H,W] batch.
std::vector<double> occupied_probabilities(const Model& model, const Tensor& batch);
double occupied_probability_from_logits(float vacant_logit, float occupied_logit);

// Little-endian "PSVI" v1 container; see README for the layout.
std::vector<std::uint8_t> serialize(const Model& model);
Model deserialize(const std::vector<std::uint8_t>& bytes);
void save(const Model& model, const std::filesystem::path& path);
Model load(const std::filesystem::path& path);

}  // namespace pv
