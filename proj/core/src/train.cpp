#include "parkvision/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <optional>
#include <random>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "parkvision/errors.hpp"

namespace pv {

void validate(const Hyperparams& hp) {
  if (!(hp.lr > 0) || !(hp.lr_decay_factor > 0) || !(hp.weight_decay >= 0)) {
    throw ValidationError("learning rate and decay factor must be positive, weight decay non-negative");
  }
  if (hp.lr_decay_every == 0) throw ValidationError("lr_decay_every must be >= 1");
  if (hp.batch_size == 0) throw ValidationError("batch_size must be >= 1");
  if (hp.iterations == 0) throw ValidationError("iterations must be >= 1");
}

double learning_rate_at(const Hyperparams& hp, std::size_t it) {
  return hp.lr * std::pow(hp.lr_decay_factor, static_cast<double>(it / hp.lr_decay_every));
}

namespace {

struct HeadCache {
  std::vector<Tensor> inputs;  // input of each fc layer
  std::vector<Tensor> pre;     // output of each fc layer before ReLU
};

Tensor head_forward(const Model& model, const Tensor& features, HeadCache& cache) {
  const std::size_t first = model.conv_layer_count();
  const std::size_t layers = model.spec().fc_sizes.size();
  cache.inputs.clear();
  cache.pre.clear();
  Tensor x = features;
  for (std::size_t j = 0; j < layers; ++j) {
    cache.inputs.push_back(x);
    x = linear(x, model.params()[first + j]);
    cache.pre.push_back(x);
    if (j + 1 < layers) x = relu(x);
  }
  return x;
}

Tensor head_backward(Model& model, const HeadCache& cache, Tensor grad) {
  const std::size_t first = model.conv_layer_count();
  const std::size_t layers = model.spec().fc_sizes.size();
  for (std::size_t j = layers; j-- > 0;) {
    if (j + 1 < layers) grad = relu_backward(cache.pre[j], grad);
    grad = linear_backward(cache.inputs[j], model.params()[first + j], grad);
  }
  return grad;
}

void apply_updates(Model& model, double lr, double weight_decay) {
  for (auto& p : model.params()) sgd_update(p, lr, weight_decay);
}

double head_step(Model& model, const Tensor& features, std::span<const int> labels, double lr, double wd) {
  HeadCache cache;
  const Tensor logits = head_forward(model, features, cache);
  auto sce = softmax_cross_entropy(logits, labels);
  if (!std::isfinite(sce.loss)) return sce.loss;
  head_backward(model, cache, std::move(sce.grad_logits));
  apply_updates(model, lr, wd);
  return sce.loss;
}

}  // namespace

double train_step(Model& model, const Tensor& inputs, std::span<const int> labels, double lr, double weight_decay) {
  const ModelSpec& spec = model.spec();
  const std::size_t stages = spec.conv_stages.size();

  std::vector<Tensor> conv_in, conv_out;
  std::vector<PoolIndex> pools;
  Tensor x = inputs;
  for (std::size_t i = 0; i < stages; ++i) {
    const ConvStage& st = spec.conv_stages[i];
    conv_in.push_back(x);
    conv_out.push_back(conv2d(x, model.params()[i], {st.stride, st.pad}));
    auto pooled = maxpool2d(relu(conv_out.back()), st.pool_window, st.pool_stride);
    pools.push_back(std::move(pooled.index));
    x = std::move(pooled.output);
  }
  const Shape pooled_shape = x.shape();
  const std::size_t n = pooled_shape[0];
  const Tensor features = std::move(x).reshaped({n, shape_numel(pooled_shape) / n});

  HeadCache cache;
  const Tensor logits = head_forward(model, features, cache);
  auto sce = softmax_cross_entropy(logits, labels);
  if (!std::isfinite(sce.loss)) return sce.loss;
  Tensor grad = head_backward(model, cache, std::move(sce.grad_logits));

  // Only back-propagate as deep as the lowest trainable conv stage.
  std::size_t lowest = stages;
  for (std::size_t i = 0; i < stages; ++i) {
    if (!model.params()[i].frozen) {
      lowest = i;
      break;
    }
  }
  if (lowest < stages) {
    grad = std::move(grad).reshaped(pooled_shape);
    for (std::size_t i = stages; i-- > lowest;) {
      const ConvStage& st = spec.conv_stages[i];
      grad = maxpool2d_backward(pools[i], grad, conv_out[i].shape());
      grad = relu_backward(conv_out[i], grad);
      grad = conv2d_backward(conv_in[i], model.params()[i], grad, {st.stride, st.pad});
    }
  }
  apply_updates(model, lr, weight_decay);
  return sce.loss;
}

namespace {

// Lazily computed conv-stack features for each training record.
class FeatureCache {
 public:
  FeatureCache(const Model& model, const DatasetIndex& index)
      : model_(model), index_(index), dim_(feature_size(model.spec())), rows_(index.size()) {}

  std::size_t dim() const noexcept { return dim_; }

  Tensor gather(std::span<const std::size_t> ids) {
    std::vector<std::size_t> missing;
    for (std::size_t id : ids) {
      if (!rows_[id] && std::find(missing.begin(), missing.end(), id) == missing.end()) missing.push_back(id);
    }
    constexpr std::size_t kChunk = 64;
    for (std::size_t start = 0; start < missing.size(); start += kChunk) {
      const std::size_t end = std::min(missing.size(), start + kChunk);
      const std::span<const std::size_t> chunk(missing.data() + start, end - start);
      const Batch batch = load_batch(index_, chunk, model_.input_format());
      const Tensor f = model_.features(batch.inputs);
      for (std::size_t r = 0; r < chunk.size(); ++r) {
        rows_[chunk[r]].emplace(f.raw() + r * dim_, f.raw() + (r + 1) * dim_);
      }
    }
    Tensor out({ids.size(), dim_});
    for (std::size_t b = 0; b < ids.size(); ++b) std::copy(rows_[ids[b]]->begin(), rows_[ids[b]]->end(), out.raw() + b * dim_);
    return out;
  }

 private:
  const Model& model_;
  const DatasetIndex& index_;
  std::size_t dim_;
  std::vector<std::optional<std::vector<float>>> rows_;
};

std::vector<int> labels_of(const DatasetIndex& index, std::span<const std::size_t> ids) {
  std::vector<int> labels(ids.size());
  for (std::size_t b = 0; b < ids.size(); ++b) labels[b] = index[ids[b]].label == Occupancy::kOccupied ? 1 : 0;
  return labels;
}

std::size_t count_correct(const Tensor& logits, std::span<const int> labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const double p = occupied_probability_from_logits(logits[2 * i], logits[2 * i + 1]);
    const int predicted = p >= 0.5 ? 1 : 0;
    if (predicted == labels[i]) ++correct;
  }
  return correct;
}

}  // namespace

TrainReport fine_tune(Model& model, const DatasetIndex& train, const Hyperparams& hp, const TrainProgress& progress) {
  validate(hp);
  if (train.empty()) throw ValidationError("training index is empty");
  if (train.label_count(Occupancy::kVacant) == 0 || train.label_count(Occupancy::kOccupied) == 0) {
    throw ValidationError("training index must contain both vacant and occupied samples");
  }
  const auto started = std::chrono::steady_clock::now();

  model.set_conv_frozen(hp.freeze_conv);
  for (std::size_t j = model.conv_layer_count(); j < model.params().size(); ++j) model.params()[j].frozen = false;

  std::mt19937_64 rng(hp.seed);
  std::optional<FeatureCache> cache;
  if (hp.freeze_conv) cache.emplace(model, train);

  TrainReport report;
  std::vector<std::size_t> ids(hp.batch_size);
  double window_loss = 0.0;
  for (std::size_t it = 0; it < hp.iterations; ++it) {
    for (auto& id : ids) id = static_cast<std::size_t>(rng() % train.size());
    const std::vector<int> labels = labels_of(train, ids);
    const double lr = learning_rate_at(hp, it);
    double loss = 0.0;
    try {
      if (cache) {
        loss = head_step(model, cache->gather(ids), labels, lr, hp.weight_decay);
      } else {
        const Batch batch = load_batch(train, ids, model.input_format());
        loss = train_step(model, batch.inputs, labels, lr, hp.weight_decay);
      }
    } catch (const TrainingError& e) {
      throw TrainingError(fmt::format("training diverged at iteration {}: {}", it + 1, e.what()), it + 1);
    }
    if (!std::isfinite(loss)) {
      throw TrainingError(fmt::format("training diverged at iteration {}: loss is {}", it + 1, loss), it + 1);
    }
    window_loss += loss;
    if ((it + 1) % kLossLogStride == 0) {
      report.loss_curve.push_back({it + 1, window_loss / static_cast<double>(kLossLogStride)});
      window_loss = 0.0;
    }
    if (progress) progress(it + 1, loss);
  }

  // Accuracy over the full training set after the last step.
  std::size_t correct = 0;
  constexpr std::size_t kEvalChunk = 64;
  std::vector<std::size_t> chunk;
  for (std::size_t start = 0; start < train.size(); start += kEvalChunk) {
    chunk.clear();
    for (std::size_t i = start; i < std::min(train.size(), start + kEvalChunk); ++i) chunk.push_back(i);
    const std::vector<int> labels = labels_of(train, chunk);
    Tensor logits;
    if (cache) {
      logits = model.head_logits(cache->gather(chunk));
    } else {
      logits = model.logits(load_batch(train, chunk, model.input_format()).inputs);
    }
    correct += count_correct(logits, labels);
  }
  report.final_train_accuracy = static_cast<double>(correct) / static_cast<double>(train.size());
  report.wall_time_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  spdlog::info("fine-tune finished: {} iterations, train accuracy {:.4f}, {:.1f} s", hp.iterations,
               report.final_train_accuracy, report.wall_time_s);
  return report;
}

}  // namespace pv
