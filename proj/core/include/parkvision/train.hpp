#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "parkvision/dataset.hpp"
#include "parkvision/model.hpp"

namespace pv {

// Defaults reproduce the reference fine-tuning recipe: SGD at lr 0.01 with
// step decay, weight decay 5e-4, 3000 iterations of 128-sample batches and
// the convolutional stack frozen.
struct Hyperparams {
  double lr = 0.01;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_every = 1000;
  double weight_decay = 0.0005;
  std::size_t batch_size = 128;
  std::size_t iterations = 3000;
  bool freeze_conv = true;
  std::uint64_t seed = 0;
};

void validate(const Hyperparams& hp);

struct LossPoint {
  std::size_t iteration = 0;
  double mean_loss = 0.0;
  friend bool operator==(const LossPoint&, const LossPoint&) = default;
};

struct TrainReport {
  std::vector<LossPoint> loss_curve;  // one point per kLossLogStride iterations
  double final_train_accuracy = 0.0;
  double wall_time_s = 0.0;
};

inline constexpr std::size_t kLossLogStride = 10;

// Learning rate in effect at 0-based iteration `it`.
double learning_rate_at(const Hyperparams& hp, std::size_t it);

// Called after each iteration with (iteration, batch loss); used for progress output.
using TrainProgress = std::function<void(std::size_t, double)>;

// Mini-batch SGD over `train`. Batches are drawn uniformly with replacement
// from a stream seeded by hp.seed. With freeze_conv the conv stack is fixed,
// so its features are computed once per record and reused.
TrainReport fine_tune(Model& model, const DatasetIndex& train, const Hyperparams& hp,
                      const TrainProgress& progress = {});

// One SGD step on an in-memory batch; returns the batch loss. Exposed for tests.
double train_step(Model& model, const Tensor& inputs, std::span<const int> labels, double lr, double weight_decay);

}  // namespace pv
