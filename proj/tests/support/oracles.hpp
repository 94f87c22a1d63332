#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <vector>

#include "parkvision/model.hpp"
#include "parkvision/tensor.hpp"

namespace pv::testing {

// |a - b| relative to the larger magnitude, with a floor so that two
// values that are both ~0 compare as equal.
inline double rel_error(double analytic, double numeric, double floor = 1e-6) {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), floor});
  return std::abs(analytic - numeric) / denom;
}

// Central finite difference of `loss` with respect to every element of `x`.
// `loss` must read x through the reference it captures.
std::vector<double> numeric_gradient(TensorD& x, const std::function<double()>& loss, double eps = 1e-3);

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Compares analytic against central differences, skipping indices where
// `skip` returns true.
GradCheck compare_gradients(std::span<const double> analytic, std::span<const double> numeric,
                            const std::function<bool(std::size_t)>& skip = {});

TensorD random_tensor(Shape shape, std::mt19937_64& rng, double lo = -1.0, double hi = 1.0);

// Values are a random permutation of a grid spaced `gap` apart, so every pair
// differs by at least `gap` (keeps max-pool argmax stable under perturbation).
TensorD distinct_tensor(Shape shape, std::mt19937_64& rng, double gap = 0.05);

// P(s_pos > s_neg) + 0.5 P(s_pos == s_neg) by enumerating every pair.
double pairwise_auc(std::span<const double> scores, std::span<const int> labels);

// Parameter count and file size recomputed from first principles: each conv
// stage K*C*k*k + K, each fc layer D*M + M, 8-byte header, spec block of
// u32 fields plus three f32 channel means.
std::size_t oracle_parameter_count(const ModelSpec& spec);
std::size_t oracle_file_size(const ModelSpec& spec);

}  // namespace pv::testing
