#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "inpaint/nn/tensor.hpp"

namespace inpaint::nn {

struct AdamOptions {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.999;
  double eps = 1e-8;
  /// Round parameters and moments to float32 after each step so a float32
  /// checkpoint captures the exact training state.
  bool float32_state = true;
};

struct AdamState {
  AdamOptions options;
  std::int64_t step = 0;
  std::vector<std::vector<double>> m; ///< first moments, one per parameter
  std::vector<std::vector<double>> v; ///< second moments
};

AdamState make_adam_state(std::span<const Tensor> params, const AdamOptions &options);

/// One bias-corrected Adam update; parameters without a gradient buffer are
/// treated as having zero gradient.
void adam_step(std::span<Tensor> params, AdamState &state);

} // namespace inpaint::nn
