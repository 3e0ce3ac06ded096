#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "inpaint/nn/ops.hpp"
#include "inpaint/nn/tensor.hpp"
#include "inpaint/rng.hpp"

namespace inpaint::testing {

struct GradcheckResult {
  double rel_error = 0.0; ///< ||a - n|| / (||a|| + ||n||), 0 when both vanish
  double max_abs = 0.0;
  std::size_t checked = 0;
};

/// Central-difference check of d(sum(w * f(inputs)))/d(input) for every
/// input, with fixed random weights w so every output element matters.
/// `max_per_input` caps the number of probed coordinates (0 = all).
inline GradcheckResult gradcheck(const std::function<nn::Tensor(const std::vector<nn::Tensor> &)> &f,
                                 std::vector<nn::Tensor> inputs, double h = 1e-5,
                                 std::size_t max_per_input = 0, std::uint64_t seed = 99) {
  const nn::Tensor probe_out = [&] {
    nn::NoGradGuard g;
    return f(inputs);
  }();
  Rng rng(seed, 7);
  std::vector<double> w(static_cast<std::size_t>(probe_out.numel()));
  for (auto &v : w) v = rng.normal();
  const nn::Tensor weights = nn::Tensor::from(probe_out.shape(), w);
  auto objective = [&](const std::vector<nn::Tensor> &in) { return nn::sum(nn::mul(f(in), weights)); };

  for (auto &t : inputs) {
    t.set_requires_grad(true);
    t.zero_grad();
  }
  nn::backward(objective(inputs));

  double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
  GradcheckResult res;
  for (auto &t : inputs) {
    const auto analytic = std::vector<double>(t.grad().begin(), t.grad().end());
    const std::size_t n = static_cast<std::size_t>(t.numel());
    const std::size_t stride = (max_per_input == 0 || n <= max_per_input) ? 1 : n / max_per_input;
    for (std::size_t i = 0; i < n; i += stride) {
      auto v = t.values();
      const double orig = v[i];
      double plus, minus;
      {
        nn::NoGradGuard g;
        v[i] = orig + h;
        plus = objective(inputs).item();
        v[i] = orig - h;
        minus = objective(inputs).item();
        v[i] = orig;
      }
      const double numeric = (plus - minus) / (2.0 * h);
      const double d = analytic[i] - numeric;
      diff2 += d * d;
      a2 += analytic[i] * analytic[i];
      n2 += numeric * numeric;
      res.max_abs = std::max(res.max_abs, std::abs(d));
      ++res.checked;
    }
  }
  const double denom = std::sqrt(a2) + std::sqrt(n2);
  res.rel_error = denom == 0.0 ? 0.0 : std::sqrt(diff2) / denom;
  return res;
}

inline nn::Tensor random_tensor(nn::Shape shape, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed, 3);
  nn::Tensor t = nn::Tensor::zeros(std::move(shape));
  for (auto &v : t.values()) v = scale * rng.normal();
  return t;
}

} // namespace inpaint::testing
