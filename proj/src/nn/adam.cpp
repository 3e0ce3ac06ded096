#include "inpaint/nn/adam.hpp"

#include <cmath>
#include <utility>

#include "inpaint/error.hpp"
#include "inpaint/nn/module.hpp"

namespace inpaint::nn {

AdamState make_adam_state(std::span<const Tensor> params, const AdamOptions &options) {
  AdamState state;
  state.options = options;
  for (const auto &p : params) {
    state.m.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
    state.v.emplace_back(static_cast<std::size_t>(p.numel()), 0.0);
  }
  return state;
}

void adam_step(std::span<Tensor> params, AdamState &state) {
  if (params.size() != state.m.size()) {
    fail(ErrorCode::ShapeMismatch, "Adam state tracks " + std::to_string(state.m.size()) +
                                       " parameters, got " + std::to_string(params.size()));
  }
  const AdamOptions &o = state.options;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor &p = params[i];
    auto &m = state.m[i];
    auto &v = state.v[i];
    if (static_cast<std::int64_t>(m.size()) != p.numel()) {
      fail(ErrorCode::ShapeMismatch, "Adam moment size differs from parameter");
    }
    auto values = p.values();
    const bool has_grad = p.has_grad();
    const std::span<const double> g = has_grad ? std::as_const(p).grad() : std::span<const double>{};
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double gj = has_grad ? g[j] : 0.0;
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * gj;
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * gj * gj;
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      if (o.lr != 0.0) {
        values[j] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
      }
    }
    if (o.float32_state) {
      round_to_float(values);
      round_to_float(m);
      round_to_float(v);
    }
  }
}

} // namespace inpaint::nn
