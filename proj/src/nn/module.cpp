#include "inpaint/nn/module.hpp"

#include <cmath>

#include "inpaint/error.hpp"

namespace inpaint::nn {

void round_to_float(std::span<double> values) {
  for (auto &v : values) {
    v = static_cast<double>(static_cast<float>(v));
  }
}

Tensor ParamFactory::normal(Shape shape, double std) {
  Rng rng(seed_, counter_++);
  Tensor t = Tensor::zeros(std::move(shape), true);
  for (auto &v : t.values()) {
    v = std * rng.normal();
  }
  round_to_float(t.values());
  return t;
}

Tensor ParamFactory::he_normal(Shape shape, std::int64_t fan_in) {
  return normal(std::move(shape), std::sqrt(2.0 / static_cast<double>(fan_in)));
}

Tensor ParamFactory::constant(Shape shape, double value) {
  ++counter_;
  Tensor t = Tensor::full(std::move(shape), value, true);
  round_to_float(t.values());
  return t;
}

std::vector<Tensor> Module::parameter_tensors() const {
  std::vector<Tensor> out;
  out.reserve(params_.size());
  for (const auto &p : params_) out.push_back(p.tensor);
  return out;
}

std::int64_t Module::parameter_count() const {
  std::int64_t n = 0;
  for (const auto &p : params_) n += p.tensor.numel();
  return n;
}

void Module::zero_grad() {
  for (auto &p : params_) p.tensor.zero_grad();
}

void Module::set_trainable(bool trainable) {
  for (auto &p : params_) p.tensor.set_requires_grad(trainable);
}

Tensor Module::add_parameter(const std::string &name, Tensor tensor) {
  for (const auto &p : params_) {
    if (p.name == name) {
      fail(ErrorCode::ConfigError, "parameter '" + name + "' registered twice");
    }
  }
  params_.push_back({name, tensor});
  return tensor;
}

void Module::add_child(const std::string &prefix, const Module &child) {
  for (const auto &p : child.parameters()) {
    add_parameter(prefix + "." + p.name, p.tensor);
  }
}

} // namespace inpaint::nn
