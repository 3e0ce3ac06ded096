#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "inpaint/nn/tensor.hpp"
#include "inpaint/rng.hpp"

namespace inpaint::nn {

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

/// Rounds every value to the nearest float32 (persisted-state precision).
void round_to_float(std::span<double> values);

/// Deterministic parameter initializer. Each created tensor draws from its
/// own Philox stream (seed, creation index), so initial weights depend only
/// on the seed and construction order.
class ParamFactory {
public:
  explicit ParamFactory(std::uint64_t seed) : seed_(seed) {}

  /// Normal with std = sqrt(2 / fan_in).
  Tensor he_normal(Shape shape, std::int64_t fan_in);
  Tensor normal(Shape shape, double std);
  Tensor constant(Shape shape, double value);

private:
  std::uint64_t seed_;
  std::uint64_t counter_ = 0;
};

/// Owner of a flat, ordered, uniquely named parameter list.
class Module {
public:
  virtual ~Module() = default;

  const std::vector<NamedTensor> &parameters() const { return params_; }
  std::vector<Tensor> parameter_tensors() const;
  std::int64_t parameter_count() const;
  void zero_grad();
  /// Frozen modules still pass gradients through to their inputs.
  void set_trainable(bool trainable);

protected:
  Tensor add_parameter(const std::string &name, Tensor tensor);
  void add_child(const std::string &prefix, const Module &child);

private:
  std::vector<NamedTensor> params_;
};

} // namespace inpaint::nn
