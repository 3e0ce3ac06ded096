#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inpaint/nn/adam.hpp"
#include "inpaint/nn/module.hpp"
#include "inpaint/nn/tensor.hpp"
#include "inpaint/rng.hpp"

namespace inpaint::diffusion {

using nn::Tensor;

struct NoiseSchedule {
  int T = 0;
  std::vector<double> beta;
  std::vector<double> alpha;
  std::vector<double> alpha_bar;
};

enum class ScheduleKind { Linear };

/// Linear betas from beta_start to beta_end over T steps. Throws BadRange.
NoiseSchedule make_schedule(int T, double beta_start, double beta_end,
                            ScheduleKind kind = ScheduleKind::Linear);
NoiseSchedule schedule_from_betas(std::vector<double> betas);

/// sqrt(alpha_bar[t]) x0 + sqrt(1 - alpha_bar[t]) eps, elementwise.
std::vector<double> q_sample(std::span<const double> x0, int t, std::span<const double> eps,
                             const NoiseSchedule &schedule);

/// Masked image and mask, both [N, 1, D, H, W].
struct Condition {
  Tensor masked;
  Tensor mask;
};

/// Anything that predicts the noise in x_t. Stubs implement this in tests.
class NoisePredictor {
public:
  virtual ~NoisePredictor() = default;
  /// x_t: [N, 1, D, H, W]; t: one step index per batch element.
  virtual Tensor predict(const Tensor &x_t, const std::vector<int> &t,
                         const Condition &condition) const = 0;
};

struct DenoiserConfig {
  /// Channel width per U-Net level; depth = widths.size() - 1.
  std::vector<int> widths{16, 32};
  int time_dim = 32;
  int in_channels = 3; ///< x_t, masked image, mask

  void validate() const;
  int depth() const { return static_cast<int>(widths.size()) - 1; }
};

/// Sinusoidal embedding of integer steps, [t.size(), dim].
Tensor timestep_embedding(const std::vector<int> &t, int dim);

/// Small 3D U-Net over channel-concatenated (x_t, masked, mask). The time
/// embedding is added after the first conv of every level.
class Denoiser3d : public nn::Module, public NoisePredictor {
public:
  Denoiser3d(const DenoiserConfig &config, std::uint64_t seed);
  Tensor predict(const Tensor &x_t, const std::vector<int> &t,
                 const Condition &condition) const override;
  const DenoiserConfig &config() const { return config_; }

private:
  struct Block {
    Tensor w1, b1, w2, b2, tw, tb;
  };
  struct Up {
    Tensor w, b;
  };
  DenoiserConfig config_;
  Tensor time_w_, time_b_;
  std::vector<Block> enc_;
  std::vector<Up> down_;
  std::vector<Up> up_;
  std::vector<Block> dec_;
  Tensor head_w_, head_b_;
};

/// Draws t ~ U{0..T-1} per batch element, then eps ~ N(0, I); returns the
/// mean squared error between predicted and true noise. Throws NonFiniteLoss.
Tensor denoise_loss(const NoisePredictor &model, const Tensor &x0, const Condition &condition,
                    const NoiseSchedule &schedule, Rng &rng);

/// One ancestral step x_t -> x_{t-1}; no noise is added at t = 0.
Tensor p_sample_step(const NoisePredictor &model, const Tensor &x_t, int t,
                     const Condition &condition, const NoiseSchedule &schedule, Rng &rng);

/// Full reverse chain from standard normal noise shaped like condition.masked.
Tensor sample(const NoisePredictor &model, const Condition &condition,
              const NoiseSchedule &schedule, Rng &rng);

/// One optimizer step on denoise_loss; returns the loss value.
double train_step(Denoiser3d &model, nn::AdamState &state, const Tensor &x0,
                  const Condition &condition, const NoiseSchedule &schedule, Rng &rng);

} // namespace inpaint::diffusion
