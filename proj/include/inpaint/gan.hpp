#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "inpaint/nn/adam.hpp"
#include "inpaint/nn/module.hpp"
#include "inpaint/nn/tensor.hpp"

namespace inpaint::gan {

using nn::Tensor;

/// Weights of the pixel-wise, perceptual and adversarial terms.
struct LossWeights {
  double pix = 100.0;
  double per = 100.0;
  double adv = 1.0;

  void validate() const;
};

enum class AdversarialObjective { LeastSquares, Vanilla };
std::string to_string(AdversarialObjective objective);
AdversarialObjective adversarial_objective_from_string(const std::string &text);

enum class Bottleneck { ResidualBlocks, ArtBlocks };

struct GeneratorConfig {
  int in_channels = 2; ///< masked slice + mask
  int base_width = 16;
  int depth = 2; ///< stride-2 down/up levels
  Bottleneck bottleneck = Bottleneck::ResidualBlocks;
  int res_blocks = 2;
  int art_blocks = 2;
  int token_dim = 32;
  int heads = 4;
  int patch_size = 8; ///< bottleneck pixels per token side; maps are zero-padded up to a multiple
  int mlp_ratio = 2;

  void validate() const;
  int bottleneck_channels() const { return base_width << depth; }
};

struct PatchDiscriminatorConfig {
  int layers = 3; ///< stride-2 conv layers before the score head
  int base_width = 16;
  int in_channels = 2; ///< condition + candidate

  void validate() const;
  /// Receptive field of one score, in input pixels.
  int receptive_field() const;
};

struct PerceptualExtractorConfig {
  std::vector<int> widths{8, 8, 16, 16};
  std::vector<int> taps{1, 3}; ///< zero-based layer indices
  std::uint64_t seed = 1234;

  void validate() const;
};

/// conv-norm-relu-conv-norm with an identity skip.
class ResidualBlock : public nn::Module {
public:
  ResidualBlock(int channels, nn::ParamFactory &factory);
  Tensor forward(const Tensor &x) const;

private:
  Tensor w1_, b1_, g1_, s1_, w2_, b2_, g2_, s2_;
};

/// Aggregated residual transformer block: a transformer module over patch
/// tokens, then a convolutional module, with a residual skip around both:
///   out = x + conv_module(x + transformer(x)).
/// The transformer output projection is "unembed.*"; the convolutional
/// output layer is "conv2.*".
class ArtBlock : public nn::Module {
public:
  ArtBlock(int channels, const GeneratorConfig &config, nn::ParamFactory &factory);
  Tensor forward(const Tensor &x) const;
  Tensor transformer(const Tensor &x) const;
  Tensor conv_module(const Tensor &x) const;

private:
  int channels_;
  int token_dim_;
  int heads_;
  int patch_;
  Tensor embed_w_, embed_b_;
  Tensor wq_, wk_, wv_, wo_;
  Tensor mlp_w1_, mlp_b1_, mlp_w2_, mlp_b2_;
  Tensor unembed_w_, unembed_b_;
  Tensor conv1_w_, conv1_b_, norm_g_, norm_s_, conv2_w_, conv2_b_;
};

/// Fixed 2D sinusoidal position code, [rows*cols, dim] flattened row-major.
std::vector<double> position_code(std::int64_t rows, std::int64_t cols, int dim);

/// Encoder-bottleneck-decoder generator over 2D slices. Input channels are
/// (masked slice, mask); the output is one linear channel.
class Generator : public nn::Module {
public:
  Generator(const GeneratorConfig &config, std::uint64_t seed);
  /// masked, mask: [N, 1, H, W]; H and W divisible by 2^depth.
  Tensor forward(const Tensor &masked, const Tensor &mask) const;
  const GeneratorConfig &config() const { return config_; }
  const std::vector<ArtBlock> &art_blocks() const { return art_; }

private:
  GeneratorConfig config_;
  Tensor stem_w_, stem_b_, stem_g_, stem_s_;
  struct Level {
    Tensor w, b, g, s;
  };
  std::vector<Level> down_;
  std::vector<Level> up_;
  std::vector<ResidualBlock> res_;
  std::vector<ArtBlock> art_;
  Tensor head_w_, head_b_;
};

/// Conditional PatchGAN: one score per receptive patch.
class PatchDiscriminator : public nn::Module {
public:
  PatchDiscriminator(const PatchDiscriminatorConfig &config, std::uint64_t seed);
  Tensor forward(const Tensor &condition, const Tensor &candidate) const;
  const PatchDiscriminatorConfig &config() const { return config_; }

private:
  PatchDiscriminatorConfig config_;
  struct Layer {
    Tensor w, b, g, s;
  };
  std::vector<Layer> layers_;
  Tensor head_w_, head_b_;
};

/// Frozen fixed-seed conv+relu stack standing in for a pre-trained
/// perceptual network. Parameters never receive updates.
class PerceptualExtractor : public nn::Module {
public:
  explicit PerceptualExtractor(const PerceptualExtractorConfig &config);
  /// Activations at the tap layers, in tap order.
  std::vector<Tensor> features(const Tensor &image) const;
  const PerceptualExtractorConfig &config() const { return config_; }

private:
  PerceptualExtractorConfig config_;
  std::vector<Tensor> weights_;
  std::vector<Tensor> biases_;
};

/// Mean absolute difference of tap activations, averaged over taps.
Tensor perceptual_loss(const PerceptualExtractor &extractor, const Tensor &pred,
                       const Tensor &target);

/// Generator-side adversarial term on the discriminator's scores for pred.
Tensor generator_adversarial_loss(const Tensor &fake_scores, AdversarialObjective objective);
/// 0.5 * (real term + fake term).
Tensor discriminator_loss(const Tensor &real_scores, const Tensor &fake_scores,
                          AdversarialObjective objective);

struct GanLoss {
  Tensor total; ///< differentiable
  double total_value = 0.0;
  double pix = 0.0;
  double per = 0.0;
  double adv = 0.0;
};

/// pix*L1 + per*L_per + adv*L_adv.
GanLoss pgan_loss(const LossWeights &weights, const Tensor &pred, const Tensor &target,
                  const Tensor &disc_scores_on_pred, const PerceptualExtractor &extractor,
                  AdversarialObjective objective = AdversarialObjective::LeastSquares);

/// pix*L1 + adv*L_adv (no perceptual term).
GanLoss resvit_loss(const LossWeights &weights, const Tensor &pred, const Tensor &target,
                    const Tensor &disc_scores_on_pred,
                    AdversarialObjective objective = AdversarialObjective::LeastSquares);

struct SliceBatch {
  Tensor image;  ///< [N, 1, H, W] voided, normalized
  Tensor mask;   ///< [N, 1, H, W] in {0, 1}
  Tensor target; ///< [N, 1, H, W]
};

struct StepReport {
  double total = 0.0;
  double pix = 0.0;
  double per = 0.0;
  double adv = 0.0;
  double disc = 0.0;
};

struct GanModels {
  Generator &generator;
  PatchDiscriminator &discriminator;
  /// Set for the perceptual variant; null selects the L1 + adversarial loss.
  const PerceptualExtractor *extractor = nullptr;
};

/// One discriminator update (least-squares or vanilla objective on real vs
/// detached fake) followed by one generator update. Throws NonFiniteLoss.
StepReport gan_train_step(GanModels models, const SliceBatch &batch, const LossWeights &weights,
                          nn::AdamState &gen_state, nn::AdamState &disc_state,
                          AdversarialObjective objective = AdversarialObjective::LeastSquares);

} // namespace inpaint::gan
