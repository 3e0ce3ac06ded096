#include "inpaint/gan.hpp"

#include <cmath>

#include "inpaint/error.hpp"
#include "inpaint/nn/ops.hpp"

namespace inpaint::gan {

using nn::Shape;

namespace {

void require(bool ok, const std::string &what) {
  if (!ok) {
    fail(ErrorCode::ConfigError, what);
  }
}

void require_rank4(const Tensor &x, const char *what) {
  if (!x.defined() || x.rank() != 4) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + " must be [N, C, H, W]");
  }
}

// Zero-pads H and W at the high end to (h, w).
Tensor pad_high(const Tensor &x, std::int64_t h, std::int64_t w) {
  const std::int64_t n = x.dim(0), c = x.dim(1), h0 = x.dim(2), w0 = x.dim(3);
  if (h == h0 && w == w0) {
    return x;
  }
  std::vector<double> out(static_cast<std::size_t>(n * c * h * w), 0.0);
  const auto xv = x.values();
  for (std::int64_t p = 0; p < n * c; ++p) {
    for (std::int64_t i = 0; i < h0; ++i) {
      for (std::int64_t j = 0; j < w0; ++j) {
        out[static_cast<std::size_t>((p * h + i) * w + j)] =
            xv[static_cast<std::size_t>((p * h0 + i) * w0 + j)];
      }
    }
  }
  return nn::make_result({n, c, h, w}, std::move(out), {x}, [x, n, c, h, w, h0, w0](nn::Node &self) {
    auto &g = x.node()->ensure_grad();
    for (std::int64_t p = 0; p < n * c; ++p) {
      for (std::int64_t i = 0; i < h0; ++i) {
        for (std::int64_t j = 0; j < w0; ++j) {
          g[static_cast<std::size_t>((p * h0 + i) * w0 + j)] +=
              self.grad[static_cast<std::size_t>((p * h + i) * w + j)];
        }
      }
    }
  });
}

// Keeps the low (h, w) corner.
Tensor crop_low(const Tensor &x, std::int64_t h, std::int64_t w) {
  const std::int64_t n = x.dim(0), c = x.dim(1), h0 = x.dim(2), w0 = x.dim(3);
  if (h == h0 && w == w0) {
    return x;
  }
  std::vector<double> out(static_cast<std::size_t>(n * c * h * w));
  const auto xv = x.values();
  for (std::int64_t p = 0; p < n * c; ++p) {
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < w; ++j) {
        out[static_cast<std::size_t>((p * h + i) * w + j)] =
            xv[static_cast<std::size_t>((p * h0 + i) * w0 + j)];
      }
    }
  }
  return nn::make_result({n, c, h, w}, std::move(out), {x}, [x, n, c, h, w, h0, w0](nn::Node &self) {
    auto &g = x.node()->ensure_grad();
    for (std::int64_t p = 0; p < n * c; ++p) {
      for (std::int64_t i = 0; i < h; ++i) {
        for (std::int64_t j = 0; j < w; ++j) {
          g[static_cast<std::size_t>((p * h0 + i) * w0 + j)] +=
              self.grad[static_cast<std::size_t>((p * h + i) * w + j)];
        }
      }
    }
  });
}

Tensor conv_in_relu(const Tensor &x, const Tensor &w, const Tensor &b, const Tensor &g,
                    const Tensor &s, int stride, int pad) {
  return nn::relu(nn::instance_norm(nn::conv(x, w, b, stride, pad), g, s));
}

} // namespace

void LossWeights::validate() const {
  for (double v : {pix, per, adv}) {
    if (!std::isfinite(v) || v < 0.0) {
      fail(ErrorCode::ConfigError, "loss weights must be finite and non-negative");
    }
  }
}

std::string to_string(AdversarialObjective objective) {
  return objective == AdversarialObjective::LeastSquares ? "lsgan" : "bce";
}

AdversarialObjective adversarial_objective_from_string(const std::string &text) {
  if (text == "lsgan") return AdversarialObjective::LeastSquares;
  if (text == "bce") return AdversarialObjective::Vanilla;
  fail(ErrorCode::ConfigError, "unknown adversarial objective '" + text + "'");
}

void GeneratorConfig::validate() const {
  require(in_channels == 2, "generator takes 2 input channels");
  require(base_width >= 1, "generator base width must be >= 1");
  require(depth >= 1 && depth <= 6, "generator depth must be in [1, 6]");
  if (bottleneck == Bottleneck::ResidualBlocks) {
    require(res_blocks >= 0, "residual block count must be >= 0");
  } else {
    require(art_blocks >= 1, "art-block count must be >= 1");
    require(heads >= 1 && token_dim % heads == 0, "token dim must be divisible by heads");
    require(token_dim % 4 == 0, "token dim must be divisible by 4");
    require(patch_size >= 1, "patch size must be >= 1");
    require(mlp_ratio >= 1, "mlp ratio must be >= 1");
  }
}

void PatchDiscriminatorConfig::validate() const {
  require(layers >= 1 && layers <= 6, "discriminator layer count must be in [1, 6]");
  require(base_width >= 1, "discriminator base width must be >= 1");
  require(in_channels == 2, "discriminator takes 2 input channels");
}

int PatchDiscriminatorConfig::receptive_field() const {
  int r = 3;
  for (int i = 0; i < layers; ++i) {
    r = (r - 1) * 2 + 4;
  }
  return r;
}

void PerceptualExtractorConfig::validate() const {
  require(!widths.empty(), "extractor needs at least one layer");
  for (int w : widths) require(w >= 1, "extractor widths must be >= 1");
  require(!taps.empty(), "extractor needs at least one tap");
  for (int t : taps) {
    require(t >= 0 && t < static_cast<int>(widths.size()), "extractor tap out of range");
  }
}

ResidualBlock::ResidualBlock(int channels, nn::ParamFactory &f) {
  const std::int64_t c = channels;
  w1_ = add_parameter("conv1.weight", f.he_normal({c, c, 3, 3}, c * 9));
  b1_ = add_parameter("conv1.bias", f.constant({c}, 0.0));
  g1_ = add_parameter("norm1.gain", f.constant({c}, 1.0));
  s1_ = add_parameter("norm1.shift", f.constant({c}, 0.0));
  w2_ = add_parameter("conv2.weight", f.he_normal({c, c, 3, 3}, c * 9));
  b2_ = add_parameter("conv2.bias", f.constant({c}, 0.0));
  g2_ = add_parameter("norm2.gain", f.constant({c}, 1.0));
  s2_ = add_parameter("norm2.shift", f.constant({c}, 0.0));
}

Tensor ResidualBlock::forward(const Tensor &x) const {
  Tensor h = conv_in_relu(x, w1_, b1_, g1_, s1_, 1, 1);
  h = nn::instance_norm(nn::conv(h, w2_, b2_, 1, 1), g2_, s2_);
  return nn::add(x, h);
}

std::vector<double> position_code(std::int64_t rows, std::int64_t cols, int dim) {
  if (dim % 4 != 0) {
    fail(ErrorCode::ConfigError, "position code dim must be divisible by 4");
  }
  const int half = dim / 2;
  std::vector<double> out(static_cast<std::size_t>(rows * cols * dim));
  for (std::int64_t r = 0; r < rows; ++r) {
    for (std::int64_t c = 0; c < cols; ++c) {
      double *row = &out[static_cast<std::size_t>((r * cols + c) * dim)];
      for (int i = 0; i < half / 2; ++i) {
        const double freq = std::pow(10000.0, -2.0 * i / half);
        row[2 * i] = std::sin(static_cast<double>(r) * freq);
        row[2 * i + 1] = std::cos(static_cast<double>(r) * freq);
        row[half + 2 * i] = std::sin(static_cast<double>(c) * freq);
        row[half + 2 * i + 1] = std::cos(static_cast<double>(c) * freq);
      }
    }
  }
  return out;
}

ArtBlock::ArtBlock(int channels, const GeneratorConfig &config, nn::ParamFactory &f)
    : channels_(channels), token_dim_(config.token_dim), heads_(config.heads),
      patch_(config.patch_size) {
  const std::int64_t c = channels, d = token_dim_, p = patch_;
  const std::int64_t hidden = d * config.mlp_ratio;
  embed_w_ = add_parameter("embed.weight", f.he_normal({d, c, p, p}, c * p * p));
  embed_b_ = add_parameter("embed.bias", f.constant({d}, 0.0));
  const double s = 1.0 / std::sqrt(static_cast<double>(d));
  wq_ = add_parameter("attn.q", f.normal({d, d}, s));
  wk_ = add_parameter("attn.k", f.normal({d, d}, s));
  wv_ = add_parameter("attn.v", f.normal({d, d}, s));
  wo_ = add_parameter("attn.o", f.normal({d, d}, s));
  mlp_w1_ = add_parameter("mlp1.weight", f.he_normal({d, hidden}, d));
  mlp_b1_ = add_parameter("mlp1.bias", f.constant({hidden}, 0.0));
  mlp_w2_ = add_parameter("mlp2.weight", f.normal({hidden, d}, 1.0 / std::sqrt(double(hidden))));
  mlp_b2_ = add_parameter("mlp2.bias", f.constant({d}, 0.0));
  unembed_w_ = add_parameter("unembed.weight", f.normal({d, c, p, p}, 1.0 / std::sqrt(double(d))));
  unembed_b_ = add_parameter("unembed.bias", f.constant({c}, 0.0));
  conv1_w_ = add_parameter("conv1.weight", f.he_normal({c, c, 3, 3}, c * 9));
  conv1_b_ = add_parameter("conv1.bias", f.constant({c}, 0.0));
  norm_g_ = add_parameter("norm.gain", f.constant({c}, 1.0));
  norm_s_ = add_parameter("norm.shift", f.constant({c}, 0.0));
  conv2_w_ = add_parameter("conv2.weight", f.he_normal({c, c, 3, 3}, c * 9));
  conv2_b_ = add_parameter("conv2.bias", f.constant({c}, 0.0));
}

Tensor ArtBlock::transformer(const Tensor &x) const {
  require_rank4(x, "art block input");
  if (x.dim(1) != channels_) {
    fail(ErrorCode::ShapeMismatch, "art block expects " + std::to_string(channels_) +
                                       " channels, got " + nn::shape_text(x.shape()));
  }
  const std::int64_t n = x.dim(0), h = x.dim(2), w = x.dim(3);
  const std::int64_t rows = (h + patch_ - 1) / patch_, cols = (w + patch_ - 1) / patch_;
  const std::int64_t tokens = rows * cols, d = token_dim_;

  Tensor e = nn::conv(pad_high(x, rows * patch_, cols * patch_), embed_w_, embed_b_, patch_, 0);
  Tensor t = nn::permute(nn::reshape(e, {n, d, tokens}), {0, 2, 1});
  std::vector<double> pos;
  pos.reserve(static_cast<std::size_t>(n * tokens * d));
  const auto code = position_code(rows, cols, token_dim_);
  for (std::int64_t i = 0; i < n; ++i) pos.insert(pos.end(), code.begin(), code.end());
  t = nn::add(t, Tensor::from({n, tokens, d}, std::move(pos)));

  t = nn::add(t, nn::self_attention(t, wq_, wk_, wv_, wo_, heads_));
  Tensor m = nn::gelu(nn::linear(t, mlp_w1_, mlp_b1_));
  t = nn::add(t, nn::linear(m, mlp_w2_, mlp_b2_));

  Tensor grid = nn::reshape(nn::permute(t, {0, 2, 1}), {n, d, rows, cols});
  Tensor out = nn::conv_transpose(grid, unembed_w_, unembed_b_, patch_, 0);
  return crop_low(out, h, w);
}

Tensor ArtBlock::conv_module(const Tensor &x) const {
  Tensor h = conv_in_relu(x, conv1_w_, conv1_b_, norm_g_, norm_s_, 1, 1);
  return nn::conv(h, conv2_w_, conv2_b_, 1, 1);
}

Tensor ArtBlock::forward(const Tensor &x) const {
  return nn::add(x, conv_module(nn::add(x, transformer(x))));
}

Generator::Generator(const GeneratorConfig &config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::ParamFactory f(seed);
  const std::int64_t b = config_.base_width;
  stem_w_ = add_parameter("stem.weight", f.he_normal({b, 2, 3, 3}, 2 * 9));
  stem_b_ = add_parameter("stem.bias", f.constant({b}, 0.0));
  stem_g_ = add_parameter("stem.gain", f.constant({b}, 1.0));
  stem_s_ = add_parameter("stem.shift", f.constant({b}, 0.0));
  for (int i = 0; i < config_.depth; ++i) {
    const std::int64_t cin = b << i, cout = b << (i + 1);
    const std::string p = "down" + std::to_string(i);
    Level l;
    l.w = add_parameter(p + ".weight", f.he_normal({cout, cin, 4, 4}, cin * 16));
    l.b = add_parameter(p + ".bias", f.constant({cout}, 0.0));
    l.g = add_parameter(p + ".gain", f.constant({cout}, 1.0));
    l.s = add_parameter(p + ".shift", f.constant({cout}, 0.0));
    down_.push_back(l);
  }
  const int bc = config_.bottleneck_channels();
  if (config_.bottleneck == Bottleneck::ResidualBlocks) {
    for (int i = 0; i < config_.res_blocks; ++i) {
      res_.emplace_back(bc, f);
      add_child("res" + std::to_string(i), res_.back());
    }
  } else {
    for (int i = 0; i < config_.art_blocks; ++i) {
      art_.emplace_back(bc, config_, f);
      add_child("art" + std::to_string(i), art_.back());
    }
  }
  for (int i = config_.depth - 1; i >= 0; --i) {
    const std::int64_t cin = b << (i + 1), cout = b << i;
    const std::string p = "up" + std::to_string(i);
    Level l;
    // Transposed kernels are [Cin, Cout, k, k]; each output sees ~Cin*4 taps.
    l.w = add_parameter(p + ".weight", f.he_normal({cin, cout, 4, 4}, cin * 4));
    l.b = add_parameter(p + ".bias", f.constant({cout}, 0.0));
    l.g = add_parameter(p + ".gain", f.constant({cout}, 1.0));
    l.s = add_parameter(p + ".shift", f.constant({cout}, 0.0));
    up_.push_back(l);
  }
  head_w_ = add_parameter("head.weight", f.normal({1, b, 3, 3}, 1.0 / std::sqrt(double(b * 9))));
  head_b_ = add_parameter("head.bias", f.constant({1}, 0.0));
}

Tensor Generator::forward(const Tensor &masked, const Tensor &mask) const {
  require_rank4(masked, "generator image");
  require_rank4(mask, "generator mask");
  if (masked.shape() != mask.shape() || masked.dim(1) != 1) {
    fail(ErrorCode::ShapeMismatch, "generator inputs must both be [N, 1, H, W], got " +
                                       nn::shape_text(masked.shape()) + " and " +
                                       nn::shape_text(mask.shape()));
  }
  const std::int64_t unit = std::int64_t{1} << config_.depth;
  if (masked.dim(2) % unit != 0 || masked.dim(3) % unit != 0) {
    fail(ErrorCode::ShapeMismatch, "generator input extent must be divisible by " +
                                       std::to_string(unit));
  }
  Tensor h = conv_in_relu(nn::concat({masked, mask}, 1), stem_w_, stem_b_, stem_g_, stem_s_, 1, 1);
  for (const auto &l : down_) {
    h = conv_in_relu(h, l.w, l.b, l.g, l.s, 2, 1);
  }
  for (const auto &r : res_) h = r.forward(h);
  for (const auto &a : art_) h = a.forward(h);
  for (const auto &l : up_) {
    h = nn::relu(nn::instance_norm(nn::conv_transpose(h, l.w, l.b, 2, 1), l.g, l.s));
  }
  return nn::conv(h, head_w_, head_b_, 1, 1);
}

PatchDiscriminator::PatchDiscriminator(const PatchDiscriminatorConfig &config, std::uint64_t seed)
    : config_(config) {
  config_.validate();
  nn::ParamFactory f(seed);
  std::int64_t cin = config_.in_channels;
  for (int i = 0; i < config_.layers; ++i) {
    const std::int64_t cout = static_cast<std::int64_t>(config_.base_width) << std::min(i, 3);
    const std::string p = "layer" + std::to_string(i);
    Layer l;
    l.w = add_parameter(p + ".weight", f.he_normal({cout, cin, 4, 4}, cin * 16));
    l.b = add_parameter(p + ".bias", f.constant({cout}, 0.0));
    if (i > 0) {
      l.g = add_parameter(p + ".gain", f.constant({cout}, 1.0));
      l.s = add_parameter(p + ".shift", f.constant({cout}, 0.0));
    }
    layers_.push_back(l);
    cin = cout;
  }
  head_w_ = add_parameter("head.weight", f.normal({1, cin, 3, 3}, 1.0 / std::sqrt(double(cin * 9))));
  head_b_ = add_parameter("head.bias", f.constant({1}, 0.0));
}

Tensor PatchDiscriminator::forward(const Tensor &condition, const Tensor &candidate) const {
  require_rank4(condition, "discriminator condition");
  require_rank4(candidate, "discriminator candidate");
  if (condition.shape() != candidate.shape() || condition.dim(1) != 1) {
    fail(ErrorCode::ShapeMismatch, "discriminator inputs must both be [N, 1, H, W]");
  }
  Tensor h = nn::concat({condition, candidate}, 1);
  for (const auto &l : layers_) {
    if (h.dim(2) < 4 || h.dim(3) < 4) {
      fail(ErrorCode::ShapeMismatch, "discriminator input too small for its layer stack");
    }
    h = nn::conv(h, l.w, l.b, 2, 1);
    if (l.g.defined()) {
      h = nn::instance_norm(h, l.g, l.s);
    }
    h = nn::leaky_relu(h, 0.2);
  }
  if (h.dim(2) < 3 || h.dim(3) < 3) {
    fail(ErrorCode::ShapeMismatch, "discriminator input too small for its layer stack");
  }
  return nn::conv(h, head_w_, head_b_, 1, 0);
}

PerceptualExtractor::PerceptualExtractor(const PerceptualExtractorConfig &config)
    : config_(config) {
  config_.validate();
  nn::ParamFactory f(config_.seed);
  std::int64_t cin = 1;
  for (std::size_t i = 0; i < config_.widths.size(); ++i) {
    const std::int64_t cout = config_.widths[i];
    const std::string p = "layer" + std::to_string(i);
    weights_.push_back(add_parameter(p + ".weight", f.he_normal({cout, cin, 3, 3}, cin * 9)));
    biases_.push_back(add_parameter(p + ".bias", f.constant({cout}, 0.0)));
    cin = cout;
  }
  set_trainable(false);
}

std::vector<Tensor> PerceptualExtractor::features(const Tensor &image) const {
  require_rank4(image, "extractor input");
  if (image.dim(1) != 1) {
    fail(ErrorCode::ShapeMismatch, "extractor input must have one channel");
  }
  std::vector<Tensor> taps(config_.taps.size());
  Tensor h = image;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = nn::relu(nn::conv(h, weights_[i], biases_[i], 1, 1));
    for (std::size_t t = 0; t < config_.taps.size(); ++t) {
      if (config_.taps[t] == static_cast<int>(i)) taps[t] = h;
    }
  }
  return taps;
}

Tensor perceptual_loss(const PerceptualExtractor &extractor, const Tensor &pred,
                       const Tensor &target) {
  if (pred.shape() != target.shape()) {
    fail(ErrorCode::ShapeMismatch, "perceptual loss operands differ in shape");
  }
  const auto fp = extractor.features(pred);
  const auto ft = extractor.features(target);
  Tensor total;
  for (std::size_t i = 0; i < fp.size(); ++i) {
    Tensor term = nn::l1_loss(fp[i], ft[i]);
    total = total.defined() ? nn::add(total, term) : term;
  }
  return nn::scale(total, 1.0 / static_cast<double>(fp.size()));
}

Tensor generator_adversarial_loss(const Tensor &fake_scores, AdversarialObjective objective) {
  if (objective == AdversarialObjective::LeastSquares) {
    return nn::mean(nn::square(nn::add_scalar(fake_scores, -1.0)));
  }
  return nn::mean(nn::softplus(nn::scale(fake_scores, -1.0)));
}

Tensor discriminator_loss(const Tensor &real_scores, const Tensor &fake_scores,
                          AdversarialObjective objective) {
  Tensor real_term, fake_term;
  if (objective == AdversarialObjective::LeastSquares) {
    real_term = nn::mean(nn::square(nn::add_scalar(real_scores, -1.0)));
    fake_term = nn::mean(nn::square(fake_scores));
  } else {
    real_term = nn::mean(nn::softplus(nn::scale(real_scores, -1.0)));
    fake_term = nn::mean(nn::softplus(fake_scores));
  }
  return nn::scale(nn::add(real_term, fake_term), 0.5);
}

namespace {

GanLoss combine(const LossWeights &w, const Tensor &pix, const Tensor *per, const Tensor &adv) {
  w.validate();
  GanLoss out;
  Tensor total = nn::scale(pix, w.pix);
  if (per != nullptr) {
    total = nn::add(total, nn::scale(*per, w.per));
    out.per = per->item();
  }
  total = nn::add(total, nn::scale(adv, w.adv));
  out.total = total;
  out.total_value = total.item();
  out.pix = pix.item();
  out.adv = adv.item();
  return out;
}

} // namespace

GanLoss pgan_loss(const LossWeights &weights, const Tensor &pred, const Tensor &target,
                  const Tensor &disc_scores_on_pred, const PerceptualExtractor &extractor,
                  AdversarialObjective objective) {
  if (pred.shape() != target.shape()) {
    fail(ErrorCode::ShapeMismatch, "prediction and target differ in shape");
  }
  const Tensor pix = nn::l1_loss(pred, target);
  const Tensor per = perceptual_loss(extractor, pred, target);
  const Tensor adv = generator_adversarial_loss(disc_scores_on_pred, objective);
  return combine(weights, pix, &per, adv);
}

GanLoss resvit_loss(const LossWeights &weights, const Tensor &pred, const Tensor &target,
                    const Tensor &disc_scores_on_pred, AdversarialObjective objective) {
  if (pred.shape() != target.shape()) {
    fail(ErrorCode::ShapeMismatch, "prediction and target differ in shape");
  }
  const Tensor pix = nn::l1_loss(pred, target);
  const Tensor adv = generator_adversarial_loss(disc_scores_on_pred, objective);
  return combine(weights, pix, nullptr, adv);
}

StepReport gan_train_step(GanModels models, const SliceBatch &batch, const LossWeights &weights,
                          nn::AdamState &gen_state, nn::AdamState &disc_state,
                          AdversarialObjective objective) {
  weights.validate();
  Generator &gen = models.generator;
  PatchDiscriminator &disc = models.discriminator;
  StepReport report;

  const Tensor fake = gen.forward(batch.image, batch.mask);

  // Discriminator update on real vs detached fake.
  disc.set_trainable(true);
  disc.zero_grad();
  {
    const Tensor real_scores = disc.forward(batch.image, batch.target);
    const Tensor fake_scores = disc.forward(batch.image, fake.detach());
    const Tensor loss = discriminator_loss(real_scores, fake_scores, objective);
    nn::check_finite(loss, "discriminator loss");
    nn::backward(loss);
    report.disc = loss.item();
    auto params = disc.parameter_tensors();
    nn::adam_step(params, disc_state);
  }

  // Generator update against the freshly updated, frozen discriminator.
  disc.set_trainable(false);
  gen.zero_grad();
  const Tensor scores = disc.forward(batch.image, fake);
  const GanLoss loss = models.extractor != nullptr
                           ? pgan_loss(weights, fake, batch.target, scores, *models.extractor,
                                       objective)
                           : resvit_loss(weights, fake, batch.target, scores, objective);
  disc.set_trainable(true);
  nn::check_finite(loss.total, "generator loss");
  nn::backward(loss.total);
  auto params = gen.parameter_tensors();
  nn::adam_step(params, gen_state);

  report.total = loss.total_value;
  report.pix = loss.pix;
  report.per = loss.per;
  report.adv = loss.adv;
  return report;
}

} // namespace inpaint::gan
