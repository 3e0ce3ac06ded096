#include "inpaint/diffusion.hpp"

#include <cmath>

#include "inpaint/error.hpp"
#include "inpaint/nn/ops.hpp"

namespace inpaint::diffusion {

NoiseSchedule schedule_from_betas(std::vector<double> betas) {
  if (betas.empty()) {
    fail(ErrorCode::BadRange, "noise schedule needs at least one step");
  }
  NoiseSchedule s;
  s.T = static_cast<int>(betas.size());
  double prod = 1.0;
  for (double b : betas) {
    if (!(b > 0.0 && b < 1.0)) {
      fail(ErrorCode::BadRange, "beta must lie strictly in (0, 1)");
    }
    s.alpha.push_back(1.0 - b);
    prod *= 1.0 - b;
    s.alpha_bar.push_back(prod);
  }
  s.beta = std::move(betas);
  return s;
}

NoiseSchedule make_schedule(int T, double beta_start, double beta_end, ScheduleKind kind) {
  if (T < 1) {
    fail(ErrorCode::BadRange, "T must be >= 1");
  }
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    fail(ErrorCode::BadRange, "need 0 < beta_start <= beta_end < 1");
  }
  (void)kind;
  std::vector<double> betas(static_cast<std::size_t>(T));
  for (int t = 0; t < T; ++t) {
    const double f = T == 1 ? 0.0 : static_cast<double>(t) / (T - 1);
    betas[static_cast<std::size_t>(t)] = beta_start + (beta_end - beta_start) * f;
  }
  return schedule_from_betas(std::move(betas));
}

namespace {

void check_step(int t, const NoiseSchedule &s) {
  if (t < 0 || t >= s.T) {
    fail(ErrorCode::IndexOutOfRange,
         "step " + std::to_string(t) + " outside [0, " + std::to_string(s.T) + ")");
  }
}

void check_volume(const Tensor &x, const char *what) {
  if (!x.defined() || x.rank() != 5 || x.dim(1) != 1) {
    fail(ErrorCode::ShapeMismatch, std::string(what) + " must be [N, 1, D, H, W]");
  }
}

void check_condition(const Tensor &x, const Condition &c) {
  check_volume(x, "x_t");
  if (c.masked.shape() != x.shape() || c.mask.shape() != x.shape()) {
    fail(ErrorCode::ShapeMismatch, "condition shape differs from x_t " + nn::shape_text(x.shape()));
  }
}

} // namespace

std::vector<double> q_sample(std::span<const double> x0, int t, std::span<const double> eps,
                             const NoiseSchedule &schedule) {
  check_step(t, schedule);
  if (x0.size() != eps.size()) {
    fail(ErrorCode::ShapeMismatch, "eps must be shaped like x0");
  }
  const double a = std::sqrt(schedule.alpha_bar[static_cast<std::size_t>(t)]);
  const double b = std::sqrt(1.0 - schedule.alpha_bar[static_cast<std::size_t>(t)]);
  std::vector<double> out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) {
    out[i] = a * x0[i] + b * eps[i];
  }
  return out;
}

void DenoiserConfig::validate() const {
  if (widths.empty()) {
    fail(ErrorCode::ConfigError, "denoiser needs at least one level width");
  }
  for (int w : widths) {
    if (w < 1) fail(ErrorCode::ConfigError, "denoiser widths must be >= 1");
  }
  if (time_dim < 2 || time_dim % 2 != 0) {
    fail(ErrorCode::ConfigError, "time embedding dim must be even and >= 2");
  }
  if (in_channels != 3) {
    fail(ErrorCode::ConfigError, "denoiser takes 3 input channels");
  }
}

Tensor timestep_embedding(const std::vector<int> &t, int dim) {
  const int half = dim / 2;
  std::vector<double> out(t.size() * static_cast<std::size_t>(dim));
  for (std::size_t n = 0; n < t.size(); ++n) {
    for (int i = 0; i < half; ++i) {
      const double freq = std::pow(10000.0, -static_cast<double>(i) / half);
      out[n * dim + i] = std::sin(t[n] * freq);
      out[n * dim + half + i] = std::cos(t[n] * freq);
    }
  }
  return Tensor::from({static_cast<std::int64_t>(t.size()), dim}, std::move(out));
}

Denoiser3d::Denoiser3d(const DenoiserConfig &config, std::uint64_t seed) : config_(config) {
  config_.validate();
  nn::ParamFactory f(seed);
  const std::int64_t e = config_.time_dim;
  time_w_ = add_parameter("time.weight", f.he_normal({e, e}, e));
  time_b_ = add_parameter("time.bias", f.constant({e}, 0.0));

  auto make_block = [&](const std::string &p, std::int64_t cin, std::int64_t c) {
    Block b;
    b.w1 = add_parameter(p + ".conv1.weight", f.he_normal({c, cin, 3, 3, 3}, cin * 27));
    b.b1 = add_parameter(p + ".conv1.bias", f.constant({c}, 0.0));
    b.tw = add_parameter(p + ".time.weight", f.normal({e, c}, 1.0 / std::sqrt(double(e))));
    b.tb = add_parameter(p + ".time.bias", f.constant({c}, 0.0));
    b.w2 = add_parameter(p + ".conv2.weight", f.he_normal({c, c, 3, 3, 3}, c * 27));
    b.b2 = add_parameter(p + ".conv2.bias", f.constant({c}, 0.0));
    return b;
  };

  const auto &w = config_.widths;
  const int depth = config_.depth();
  enc_.push_back(make_block("enc0", config_.in_channels, w[0]));
  for (int i = 1; i <= depth; ++i) {
    const std::string p = "down" + std::to_string(i);
    Up d;
    d.w = add_parameter(p + ".weight", f.he_normal({w[i], w[i - 1], 2, 2, 2}, w[i - 1] * 8));
    d.b = add_parameter(p + ".bias", f.constant({w[i]}, 0.0));
    down_.push_back(d);
    enc_.push_back(make_block("enc" + std::to_string(i), w[i], w[i]));
  }
  for (int i = depth - 1; i >= 0; --i) {
    const std::string p = "up" + std::to_string(i);
    Up u;
    u.w = add_parameter(p + ".weight", f.he_normal({w[i + 1], w[i], 2, 2, 2}, w[i + 1]));
    u.b = add_parameter(p + ".bias", f.constant({w[i]}, 0.0));
    up_.push_back(u);
    dec_.push_back(make_block("dec" + std::to_string(i), 2 * std::int64_t{w[i]}, w[i]));
  }
  head_w_ = add_parameter("head.weight", f.normal({1, w[0], 1, 1, 1}, 1.0 / std::sqrt(double(w[0]))));
  head_b_ = add_parameter("head.bias", f.constant({1}, 0.0));
}

Tensor Denoiser3d::predict(const Tensor &x_t, const std::vector<int> &t,
                           const Condition &condition) const {
  check_condition(x_t, condition);
  if (static_cast<std::int64_t>(t.size()) != x_t.dim(0)) {
    fail(ErrorCode::ShapeMismatch, "need one timestep per batch element");
  }
  const std::int64_t unit = std::int64_t{1} << config_.depth();
  for (int a = 2; a < 5; ++a) {
    if (x_t.dim(a) % unit != 0) {
      fail(ErrorCode::ShapeMismatch, "spatial size must be divisible by " + std::to_string(unit));
    }
  }
  const Tensor temb = nn::relu(nn::linear(timestep_embedding(t, config_.time_dim), time_w_, time_b_));

  auto run_block = [&](const Block &b, const Tensor &x) {
    Tensor h = nn::conv(x, b.w1, b.b1, 1, 1);
    h = nn::relu(nn::add_channel(h, nn::linear(temb, b.tw, b.tb)));
    return nn::relu(nn::conv(h, b.w2, b.b2, 1, 1));
  };

  Tensor h = nn::concat({x_t, condition.masked, condition.mask}, 1);
  std::vector<Tensor> skips;
  h = run_block(enc_[0], h);
  for (std::size_t i = 0; i < down_.size(); ++i) {
    skips.push_back(h);
    h = nn::relu(nn::conv(h, down_[i].w, down_[i].b, 2, 0));
    h = run_block(enc_[i + 1], h);
  }
  for (std::size_t i = 0; i < up_.size(); ++i) {
    h = nn::relu(nn::conv_transpose(h, up_[i].w, up_[i].b, 2, 0));
    h = nn::concat({skips[skips.size() - 1 - i], h}, 1);
    h = run_block(dec_[i], h);
  }
  return nn::conv(h, head_w_, head_b_, 1, 0);
}

Tensor denoise_loss(const NoisePredictor &model, const Tensor &x0, const Condition &condition,
                    const NoiseSchedule &schedule, Rng &rng) {
  check_condition(x0, condition);
  const std::int64_t n = x0.dim(0);
  const std::int64_t per = x0.numel() / n;
  std::vector<int> t(static_cast<std::size_t>(n));
  for (auto &ti : t) {
    ti = static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(schedule.T)));
  }
  std::vector<double> eps(static_cast<std::size_t>(x0.numel()));
  for (auto &e : eps) e = rng.normal();
  std::vector<double> xt(eps.size());
  const auto xv = x0.values();
  for (std::int64_t i = 0; i < n; ++i) {
    const std::size_t off = static_cast<std::size_t>(i * per);
    const auto part = q_sample(xv.subspan(off, static_cast<std::size_t>(per)), t[i],
                               std::span<const double>(eps).subspan(off, static_cast<std::size_t>(per)),
                               schedule);
    std::copy(part.begin(), part.end(), xt.begin() + static_cast<std::ptrdiff_t>(off));
  }
  const Tensor pred = model.predict(Tensor::from(x0.shape(), std::move(xt)), t, condition);
  Tensor loss = nn::mse_loss(pred, Tensor::from(x0.shape(), std::move(eps)));
  nn::check_finite(loss, "denoising loss");
  return loss;
}

Tensor p_sample_step(const NoisePredictor &model, const Tensor &x_t, int t,
                     const Condition &condition, const NoiseSchedule &schedule, Rng &rng) {
  check_step(t, schedule);
  nn::NoGradGuard no_grad;
  const std::vector<int> steps(static_cast<std::size_t>(x_t.dim(0)), t);
  const Tensor eps = model.predict(x_t, steps, condition);
  const std::size_t ti = static_cast<std::size_t>(t);
  const double beta = schedule.beta[ti];
  const double coef = beta / std::sqrt(1.0 - schedule.alpha_bar[ti]);
  const double inv_sqrt_alpha = 1.0 / std::sqrt(schedule.alpha[ti]);
  const double sigma = std::sqrt(beta);
  const auto xv = x_t.values();
  const auto ev = eps.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = (xv[i] - coef * ev[i]) * inv_sqrt_alpha;
    if (t > 0) {
      out[i] += sigma * rng.normal();
    }
  }
  return Tensor::from(x_t.shape(), std::move(out));
}

Tensor sample(const NoisePredictor &model, const Condition &condition,
              const NoiseSchedule &schedule, Rng &rng) {
  check_volume(condition.masked, "condition");
  Tensor x = Tensor::zeros(condition.masked.shape());
  for (auto &v : x.values()) v = rng.normal();
  for (int t = schedule.T - 1; t >= 0; --t) {
    x = p_sample_step(model, x, t, condition, schedule, rng);
  }
  return x;
}

double train_step(Denoiser3d &model, nn::AdamState &state, const Tensor &x0,
                  const Condition &condition, const NoiseSchedule &schedule, Rng &rng) {
  model.zero_grad();
  const Tensor loss = denoise_loss(model, x0, condition, schedule, rng);
  nn::backward(loss);
  auto params = model.parameter_tensors();
  nn::adam_step(params, state);
  return loss.item();
}

} // namespace inpaint::diffusion
