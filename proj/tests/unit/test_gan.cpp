#include <doctest.h>

#include <cmath>
#include <set>

#include "inpaint/gan.hpp"
#include "inpaint/nn/ops.hpp"
#include "support/gradcheck.hpp"

using namespace inpaint;
using namespace inpaint::gan;
using inpaint::testing::gradcheck;
using inpaint::testing::random_tensor;

namespace {

GeneratorConfig small_generator(Bottleneck b) {
  GeneratorConfig c;
  c.base_width = 4;
  c.depth = 2;
  c.bottleneck = b;
  c.res_blocks = 1;
  c.art_blocks = 1;
  c.token_dim = 8;
  c.heads = 2;
  c.patch_size = 4;
  return c;
}

Tensor find_param(const nn::Module &m, const std::string &name) {
  for (const auto &p : m.parameters())
    if (p.name == name) return p.tensor;
  FAIL("missing parameter " << name);
  return {};
}

std::vector<double> snapshot(const nn::Module &m) {
  std::vector<double> out;
  for (const auto &p : m.parameters()) out.insert(out.end(), p.tensor.values().begin(), p.tensor.values().end());
  return out;
}

double mean_abs_diff(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
  return s / static_cast<double>(a.size());
}

} // namespace

TEST_CASE("generator output shape equals input shape") {
  for (auto b : {Bottleneck::ResidualBlocks, Bottleneck::ArtBlocks}) {
    Generator g(small_generator(b), 1);
    nn::NoGradGuard ng;
    for (std::int64_t s : {64, 96, 240}) {
      const Tensor x = random_tensor({1, 1, s, s}, 2);
      const Tensor m = Tensor::zeros({1, 1, s, s});
      CHECK(g.forward(x, m).shape() == nn::Shape{1, 1, s, s});
    }
  }
}

TEST_CASE("ART block preserves shape and is the identity with zeroed output weights") {
  GeneratorConfig c = small_generator(Bottleneck::ArtBlocks);
  nn::ParamFactory f(3);
  ArtBlock block(8, c, f);
  const Tensor x = random_tensor({1, 8, 16, 16}, 4);
  {
    nn::NoGradGuard ng;
    CHECK(block.forward(x).shape() == x.shape());
  }
  for (const char *n : {"unembed.weight", "unembed.bias", "conv2.weight", "conv2.bias"}) {
    for (auto &v : find_param(block, n).values()) v = 0.0;
  }
  nn::NoGradGuard ng;
  const Tensor y = block.forward(x);
  for (std::int64_t i = 0; i < x.numel(); ++i) REQUIRE(y.values()[i] == x.values()[i]);
}

TEST_CASE("ART block gradient check, including padding to the patch size") {
  GeneratorConfig c = small_generator(Bottleneck::ArtBlocks);
  nn::ParamFactory f(5);
  ArtBlock block(4, c, f);
  std::vector<Tensor> inputs{random_tensor({1, 4, 6, 5}, 6)};
  for (const auto &p : block.parameters()) inputs.push_back(p.tensor);
  const auto r = gradcheck([&](const std::vector<Tensor> &in) { return block.forward(in[0]); }, inputs, 1e-5, 24);
  CHECK(r.rel_error < 1e-4);
}

TEST_CASE("patch discriminator shape law and determinism") {
  PatchDiscriminatorConfig dc;
  dc.base_width = 4;
  PatchDiscriminator d(dc, 7);
  nn::NoGradGuard ng;
  const Tensor a = random_tensor({1, 1, 96, 96}, 8), b = random_tensor({1, 1, 96, 96}, 9);
  const Tensor s = d.forward(a, b);
  // Each stride-2 k4 p1 layer halves; the k3 p0 head removes 2.
  std::int64_t n = 96;
  for (int i = 0; i < 3; ++i) n = (n + 2 - 4) / 2 + 1;
  n = n - 3 + 1;
  CHECK(n == 10);
  CHECK(s.shape() == nn::Shape{1, 1, n, n});
  const Tensor s2 = d.forward(a, b);
  for (std::int64_t i = 0; i < s.numel(); ++i) CHECK(s.values()[i] == s2.values()[i]);
  CHECK(dc.receptive_field() == 38);
}

TEST_CASE("perceptual loss matches a hand recomputation and is frozen") {
  PerceptualExtractor e(PerceptualExtractorConfig{});
  for (const auto &p : e.parameters()) CHECK_FALSE(p.tensor.requires_grad());
  const Tensor a = random_tensor({1, 1, 8, 8}, 10), b = random_tensor({1, 1, 8, 8}, 11);
  CHECK(perceptual_loss(e, a, a).item() == 0.0);
  // Recompute the tap activations from the stored weights.
  const auto params = e.parameters();
  auto run = [&](Tensor x) {
    std::vector<Tensor> taps;
    for (std::size_t i = 0; i < 4; ++i) {
      x = nn::relu(nn::conv(x, params[2 * i].tensor, params[2 * i + 1].tensor, 1, 1));
      if (i == 1 || i == 3) taps.push_back(x);
    }
    return taps;
  };
  const auto fa = run(a), fb = run(b);
  double expect = 0.0;
  for (std::size_t t = 0; t < 2; ++t) expect += mean_abs_diff(fa[t].values(), fb[t].values()) / 2.0;
  CHECK(perceptual_loss(e, a, b).item() == doctest::Approx(expect).epsilon(1e-12));
}

TEST_CASE("loss decomposition against separately computed terms") {
  PerceptualExtractor e(PerceptualExtractorConfig{});
  const Tensor pred = random_tensor({2, 1, 8, 8}, 12), target = random_tensor({2, 1, 8, 8}, 13);
  const Tensor scores = random_tensor({2, 1, 3, 3}, 14);
  const double pix = mean_abs_diff(pred.values(), target.values());
  const double per = perceptual_loss(e, pred, target).item();
  double adv = 0.0;
  for (double s : scores.values()) adv += (s - 1.0) * (s - 1.0);
  adv /= static_cast<double>(scores.numel());

  const GanLoss l = pgan_loss({1, 1, 1}, pred, target, scores, e);
  CHECK(l.total_value == doctest::Approx(pix + per + adv).epsilon(1e-12));
  CHECK(std::abs(l.total_value - (l.pix + l.per + l.adv)) < 1e-6);
  CHECK(l.pix == doctest::Approx(pix));
  CHECK(l.adv == doctest::Approx(adv));

  CHECK(pgan_loss({0, 0, 0}, pred, target, scores, e).total_value == 0.0);
  CHECK(pgan_loss({1, 0, 0}, pred, pred, scores, e).total_value == 0.0);

  const GanLoss a = pgan_loss({3, 0, 2}, pred, target, scores, e);
  const GanLoss b = resvit_loss({3, 0, 2}, pred, target, scores);
  CHECK(a.total_value == b.total_value);

  const Tensor shifted = nn::add_scalar(target, 0.5);
  CHECK(resvit_loss({1, 0, 0}, shifted, target, scores).pix == doctest::Approx(0.5));

  CHECK(generator_adversarial_loss(Tensor::full({4}, 1.0), AdversarialObjective::LeastSquares).item() == 0.0);
  CHECK(discriminator_loss(Tensor::full({4}, 1.0), Tensor::zeros({4}), AdversarialObjective::LeastSquares).item() == 0.0);
  CHECK(generator_adversarial_loss(Tensor::zeros({4}), AdversarialObjective::Vanilla).item() ==
        doctest::Approx(std::log(2.0)));
}

TEST_CASE("scaling every weight by c scales the loss and its gradient by c") {
  PerceptualExtractor e(PerceptualExtractorConfig{});
  const Tensor target = random_tensor({1, 1, 8, 8}, 15);
  const Tensor scores = random_tensor({1, 1, 2, 2}, 16);
  auto grad_for = [&](LossWeights w) {
    Tensor pred = random_tensor({1, 1, 8, 8}, 17);
    pred.set_requires_grad(true);
    const GanLoss l = pgan_loss(w, pred, target, scores, e);
    nn::backward(l.total);
    return std::make_pair(l.total_value, std::vector<double>(pred.grad().begin(), pred.grad().end()));
  };
  const auto [t1, g1] = grad_for({2, 3, 0.5});
  const auto [t2, g2] = grad_for({6, 9, 1.5});
  CHECK(t2 == doctest::Approx(3 * t1).epsilon(1e-12));
  for (std::size_t i = 0; i < g1.size(); ++i) CHECK(g2[i] == doctest::Approx(3 * g1[i]).epsilon(1e-10));
}

TEST_CASE("generator and discriminator parameter sets are disjoint") {
  Generator g(small_generator(Bottleneck::ResidualBlocks), 1);
  PatchDiscriminator d(PatchDiscriminatorConfig{2, 4, 2}, 2);
  std::set<const void *> nodes;
  for (const auto &p : g.parameters()) nodes.insert(p.tensor.node().get());
  for (const auto &p : d.parameters()) CHECK(nodes.count(p.tensor.node().get()) == 0);
}

TEST_CASE("train step: zero lr leaves parameters bit-identical, finite report otherwise") {
  for (auto bott : {Bottleneck::ResidualBlocks, Bottleneck::ArtBlocks}) {
    Generator g(small_generator(bott), 1);
    PatchDiscriminator d(PatchDiscriminatorConfig{2, 4, 2}, 2);
    PerceptualExtractor e(PerceptualExtractorConfig{});
    SliceBatch batch{random_tensor({2, 1, 16, 16}, 3), Tensor::zeros({2, 1, 16, 16}),
                     random_tensor({2, 1, 16, 16}, 4)};
    nn::AdamOptions zero;
    zero.lr = 0.0;
    auto gs = nn::make_adam_state(g.parameter_tensors(), zero);
    auto ds = nn::make_adam_state(d.parameter_tensors(), zero);
    const GanModels models{g, d, bott == Bottleneck::ResidualBlocks ? &e : nullptr};
    const auto g0 = snapshot(g), d0 = snapshot(d);
    const StepReport r = gan_train_step(models, batch, {100, 100, 1}, gs, ds);
    CHECK(std::isfinite(r.total));
    CHECK(std::isfinite(r.disc));
    CHECK(snapshot(g) == g0);
    CHECK(snapshot(d) == d0);

    nn::AdamOptions live;
    live.lr = 1e-3;
    auto gs2 = nn::make_adam_state(g.parameter_tensors(), live);
    auto ds2 = nn::make_adam_state(d.parameter_tensors(), live);
    gan_train_step(models, batch, {100, 100, 1}, gs2, ds2);
    CHECK(snapshot(g) != g0);
    CHECK(snapshot(d) != d0);
  }
}

TEST_CASE("pure L1 training reduces the pixel loss") {
  Generator g(small_generator(Bottleneck::ResidualBlocks), 1);
  PatchDiscriminator d(PatchDiscriminatorConfig{2, 4, 2}, 2);
  SliceBatch batch{random_tensor({1, 1, 16, 16}, 3), Tensor::zeros({1, 1, 16, 16}),
                   random_tensor({1, 1, 16, 16}, 4, 0.5)};
  nn::AdamOptions o;
  o.lr = 2e-3;
  auto gs = nn::make_adam_state(g.parameter_tensors(), o);
  auto ds = nn::make_adam_state(d.parameter_tensors(), o);
  const double first = gan_train_step({g, d, nullptr}, batch, {1, 0, 0}, gs, ds).pix;
  double last = first;
  for (int i = 0; i < 40; ++i) last = gan_train_step({g, d, nullptr}, batch, {1, 0, 0}, gs, ds).pix;
  CHECK(last < 0.7 * first);
}
