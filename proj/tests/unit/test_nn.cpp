#include <doctest.h>

#include <cmath>

#include "inpaint/nn/adam.hpp"
#include "inpaint/nn/module.hpp"
#include "inpaint/nn/ops.hpp"
#include "support/gradcheck.hpp"

using namespace inpaint;
using namespace inpaint::nn;
using inpaint::testing::gradcheck;
using inpaint::testing::random_tensor;

namespace {

using Fn = std::function<Tensor(const std::vector<Tensor> &)>;

double gc(const Fn &f, std::vector<Tensor> in) { return gradcheck(f, std::move(in)).rel_error; }

// Direct loop convolution over 3 spatial axes, zero padding.
std::vector<double> naive_conv3(const Tensor &x, const Tensor &k, const Tensor &b, int stride, int pad) {
  const auto &xs = x.shape();
  const auto &ks = k.shape();
  const std::int64_t N = xs[0], C = xs[1], D = xs[2], H = xs[3], W = xs[4];
  const std::int64_t O = ks[0], K = ks[2];
  const std::int64_t oD = (D + 2 * pad - K) / stride + 1, oH = (H + 2 * pad - K) / stride + 1,
                     oW = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out;
  const auto xv = x.values();
  const auto kv = k.values();
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t o = 0; o < O; ++o)
      for (std::int64_t d = 0; d < oD; ++d)
        for (std::int64_t h = 0; h < oH; ++h)
          for (std::int64_t w = 0; w < oW; ++w) {
            double acc = b.defined() ? b.values()[o] : 0.0;
            for (std::int64_t c = 0; c < C; ++c)
              for (std::int64_t a = 0; a < K; ++a)
                for (std::int64_t e = 0; e < K; ++e)
                  for (std::int64_t f = 0; f < K; ++f) {
                    const std::int64_t zd = d * stride + a - pad, zh = h * stride + e - pad,
                                       zw = w * stride + f - pad;
                    if (zd < 0 || zh < 0 || zw < 0 || zd >= D || zh >= H || zw >= W) continue;
                    acc += xv[(((n * C + c) * D + zd) * H + zh) * W + zw] *
                           kv[(((o * C + c) * K + a) * K + e) * K + f];
                  }
            out.push_back(acc);
          }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

} // namespace

TEST_CASE("activations at fixed points") {
  const Tensor x = Tensor::from({3}, {-1.0, 0.0, 2.0});
  CHECK(relu(x).values()[0] == 0.0);
  CHECK(relu(x).values()[2] == 2.0);
  CHECK(sigmoid(x).values()[1] == 0.5);
  CHECK(leaky_relu(x, 0.2).values()[0] == doctest::Approx(-0.2));
  CHECK(tanh(x).values()[2] == doctest::Approx(std::tanh(2.0)));
  CHECK(softplus(Tensor::from({1}, {800.0})).values()[0] == doctest::Approx(800.0));
  // gelu against a Taylor series of erf evaluated in long double.
  for (double v : {-2.5, -0.7, 0.3, 1.1, 3.0}) {
    long double z = v / std::sqrt(2.0L), term = z, erf = 0.0L;
    for (int n = 0; n < 80; ++n) {
      erf += term / (2 * n + 1);
      term *= -z * z / (n + 1);
    }
    erf *= 2.0L / std::sqrt(3.14159265358979323846264338327950288L);
    const double expect = static_cast<double>(0.5L * v * (1.0L + erf));
    CHECK(gelu(Tensor::from({1}, {v})).values()[0] == doctest::Approx(expect).epsilon(1e-12));
  }
}

TEST_CASE("backward on simple sums") {
  Tensor x = Tensor::from({4}, {1, 2, 3, 4}, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);
  Tensor y = Tensor::from({1}, {3.0}, true);
  backward(sum(square(y)));
  CHECK(y.grad()[0] == 6.0);
}

TEST_CASE("1x1 conv, identity kernel and naive conv oracle") {
  {
    const Tensor x = Tensor::from({1, 1, 1, 1, 1}, {3.0});
    const Tensor k = Tensor::from({1, 1, 1, 1, 1}, {2.0});
    CHECK(conv(x, k, Tensor::from({1}, {0.5})).values()[0] == 6.5);
  }
  {
    const Tensor x = random_tensor({1, 1, 5, 4, 3}, 1);
    Tensor k = Tensor::zeros({1, 1, 3, 3, 3});
    k.values()[13] = 1.0;
    const Tensor y = conv(x, k, Tensor(), 1, 1);
    REQUIRE(y.shape() == x.shape());
    for (std::int64_t i = 0; i < x.numel(); ++i) CHECK(y.values()[i] == x.values()[i]);
  }
  for (int stride : {1, 2}) {
    const Tensor x = random_tensor({2, 3, 4, 4, 4}, 2);
    const Tensor k = random_tensor({2, 3, 3, 3, 3}, 3);
    const Tensor b = random_tensor({2}, 4);
    const Tensor y = conv(x, k, b, stride, 1);
    const auto expect = naive_conv3(x, k, b, stride, 1);
    REQUIRE(static_cast<std::size_t>(y.numel()) == expect.size());
    for (std::size_t i = 0; i < expect.size(); ++i) CHECK(y.values()[i] == doctest::Approx(expect[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv_transpose is the adjoint of conv and follows the shape law") {
  const Tensor u = random_tensor({1, 1, 4, 4, 4}, 5);
  CHECK(conv_transpose(u, Tensor::from({1, 1, 1, 1, 1}, {1.0}), Tensor()).values()[7] == u.values()[7]);
  const Tensor up = conv_transpose(random_tensor({1, 2, 4, 4, 4}, 6), random_tensor({2, 3, 2, 2, 2}, 7), Tensor(), 2);
  CHECK(up.shape() == Shape{1, 3, 8, 8, 8});

  for (int stride : {1, 2}) {
    const Tensor x = random_tensor({1, 3, 6, 6, 6}, 8);
    const Tensor k = random_tensor({2, 3, 4, 4, 4}, 9);
    const Tensor y = conv(x, k, Tensor(), stride, 1);
    const Tensor r = random_tensor(y.shape(), 10);
    const Tensor back = conv_transpose(r, k, Tensor(), stride, 1);
    REQUIRE(back.shape() == x.shape());
    CHECK(dot(y.values(), r.values()) == doctest::Approx(dot(x.values(), back.values())).epsilon(1e-10));
  }
}

TEST_CASE("instance norm against direct statistics") {
  const Tensor x = random_tensor({2, 3, 4, 5}, 11, 3.0);
  const Tensor g = random_tensor({3}, 12);
  const Tensor s = random_tensor({3}, 13);
  const Tensor y = instance_norm(x, g, s, 1e-5);
  for (int n = 0; n < 2; ++n)
    for (int c = 0; c < 3; ++c) {
      const std::size_t base = static_cast<std::size_t>((n * 3 + c) * 20);
      double m = 0, v = 0;
      for (int i = 0; i < 20; ++i) m += x.values()[base + i];
      m /= 20;
      for (int i = 0; i < 20; ++i) v += (x.values()[base + i] - m) * (x.values()[base + i] - m);
      v /= 20;
      for (int i = 0; i < 20; ++i) {
        const double expect = g.values()[c] * (x.values()[base + i] - m) / std::sqrt(v + 1e-5) + s.values()[c];
        CHECK(y.values()[base + i] == doctest::Approx(expect).epsilon(1e-12));
      }
    }
  const Tensor flat = instance_norm(Tensor::full({1, 1, 3, 3}, 4.0), Tensor::full({1}, 1.0), Tensor::zeros({1}));
  for (double v : flat.values()) CHECK(v == 0.0);
}

TEST_CASE("attention with one and two tokens") {
  const Tensor wq = random_tensor({4, 4}, 20), wk = random_tensor({4, 4}, 21),
               wv = random_tensor({4, 4}, 22), wo = random_tensor({4, 4}, 23);
  const Tensor x1 = random_tensor({1, 1, 4}, 24);
  const Tensor w1 = attention_weights(x1, wq, wk, 2);
  for (double v : w1.values()) CHECK(v == 1.0);
  const Tensor y1 = self_attention(x1, wq, wk, wv, wo, 2);
  const Tensor expect = linear(linear(x1, wv), wo);
  for (int i = 0; i < 4; ++i) CHECK(y1.values()[i] == doctest::Approx(expect.values()[i]).epsilon(1e-12));

  // Two tokens, one head: softmax of the scaled scores by hand.
  const Tensor x2 = random_tensor({1, 2, 4}, 25);
  const Tensor q = linear(x2, wq), k = linear(x2, wk);
  const Tensor w2 = attention_weights(x2, wq, wk, 1);
  for (int i = 0; i < 2; ++i) {
    double s[2];
    for (int j = 0; j < 2; ++j) {
      s[j] = 0;
      for (int d = 0; d < 4; ++d) s[j] += q.values()[i * 4 + d] * k.values()[j * 4 + d];
      s[j] /= 2.0;
    }
    const double p0 = 1.0 / (1.0 + std::exp(s[1] - s[0]));
    CHECK(w2.values()[i * 2] == doctest::Approx(p0).epsilon(1e-12));
    CHECK(w2.values()[i * 2] + w2.values()[i * 2 + 1] == doctest::Approx(1.0));
  }
}

TEST_CASE("gradcheck of every primitive") {
  const double tol = 1e-4;
  const Tensor a = random_tensor({2, 3, 4}, 30), b = random_tensor({2, 3, 4}, 31);
  CHECK(gc([](auto &in) { return add(in[0], in[1]); }, {a, b}) < tol);
  CHECK(gc([](auto &in) { return sub(in[0], in[1]); }, {a, b}) < tol);
  CHECK(gc([](auto &in) { return mul(in[0], in[1]); }, {a, b}) < tol);
  CHECK(gc([](auto &in) { return scale(in[0], -1.5); }, {a}) < tol);
  CHECK(gc([](auto &in) { return add_scalar(in[0], 2.0); }, {a}) < tol);
  CHECK(gc([](auto &in) { return square(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return abs(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return relu(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return leaky_relu(in[0], 0.2); }, {a}) < tol);
  CHECK(gc([](auto &in) { return gelu(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return tanh(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return sigmoid(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return softplus(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return mean(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return reshape(in[0], {4, 6}); }, {a}) < tol);
  CHECK(gc([](auto &in) { return permute(in[0], {2, 0, 1}); }, {a}) < tol);
  CHECK(gc([](auto &in) { return concat({in[0], in[1]}, 1); }, {a, b}) < tol);
  CHECK(gc([](auto &in) { return linear(in[0], in[1], in[2]); },
           {a, random_tensor({4, 5}, 32), random_tensor({5}, 33)}) < tol);
  CHECK(gc([](auto &in) { return bmm(in[0], in[1]); }, {a, random_tensor({2, 4, 2}, 34)}) < tol);
  CHECK(gc([](auto &in) { return bmm(in[0], in[1], true); }, {a, random_tensor({2, 5, 4}, 35)}) < tol);
  CHECK(gc([](auto &in) { return softmax_last(in[0]); }, {a}) < tol);
  CHECK(gc([](auto &in) { return add_channel(in[0], in[1]); }, {random_tensor({2, 3, 2, 2}, 36), random_tensor({2, 3}, 37)}) < tol);
  CHECK(gc([](auto &in) { return conv(in[0], in[1], in[2], 2, 1); },
           {random_tensor({1, 2, 6, 6}, 38), random_tensor({3, 2, 4, 4}, 39), random_tensor({3}, 40)}) < tol);
  CHECK(gc([](auto &in) { return conv(in[0], in[1], in[2], 1, 1); },
           {random_tensor({1, 2, 4, 4, 4}, 41), random_tensor({2, 2, 3, 3, 3}, 42), random_tensor({2}, 43)}) < tol);
  CHECK(gc([](auto &in) { return conv_transpose(in[0], in[1], in[2], 2, 1); },
           {random_tensor({1, 2, 3, 3}, 44), random_tensor({2, 3, 4, 4}, 45), random_tensor({3}, 46)}) < tol);
  CHECK(gc([](auto &in) { return conv_transpose(in[0], in[1], in[2], 2, 0); },
           {random_tensor({1, 2, 2, 2, 2}, 47), random_tensor({2, 1, 2, 2, 2}, 48), random_tensor({1}, 49)}) < tol);
  CHECK(gc([](auto &in) { return instance_norm(in[0], in[1], in[2]); },
           {random_tensor({2, 2, 3, 3}, 50), random_tensor({2}, 51), random_tensor({2}, 52)}) < tol);
  CHECK(gc([](auto &in) { return self_attention(in[0], in[1], in[2], in[3], in[4], 2); },
           {random_tensor({1, 3, 4}, 53), random_tensor({4, 4}, 54, 0.5), random_tensor({4, 4}, 55, 0.5),
            random_tensor({4, 4}, 56, 0.5), random_tensor({4, 4}, 57, 0.5)}) < tol);
  CHECK(gc([](auto &in) { return l1_loss(in[0], in[1]); }, {a, b}) < tol);
  CHECK(gc([](auto &in) { return mse_loss(in[0], in[1]); }, {a, b}) < tol);
}

TEST_CASE("composite conv -> norm -> attention -> sum gradient") {
  auto f = [](const std::vector<Tensor> &in) {
    Tensor h = conv(in[0], in[1], Tensor(), 1, 1);
    h = instance_norm(h, in[2], in[3]);
    h = permute(reshape(h, {1, 4, 9}), {0, 2, 1});
    return sum(self_attention(h, in[4], in[5], in[6], in[7], 2));
  };
  const auto r = gradcheck(f, {random_tensor({1, 2, 3, 3}, 60), random_tensor({4, 2, 3, 3}, 61, 0.5),
                               random_tensor({4}, 62), random_tensor({4}, 63), random_tensor({4, 4}, 64, 0.5),
                               random_tensor({4, 4}, 65, 0.5), random_tensor({4, 4}, 66, 0.5),
                               random_tensor({4, 4}, 67, 0.5)});
  CHECK(r.rel_error < 1e-4);
}

TEST_CASE("adam matches an independent recurrence") {
  AdamOptions opt;
  opt.lr = 0.05;
  opt.beta1 = 0.9;
  opt.beta2 = 0.999;
  opt.float32_state = false;
  std::vector<Tensor> p{Tensor::from({2}, {1.0, -2.0}, true)};
  AdamState st = make_adam_state(p, opt);
  double w[2] = {1.0, -2.0}, m[2] = {0, 0}, v[2] = {0, 0};
  for (int t = 1; t <= 200; ++t) {
    p[0].zero_grad();
    backward(sum(square(p[0])));
    adam_step(p, st);
    for (int i = 0; i < 2; ++i) {
      const double g = 2 * w[i];
      m[i] = 0.9 * m[i] + 0.1 * g;
      v[i] = 0.999 * v[i] + 0.001 * g * g;
      const double mh = m[i] / (1 - std::pow(0.9, t)), vh = v[i] / (1 - std::pow(0.999, t));
      w[i] -= 0.05 * mh / (std::sqrt(vh) + 1e-8);
    }
  }
  CHECK(p[0].values()[0] == doctest::Approx(w[0]).epsilon(1e-12));
  CHECK(p[0].values()[1] == doctest::Approx(w[1]).epsilon(1e-12));
  CHECK(std::abs(w[0]) < 0.1);

  // Zero gradients leave parameters unchanged; one step on w^2 descends.
  std::vector<Tensor> q{Tensor::from({1}, {1.0}, true)};
  AdamState s2 = make_adam_state(q, AdamOptions{});
  q[0].zero_grad();
  adam_step(q, s2);
  CHECK(q[0].values()[0] == 1.0);
  AdamOptions o3;
  o3.lr = 0.1;
  AdamState s3 = make_adam_state(q, o3);
  backward(sum(square(q[0])));
  adam_step(q, s3);
  CHECK(q[0].values()[0] < 1.0);
}

TEST_CASE("no-grad guard records nothing") {
  Tensor x = Tensor::from({2}, {1, 2}, true);
  NoGradGuard g;
  CHECK_FALSE(grad_enabled());
  const Tensor y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}
