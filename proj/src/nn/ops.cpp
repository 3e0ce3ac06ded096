#include "inpaint/nn/ops.hpp"

#include <cmath>
#include <numbers>

#include <Eigen/Core>

#include "inpaint/error.hpp"

namespace inpaint::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

void require_same(const Tensor &a, const Tensor &b, const char *op) {
  if (a.shape() != b.shape()) {
    fail(ErrorCode::ShapeMismatch, std::string(op) + ": " + shape_text(a.shape()) + " vs " +
                                       shape_text(b.shape()));
  }
}

std::vector<double> &pgrad(Node &self, std::size_t i) { return self.parents[i]->ensure_grad(); }
bool wants(Node &self, std::size_t i) { return self.parents[i]->requires_grad; }

/// Elementwise unary op: f(x) and df/dx evaluated at (x, f(x)).
template <typename F, typename D> Tensor unary(const Tensor &a, F f, D dfdx) {
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = f(in[i]);
  }
  return make_result(a.shape(), std::move(out), {a}, [dfdx](Node &self) {
    const auto &x = self.parents[0]->value;
    auto &gx = pgrad(self, 0);
    for (std::size_t i = 0; i < x.size(); ++i) {
      gx[i] += self.grad[i] * dfdx(x[i], self.value[i]);
    }
  });
}

} // namespace

Tensor add(const Tensor &a, const Tensor &b) {
  require_same(a, b, "add");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node &self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (!wants(self, p)) continue;
      auto &g = pgrad(self, p);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
  });
}

Tensor sub(const Tensor &a, const Tensor &b) {
  require_same(a, b, "sub");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node &self) {
    if (wants(self, 0)) {
      auto &g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto &g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor &a, const Tensor &b) {
  require_same(a, b, "mul");
  const auto x = a.values();
  const auto y = b.values();
  std::vector<double> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_result(a.shape(), std::move(out), {a, b}, [](Node &self) {
    const auto &x = self.parents[0]->value;
    const auto &y = self.parents[1]->value;
    if (wants(self, 0)) {
      auto &g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (wants(self, 1)) {
      auto &g = pgrad(self, 1);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor scale(const Tensor &a, double c) {
  return unary(a, [c](double x) { return c * x; }, [c](double, double) { return c; });
}

Tensor add_scalar(const Tensor &a, double c) {
  return unary(a, [c](double x) { return x + c; }, [](double, double) { return 1.0; });
}

Tensor square(const Tensor &a) {
  return unary(a, [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Tensor abs(const Tensor &a) {
  return unary(
      a, [](double x) { return std::fabs(x); },
      [](double x, double) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor relu(const Tensor &a) {
  return unary(
      a, [](double x) { return x > 0.0 ? x : 0.0; },
      [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Tensor leaky_relu(const Tensor &a, double slope) {
  return unary(
      a, [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Tensor gelu(const Tensor &a) {
  return unary(
      a, [](double x) { return 0.5 * x * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0)); },
      [](double x, double) {
        const double cdf = 0.5 * (1.0 + std::erf(x * std::numbers::sqrt2 / 2.0));
        const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
        return cdf + x * pdf;
      });
}

Tensor tanh(const Tensor &a) {
  return unary(
      a, [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Tensor sigmoid(const Tensor &a) {
  return unary(
      a, [](double x) { return 1.0 / (1.0 + std::exp(-x)); },
      [](double, double y) { return y * (1.0 - y); });
}

Tensor softplus(const Tensor &a) {
  return unary(
      a, [](double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::fabs(x))); },
      [](double x, double) { return 1.0 / (1.0 + std::exp(-x)); });
}

Tensor sum(const Tensor &a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s}, {a}, [](Node &self) {
    auto &g = pgrad(self, 0);
    for (auto &v : g) v += self.grad[0];
  });
}

Tensor mean(const Tensor &a) {
  const double n = static_cast<double>(a.numel());
  double s = 0.0;
  for (double v : a.values()) s += v;
  return make_result({1}, {s / n}, {a}, [n](Node &self) {
    auto &g = pgrad(self, 0);
    const double d = self.grad[0] / n;
    for (auto &v : g) v += d;
  });
}

Tensor reshape(const Tensor &a, Shape shape) {
  if (numel(shape) != a.numel()) {
    fail(ErrorCode::ShapeMismatch,
         "reshape " + shape_text(a.shape()) + " to " + shape_text(shape));
  }
  const auto v = a.values();
  return make_result(std::move(shape), std::vector<double>(v.begin(), v.end()), {a},
                     [](Node &self) {
                       auto &g = pgrad(self, 0);
                       for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
                     });
}

Tensor permute(const Tensor &a, const std::vector<int> &axes) {
  const int r = a.rank();
  if (static_cast<int>(axes.size()) != r) {
    fail(ErrorCode::ShapeMismatch, "permute axes do not match rank");
  }
  std::vector<std::int64_t> in_stride(static_cast<std::size_t>(r), 1);
  for (int i = r - 2; i >= 0; --i) in_stride[i] = in_stride[i + 1] * a.shape()[i + 1];
  Shape out_shape(static_cast<std::size_t>(r));
  std::vector<std::int64_t> src_stride(static_cast<std::size_t>(r));
  std::vector<bool> used(static_cast<std::size_t>(r), false);
  for (int i = 0; i < r; ++i) {
    const int ax = axes[i];
    if (ax < 0 || ax >= r || used[ax]) {
      fail(ErrorCode::ShapeMismatch, "permute axes are not a permutation");
    }
    used[ax] = true;
    out_shape[i] = a.shape()[ax];
    src_stride[i] = in_stride[ax];
  }
  // Gather map: output flat index -> input flat index.
  const std::int64_t n = a.numel();
  auto index = std::make_shared<std::vector<std::int64_t>>(static_cast<std::size_t>(n));
  std::vector<std::int64_t> counter(static_cast<std::size_t>(r), 0);
  std::int64_t src = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    (*index)[o] = src;
    for (int d = r - 1; d >= 0; --d) {
      ++counter[d];
      src += src_stride[d];
      if (counter[d] < out_shape[d]) break;
      src -= src_stride[d] * counter[d];
      counter[d] = 0;
    }
  }
  const auto in = a.values();
  std::vector<double> out(static_cast<std::size_t>(n));
  for (std::int64_t o = 0; o < n; ++o) out[o] = in[(*index)[o]];
  return make_result(std::move(out_shape), std::move(out), {a}, [index](Node &self) {
    auto &g = pgrad(self, 0);
    for (std::size_t o = 0; o < index->size(); ++o) g[(*index)[o]] += self.grad[o];
  });
}

Tensor concat(const std::vector<Tensor> &parts, int axis) {
  if (parts.empty()) {
    fail(ErrorCode::ShapeMismatch, "concat of nothing");
  }
  const Shape &first = parts.front().shape();
  const int r = static_cast<int>(first.size());
  if (axis < 0) axis += r;
  if (axis < 0 || axis >= r) {
    fail(ErrorCode::IndexOutOfRange, "concat axis out of range");
  }
  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= first[i];
  for (int i = axis + 1; i < r; ++i) inner *= first[i];
  Shape out_shape = first;
  out_shape[axis] = 0;
  std::vector<std::int64_t> widths;
  for (const auto &p : parts) {
    const Shape &s = p.shape();
    bool ok = static_cast<int>(s.size()) == r;
    for (int i = 0; ok && i < r; ++i) ok = (i == axis) || s[i] == first[i];
    if (!ok) {
      fail(ErrorCode::ShapeMismatch, "concat " + shape_text(first) + " with " + shape_text(s));
    }
    widths.push_back(s[axis] * inner);
    out_shape[axis] += s[axis];
  }
  const std::int64_t row = out_shape[axis] * inner;
  std::vector<double> out(static_cast<std::size_t>(outer * row));
  std::int64_t offset = 0;
  for (std::size_t p = 0; p < parts.size(); ++p) {
    const auto v = parts[p].values();
    for (std::int64_t o = 0; o < outer; ++o) {
      std::copy_n(v.begin() + o * widths[p], widths[p], out.begin() + o * row + offset);
    }
    offset += widths[p];
  }
  return make_result(std::move(out_shape), std::move(out), parts,
                     [widths, outer, row](Node &self) {
                       std::int64_t offset = 0;
                       for (std::size_t p = 0; p < widths.size(); ++p) {
                         if (wants(self, p)) {
                           auto &g = pgrad(self, p);
                           for (std::int64_t o = 0; o < outer; ++o) {
                             for (std::int64_t i = 0; i < widths[p]; ++i) {
                               g[o * widths[p] + i] += self.grad[o * row + offset + i];
                             }
                           }
                         }
                         offset += widths[p];
                       }
                     });
}

Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b) {
  if (w.rank() != 2 || x.dim(-1) != w.dim(0)) {
    fail(ErrorCode::ShapeMismatch, "linear " + shape_text(x.shape()) + " x " + shape_text(w.shape()));
  }
  const std::int64_t k = w.dim(0);
  const std::int64_t m = w.dim(1);
  if (b.defined() && (b.numel() != m)) {
    fail(ErrorCode::ShapeMismatch, "linear bias must have " + std::to_string(m) + " entries");
  }
  const std::int64_t rows = x.numel() / k;
  Shape out_shape = x.shape();
  out_shape.back() = m;
  std::vector<double> out(static_cast<std::size_t>(rows * m));
  MapMat(out.data(), rows, m).noalias() =
      ConstMapMat(x.values().data(), rows, k) * ConstMapMat(w.values().data(), k, m);
  if (b.defined()) {
    const auto bv = b.values();
    for (std::int64_t r = 0; r < rows; ++r)
      for (std::int64_t j = 0; j < m; ++j) out[r * m + j] += bv[j];
  }
  std::vector<Tensor> parents = {x, w};
  if (b.defined()) parents.push_back(b);
  const bool has_bias = b.defined();
  return make_result(std::move(out_shape), std::move(out), parents,
                     [rows, k, m, has_bias](Node &self) {
                       ConstMapMat gout(self.grad.data(), rows, m);
                       if (wants(self, 0)) {
                         MapMat gx(pgrad(self, 0).data(), rows, k);
                         gx.noalias() += gout * ConstMapMat(self.parents[1]->value.data(), k, m).transpose();
                       }
                       if (wants(self, 1)) {
                         MapMat gw(pgrad(self, 1).data(), k, m);
                         gw.noalias() += ConstMapMat(self.parents[0]->value.data(), rows, k).transpose() * gout;
                       }
                       if (has_bias && wants(self, 2)) {
                         auto &gb = pgrad(self, 2);
                         for (std::int64_t r = 0; r < rows; ++r)
                           for (std::int64_t j = 0; j < m; ++j) gb[j] += self.grad[r * m + j];
                       }
                     });
}

Tensor bmm(const Tensor &a, const Tensor &b, bool transpose_b) {
  if (a.rank() != 3 || b.rank() != 3 || a.dim(0) != b.dim(0)) {
    fail(ErrorCode::ShapeMismatch, "bmm " + shape_text(a.shape()) + " x " + shape_text(b.shape()));
  }
  const std::int64_t batch = a.dim(0), m = a.dim(1), k = a.dim(2);
  const std::int64_t n = transpose_b ? b.dim(1) : b.dim(2);
  const std::int64_t kb = transpose_b ? b.dim(2) : b.dim(1);
  if (kb != k) {
    fail(ErrorCode::ShapeMismatch, "bmm inner dims " + std::to_string(k) + " vs " + std::to_string(kb));
  }
  std::vector<double> out(static_cast<std::size_t>(batch * m * n));
  for (std::int64_t i = 0; i < batch; ++i) {
    ConstMapMat am(a.values().data() + i * m * k, m, k);
    MapMat om(out.data() + i * m * n, m, n);
    if (transpose_b) {
      om.noalias() = am * ConstMapMat(b.values().data() + i * n * k, n, k).transpose();
    } else {
      om.noalias() = am * ConstMapMat(b.values().data() + i * k * n, k, n);
    }
  }
  return make_result({batch, m, n}, std::move(out), {a, b},
                     [batch, m, n, k, transpose_b](Node &self) {
                       const double *av = self.parents[0]->value.data();
                       const double *bv = self.parents[1]->value.data();
                       const bool ga = wants(self, 0), gb = wants(self, 1);
                       double *gav = ga ? pgrad(self, 0).data() : nullptr;
                       double *gbv = gb ? pgrad(self, 1).data() : nullptr;
                       for (std::int64_t i = 0; i < batch; ++i) {
                         ConstMapMat go(self.grad.data() + i * m * n, m, n);
                         if (transpose_b) {
                           // out = A B^T with B [n, k]
                           if (ga) MapMat(gav + i * m * k, m, k).noalias() += go * ConstMapMat(bv + i * n * k, n, k);
                           if (gb) MapMat(gbv + i * n * k, n, k).noalias() += go.transpose() * ConstMapMat(av + i * m * k, m, k);
                         } else {
                           if (ga) MapMat(gav + i * m * k, m, k).noalias() += go * ConstMapMat(bv + i * k * n, k, n).transpose();
                           if (gb) MapMat(gbv + i * k * n, k, n).noalias() += ConstMapMat(av + i * m * k, m, k).transpose() * go;
                         }
                       }
                     });
}

Tensor softmax_last(const Tensor &a) {
  const std::int64_t width = a.dim(-1);
  const std::int64_t rows = a.numel() / width;
  const auto in = a.values();
  std::vector<double> out(in.size());
  for (std::int64_t r = 0; r < rows; ++r) {
    const double *x = in.data() + r * width;
    double *y = out.data() + r * width;
    double mx = x[0];
    for (std::int64_t j = 1; j < width; ++j) mx = std::max(mx, x[j]);
    double s = 0.0;
    for (std::int64_t j = 0; j < width; ++j) {
      y[j] = std::exp(x[j] - mx);
      s += y[j];
    }
    for (std::int64_t j = 0; j < width; ++j) y[j] /= s;
  }
  return make_result(a.shape(), std::move(out), {a}, [rows, width](Node &self) {
    auto &g = pgrad(self, 0);
    for (std::int64_t r = 0; r < rows; ++r) {
      const double *y = self.value.data() + r * width;
      const double *gy = self.grad.data() + r * width;
      double dot = 0.0;
      for (std::int64_t j = 0; j < width; ++j) dot += gy[j] * y[j];
      for (std::int64_t j = 0; j < width; ++j) g[r * width + j] += y[j] * (gy[j] - dot);
    }
  });
}

Tensor add_channel(const Tensor &x, const Tensor &e) {
  if (x.rank() < 3 || e.rank() != 2 || e.dim(0) != x.dim(0) || e.dim(1) != x.dim(1)) {
    fail(ErrorCode::ShapeMismatch,
         "add_channel " + shape_text(x.shape()) + " + " + shape_text(e.shape()));
  }
  const std::int64_t nc = x.dim(0) * x.dim(1);
  const std::int64_t spatial = x.numel() / nc;
  const auto xv = x.values();
  const auto ev = e.values();
  std::vector<double> out(xv.size());
  for (std::int64_t c = 0; c < nc; ++c)
    for (std::int64_t s = 0; s < spatial; ++s) out[c * spatial + s] = xv[c * spatial + s] + ev[c];
  return make_result(x.shape(), std::move(out), {x, e}, [nc, spatial](Node &self) {
    if (wants(self, 0)) {
      auto &g = pgrad(self, 0);
      for (std::size_t i = 0; i < g.size(); ++i) g[i] += self.grad[i];
    }
    if (wants(self, 1)) {
      auto &g = pgrad(self, 1);
      for (std::int64_t c = 0; c < nc; ++c) {
        double s = 0.0;
        for (std::int64_t i = 0; i < spatial; ++i) s += self.grad[c * spatial + i];
        g[c] += s;
      }
    }
  });
}

Tensor instance_norm(const Tensor &x, const Tensor &gain, const Tensor &shift, double eps) {
  if (x.rank() < 3 || gain.numel() != x.dim(1) || shift.numel() != x.dim(1)) {
    fail(ErrorCode::ShapeMismatch, "instance_norm " + shape_text(x.shape()));
  }
  const std::int64_t n = x.dim(0), c = x.dim(1);
  const std::int64_t spatial = x.numel() / (n * c);
  const auto xv = x.values();
  const auto gv = gain.values();
  const auto sv = shift.values();
  std::vector<double> out(xv.size());
  // Saved per (sample, channel): normalized values and inverse std.
  auto xhat = std::make_shared<std::vector<double>>(xv.size());
  auto inv_std = std::make_shared<std::vector<double>>(static_cast<std::size_t>(n * c));
  for (std::int64_t nc = 0; nc < n * c; ++nc) {
    const double *p = xv.data() + nc * spatial;
    double mu = 0.0;
    for (std::int64_t i = 0; i < spatial; ++i) mu += p[i];
    mu /= static_cast<double>(spatial);
    double var = 0.0;
    for (std::int64_t i = 0; i < spatial; ++i) var += (p[i] - mu) * (p[i] - mu);
    var /= static_cast<double>(spatial);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[nc] = is;
    const std::int64_t ch = nc % c;
    for (std::int64_t i = 0; i < spatial; ++i) {
      const double h = (p[i] - mu) * is;
      (*xhat)[nc * spatial + i] = h;
      out[nc * spatial + i] = gv[ch] * h + sv[ch];
    }
  }
  return make_result(x.shape(), std::move(out), {x, gain, shift},
                     [n, c, spatial, xhat, inv_std](Node &self) {
                       const auto &gv = self.parents[1]->value;
                       const double m = static_cast<double>(spatial);
                       for (std::int64_t nc = 0; nc < n * c; ++nc) {
                         const std::int64_t ch = nc % c;
                         const double *gy = self.grad.data() + nc * spatial;
                         const double *h = xhat->data() + nc * spatial;
                         double sum_gy = 0.0, sum_gy_h = 0.0;
                         for (std::int64_t i = 0; i < spatial; ++i) {
                           sum_gy += gy[i];
                           sum_gy_h += gy[i] * h[i];
                         }
                         if (wants(self, 1)) pgrad(self, 1)[ch] += sum_gy_h;
                         if (wants(self, 2)) pgrad(self, 2)[ch] += sum_gy;
                         if (wants(self, 0)) {
                           auto &gx = pgrad(self, 0);
                           const double k = gv[ch] * (*inv_std)[nc] / m;
                           for (std::int64_t i = 0; i < spatial; ++i) {
                             gx[nc * spatial + i] += k * (m * gy[i] - sum_gy - h[i] * sum_gy_h);
                           }
                         }
                       }
                     });
}

namespace {

// [N, T, D] -> [N*H, T, D/H]
Tensor split_heads(const Tensor &t, std::int64_t heads) {
  const std::int64_t n = t.dim(0), tokens = t.dim(1), d = t.dim(2);
  Tensor r = reshape(t, {n, tokens, heads, d / heads});
  r = permute(r, {0, 2, 1, 3});
  return reshape(r, {n * heads, tokens, d / heads});
}

void check_attention(const Tensor &x, const Tensor &wq, int heads) {
  if (x.rank() != 3 || heads < 1 || x.dim(2) % heads != 0) {
    fail(ErrorCode::ShapeMismatch, "attention input " + shape_text(x.shape()) +
                                       " with " + std::to_string(heads) + " heads");
  }
  if (wq.rank() != 2 || wq.dim(0) != x.dim(2) || wq.dim(1) != x.dim(2)) {
    fail(ErrorCode::ShapeMismatch, "attention projection must be [D, D]");
  }
}

Tensor attention_probs(const Tensor &x, const Tensor &wq, const Tensor &wk, int heads) {
  const double dh = static_cast<double>(x.dim(2) / heads);
  const Tensor q = split_heads(linear(x, wq), heads);
  const Tensor k = split_heads(linear(x, wk), heads);
  return softmax_last(scale(bmm(q, k, true), 1.0 / std::sqrt(dh)));
}

} // namespace

Tensor self_attention(const Tensor &x, const Tensor &wq, const Tensor &wk, const Tensor &wv,
                      const Tensor &wo, int heads) {
  check_attention(x, wq, heads);
  const std::int64_t n = x.dim(0), tokens = x.dim(1), d = x.dim(2);
  const Tensor probs = attention_probs(x, wq, wk, heads);
  const Tensor v = split_heads(linear(x, wv), heads);
  Tensor o = bmm(probs, v);
  o = reshape(o, {n, heads, tokens, d / heads});
  o = permute(o, {0, 2, 1, 3});
  o = reshape(o, {n, tokens, d});
  return linear(o, wo);
}

Tensor attention_weights(const Tensor &x, const Tensor &wq, const Tensor &wk, int heads) {
  check_attention(x, wq, heads);
  const Tensor p = attention_probs(x.detach(), wq.detach(), wk.detach(), heads);
  return reshape(p, {x.dim(0), heads, x.dim(1), x.dim(1)});
}

Tensor l1_loss(const Tensor &pred, const Tensor &target) { return mean(abs(sub(pred, target))); }

Tensor mse_loss(const Tensor &pred, const Tensor &target) {
  return mean(square(sub(pred, target)));
}

} // namespace inpaint::nn
