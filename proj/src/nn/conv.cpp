// Convolution and transposed convolution via chunked im2col + GEMM.
//
// Both ops share one geometry: a "wide" grid (conv input / transposed-conv
// output) and a "narrow" grid (conv output / transposed-conv input). 2D
// problems are mapped onto the 3D engine with a unit depth axis.

#include <algorithm>
#include <array>
#include <memory>

#include <Eigen/Core>

#include "inpaint/error.hpp"
#include "inpaint/nn/ops.hpp"

namespace inpaint::nn {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;
using StridedMap = Eigen::Map<RowMat, 0, Eigen::OuterStride<>>;
using ConstStridedMap = Eigen::Map<const RowMat, 0, Eigen::OuterStride<>>;

constexpr std::int64_t kChunkColumns = 8192;

struct Geometry {
  std::int64_t channels = 0; ///< channels on the wide side
  std::array<std::int64_t, 3> wide{};
  std::array<std::int64_t, 3> narrow{};
  std::array<std::int64_t, 3> kernel{};
  std::array<std::int64_t, 3> stride{};
  std::array<std::int64_t, 3> pad{};

  std::int64_t wide_size() const { return wide[0] * wide[1] * wide[2]; }
  std::int64_t narrow_size() const { return narrow[0] * narrow[1] * narrow[2]; }
  std::int64_t kernel_size() const { return kernel[0] * kernel[1] * kernel[2]; }
  std::int64_t rows() const { return channels * kernel_size(); }
  std::int64_t narrow_rows() const { return narrow[0] * narrow[1]; } ///< (d, h) lines
  std::int64_t chunk_lines() const {
    return std::max<std::int64_t>(1, kChunkColumns / narrow[2]);
  }
};

/// cols[r, j] = wide[c, narrow position j mapped through kernel tap r] for
/// narrow lines [q0, q1).
void im2col(const Geometry &g, const double *wide, std::int64_t q0, std::int64_t q1,
            double *cols) {
  const std::int64_t width = (q1 - q0) * g.narrow[2];
  const std::int64_t kk = g.kernel_size();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    const double *plane = wide + c * g.wide_size();
    for (std::int64_t t = 0; t < kk; ++t) {
      const std::int64_t ka = t / (g.kernel[1] * g.kernel[2]);
      const std::int64_t kb = (t / g.kernel[2]) % g.kernel[1];
      const std::int64_t ke = t % g.kernel[2];
      double *row = cols + (c * kk + t) * width;
      for (std::int64_t q = q0; q < q1; ++q) {
        const std::int64_t od = q / g.narrow[1];
        const std::int64_t oh = q % g.narrow[1];
        const std::int64_t id = od * g.stride[0] - g.pad[0] + ka;
        const std::int64_t ih = oh * g.stride[1] - g.pad[1] + kb;
        double *dst = row + (q - q0) * g.narrow[2];
        if (id < 0 || id >= g.wide[0] || ih < 0 || ih >= g.wide[1]) {
          std::fill_n(dst, g.narrow[2], 0.0);
          continue;
        }
        const double *src = plane + (id * g.wide[1] + ih) * g.wide[2];
        for (std::int64_t ow = 0; ow < g.narrow[2]; ++ow) {
          const std::int64_t iw = ow * g.stride[2] - g.pad[2] + ke;
          dst[ow] = (iw >= 0 && iw < g.wide[2]) ? src[iw] : 0.0;
        }
      }
    }
  }
}

/// Adjoint of im2col: accumulates cols back into the wide grid.
void col2im(const Geometry &g, const double *cols, std::int64_t q0, std::int64_t q1,
            double *wide) {
  const std::int64_t width = (q1 - q0) * g.narrow[2];
  const std::int64_t kk = g.kernel_size();
  for (std::int64_t c = 0; c < g.channels; ++c) {
    double *plane = wide + c * g.wide_size();
    for (std::int64_t t = 0; t < kk; ++t) {
      const std::int64_t ka = t / (g.kernel[1] * g.kernel[2]);
      const std::int64_t kb = (t / g.kernel[2]) % g.kernel[1];
      const std::int64_t ke = t % g.kernel[2];
      const double *row = cols + (c * kk + t) * width;
      for (std::int64_t q = q0; q < q1; ++q) {
        const std::int64_t od = q / g.narrow[1];
        const std::int64_t oh = q % g.narrow[1];
        const std::int64_t id = od * g.stride[0] - g.pad[0] + ka;
        const std::int64_t ih = oh * g.stride[1] - g.pad[1] + kb;
        if (id < 0 || id >= g.wide[0] || ih < 0 || ih >= g.wide[1]) {
          continue;
        }
        const double *src = row + (q - q0) * g.narrow[2];
        double *dst = plane + (id * g.wide[1] + ih) * g.wide[2];
        for (std::int64_t ow = 0; ow < g.narrow[2]; ++ow) {
          const std::int64_t iw = ow * g.stride[2] - g.pad[2] + ke;
          if (iw >= 0 && iw < g.wide[2]) {
            dst[iw] += src[ow];
          }
        }
      }
    }
  }
}

struct Problem {
  Geometry geom;
  std::int64_t batch = 0;
  std::int64_t narrow_channels = 0;
  int spatial_rank = 0;
};

/// Spatial extents padded to 3 axes (depth 1 for 2D).
std::array<std::int64_t, 3> spatial3(const Shape &s, int rank) {
  if (rank == 2) return {1, s[2], s[3]};
  return {s[2], s[3], s[4]};
}

int spatial_rank_of(const Tensor &x, const char *op) {
  if (x.rank() == 4) return 2;
  if (x.rank() == 5) return 3;
  fail(ErrorCode::ShapeMismatch,
       std::string(op) + " expects [N,C,H,W] or [N,C,D,H,W], got " + shape_text(x.shape()));
}

void fill_kernel_geometry(Geometry &g, const Tensor &kernel, int rank, int stride, int padding,
                          const char *op) {
  if (kernel.rank() != rank + 2) {
    fail(ErrorCode::ShapeMismatch, std::string(op) + " kernel rank mismatch: " +
                                       shape_text(kernel.shape()));
  }
  if (stride < 1 || padding < 0) {
    fail(ErrorCode::ShapeMismatch, std::string(op) + " needs stride >= 1 and padding >= 0");
  }
  g.kernel = spatial3(kernel.shape(), rank);
  g.stride = {rank == 2 ? 1 : stride, stride, stride};
  g.pad = {rank == 2 ? 0 : padding, padding, padding};
}

Shape output_shape(std::int64_t batch, std::int64_t channels,
                   const std::array<std::int64_t, 3> &sp, int rank) {
  if (rank == 2) return {batch, channels, sp[1], sp[2]};
  return {batch, channels, sp[0], sp[1], sp[2]};
}

void add_bias(const double *bias, std::int64_t channels, std::int64_t size, double *out) {
  for (std::int64_t c = 0; c < channels; ++c)
    for (std::int64_t i = 0; i < size; ++i) out[c * size + i] += bias[c];
}

void accumulate_bias_grad(const double *gout, std::int64_t channels, std::int64_t size,
                          double *gbias) {
  for (std::int64_t c = 0; c < channels; ++c) {
    double s = 0.0;
    for (std::int64_t i = 0; i < size; ++i) s += gout[c * size + i];
    gbias[c] += s;
  }
}

/// narrow[Cn, P] = W[Cn, rows] * im2col(wide)
void gather_forward(const Geometry &g, const double *w, std::int64_t cn, const double *wide,
                    double *narrow, std::vector<double> &cols) {
  const std::int64_t p = g.narrow_size();
  ConstMapMat wm(w, cn, g.rows());
  for (std::int64_t q0 = 0; q0 < g.narrow_rows(); q0 += g.chunk_lines()) {
    const std::int64_t q1 = std::min(g.narrow_rows(), q0 + g.chunk_lines());
    const std::int64_t width = (q1 - q0) * g.narrow[2];
    cols.resize(static_cast<std::size_t>(g.rows() * width));
    im2col(g, wide, q0, q1, cols.data());
    StridedMap out(narrow + q0 * g.narrow[2], cn, width, Eigen::OuterStride<>(p));
    out.noalias() = wm * ConstMapMat(cols.data(), g.rows(), width);
  }
}

/// wide += col2im(W^T * narrow); optionally gW += narrow * im2col(wide_src)^T.
void scatter_backward(const Geometry &g, const double *w, std::int64_t cn, const double *narrow,
                      double *wide_grad, std::vector<double> &cols) {
  const std::int64_t p = g.narrow_size();
  ConstMapMat wm(w, cn, g.rows());
  for (std::int64_t q0 = 0; q0 < g.narrow_rows(); q0 += g.chunk_lines()) {
    const std::int64_t q1 = std::min(g.narrow_rows(), q0 + g.chunk_lines());
    const std::int64_t width = (q1 - q0) * g.narrow[2];
    cols.resize(static_cast<std::size_t>(g.rows() * width));
    ConstStridedMap nm(narrow + q0 * g.narrow[2], cn, width, Eigen::OuterStride<>(p));
    MapMat(cols.data(), g.rows(), width).noalias() = wm.transpose() * nm;
    col2im(g, cols.data(), q0, q1, wide_grad);
  }
}

/// gW[Cn, rows] += narrow[Cn, P] * im2col(wide)^T
void weight_grad(const Geometry &g, const double *narrow, std::int64_t cn, const double *wide,
                 double *gw, std::vector<double> &cols) {
  const std::int64_t p = g.narrow_size();
  MapMat gwm(gw, cn, g.rows());
  for (std::int64_t q0 = 0; q0 < g.narrow_rows(); q0 += g.chunk_lines()) {
    const std::int64_t q1 = std::min(g.narrow_rows(), q0 + g.chunk_lines());
    const std::int64_t width = (q1 - q0) * g.narrow[2];
    cols.resize(static_cast<std::size_t>(g.rows() * width));
    im2col(g, wide, q0, q1, cols.data());
    ConstStridedMap nm(narrow + q0 * g.narrow[2], cn, width, Eigen::OuterStride<>(p));
    gwm.noalias() += nm * ConstMapMat(cols.data(), g.rows(), width).transpose();
  }
}

} // namespace

Tensor conv(const Tensor &x, const Tensor &kernel, const Tensor &bias, int stride, int padding) {
  const int rank = spatial_rank_of(x, "conv");
  Geometry g;
  fill_kernel_geometry(g, kernel, rank, stride, padding, "conv");
  const std::int64_t batch = x.dim(0);
  const std::int64_t cin = x.dim(1);
  const std::int64_t cout = kernel.dim(0);
  if (kernel.dim(1) != cin) {
    fail(ErrorCode::ShapeMismatch, "conv kernel expects " + std::to_string(kernel.dim(1)) +
                                       " input channels, input has " + std::to_string(cin));
  }
  if (bias.defined() && bias.numel() != cout) {
    fail(ErrorCode::ShapeMismatch, "conv bias must have Cout entries");
  }
  g.channels = cin;
  g.wide = spatial3(x.shape(), rank);
  for (int a = 0; a < 3; ++a) {
    const std::int64_t span = g.wide[a] + 2 * g.pad[a] - g.kernel[a];
    if (span < 0) {
      fail(ErrorCode::ShapeMismatch, "conv kernel larger than padded input " + shape_text(x.shape()));
    }
    g.narrow[a] = span / g.stride[a] + 1;
  }
  const std::int64_t in_size = cin * g.wide_size();
  const std::int64_t out_size = cout * g.narrow_size();
  std::vector<double> out(static_cast<std::size_t>(batch * out_size));
  std::vector<double> cols;
  for (std::int64_t n = 0; n < batch; ++n) {
    gather_forward(g, kernel.values().data(), cout, x.values().data() + n * in_size,
                   out.data() + n * out_size, cols);
    if (bias.defined()) {
      add_bias(bias.values().data(), cout, g.narrow_size(), out.data() + n * out_size);
    }
  }
  std::vector<Tensor> parents = {x, kernel};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result(output_shape(batch, cout, g.narrow, rank), std::move(out), parents,
                     [g, batch, cout, in_size, out_size, has_bias](Node &self) {
                       const double *w = self.parents[1]->value.data();
                       const double *xv = self.parents[0]->value.data();
                       std::vector<double> cols;
                       for (std::int64_t n = 0; n < batch; ++n) {
                         const double *gout = self.grad.data() + n * out_size;
                         if (self.parents[0]->requires_grad) {
                           scatter_backward(g, w, cout, gout,
                                            self.parents[0]->ensure_grad().data() + n * in_size, cols);
                         }
                         if (self.parents[1]->requires_grad) {
                           weight_grad(g, gout, cout, xv + n * in_size,
                                       self.parents[1]->ensure_grad().data(), cols);
                         }
                         if (has_bias && self.parents[2]->requires_grad) {
                           accumulate_bias_grad(gout, cout, g.narrow_size(),
                                                self.parents[2]->ensure_grad().data());
                         }
                       }
                     });
}

Tensor conv_transpose(const Tensor &x, const Tensor &kernel, const Tensor &bias, int stride,
                      int padding) {
  const int rank = spatial_rank_of(x, "conv_transpose");
  Geometry g;
  fill_kernel_geometry(g, kernel, rank, stride, padding, "conv_transpose");
  const std::int64_t batch = x.dim(0);
  const std::int64_t cin = x.dim(1);
  const std::int64_t cout = kernel.dim(1);
  if (kernel.dim(0) != cin) {
    fail(ErrorCode::ShapeMismatch, "conv_transpose kernel expects " + std::to_string(kernel.dim(0)) +
                                       " input channels, input has " + std::to_string(cin));
  }
  if (bias.defined() && bias.numel() != cout) {
    fail(ErrorCode::ShapeMismatch, "conv_transpose bias must have Cout entries");
  }
  g.channels = cout;
  g.narrow = spatial3(x.shape(), rank);
  for (int a = 0; a < 3; ++a) {
    g.wide[a] = (g.narrow[a] - 1) * g.stride[a] + g.kernel[a] - 2 * g.pad[a];
    if (g.wide[a] < 1) {
      fail(ErrorCode::ShapeMismatch, "conv_transpose output extent would be < 1");
    }
  }
  const std::int64_t in_size = cin * g.narrow_size();
  const std::int64_t out_size = cout * g.wide_size();
  std::vector<double> out(static_cast<std::size_t>(batch * out_size), 0.0);
  std::vector<double> cols;
  for (std::int64_t n = 0; n < batch; ++n) {
    scatter_backward(g, kernel.values().data(), cin, x.values().data() + n * in_size,
                     out.data() + n * out_size, cols);
    if (bias.defined()) {
      add_bias(bias.values().data(), cout, g.wide_size(), out.data() + n * out_size);
    }
  }
  std::vector<Tensor> parents = {x, kernel};
  if (bias.defined()) parents.push_back(bias);
  const bool has_bias = bias.defined();
  return make_result(output_shape(batch, cout, g.wide, rank), std::move(out), parents,
                     [g, batch, cin, cout, in_size, out_size, has_bias](Node &self) {
                       const double *w = self.parents[1]->value.data();
                       const double *xv = self.parents[0]->value.data();
                       std::vector<double> cols;
                       for (std::int64_t n = 0; n < batch; ++n) {
                         const double *gout = self.grad.data() + n * out_size;
                         if (self.parents[0]->requires_grad) {
                           // d x = W * im2col(d out)
                           std::vector<double> tmp(static_cast<std::size_t>(in_size));
                           gather_forward(g, w, cin, gout, tmp.data(), cols);
                           auto &gx = self.parents[0]->ensure_grad();
                           for (std::int64_t i = 0; i < in_size; ++i) gx[n * in_size + i] += tmp[i];
                         }
                         if (self.parents[1]->requires_grad) {
                           weight_grad(g, xv + n * in_size, cin, gout,
                                       self.parents[1]->ensure_grad().data(), cols);
                         }
                         if (has_bias && self.parents[2]->requires_grad) {
                           accumulate_bias_grad(gout, cout, g.wide_size(),
                                                self.parents[2]->ensure_grad().data());
                         }
                       }
                     });
}

} // namespace inpaint::nn
