#pragma once

#include <span>
#include <vector>

#include "inpaint/nn/tensor.hpp"

namespace inpaint::nn {

// Elementwise (equal shapes).
Tensor add(const Tensor &a, const Tensor &b);
Tensor sub(const Tensor &a, const Tensor &b);
Tensor mul(const Tensor &a, const Tensor &b);
Tensor scale(const Tensor &a, double c);
Tensor add_scalar(const Tensor &a, double c);
Tensor square(const Tensor &a);
Tensor abs(const Tensor &a);

// Activations.
Tensor relu(const Tensor &a);
Tensor leaky_relu(const Tensor &a, double slope = 0.2);
/// Exact form 0.5 x (1 + erf(x / sqrt 2)).
Tensor gelu(const Tensor &a);
Tensor tanh(const Tensor &a);
Tensor sigmoid(const Tensor &a);
/// log(1 + e^x), computed stably.
Tensor softplus(const Tensor &a);

// Reductions to a one-element tensor.
Tensor sum(const Tensor &a);
Tensor mean(const Tensor &a);

// Layout.
Tensor reshape(const Tensor &a, Shape shape);
Tensor permute(const Tensor &a, const std::vector<int> &axes);
Tensor concat(const std::vector<Tensor> &parts, int axis);

/// x[..., K] * w[K, M] (+ b[M]).
Tensor linear(const Tensor &x, const Tensor &w, const Tensor &b = {});
/// Batched a[B, M, K] * b[B, K, N], or b[B, N, K] transposed when transpose_b.
Tensor bmm(const Tensor &a, const Tensor &b, bool transpose_b = false);
Tensor softmax_last(const Tensor &a);

/// x[N, C, spatial...] + e[N, C] broadcast over spatial positions.
Tensor add_channel(const Tensor &x, const Tensor &e);

/// Convolution over 2 (x is [N,C,H,W]) or 3 (x is [N,C,D,H,W]) spatial axes.
/// Kernel [Cout, Cin, k...]; bias [Cout] or undefined.
/// Output extent per axis: floor((in + 2 pad - k) / stride) + 1.
Tensor conv(const Tensor &x, const Tensor &kernel, const Tensor &bias, int stride = 1,
            int padding = 0);

/// Transposed convolution, the adjoint of conv with respect to its input.
/// Kernel [Cin, Cout, k...]; output extent (in - 1) stride + k - 2 pad.
Tensor conv_transpose(const Tensor &x, const Tensor &kernel, const Tensor &bias, int stride = 1,
                      int padding = 0);

/// Per (sample, channel) normalization over spatial axes, population
/// variance, then gain[C] * xhat + shift[C].
Tensor instance_norm(const Tensor &x, const Tensor &gain, const Tensor &shift, double eps = 1e-5);

/// Multi-head scaled dot-product self-attention over x[N, T, D]:
/// softmax(Q K^T / sqrt(D/heads)) V per head, heads concatenated, then Wo.
/// Projections are [D, D] and bias-free.
Tensor self_attention(const Tensor &x, const Tensor &wq, const Tensor &wk, const Tensor &wv,
                      const Tensor &wo, int heads);

/// Attention probabilities [N, heads, T, T] (no graph).
Tensor attention_weights(const Tensor &x, const Tensor &wq, const Tensor &wk, int heads);

// Losses.
Tensor l1_loss(const Tensor &pred, const Tensor &target);
Tensor mse_loss(const Tensor &pred, const Tensor &target);

} // namespace inpaint::nn
