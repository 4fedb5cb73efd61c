#pragma once

#include <cstddef>
#include <span>

#include "focusnas/tape.hpp"

/// Differentiable primitives. Every op validates shapes, records its
/// backward rule on the tape of its inputs, and reduces in a fixed order.
namespace focusnas::ops {

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double factor);
/// a[m x n] + bias[n] broadcast over rows.
Var add_bias(Var a, Var bias);

/// tanh-approximated GELU: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Var gelu(Var x);
Var sigmoid(Var x);
Var tanh(Var x);

/// Row-wise normalization of x[n x e] followed by the affine gamma/beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-5);

Var softmax_rows(Var x);
Var log_softmax_rows(Var x);

/// Mean over the batch of -log softmax(logits)[label].
Var cross_entropy(Var logits, std::span<const int> labels);

/// Per-channel 3x3 convolution with zero padding. `grid` is [h x w x c] or
/// [b x h x w x c]; `kernel` holds 9*c values with channels last.
Var depthwise_conv3x3(Var grid, Var kernel, Var bias);

/// Multi-head self-attention core. `qkv` is [batch*tokens x 3*heads*head_dim]
/// grouped by head: head h owns columns [3*h*head_dim, 3*(h+1)*head_dim) as
/// [q | k | v]. The result is softmax(q k^T / sqrt(head_dim)) v per
/// (sample, head), written to columns [h*head_dim, (h+1)*head_dim) of a
/// [batch*tokens x heads*head_dim] tensor.
Var attention(Var qkv, std::size_t batch, std::size_t heads, std::size_t head_dim);

Var reshape(Var a, Shape shape);
Var slice_cols(Var a, std::size_t begin, std::size_t end);
/// Row `index` of a rank-2 tensor as [1 x cols].
Var row(Var a, std::size_t index);
/// x[groups*k x e] -> [groups x e], averaging each consecutive block of k rows.
Var mean_pool(Var x, std::size_t groups);
Var sum(Var a);
/// Single element at flat `index` as a [1] tensor.
Var pick(Var a, std::size_t index);

}  // namespace focusnas::ops
