// Copyright (c) 2026 The tcdnet Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "tcdnet/graph.hpp"

// Differentiable primitives. Every function records one node on the graph that
// owns its inputs and returns the output handle.
namespace tcdnet {

// Elementwise, identical shapes.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var add_scalar(Var a, double s);
Var sqrt(Var a);
/// Subgradient 0 at the origin.
Var abs(Var a);

/// x[..., n] + bias[n], broadcast over leading dimensions.
Var add_rowwise(Var x, Var bias);

/// [m,k] x [k,n] -> [m,n].
Var matmul(Var a, Var b);
/// x.W + b, with x [m,k], W [k,n], b [n].
Var linear(Var x, Var weight, Var bias);
Var transpose2d(Var a);
Var reshape(Var a, Shape shape);

/// Scalar reductions, summed sequentially in row-major order.
Var sum(Var a);
Var mean(Var a);

/// Concatenate along `axis`; all other dimensions must agree.
Var concat(std::span<const Var> parts, std::size_t axis);
/// Half-open range [begin, end) along `axis`.
Var slice(Var a, std::size_t axis, std::size_t begin, std::size_t end);
/// out[k] = a[index[k]], reshaped to `shape`. Backward scatters additively.
Var gather(Var a, std::vector<std::size_t> index, Shape shape);

/// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3))).
Var gelu(Var x);
/// Stable softmax over the last axis.
Var softmax_rows(Var x);
/// Normalise over the last axis with biased variance, then gamma * xhat + beta.
Var layer_norm(Var x, Var gamma, Var beta, double eps = 1e-6);
/// Subtract each row's mean (last axis).
Var center_rows(Var x);

/// Per-channel 3x3 cross-correlation, zero padding 1. x [c,h,w], kernels [c,3,3], bias [c].
Var depthwise_conv3x3(Var x, Var kernels, Var bias);
/// Dense 3x3 convolution, zero padding 1. x [cin,h,w], weight [cout,cin,3,3], bias [cout].
Var conv2d_3x3(Var x, Var weight, Var bias);
/// 2x2 average pooling with stride 2; odd trailing rows/columns are dropped.
Var avg_pool2x2(Var x);

/// sqrt(a^2 + eps^2), elementwise.
Var charbonnier(Var a, double eps);
/// Per row |<a/max(|a|,delta), b/max(|b|,delta)>| for a, b of shape [n, d]; returns [n].
Var abs_cosine_rows(Var a, Var b, double delta = 1e-8);

// Layout helpers. Patch pixel order inside a token is (channel, row, column).
std::vector<std::size_t> patchify_index(std::size_t channels, std::size_t height, std::size_t width,
                                        std::size_t patch);
/// [C,H,W] -> [N, C*p*p] with tokens in row-major grid order.
Var patchify(Var image, std::size_t patch);
/// Inverse of patchify: [N, C*p*p] -> [C,H,W].
Var unpatchify(Var tokens, std::size_t channels, std::size_t height, std::size_t width, std::size_t patch);

// Non-differentiable helpers on plain tensors.
double gelu_value(double x);

}  // namespace tcdnet
