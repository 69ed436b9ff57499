#pragma once

#include <cstddef>
#include <span>

#include "unicorn/rng.hpp"
#include "unicorn/tensor.hpp"

// Differentiable tensor operations. Every result is checked for non-finite
// values; a NaN or Inf raises ErrorCode::kNonFinite.
namespace unicorn::ops {

inline constexpr double kLayerNormEps = 1e-5;

// [m x k] . [k x n] -> [m x n]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

// Elementwise, identical shapes.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);

// [.. x n] + [n], the only broadcast supported.
Tensor add_bias(const Tensor& x, const Tensor& bias);

Tensor sum(const Tensor& x);

// tanh approximation: 0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Tensor gelu(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor sigmoid(const Tensor& x);

// Max-subtracted softmax along `axis`.
Tensor softmax(const Tensor& x, std::size_t axis);

// Normalizes over the last axis, then applies per-feature gain and bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps = kLayerNormEps);

// Inverted dropout. Returns `x` itself when !training or p == 0.
Tensor dropout(const Tensor& x, double p, Rng* rng, bool training);

// -log softmax(logits)[label] for a logits vector of any shape with C elements.
Tensor cross_entropy(const Tensor& logits, std::size_t label);

// Rank-2 slicing and concatenation.
Tensor concat_rows(std::span<const Tensor> parts);
Tensor concat_cols(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t count);
Tensor slice_cols(const Tensor& x, std::size_t begin, std::size_t count);

Tensor reshape(const Tensor& x, Shape shape);

}  // namespace unicorn::ops
