#pragma once

#include <cstddef>

#include "cfrep/tensor.hpp"

// Differentiable operations. Every op records a backward node on `g` when
// at least one input requires a gradient; otherwise it is a plain forward
// computation. Reductions accumulate left to right in double precision.

namespace cfrep::ops {

/// input [N,C,H,W], kernel [F,C,kh,kw], bias [F] (may be undefined).
/// Output [N,F,H',W'] with H' = (H + 2*padding - kh) / stride + 1.
template <typename T>
BasicTensor<T> conv2d(BasicGraph<T>& g, const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding);

/// Adjoint of conv2d used for learned upsampling.
/// input [N,C,H,W], kernel [C,F,kh,kw], bias [F] (may be undefined).
/// Output [N,F,H',W'] with H' = (H - 1) * stride - 2*padding + kh.
template <typename T>
BasicTensor<T> conv_transpose2d(BasicGraph<T>& g, const BasicTensor<T>& input,
                                const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                                std::size_t stride, std::size_t padding);

/// input [N,D] x weight [D,K] + bias [K]; bias may be undefined.
template <typename T>
BasicTensor<T> dense(BasicGraph<T>& g, const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias);

template <typename T>
BasicTensor<T> leaky_relu(BasicGraph<T>& g, const BasicTensor<T>& x, T slope = T(0.2));
template <typename T>
BasicTensor<T> sigmoid(BasicGraph<T>& g, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> abs(BasicGraph<T>& g, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> square(BasicGraph<T>& g, const BasicTensor<T>& x);
/// The derivative at exactly 0 is taken as 0.
template <typename T>
BasicTensor<T> sqrt(BasicGraph<T>& g, const BasicTensor<T>& x);

/// Elementwise binary ops. Shapes must match, or one side must hold a
/// single element, which is broadcast.
template <typename T>
BasicTensor<T> add(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> sub(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> mul(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b);
template <typename T>
BasicTensor<T> div(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b);

template <typename T>
BasicTensor<T> add_scalar(BasicGraph<T>& g, const BasicTensor<T>& x, T c);
template <typename T>
BasicTensor<T> mul_scalar(BasicGraph<T>& g, const BasicTensor<T>& x, T c);

template <typename T>
BasicTensor<T> sum(BasicGraph<T>& g, const BasicTensor<T>& x);
template <typename T>
BasicTensor<T> mean(BasicGraph<T>& g, const BasicTensor<T>& x);

template <typename T>
BasicTensor<T> reshape(BasicGraph<T>& g, const BasicTensor<T>& x, Shape shape);

/// Mean zero-normalized cross-correlation over non-overlapping
/// window x window tiles of every [H,W] plane of a and b ([N,C,H,W]).
/// Tiles that do not fit are dropped; `eps` floors each variance.
template <typename T>
BasicTensor<T> windowed_zncc(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b,
                             std::size_t window, T eps);

}  // namespace cfrep::ops
