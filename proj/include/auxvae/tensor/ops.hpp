#pragma once

#include <cstddef>
#include <vector>

#include "auxvae/tensor/graph.hpp"

// Differentiable primitives. Every op appends one node to the graph of its
// first operand; all operands must live on the same graph.
//
// Broadcasting is limited to the bias pattern: in add/sub/mul the second
// operand may be rank-1 with extent equal to the first operand's last axis.
// All other operand shapes must match exactly.
namespace auxvae::tensor {

struct ConvAttrs {
  std::size_t stride = 1;
  std::size_t padding = 0;
};

// floor((in + 2p - k)/s) + 1; throws ShapeError when the result is not positive.
std::size_t conv2d_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                 std::size_t padding);
// (in - 1)*s - 2p + k; throws ShapeError when the result is not positive.
std::size_t conv_transpose2d_output_extent(std::size_t in, std::size_t kernel,
                                           std::size_t stride, std::size_t padding);

template <typename T> Var<T> add(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> sub(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> mul(const Var<T>& a, const Var<T>& b);

template <typename T> Var<T> scale(const Var<T>& a, T factor);
template <typename T> Var<T> add_scalar(const Var<T>& a, T offset);

template <typename T> Var<T> relu(const Var<T>& a);
template <typename T> Var<T> sigmoid(const Var<T>& a);
template <typename T> Var<T> tanh(const Var<T>& a);
template <typename T> Var<T> exp(const Var<T>& a);
template <typename T> Var<T> log(const Var<T>& a);
template <typename T> Var<T> square(const Var<T>& a);
// Gradient at 0 is taken as 0.
template <typename T> Var<T> sqrt(const Var<T>& a);
// Subgradient sign(0) = 0.
template <typename T> Var<T> abs(const Var<T>& a);
template <typename T> Var<T> reciprocal(const Var<T>& a);
template <typename T> Var<T> pow(const Var<T>& a, int exponent);
// Gradient is zero outside [lo, hi].
template <typename T> Var<T> clamp(const Var<T>& a, T lo, T hi);

// Full reductions to a rank-0 scalar.
template <typename T> Var<T> sum(const Var<T>& a);
template <typename T> Var<T> mean(const Var<T>& a);
// Reduce a rank-2 (rows x cols) operand over rows, giving rank-1 (cols).
template <typename T> Var<T> sum_rows(const Var<T>& a);
template <typename T> Var<T> mean_rows(const Var<T>& a);

template <typename T> Var<T> matmul(const Var<T>& a, const Var<T>& b);
template <typename T> Var<T> transpose(const Var<T>& a);
template <typename T> Var<T> reshape(const Var<T>& a, Shape shape);
// Half-open range [begin, end) along one axis.
template <typename T> Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t begin,
                                   std::size_t end);
template <typename T> Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis);

// x: (B, Cin, H, W); weight: (Cout, Cin, k, k); bias: (Cout) or an invalid Var.
template <typename T> Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
                                    ConvAttrs attrs);
// x: (B, Cin, H, W); weight: (Cin, Cout, k, k); bias: (Cout) or an invalid Var.
template <typename T> Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight,
                                              const Var<T>& bias, ConvAttrs attrs);

// Sum over all elements of softplus(l) - t*l, i.e. binary cross-entropy of
// sigmoid(l) against targets t in [0, 1]. Differentiable in both operands.
template <typename T> Var<T> bce_with_logits_sum(const Var<T>& logits, const Var<T>& targets);

// Operator sugar for the common cases.
template <typename T> Var<T> operator+(const Var<T>& a, const Var<T>& b) { return add(a, b); }
template <typename T> Var<T> operator-(const Var<T>& a, const Var<T>& b) { return sub(a, b); }
template <typename T> Var<T> operator*(const Var<T>& a, const Var<T>& b) { return mul(a, b); }
template <typename T> Var<T> operator*(T factor, const Var<T>& a) { return scale(a, factor); }

}  // namespace auxvae::tensor
