#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

namespace auxvae::tensor::detail {

// C (m x n) (+)= A (m x k) * B (k x n), all row-major and contiguous.
// Rows of C are updated four at a time so each streamed row of B is reused.
template <typename T>
void gemm_nn(std::size_t m, std::size_t n, std::size_t k, const T* __restrict a,
             const T* __restrict b, T* __restrict c, bool accumulate) {
  if (!accumulate) std::fill(c, c + m * n, T{0});
  constexpr std::size_t kBlock = 128;
  for (std::size_t p0 = 0; p0 < k; p0 += kBlock) {
    const std::size_t p1 = std::min(k, p0 + kBlock);
    std::size_t i = 0;
    for (; i + 4 <= m; i += 4) {
      T* __restrict c0 = c + i * n;
      T* __restrict c1 = c0 + n;
      T* __restrict c2 = c1 + n;
      T* __restrict c3 = c2 + n;
      for (std::size_t p = p0; p < p1; ++p) {
        const T a0 = a[i * k + p];
        const T a1 = a[(i + 1) * k + p];
        const T a2 = a[(i + 2) * k + p];
        const T a3 = a[(i + 3) * k + p];
        const T* __restrict row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) {
          const T v = row[j];
          c0[j] += a0 * v;
          c1[j] += a1 * v;
          c2[j] += a2 * v;
          c3[j] += a3 * v;
        }
      }
    }
    for (; i < m; ++i) {
      T* __restrict ci = c + i * n;
      for (std::size_t p = p0; p < p1; ++p) {
        const T ai = a[i * k + p];
        const T* __restrict row = b + p * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] += ai * row[j];
      }
    }
  }
}

template <typename T>
void transpose_into(std::size_t rows, std::size_t cols, const T* src, T* dst) {
  constexpr std::size_t kTile = 32;
  for (std::size_t r0 = 0; r0 < rows; r0 += kTile) {
    const std::size_t r1 = std::min(rows, r0 + kTile);
    for (std::size_t c0 = 0; c0 < cols; c0 += kTile) {
      const std::size_t c1 = std::min(cols, c0 + kTile);
      for (std::size_t r = r0; r < r1; ++r) {
        for (std::size_t c = c0; c < c1; ++c) dst[c * rows + r] = src[r * cols + c];
      }
    }
  }
}

// General product with optional transposes; transposed operands are
// materialised before calling gemm_nn. Shapes are those of op(A), op(B):
// op(A) is m x k, op(B) is k x n.
template <typename T>
void gemm(bool trans_a, bool trans_b, std::size_t m, std::size_t n, std::size_t k, const T* a,
          const T* b, T* c, bool accumulate) {
  std::vector<T> at;
  std::vector<T> bt;
  if (trans_a) {
    at.resize(m * k);
    transpose_into(k, m, a, at.data());
    a = at.data();
  }
  if (trans_b) {
    bt.resize(k * n);
    transpose_into(n, k, b, bt.data());
    b = bt.data();
  }
  gemm_nn(m, n, k, a, b, c, accumulate);
}

}  // namespace auxvae::tensor::detail
