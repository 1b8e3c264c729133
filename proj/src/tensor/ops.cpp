#include "auxvae/tensor/ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "gemm.hpp"

namespace auxvae::tensor {

namespace {

using detail::gemm;

std::string prefix(std::string_view kind) { return std::string(kind) + ": "; }

template <typename T>
Graph<T>& common_graph(std::string_view kind, const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = a.graph();
  if (&b.graph() != &g) throw ConfigError(prefix(kind) + "operands live on different graphs");
  return g;
}

// True when b broadcasts as a bias over a's last axis; false when the shapes
// match exactly. Anything else is a ShapeError.
bool binary_broadcast(std::string_view kind, const Shape& a, const Shape& b) {
  if (a == b) return false;
  if (b.size() == 1 && !a.empty() && a.back() == b[0]) return true;
  throw ShapeError(prefix(kind) + "shapes " + to_string(a) + " and " + to_string(b) +
                   " are incompatible (only rank-1 bias broadcast over the last axis)");
}

void require_rank(std::string_view kind, const Shape& s, std::size_t rank, const char* what) {
  if (s.size() != rank) {
    throw ShapeError(prefix(kind) + what + " must have rank " + std::to_string(rank) + ", got " +
                     to_string(s));
  }
}

template <typename T, typename Fwd, typename Bwd>
Var<T> unary(std::string_view kind, const Var<T>& a, Fwd fwd, Bwd dydx) {
  Graph<T>& g = a.graph();
  const Tensor<T>& x = a.value();
  Tensor<T> y(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = fwd(x[i]);
  const std::size_t in = a.id();
  const std::size_t out = g.size();
  Graph<T>* gp = &g;
  return g.record(kind, std::move(y), {in},
                  [gp, in, out, dydx](const Tensor<T>& go, GradSink<T>& sink) {
                    Tensor<T>* gx = sink.slot(0);
                    if (!gx) return;
                    const Tensor<T>& xv = gp->value(in);
                    const Tensor<T>& yv = gp->value(out);
                    for (std::size_t i = 0; i < go.size(); ++i) {
                      (*gx)[i] += go[i] * dydx(xv[i], yv[i]);
                    }
                  });
}

template <typename T>
void im2col(const T* img, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::size_t s, std::size_t p, std::size_t ho, std::size_t wo, T* cols) {
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        T* dst = cols + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * s + ki) - static_cast<long>(p);
          T* drow = dst + oh * wo;
          if (ih < 0 || ih >= static_cast<long>(h)) {
            std::fill(drow, drow + wo, T{0});
            continue;
          }
          const T* srow = img + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * s + kj) - static_cast<long>(p);
            drow[ow] = (iw < 0 || iw >= static_cast<long>(w)) ? T{0}
                                                              : srow[static_cast<std::size_t>(iw)];
          }
        }
      }
    }
  }
}

template <typename T>
void col2im_add(const T* cols, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
                std::size_t s, std::size_t p, std::size_t ho, std::size_t wo, T* img) {
  const std::size_t plane = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    for (std::size_t ki = 0; ki < k; ++ki) {
      for (std::size_t kj = 0; kj < k; ++kj) {
        const T* src = cols + ((c * k + ki) * k + kj) * plane;
        for (std::size_t oh = 0; oh < ho; ++oh) {
          const long ih = static_cast<long>(oh * s + ki) - static_cast<long>(p);
          if (ih < 0 || ih >= static_cast<long>(h)) continue;
          T* irow = img + (c * h + static_cast<std::size_t>(ih)) * w;
          for (std::size_t ow = 0; ow < wo; ++ow) {
            const long iw = static_cast<long>(ow * s + kj) - static_cast<long>(p);
            if (iw < 0 || iw >= static_cast<long>(w)) continue;
            irow[static_cast<std::size_t>(iw)] += src[oh * wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace

std::size_t conv2d_output_extent(std::size_t in, std::size_t kernel, std::size_t stride,
                                 std::size_t padding) {
  if (stride == 0) throw ShapeError("conv2d: stride must be >= 1");
  const long span = static_cast<long>(in + 2 * padding) - static_cast<long>(kernel);
  if (span < 0) {
    throw ShapeError("conv2d: kernel " + std::to_string(kernel) + " exceeds padded input " +
                     std::to_string(in + 2 * padding));
  }
  return static_cast<std::size_t>(span) / stride + 1;
}

std::size_t conv_transpose2d_output_extent(std::size_t in, std::size_t kernel,
                                           std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ShapeError("conv_transpose2d: stride must be >= 1");
  if (in == 0) throw ShapeError("conv_transpose2d: input extent must be positive");
  const long out = static_cast<long>((in - 1) * stride + kernel) - 2 * static_cast<long>(padding);
  if (out <= 0) {
    throw ShapeError("conv_transpose2d: output extent " + std::to_string(out) +
                     " is not positive (in=" + std::to_string(in) +
                     ", k=" + std::to_string(kernel) + ", s=" + std::to_string(stride) +
                     ", p=" + std::to_string(padding) + ")");
  }
  return static_cast<std::size_t>(out);
}

// ---------------------------------------------------------------------------
// Elementwise binary ops

template <typename T>
Var<T> add(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = common_graph("add", a, b);
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  const bool bc = binary_broadcast("add", x.shape(), y.shape());
  Tensor<T> out(x.shape());
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[bc ? i % n : i];
  return g.record("add", std::move(out), {a.id(), b.id()},
                  [bc, n](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* ga = sink.slot(0)) {
                      for (std::size_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i];
                    }
                    if (Tensor<T>* gb = sink.slot(1)) {
                      for (std::size_t i = 0; i < go.size(); ++i) (*gb)[bc ? i % n : i] += go[i];
                    }
                  });
}

template <typename T>
Var<T> sub(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = common_graph("sub", a, b);
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  const bool bc = binary_broadcast("sub", x.shape(), y.shape());
  Tensor<T> out(x.shape());
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[bc ? i % n : i];
  return g.record("sub", std::move(out), {a.id(), b.id()},
                  [bc, n](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* ga = sink.slot(0)) {
                      for (std::size_t i = 0; i < go.size(); ++i) (*ga)[i] += go[i];
                    }
                    if (Tensor<T>* gb = sink.slot(1)) {
                      for (std::size_t i = 0; i < go.size(); ++i) (*gb)[bc ? i % n : i] -= go[i];
                    }
                  });
}

template <typename T>
Var<T> mul(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = common_graph("mul", a, b);
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  const bool bc = binary_broadcast("mul", x.shape(), y.shape());
  Tensor<T> out(x.shape());
  const std::size_t n = y.size();
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[bc ? i % n : i];
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  Graph<T>* gp = &g;
  return g.record("mul", std::move(out), {ia, ib},
                  [gp, ia, ib, bc, n](const Tensor<T>& go, GradSink<T>& sink) {
                    const Tensor<T>& xv = gp->value(ia);
                    const Tensor<T>& yv = gp->value(ib);
                    if (Tensor<T>* ga = sink.slot(0)) {
                      for (std::size_t i = 0; i < go.size(); ++i) {
                        (*ga)[i] += go[i] * yv[bc ? i % n : i];
                      }
                    }
                    if (Tensor<T>* gb = sink.slot(1)) {
                      for (std::size_t i = 0; i < go.size(); ++i) {
                        (*gb)[bc ? i % n : i] += go[i] * xv[i];
                      }
                    }
                  });
}

// ---------------------------------------------------------------------------
// Elementwise unary ops

template <typename T>
Var<T> scale(const Var<T>& a, T factor) {
  return unary<T>(
      "scale", a, [factor](T x) { return factor * x; }, [factor](T, T) { return factor; });
}

template <typename T>
Var<T> add_scalar(const Var<T>& a, T offset) {
  return unary<T>(
      "add_scalar", a, [offset](T x) { return x + offset; }, [](T, T) { return T{1}; });
}

template <typename T>
Var<T> relu(const Var<T>& a) {
  return unary<T>(
      "relu", a, [](T x) { return x > T{0} ? x : T{0}; },
      [](T x, T) { return x > T{0} ? T{1} : T{0}; });
}

template <typename T>
Var<T> sigmoid(const Var<T>& a) {
  return unary<T>(
      "sigmoid", a,
      [](T x) {
        if (x >= T{0}) return T{1} / (T{1} + std::exp(-x));
        const T e = std::exp(x);
        return e / (T{1} + e);
      },
      [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Var<T> tanh(const Var<T>& a) {
  return unary<T>(
      "tanh", a, [](T x) { return std::tanh(x); }, [](T, T y) { return T{1} - y * y; });
}

template <typename T>
Var<T> exp(const Var<T>& a) {
  return unary<T>(
      "exp", a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Var<T> log(const Var<T>& a) {
  return unary<T>(
      "log", a, [](T x) { return std::log(x); }, [](T x, T) { return T{1} / x; });
}

template <typename T>
Var<T> square(const Var<T>& a) {
  return unary<T>(
      "square", a, [](T x) { return x * x; }, [](T x, T) { return T{2} * x; });
}

template <typename T>
Var<T> sqrt(const Var<T>& a) {
  return unary<T>(
      "sqrt", a, [](T x) { return std::sqrt(x); },
      [](T, T y) { return y > T{0} ? T{0.5} / y : T{0}; });
}

template <typename T>
Var<T> abs(const Var<T>& a) {
  return unary<T>(
      "abs", a, [](T x) { return std::abs(x); },
      [](T x, T) { return x > T{0} ? T{1} : (x < T{0} ? T{-1} : T{0}); });
}

template <typename T>
Var<T> reciprocal(const Var<T>& a) {
  return unary<T>(
      "reciprocal", a, [](T x) { return T{1} / x; }, [](T, T y) { return -y * y; });
}

template <typename T>
Var<T> pow(const Var<T>& a, int exponent) {
  return unary<T>(
      "pow", a, [exponent](T x) { return static_cast<T>(std::pow(x, exponent)); },
      [exponent](T x, T) {
        if (exponent == 0) return T{0};
        return static_cast<T>(exponent * std::pow(x, exponent - 1));
      });
}

template <typename T>
Var<T> clamp(const Var<T>& a, T lo, T hi) {
  if (!(lo <= hi)) throw ConfigError("clamp: lower bound exceeds upper bound");
  return unary<T>(
      "clamp", a, [lo, hi](T x) { return std::min(std::max(x, lo), hi); },
      [lo, hi](T x, T) { return (x >= lo && x <= hi) ? T{1} : T{0}; });
}

// ---------------------------------------------------------------------------
// Reductions

template <typename T>
Var<T> sum(const Var<T>& a) {
  Graph<T>& g = a.graph();
  const Tensor<T>& x = a.value();
  double acc = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x[i]);
  return g.record("sum", Tensor<T>::scalar(static_cast<T>(acc)), {a.id()},
                  [](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* gx = sink.slot(0)) {
                      const T v = go[0];
                      for (std::size_t i = 0; i < gx->size(); ++i) (*gx)[i] += v;
                    }
                  });
}

template <typename T>
Var<T> mean(const Var<T>& a) {
  const std::size_t n = a.value().size();
  if (n == 0) throw ShapeError("mean: empty operand");
  return scale(sum(a), T{1} / static_cast<T>(n));
}

template <typename T>
Var<T> sum_rows(const Var<T>& a) {
  Graph<T>& g = a.graph();
  const Tensor<T>& x = a.value();
  require_rank("sum_rows", x.shape(), 2, "operand");
  const std::size_t rows = x.dim(0);
  const std::size_t cols = x.dim(1);
  std::vector<double> acc(cols, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) acc[c] += static_cast<double>(x[r * cols + c]);
  }
  Tensor<T> out(Shape{cols});
  for (std::size_t c = 0; c < cols; ++c) out[c] = static_cast<T>(acc[c]);
  return g.record("sum_rows", std::move(out), {a.id()},
                  [rows, cols](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* gx = sink.slot(0)) {
                      for (std::size_t r = 0; r < rows; ++r) {
                        for (std::size_t c = 0; c < cols; ++c) (*gx)[r * cols + c] += go[c];
                      }
                    }
                  });
}

template <typename T>
Var<T> mean_rows(const Var<T>& a) {
  const Shape& s = a.shape();
  require_rank("mean_rows", s, 2, "operand");
  if (s[0] == 0) throw ShapeError("mean_rows: no rows");
  return scale(sum_rows(a), T{1} / static_cast<T>(s[0]));
}

// ---------------------------------------------------------------------------
// Linear algebra and shape ops

template <typename T>
Var<T> matmul(const Var<T>& a, const Var<T>& b) {
  Graph<T>& g = common_graph("matmul", a, b);
  const Tensor<T>& x = a.value();
  const Tensor<T>& y = b.value();
  require_rank("matmul", x.shape(), 2, "left operand");
  require_rank("matmul", y.shape(), 2, "right operand");
  const std::size_t m = x.dim(0);
  const std::size_t k = x.dim(1);
  const std::size_t n = y.dim(1);
  if (y.dim(0) != k) {
    throw ShapeError("matmul: inner dims differ, " + to_string(x.shape()) + " x " +
                     to_string(y.shape()));
  }
  Tensor<T> out(Shape{m, n});
  gemm(false, false, m, n, k, x.data(), y.data(), out.data(), false);
  const std::size_t ia = a.id();
  const std::size_t ib = b.id();
  Graph<T>* gp = &g;
  return g.record("matmul", std::move(out), {ia, ib},
                  [gp, ia, ib, m, n, k](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* ga = sink.slot(0)) {
                      gemm(false, true, m, k, n, go.data(), gp->value(ib).data(), ga->data(), true);
                    }
                    if (Tensor<T>* gb = sink.slot(1)) {
                      gemm(true, false, k, n, m, gp->value(ia).data(), go.data(), gb->data(), true);
                    }
                  });
}

template <typename T>
Var<T> transpose(const Var<T>& a) {
  Graph<T>& g = a.graph();
  const Tensor<T>& x = a.value();
  require_rank("transpose", x.shape(), 2, "operand");
  const std::size_t r = x.dim(0);
  const std::size_t c = x.dim(1);
  Tensor<T> out(Shape{c, r});
  detail::transpose_into(r, c, x.data(), out.data());
  return g.record("transpose", std::move(out), {a.id()},
                  [r, c](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* gx = sink.slot(0)) {
                      for (std::size_t i = 0; i < r; ++i) {
                        for (std::size_t j = 0; j < c; ++j) (*gx)[i * c + j] += go[j * r + i];
                      }
                    }
                  });
}

template <typename T>
Var<T> reshape(const Var<T>& a, Shape shape) {
  Graph<T>& g = a.graph();
  Tensor<T> out = a.value().reshaped(std::move(shape));
  return g.record("reshape", std::move(out), {a.id()},
                  [](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* gx = sink.slot(0)) {
                      for (std::size_t i = 0; i < go.size(); ++i) (*gx)[i] += go[i];
                    }
                  });
}

template <typename T>
Var<T> slice(const Var<T>& a, std::size_t axis, std::size_t begin, std::size_t end) {
  Graph<T>& g = a.graph();
  const Tensor<T>& x = a.value();
  const Shape& s = x.shape();
  if (axis >= s.size()) {
    throw ShapeError("slice: axis " + std::to_string(axis) + " out of range for " + to_string(s));
  }
  if (begin > end || end > s[axis]) {
    throw ShapeError("slice: range [" + std::to_string(begin) + "," + std::to_string(end) +
                     ") invalid for axis extent " + std::to_string(s[axis]));
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t extent = s[axis];
  const std::size_t width = end - begin;
  Shape os = s;
  os[axis] = width;
  Tensor<T> out(os);
  for (std::size_t o = 0; o < outer; ++o) {
    const T* src = x.data() + (o * extent + begin) * inner;
    std::copy(src, src + width * inner, out.data() + o * width * inner);
  }
  return g.record("slice", std::move(out), {a.id()},
                  [outer, inner, extent, width, begin](const Tensor<T>& go, GradSink<T>& sink) {
                    if (Tensor<T>* gx = sink.slot(0)) {
                      for (std::size_t o = 0; o < outer; ++o) {
                        T* dst = gx->data() + (o * extent + begin) * inner;
                        const T* src = go.data() + o * width * inner;
                        for (std::size_t i = 0; i < width * inner; ++i) dst[i] += src[i];
                      }
                    }
                  });
}

template <typename T>
Var<T> concat(const std::vector<Var<T>>& parts, std::size_t axis) {
  if (parts.empty()) throw ShapeError("concat: no operands");
  Graph<T>& g = parts.front().graph();
  const Shape& s0 = parts.front().shape();
  if (axis >= s0.size()) throw ShapeError("concat: axis out of range for " + to_string(s0));
  std::vector<std::size_t> widths;
  std::vector<std::size_t> ids;
  std::size_t total = 0;
  for (const Var<T>& p : parts) {
    if (&p.graph() != &g) throw ConfigError("concat: operands live on different graphs");
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i) ok = (i == axis) || s[i] == s0[i];
    if (!ok) {
      throw ShapeError("concat: shape " + to_string(s) + " does not match " + to_string(s0) +
                       " off axis " + std::to_string(axis));
    }
    widths.push_back(s[axis]);
    ids.push_back(p.id());
    total += s[axis];
  }
  std::size_t outer = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  std::size_t inner = 1;
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape os = s0;
  os[axis] = total;
  Tensor<T> out(os);
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    const Tensor<T>& x = parts[k].value();
    const std::size_t w = widths[k];
    for (std::size_t o = 0; o < outer; ++o) {
      const T* src = x.data() + o * w * inner;
      std::copy(src, src + w * inner, out.data() + (o * total + offset) * inner);
    }
    offset += w;
  }
  return g.record("concat", std::move(out), std::move(ids),
                  [widths, outer, inner, total](const Tensor<T>& go, GradSink<T>& sink) {
                    std::size_t off = 0;
                    for (std::size_t k = 0; k < widths.size(); ++k) {
                      const std::size_t w = widths[k];
                      if (Tensor<T>* gx = sink.slot(k)) {
                        for (std::size_t o = 0; o < outer; ++o) {
                          const T* src = go.data() + (o * total + off) * inner;
                          T* dst = gx->data() + o * w * inner;
                          for (std::size_t i = 0; i < w * inner; ++i) dst[i] += src[i];
                        }
                      }
                      off += w;
                    }
                  });
}

// ---------------------------------------------------------------------------
// Convolutions

template <typename T>
Var<T> conv2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias, ConvAttrs attrs) {
  Graph<T>& g = common_graph("conv2d", x, weight);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  require_rank("conv2d", xv.shape(), 4, "input");
  require_rank("conv2d", wv.shape(), 4, "weight");
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), w = xv.dim(3);
  const std::size_t cout = wv.dim(0), k = wv.dim(2);
  if (wv.dim(1) != cin || wv.dim(3) != k) {
    throw ShapeError("conv2d: weight " + to_string(wv.shape()) + " does not fit input " +
                     to_string(xv.shape()));
  }
  const bool has_bias = bias.valid();
  if (has_bias && bias.shape() != Shape{cout}) {
    throw ShapeError("conv2d: bias " + to_string(bias.shape()) + " must be (" +
                     std::to_string(cout) + ")");
  }
  const std::size_t s = attrs.stride, p = attrs.padding;
  const std::size_t ho = conv2d_output_extent(h, k, s, p);
  const std::size_t wo = conv2d_output_extent(w, k, s, p);
  const std::size_t ckk = cin * k * k, plane = ho * wo;

  Tensor<T> out(Shape{batch, cout, ho, wo});
  std::vector<T> cols(ckk * plane);
  for (std::size_t b = 0; b < batch; ++b) {
    im2col(xv.data() + b * cin * h * w, cin, h, w, k, s, p, ho, wo, cols.data());
    T* ob = out.data() + b * cout * plane;
    gemm(false, false, cout, plane, ckk, wv.data(), cols.data(), ob, false);
    if (has_bias) {
      const Tensor<T>& bv = bias.value();
      for (std::size_t c = 0; c < cout; ++c) {
        for (std::size_t i = 0; i < plane; ++i) ob[c * plane + i] += bv[c];
      }
    }
  }

  std::vector<std::size_t> inputs{x.id(), weight.id()};
  if (has_bias) inputs.push_back(bias.id());
  const std::size_t ix = x.id(), iw = weight.id();
  Graph<T>* gp = &g;
  return g.record(
      "conv2d", std::move(out), std::move(inputs),
      [=](const Tensor<T>& go, GradSink<T>& sink) {
        Tensor<T>* gx = sink.slot(0);
        Tensor<T>* gw = sink.slot(1);
        Tensor<T>* gb = has_bias ? sink.slot(2) : nullptr;
        const Tensor<T>& xin = gp->value(ix);
        const Tensor<T>& win = gp->value(iw);
        std::vector<T> col(ckk * plane);
        for (std::size_t b = 0; b < batch; ++b) {
          const T* gob = go.data() + b * cout * plane;
          if (gw) {
            im2col(xin.data() + b * cin * h * w, cin, h, w, k, s, p, ho, wo, col.data());
            gemm(false, true, cout, ckk, plane, gob, col.data(), gw->data(), true);
          }
          if (gx) {
            gemm(true, false, ckk, plane, cout, win.data(), gob, col.data(), false);
            col2im_add(col.data(), cin, h, w, k, s, p, ho, wo, gx->data() + b * cin * h * w);
          }
          if (gb) {
            for (std::size_t c = 0; c < cout; ++c) {
              T acc{0};
              for (std::size_t i = 0; i < plane; ++i) acc += gob[c * plane + i];
              (*gb)[c] += acc;
            }
          }
        }
      });
}

template <typename T>
Var<T> conv_transpose2d(const Var<T>& x, const Var<T>& weight, const Var<T>& bias,
                        ConvAttrs attrs) {
  Graph<T>& g = common_graph("conv_transpose2d", x, weight);
  const Tensor<T>& xv = x.value();
  const Tensor<T>& wv = weight.value();
  require_rank("conv_transpose2d", xv.shape(), 4, "input");
  require_rank("conv_transpose2d", wv.shape(), 4, "weight");
  const std::size_t batch = xv.dim(0), cin = xv.dim(1), hi = xv.dim(2), wi = xv.dim(3);
  const std::size_t cout = wv.dim(1), k = wv.dim(2);
  if (wv.dim(0) != cin || wv.dim(3) != k) {
    throw ShapeError("conv_transpose2d: weight " + to_string(wv.shape()) +
                     " does not fit input " + to_string(xv.shape()));
  }
  const bool has_bias = bias.valid();
  if (has_bias && bias.shape() != Shape{cout}) {
    throw ShapeError("conv_transpose2d: bias " + to_string(bias.shape()) + " must be (" +
                     std::to_string(cout) + ")");
  }
  const std::size_t s = attrs.stride, p = attrs.padding;
  const std::size_t ho = conv_transpose2d_output_extent(hi, k, s, p);
  const std::size_t wo = conv_transpose2d_output_extent(wi, k, s, p);
  const std::size_t ckk = cout * k * k, in_plane = hi * wi, out_plane = ho * wo;

  Tensor<T> out(Shape{batch, cout, ho, wo});
  std::vector<T> cols(ckk * in_plane);
  for (std::size_t b = 0; b < batch; ++b) {
    gemm(true, false, ckk, in_plane, cin, wv.data(), xv.data() + b * cin * in_plane, cols.data(),
         false);
    T* ob = out.data() + b * cout * out_plane;
    col2im_add(cols.data(), cout, ho, wo, k, s, p, hi, wi, ob);
    if (has_bias) {
      const Tensor<T>& bv = bias.value();
      for (std::size_t c = 0; c < cout; ++c) {
        for (std::size_t i = 0; i < out_plane; ++i) ob[c * out_plane + i] += bv[c];
      }
    }
  }

  std::vector<std::size_t> inputs{x.id(), weight.id()};
  if (has_bias) inputs.push_back(bias.id());
  const std::size_t ix = x.id(), iw = weight.id();
  Graph<T>* gp = &g;
  return g.record(
      "conv_transpose2d", std::move(out), std::move(inputs),
      [=](const Tensor<T>& go, GradSink<T>& sink) {
        Tensor<T>* gx = sink.slot(0);
        Tensor<T>* gw = sink.slot(1);
        Tensor<T>* gb = has_bias ? sink.slot(2) : nullptr;
        const Tensor<T>& xin = gp->value(ix);
        const Tensor<T>& win = gp->value(iw);
        std::vector<T> col(ckk * in_plane);
        for (std::size_t b = 0; b < batch; ++b) {
          const T* gob = go.data() + b * cout * out_plane;
          if (gx || gw) im2col(gob, cout, ho, wo, k, s, p, hi, wi, col.data());
          if (gx) {
            gemm(false, false, cin, in_plane, ckk, win.data(), col.data(),
                 gx->data() + b * cin * in_plane, true);
          }
          if (gw) {
            gemm(false, true, cin, ckk, in_plane, xin.data() + b * cin * in_plane, col.data(),
                 gw->data(), true);
          }
          if (gb) {
            for (std::size_t c = 0; c < cout; ++c) {
              T acc{0};
              for (std::size_t i = 0; i < out_plane; ++i) acc += gob[c * out_plane + i];
              (*gb)[c] += acc;
            }
          }
        }
      });
}

// ---------------------------------------------------------------------------
// Losses

template <typename T>
Var<T> bce_with_logits_sum(const Var<T>& logits, const Var<T>& targets) {
  Graph<T>& g = common_graph("bce_with_logits", logits, targets);
  const Tensor<T>& l = logits.value();
  const Tensor<T>& t = targets.value();
  if (l.shape() != t.shape()) {
    throw ShapeError("bce_with_logits: logits " + to_string(l.shape()) + " vs targets " +
                     to_string(t.shape()));
  }
  double acc = 0.0;
  for (std::size_t i = 0; i < l.size(); ++i) {
    const double li = l[i];
    acc += std::max(li, 0.0) - li * static_cast<double>(t[i]) + std::log1p(std::exp(-std::abs(li)));
  }
  const std::size_t il = logits.id(), it = targets.id();
  Graph<T>* gp = &g;
  return g.record("bce_with_logits", Tensor<T>::scalar(static_cast<T>(acc)), {il, it},
                  [gp, il, it](const Tensor<T>& go, GradSink<T>& sink) {
                    const Tensor<T>& lv = gp->value(il);
                    const Tensor<T>& tv = gp->value(it);
                    const T scale_out = go[0];
                    if (Tensor<T>* gl = sink.slot(0)) {
                      for (std::size_t i = 0; i < lv.size(); ++i) {
                        const T x = lv[i];
                        const T sig = x >= T{0} ? T{1} / (T{1} + std::exp(-x))
                                                : std::exp(x) / (T{1} + std::exp(x));
                        (*gl)[i] += scale_out * (sig - tv[i]);
                      }
                    }
                    if (Tensor<T>* gt = sink.slot(1)) {
                      for (std::size_t i = 0; i < lv.size(); ++i) (*gt)[i] -= scale_out * lv[i];
                    }
                  });
}

#define AUXVAE_INSTANTIATE_OPS(T)                                                         \
  template Var<T> add(const Var<T>&, const Var<T>&);                                      \
  template Var<T> sub(const Var<T>&, const Var<T>&);                                      \
  template Var<T> mul(const Var<T>&, const Var<T>&);                                      \
  template Var<T> scale(const Var<T>&, T);                                                \
  template Var<T> add_scalar(const Var<T>&, T);                                           \
  template Var<T> relu(const Var<T>&);                                                    \
  template Var<T> sigmoid(const Var<T>&);                                                 \
  template Var<T> tanh(const Var<T>&);                                                    \
  template Var<T> exp(const Var<T>&);                                                     \
  template Var<T> log(const Var<T>&);                                                     \
  template Var<T> square(const Var<T>&);                                                  \
  template Var<T> sqrt(const Var<T>&);                                                    \
  template Var<T> abs(const Var<T>&);                                                     \
  template Var<T> reciprocal(const Var<T>&);                                              \
  template Var<T> pow(const Var<T>&, int);                                                \
  template Var<T> clamp(const Var<T>&, T, T);                                             \
  template Var<T> sum(const Var<T>&);                                                     \
  template Var<T> mean(const Var<T>&);                                                    \
  template Var<T> sum_rows(const Var<T>&);                                                \
  template Var<T> mean_rows(const Var<T>&);                                               \
  template Var<T> matmul(const Var<T>&, const Var<T>&);                                   \
  template Var<T> transpose(const Var<T>&);                                               \
  template Var<T> reshape(const Var<T>&, Shape);                                          \
  template Var<T> slice(const Var<T>&, std::size_t, std::size_t, std::size_t);            \
  template Var<T> concat(const std::vector<Var<T>>&, std::size_t);                       \
  template Var<T> conv2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvAttrs);         \
  template Var<T> conv_transpose2d(const Var<T>&, const Var<T>&, const Var<T>&, ConvAttrs); \
  template Var<T> bce_with_logits_sum(const Var<T>&, const Var<T>&);

AUXVAE_INSTANTIATE_OPS(float)
AUXVAE_INSTANTIATE_OPS(double)

}  // namespace auxvae::tensor
