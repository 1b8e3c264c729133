#include <cmath>
#include <random>

#include "../support/primitive_cases.hpp"
#include "auxvae/tensor/grad_check.hpp"
#include "auxvae/tensor/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace auxvae;
using namespace auxvae::tensor;
using auxvae::testing::random_tensor;

namespace {

// Direct-summation convolution, independent of the im2col path.
Tensor<double> conv2d_reference(const Tensor<double>& x, const Tensor<double>& w,
                                const Tensor<double>& b, std::size_t s, std::size_t p) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(0), k = w.dim(2);
  const std::size_t Ho = (H + 2 * p - k) / s + 1, Wo = (W + 2 * p - k) / s + 1;
  Tensor<double> out(Shape{B, O, Ho, Wo});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho; ++i)
        for (std::size_t j = 0; j < Wo; ++j) {
          double acc = b[o];
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t e = 0; e < k; ++e) {
                const long r = long(i * s + a) - long(p), q = long(j * s + e) - long(p);
                if (r < 0 || q < 0 || r >= long(H) || q >= long(W)) continue;
                acc += x[((n * C + c) * H + r) * W + q] * w[((o * C + c) * k + a) * k + e];
              }
          out[((n * O + o) * Ho + i) * Wo + j] = acc;
        }
  return out;
}

// Scatter form of the transposed convolution.
Tensor<double> conv_transpose2d_reference(const Tensor<double>& x, const Tensor<double>& w,
                                          const Tensor<double>& b, std::size_t s, std::size_t p) {
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t O = w.dim(1), k = w.dim(2);
  const std::size_t Ho = (H - 1) * s + k - 2 * p, Wo = (W - 1) * s + k - 2 * p;
  Tensor<double> out(Shape{B, O, Ho, Wo});
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t i = 0; i < Ho * Wo; ++i) out[(n * O + o) * Ho * Wo + i] = b[o];
  for (std::size_t n = 0; n < B; ++n)
    for (std::size_t c = 0; c < C; ++c)
      for (std::size_t i = 0; i < H; ++i)
        for (std::size_t j = 0; j < W; ++j)
          for (std::size_t o = 0; o < O; ++o)
            for (std::size_t a = 0; a < k; ++a)
              for (std::size_t e = 0; e < k; ++e) {
                const long r = long(i * s + a) - long(p), q = long(j * s + e) - long(p);
                if (r < 0 || q < 0 || r >= long(Ho) || q >= long(Wo)) continue;
                out[((n * O + o) * Ho + r) * Wo + q] +=
                    x[((n * C + c) * H + i) * W + j] * w[((c * O + o) * k + a) * k + e];
              }
  return out;
}

}  // namespace

TEST_CASE("matmul of a 2x2 by a 2x1") {
  Graph<double> g;
  auto a = g.constant(Tensor<double>::matrix({{1, 2}, {3, 4}}));
  auto b = g.constant(Tensor<double>::matrix({{1}, {1}}));
  auto c = matmul(a, b);
  CHECK(c.shape() == Shape{2, 1});
  CHECK(c.value()[0] == 3.0);
  CHECK(c.value()[1] == 7.0);
}

TEST_CASE("convolution output extents") {
  CHECK(conv2d_output_extent(33, 4, 2, 1) == 16);
  CHECK(conv_transpose2d_output_extent(8, 5, 4, 0) == 33);
  // The encoder chain of the conv architecture: 33 -> 16 -> 8 -> 4 -> 2.
  std::size_t e = 33;
  for (int i = 0; i < 4; ++i) e = conv2d_output_extent(e, 4, 2, 1);
  CHECK(e == 2);
  CHECK_THROWS_AS(conv2d_output_extent(2, 5, 1, 0), ShapeError);
  CHECK_THROWS_AS(conv2d_output_extent(5, 3, 0, 0), ShapeError);
  CHECK_THROWS_AS(conv_transpose2d_output_extent(1, 1, 1, 1), ShapeError);
}

TEST_CASE("convolutions match direct summation") {
  std::mt19937_64 rng(7);
  for (auto [s, p, k] : {std::tuple{1u, 0u, 3u}, {2u, 1u, 4u}, {3u, 2u, 5u}}) {
    auto x = random_tensor(Shape{2, 3, 9, 8}, rng);
    auto w = random_tensor(Shape{4, 3, k, k}, rng);
    auto b = random_tensor(Shape{4}, rng);
    Graph<double> g;
    auto y = conv2d(g.constant(x), g.constant(w), g.constant(b), {s, p});
    CHECK(testing::max_abs_diff(y.value(), conv2d_reference(x, w, b, s, p)) < 1e-12);

    auto xt = random_tensor(Shape{2, 3, 4, 5}, rng);
    auto wt = random_tensor(Shape{3, 2, k, k}, rng);
    auto bt = random_tensor(Shape{2}, rng);
    auto yt = conv_transpose2d(g.constant(xt), g.constant(wt), g.constant(bt), {s, p});
    CHECK(testing::max_abs_diff(yt.value(), conv_transpose2d_reference(xt, wt, bt, s, p)) < 1e-12);
  }
}

TEST_CASE("conv2d with a unit delta kernel is the identity") {
  std::mt19937_64 rng(3);
  auto x = random_tensor(Shape{2, 1, 6, 7}, rng);
  Graph<double> g;
  auto y = conv2d(g.constant(x), g.constant(Tensor<double>(Shape{1, 1, 1, 1}, 1.0)), Var<double>{},
                  {1, 0});
  CHECK(y.value() == x);
}

TEST_CASE("simple derivatives") {
  Graph<double> g;
  auto x0 = g.leaf(Tensor<double>::scalar(0.0), true);
  auto grads = backward(sigmoid(x0));
  CHECK(grads[x0][0] == doctest::Approx(0.25).epsilon(1e-15));

  Graph<double> h;
  auto x = h.leaf(Tensor<double>(Shape{3}, {1, 2, 3}), true);
  auto gx = backward(sum(square(x)))[x];
  CHECK(gx[0] == 2.0);
  CHECK(gx[1] == 4.0);
  CHECK(gx[2] == 6.0);
}

TEST_CASE("unused parameters get zero gradients") {
  Graph<double> g;
  auto used = g.leaf(Tensor<double>(Shape{2}, 1.5), true);
  auto unused = g.leaf(Tensor<double>(Shape{3, 2}, 4.0), true);
  auto grads = backward(sum(used));
  REQUIRE(grads.contains(unused));
  CHECK(grads[unused].shape() == Shape{3, 2});
  CHECK(grads[unused] == Tensor<double>(Shape{3, 2}, 0.0));
}

TEST_CASE("backward error contracts") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>(Shape{2}, 1.0), true);
  CHECK_THROWS_AS(backward(square(x)), ShapeError);
  auto c = g.constant(Tensor<double>::scalar(2.0));
  CHECK_THROWS_AS(backward(square(c)), ConfigError);
}

TEST_CASE("shape errors name the op and the dims") {
  Graph<double> g;
  auto a = g.constant(Tensor<double>(Shape{2, 3}));
  auto b = g.constant(Tensor<double>(Shape{2, 4}));
  try {
    add(a, b);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("(2,3)") != std::string::npos);
    CHECK(msg.find("(2,4)") != std::string::npos);
  }
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, g.constant(Tensor<double>(Shape{2}))), ShapeError);
  auto x = g.constant(Tensor<double>(Shape{1, 1, 3, 3}));
  auto w = g.constant(Tensor<double>(Shape{1, 1, 5, 5}));
  CHECK_THROWS_AS(conv2d(x, w, Var<double>{}, {1, 0}), ShapeError);
}

TEST_CASE("matmul + relu chain matches central differences") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    std::mt19937_64 rng(seed);
    auto w1 = random_tensor(Shape{5, 6}, rng);
    auto w2 = random_tensor(Shape{6, 3}, rng);
    auto f = [&](Graph<double>& g, const Var<double>& x) {
      auto h = relu(matmul(x, g.constant(w1)));
      return sum(square(matmul(h, g.constant(w2))));
    };
    auto point = random_tensor(Shape{4, 5}, rng);
    auto report = grad_check(f, point, {1e-5, 1e-4});
    CHECK_MESSAGE(report.passed, "seed " << seed << " err " << report.max_relative_error);
  }
}

TEST_CASE("grad_check of a linear function is exact") {
  std::mt19937_64 rng(11);
  auto report = grad_check([](Graph<double>&, const Var<double>& x) { return sum(x); },
                           random_tensor(Shape{3, 3}, rng));
  CHECK(report.max_relative_error < 1e-9);
  CHECK(report.passed);
}

TEST_CASE("grad_check of conv2d then mean") {
  std::mt19937_64 rng(5);
  auto w = random_tensor(Shape{2, 1, 3, 3}, rng);
  auto report = grad_check(
      [&](Graph<double>& g, const Var<double>& x) {
        return mean(square(conv2d(x, g.constant(w), Var<double>{}, {1, 1})));
      },
      random_tensor(Shape{1, 1, 6, 6}, rng), {1e-5, 1e-4});
  CHECK(report.passed);
}

TEST_CASE("grad_check rejects non-finite probes") {
  CHECK_THROWS_AS(grad_check([](Graph<double>&, const Var<double>& x) { return sum(log(x)); },
                             Tensor<double>(Shape{2}, -1.0)),
                  NumericalError);
}

TEST_CASE("every primitive passes grad_check on 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    for (const auto& c : testing::primitive_cases(seed)) {
      auto report = grad_check(c.f, c.point, {1e-5, 1e-4});
      CHECK_MESSAGE(report.passed, c.name << " seed " << seed << " err "
                                          << report.max_relative_error);
    }
  }
}

TEST_CASE("backward is linear in the loss") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    auto point = random_tensor(Shape{3, 4}, rng);
    auto w = random_tensor(Shape{4, 2}, rng);
    const double a = std::uniform_real_distribution<double>(-2, 2)(rng);
    const double b = std::uniform_real_distribution<double>(-2, 2)(rng);
    auto f = [&](const Var<double>& x) { return sum(tanh(matmul(x, x.graph().constant(w)))); };
    auto h = [](const Var<double>& x) { return sum(exp(scale(x, 0.5))); };

    Graph<double> g1;
    auto x1 = g1.leaf(point, true);
    auto gf = backward(f(x1))[x1];
    Graph<double> g2;
    auto x2 = g2.leaf(point, true);
    auto gh = backward(h(x2))[x2];
    Graph<double> g3;
    auto x3 = g3.leaf(point, true);
    auto gc = backward(add(scale(f(x3), a), scale(h(x3), b)))[x3];
    for (std::size_t i = 0; i < point.size(); ++i) {
      CHECK(std::abs(gc[i] - (a * gf[i] + b * gh[i])) < 1e-12);
    }
  }
}

TEST_CASE("reshape, slice and concat round-trip exactly") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    auto t = random_tensor(Shape{4, 6, 3}, rng);
    Graph<double> g;
    auto x = g.constant(t);
    CHECK(reshape(reshape(x, Shape{12, 6}), Shape{4, 6, 3}).value() == t);
    for (std::size_t axis = 0; axis < 3; ++axis) {
      const std::size_t cut = 1 + trial % (t.dim(axis) - 1);
      auto left = slice(x, axis, 0, cut);
      auto right = slice(x, axis, cut, t.dim(axis));
      CHECK(concat<double>({left, right}, axis).value() == t);
    }
  }
}

TEST_CASE("float and double engines agree") {
  std::mt19937_64 rng(9);
  auto xd = random_tensor(Shape{7, 5}, rng);
  auto wd = random_tensor(Shape{5, 3}, rng);
  Graph<double> gd;
  auto yd = sigmoid(matmul(gd.constant(xd), gd.constant(wd)));
  Graph<float> gf;
  auto yf = sigmoid(matmul(gf.constant(xd.cast<float>()), gf.constant(wd.cast<float>())));
  for (std::size_t i = 0; i < yd.value().size(); ++i) {
    CHECK(std::abs(yd.value()[i] - static_cast<double>(yf.value()[i])) < 1e-6);
  }
}
