#include <cmath>
#include <random>

#include "auxvae/nn/adam.hpp"
#include "auxvae/nn/params.hpp"
#include "auxvae/tensor/grad_check.hpp"
#include "auxvae/tensor/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace auxvae;
using namespace auxvae::nn;
using tensor::Shape;
using tensor::Tensor;

namespace {

// Scalar Adam written out independently of the store machinery.
struct ScalarAdam {
  double theta, m = 0.0, v = 0.0;
  int t = 0;
  void step(double g, double lr = 1e-3, double b1 = 0.9, double b2 = 0.999, double eps = 1e-8) {
    ++t;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t));
    const double vh = v / (1 - std::pow(b2, t));
    theta -= lr * mh / (std::sqrt(vh) + eps);
  }
};

ParamStore<double> scalar_store(double value) {
  ParamStore<double> s;
  s.add("w", Tensor<double>(Shape{1}, value));
  return s;
}

GradMap<double> scalar_grad(double g) {
  GradMap<double> m;
  m.emplace("w", Tensor<double>(Shape{1}, g));
  return m;
}

}  // namespace

TEST_CASE("dense init shapes and zero bias") {
  auto store = init_params<double>({LayerSpec::dense(4, 3)}, 7);
  REQUIRE(store.size() == 2);
  CHECK(store.at("0.weight").value.shape() == Shape{3, 4});
  const auto& b = store.at("0.bias").value;
  CHECK(b.shape() == Shape{3});
  for (double x : b.values()) CHECK(x == 0.0);
  CHECK(store.at("0.weight").first_moment.shape() == Shape{3, 4});
}

TEST_CASE("init is a pure function of specs and seed") {
  std::vector<LayerSpec> specs{LayerSpec::dense(10, 8), LayerSpec::act(Activation::kRelu, {8}),
                               LayerSpec::dense(8, 2)};
  auto a = init_params<float>(specs, 42, "enc.");
  auto b = init_params<float>(specs, 42, "enc.");
  auto c = init_params<float>(specs, 43, "enc.");
  CHECK(a.same_values(b));
  CHECK_FALSE(a.same_values(c));
  CHECK(a.contains("enc.2.weight"));
  CHECK_FALSE(a.contains("enc.1.weight"));
}

TEST_CASE("Glorot variance") {
  auto store = init_params<double>({LayerSpec::dense(100, 100)}, 3);
  const auto& w = store.at("0.weight").value;
  REQUIRE(w.size() == 10000);
  double mean = 0.0;
  for (double x : w.values()) mean += x;
  mean /= double(w.size());
  double var = 0.0;
  for (double x : w.values()) var += (x - mean) * (x - mean);
  var /= double(w.size());
  const double expected = 2.0 / 200.0;
  CHECK(std::abs(var - expected) / expected < 0.2);
  const double a = std::sqrt(6.0 / 200.0);
  for (double x : w.values()) CHECK(std::abs(x) <= a);
}

TEST_CASE("conv fan sizes and weight layouts") {
  auto c = LayerSpec::conv2d(1, 33, 33, 32, 4, 2, 1);
  CHECK(c.out == Shape{32, 16, 16});
  auto t = LayerSpec::conv_transpose2d(32, 8, 8, 1, 5, 4, 0);
  CHECK(t.out == Shape{1, 33, 33});
  auto store = init_params<double>({c}, 1);
  CHECK(store.at("0.weight").value.shape() == Shape{32, 1, 4, 4});
  auto ts = init_params<double>({t}, 1);
  CHECK(ts.at("0.weight").value.shape() == Shape{32, 1, 5, 5});
}

TEST_CASE("inconsistent chain names the boundary") {
  std::vector<LayerSpec> specs{LayerSpec::dense(4, 3), LayerSpec::dense(5, 2)};
  try {
    init_params<double>(specs, 1);
    FAIL("expected ConfigError");
  } catch (const ConfigError& e) {
    CHECK(std::string(e.what()).find("layer 0") != std::string::npos);
    CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
  }
  LayerSpec bad = LayerSpec::conv2d(1, 33, 33, 8, 4, 2, 1);
  bad.out[1] = 17;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  CHECK_THROWS_AS(LayerSpec::act(Activation::kRelu, {0}).validate(), ConfigError);
}

TEST_CASE("layer spec text round trip") {
  std::vector<LayerSpec> specs{LayerSpec::dense(1089, 512), LayerSpec::act(Activation::kTanh, {512}),
                               LayerSpec::conv2d(1, 33, 33, 32, 4, 2, 1),
                               LayerSpec::conv_transpose2d(32, 1, 1, 128, 4, 2, 1),
                               LayerSpec::act(Activation::kSigmoid, {1, 33, 33})};
  for (const auto& s : specs) CHECK(parse_layer_spec(to_string(s)) == s);
  CHECK(to_string(specs[2]) == "conv2d in=1x33x33 out=32x16x16 k=4 s=2 p=1 act=none");
  CHECK_THROWS_AS(parse_layer_spec("dense in=4 out=3 q=1"), ConfigError);
  CHECK_THROWS_AS(parse_layer_spec("pool in=4 out=3"), ConfigError);
  CHECK_THROWS_AS(parse_layer_spec("dense in=4x out=3"), ConfigError);
}

TEST_CASE("forward chain reshapes across flatten boundaries") {
  std::vector<LayerSpec> specs{LayerSpec::conv2d(1, 6, 6, 2, 3, 1, 0),
                               LayerSpec::act(Activation::kRelu, {2, 4, 4}),
                               LayerSpec::dense(32, 3)};
  auto store = init_params<double>(specs, 5);
  std::mt19937_64 rng(9);
  auto x0 = testing::random_tensor({2, 1, 6, 6}, rng);
  tensor::Graph<double> g;
  BoundParams<double> bound(g, store, true);
  auto y = forward_chain(specs, bound, "", g.leaf(x0, false));
  CHECK(y.shape() == Shape{2, 3});
  auto grads = bound.gradients(tensor::backward(tensor::sum(y)));
  CHECK(grads.size() == 4);
  CHECK(grads.at("0.weight").shape() == Shape{2, 1, 3, 3});

  // Gradient with respect to the input through the whole chain.
  auto f = [&](tensor::Graph<double>& gg, const tensor::Var<double>& x) {
    BoundParams<double> b(gg, store, false);
    return tensor::sum(tensor::square(forward_chain(specs, b, "", x)));
  };
  auto report = tensor::grad_check(f, x0);
  CHECK(report.passed);
}

TEST_CASE("Adam zero gradient leaves parameters unchanged") {
  auto s = scalar_store(0.7);
  adam_step(s, scalar_grad(0.0));
  CHECK(s.at("w").value[0] == 0.7);
  CHECK(s.at("w").step == 1);

  // Moments left over from earlier steps decay geometrically.
  s.at("w").first_moment[0] = 0.5;
  s.at("w").second_moment[0] = 0.25;
  adam_step(s, scalar_grad(0.0));
  CHECK(s.at("w").first_moment[0] == doctest::Approx(0.45));
  CHECK(s.at("w").second_moment[0] == doctest::Approx(0.25 * 0.999));
  CHECK(s.at("w").step == 2);
}

TEST_CASE("Adam first step with unit gradient") {
  auto s = scalar_store(0.0);
  adam_step(s, scalar_grad(1.0));
  CHECK(s.at("w").value[0] == doctest::Approx(-1e-3).epsilon(1e-6));
}

TEST_CASE("Adam matches scalar oracle") {
  auto s = scalar_store(0.3);
  ScalarAdam ref{0.3};
  for (double g : {0.4, 0.4, -1.3, 2.0}) {
    adam_step(s, scalar_grad(g));
    ref.step(g);
    CHECK(std::abs(s.at("w").value[0] - ref.theta) <= 1e-12);
  }
}

TEST_CASE("Adam update invariant to gradient scale") {
  auto a = scalar_store(0.0);
  auto b = scalar_store(0.0);
  for (int i = 0; i < 5; ++i) {
    adam_step(a, scalar_grad(0.2));
    adam_step(b, scalar_grad(2.0));
    CHECK(std::abs(a.at("w").value[0] - b.at("w").value[0]) <= 1e-6);
  }
}

TEST_CASE("Adam key contract") {
  auto s = scalar_store(0.0);
  CHECK_THROWS_AS(adam_step(s, GradMap<double>{}), ConfigError);
  auto extra = scalar_grad(1.0);
  extra.emplace("ghost", Tensor<double>(Shape{1}, 1.0));
  CHECK_THROWS_AS(adam_step(s, extra), ConfigError);
  GradMap<double> wrong;
  wrong.emplace("w", Tensor<double>(Shape{2}, 1.0));
  CHECK_THROWS_AS(adam_step(s, wrong), ShapeError);
  CHECK(s.at("w").step == 0);
}

TEST_CASE("global norm clipping") {
  GradMap<double> g;
  g.emplace("a", Tensor<double>(Shape{1}, 3.0));
  g.emplace("b", Tensor<double>(Shape{1}, 4.0));
  CHECK(clip_global_norm(g, 10.0) == doctest::Approx(5.0));
  CHECK(g.at("a")[0] == 3.0);
  CHECK(clip_global_norm(g, 1.0) == doctest::Approx(5.0));
  CHECK(g.at("a")[0] == doctest::Approx(0.6));
  CHECK(g.at("b")[0] == doctest::Approx(0.8));
}

TEST_CASE("cast resets optimizer state") {
  auto s = init_params<double>({LayerSpec::dense(3, 2)}, 1);
  GradMap<double> g;
  for (const auto& p : s) g.emplace(p.name, Tensor<double>(p.value.shape(), 1.0));
  adam_step(s, g);
  auto f = s.cast<float>();
  CHECK(f.at("0.weight").step == 0);
  CHECK(f.at("0.weight").value[0] == static_cast<float>(s.at("0.weight").value[0]));
}
