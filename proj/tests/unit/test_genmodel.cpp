#include <cmath>
#include <random>

#include "auxvae/genmodel/model.hpp"
#include "auxvae/tensor/grad_check.hpp"
#include "auxvae/tensor/ops.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace auxvae;
using namespace auxvae::genmodel;
using tensor::Shape;
using tensor::Tensor;

namespace {

const Shape kGalaxy{1, 33, 33};

}  // namespace

TEST_CASE("conv descriptor follows the layer table") {
  auto a = ArchitectureDescriptor::make(ArchVariant::kConv, kGalaxy, 10, 5);
  // 4 convs + relus, FC 256 + relu, FC 2*d_z.
  REQUIRE(a.encoder.size() == 11);
  CHECK(a.encoder[0].out == Shape{32, 16, 16});
  CHECK(a.encoder[6].out == Shape{256, 2, 2});
  CHECK(a.encoder[8].in == Shape{1024});
  CHECK(a.encoder.back().out == Shape{20});
  CHECK(a.decoder[0].out == Shape{32});
  CHECK(a.decoder[2].in == Shape{32, 1, 1});
  CHECK(a.decoder[2].out == Shape{128, 2, 2});
  CHECK(a.decoder[6].out == Shape{32, 8, 8});
  CHECK(a.decoder[8].out == Shape{1, 33, 33});
  CHECK(a.decoder.back().activation == nn::Activation::kSigmoid);
  CHECK_THROWS_AS(ArchitectureDescriptor::make(ArchVariant::kConv, {1, 64, 64}, 10, 5), ConfigError);
}

TEST_CASE("descriptor invariants and text round trip") {
  for (auto v : {ArchVariant::kMlp, ArchVariant::kConv}) {
    auto a = ArchitectureDescriptor::make(v, kGalaxy, 10, 3);
    CHECK(ArchitectureDescriptor::from_text(a.to_text()) == a);
  }
  CHECK_THROWS_AS(ArchitectureDescriptor::make(ArchVariant::kMlp, kGalaxy, 4, 5), ConfigError);
  auto a = ArchitectureDescriptor::make(ArchVariant::kMlp, kGalaxy, 10, 3);
  a.decoder.pop_back();
  CHECK_THROWS_AS(a.validate(), ConfigError);
  CHECK_THROWS_AS(ArchitectureDescriptor::from_text("variant mlp\nimage 1x33x33\n"), ConfigError);
}

TEST_CASE("conv encode on one image gives ten means and log-variances") {
  auto m = init_model<float>(ArchitectureDescriptor::make(ArchVariant::kConv, kGalaxy, 10, 5), 1);
  std::mt19937_64 rng(2);
  auto x = testing::random_tensor({1, 1, 33, 33}, rng, 0.0, 1.0).cast<float>();
  auto post = encode_values(m, x);
  CHECK(post.mu.shape() == Shape{1, 10});
  CHECK(post.logvar.shape() == Shape{1, 10});
  auto again = encode_values(m, x);
  CHECK(post.mu == again.mu);
  auto xr = decode_values(m, post.mu);
  CHECK(xr.shape() == Shape{1, 1, 33, 33});
}

TEST_CASE("fresh MLP on a zero image and zero latent") {
  auto m = init_model<double>(ArchitectureDescriptor::make(ArchVariant::kMlp, kGalaxy, 10, 5), 3);
  auto post = encode_values(m, Tensor<double>(Shape{1, 1, 33, 33}));
  for (double v : post.mu.values()) {
    CHECK(std::isfinite(v));
    CHECK(std::abs(v) < 10.0);
  }
  auto x = decode_values(m, Tensor<double>(Shape{2, 10}));
  CHECK(x.shape() == Shape{2, 1, 33, 33});
  for (double v : x.values()) CHECK(v == 0.5);
}

TEST_CASE("encode rejects mismatched inputs") {
  auto m = init_model<double>(ArchitectureDescriptor::make(ArchVariant::kMlp, {1, 8, 8}, 4, 2), 3);
  tensor::Graph<double> g;
  nn::BoundParams<double> b(g, m.params, false);
  CHECK_THROWS_AS(encode(m.arch, b, g.constant(Tensor<double>(Shape{2, 1, 9, 9}))), ShapeError);
  CHECK_THROWS_AS(decode(m.arch, b, g.constant(Tensor<double>(Shape{2, 3}))), ShapeError);
}

TEST_CASE("logvar is clamped") {
  auto m = init_model<double>(ArchitectureDescriptor::make(ArchVariant::kMlp, {1, 4, 4}, 2, 1), 3);
  for (auto& p : m.params) {
    if (p.name == "enc.4.bias") {
      p.value[2] = 50.0;
      p.value[3] = -50.0;
    }
  }
  auto post = encode_values(m, Tensor<double>(Shape{1, 1, 4, 4}));
  CHECK(post.logvar[0] == 10.0);
  CHECK(post.logvar[1] == -10.0);
}

TEST_CASE("reparameterize") {
  tensor::Graph<double> g;
  auto mu = g.leaf(Tensor<double>(Shape{1, 2}, {0.3, -1.0}), true);
  auto lv = g.leaf(Tensor<double>(Shape{1, 2}, {0.0, 0.0}), true);
  Posterior<double> p{mu, lv};
  auto z0 = reparameterize(p, g.constant(Tensor<double>(Shape{1, 2})));
  CHECK(z0.value() == mu.value());
  auto z1 = reparameterize(p, g.constant(Tensor<double>(Shape{1, 2}, {0.5, 2.0})));
  CHECK(z1.value()[0] == doctest::Approx(0.8));
  CHECK(z1.value()[1] == doctest::Approx(1.0));
  CHECK_THROWS_AS(reparameterize(p, g.constant(Tensor<double>(Shape{2, 2}))), ShapeError);

  // Monte Carlo variance of z against exp(logvar).
  const std::size_t n = 100000;
  const double logvar = 0.7;
  tensor::Graph<double> h;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> nd;
  Tensor<double> noise(Shape{n, 1});
  for (std::size_t i = 0; i < n; ++i) noise[i] = nd(rng);
  Posterior<double> q{h.constant(Tensor<double>(Shape{n, 1}, 2.0)),
                      h.constant(Tensor<double>(Shape{n, 1}, logvar))};
  auto z = reparameterize(q, h.constant(noise)).value();
  double mean = 0.0;
  for (double v : z.values()) mean += v;
  mean /= double(n);
  double var = 0.0;
  for (double v : z.values()) var += (v - mean) * (v - mean);
  var /= double(n - 1);
  CHECK(std::abs(var / std::exp(logvar) - 1.0) < 0.03);
}

TEST_CASE("partition is lossless including degenerate splits") {
  std::mt19937_64 rng(4);
  tensor::Graph<double> g;
  auto z = g.constant(testing::random_tensor({3, 10}, rng));
  for (std::size_t d : {0, 5, 10}) {
    auto [a, r] = partition(z, d);
    CHECK(a.shape() == Shape{3, d});
    CHECK(r.shape() == Shape{3, 10 - d});
    CHECK(tensor::concat(std::vector{a, r}, 1).value() == z.value());
  }
  CHECK_THROWS_AS(partition(z, 11), ConfigError);
}

TEST_CASE("decoder gradient with respect to z") {
  auto m = init_model<double>(ArchitectureDescriptor::make(ArchVariant::kMlp, {1, 5, 5}, 3, 1), 8);
  std::mt19937_64 rng(5);
  auto z0 = testing::random_tensor({2, 3}, rng);
  auto f = [&](tensor::Graph<double>& g, const tensor::Var<double>& z) {
    nn::BoundParams<double> b(g, m.params, false);
    return tensor::sum(tensor::square(decode(m.arch, b, z)));
  };
  auto r = tensor::grad_check(f, z0);
  CHECK(r.passed);
  CHECK(r.max_relative_error <= 1e-4);
}

TEST_CASE("deterministic encode then decode") {
  auto m = init_model<float>(ArchitectureDescriptor::make(ArchVariant::kMlp, kGalaxy, 10, 5), 4);
  auto m2 = init_model<float>(ArchitectureDescriptor::make(ArchVariant::kMlp, kGalaxy, 10, 5), 4);
  CHECK(m.params.same_values(m2.params));
  std::mt19937_64 rng(6);
  auto x = testing::random_tensor({5, 1, 33, 33}, rng, 0.0, 1.0).cast<float>();
  CHECK(reconstruct_values(m, x, 2) == reconstruct_values(m2, x, 5));
}

TEST_CASE("row helpers") {
  Tensor<double> t(Shape{3, 2}, {1, 2, 3, 4, 5, 6});
  CHECK(take_rows(t, 1, 3) == Tensor<double>(Shape{2, 2}, {3, 4, 5, 6}));
  CHECK(gather_rows(t, {2, 0}) == Tensor<double>(Shape{2, 2}, {5, 6, 1, 2}));
  CHECK_THROWS_AS(gather_rows(t, {3}), ShapeError);
}
