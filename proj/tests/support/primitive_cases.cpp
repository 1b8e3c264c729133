#include "primitive_cases.hpp"

#include <random>

#include "../unit/test_util.hpp"
#include "auxvae/tensor/ops.hpp"

namespace auxvae::testing {

namespace {

using tensor::ConvAttrs;
using tensor::Graph;
using tensor::Shape;
using tensor::Tensor;
using tensor::Var;

// Contracts `out` with a weight tensor that depends only on the shape and seed.
Var<double> contract(Graph<double>& g, const Var<double>& out, std::uint64_t seed) {
  std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
  Tensor<double> w = random_tensor(out.shape(), rng, -1.0, 1.0);
  return tensor::sum(tensor::mul(out, g.constant(std::move(w))));
}

using UnaryOp = std::function<Var<double>(const Var<double>&)>;

PrimitiveCase unary_case(std::string name, Tensor<double> point, UnaryOp op, std::uint64_t seed) {
  return {std::move(name), std::move(point),
          [op, seed](Graph<double>& g, const Var<double>& x) { return contract(g, op(x), seed); }};
}

}  // namespace

std::vector<PrimitiveCase> primitive_cases(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<PrimitiveCase> cases;
  const Shape mat{3, 4};

  // Binary elementwise ops, both operand positions, exact and bias shapes.
  for (const char* kind : {"add", "sub", "mul"}) {
    const std::string k = kind;
    auto apply = [k](const Var<double>& a, const Var<double>& b) {
      if (k == "add") return tensor::add(a, b);
      if (k == "sub") return tensor::sub(a, b);
      return tensor::mul(a, b);
    };
    Tensor<double> other = random_tensor(mat, rng);
    Tensor<double> bias = random_tensor(Shape{4}, rng);
    Tensor<double> base = random_tensor(mat, rng);
    cases.push_back({k + "/lhs", random_tensor(mat, rng),
                     [apply, other, seed](Graph<double>& g, const Var<double>& x) {
                       return contract(g, apply(x, g.constant(other)), seed);
                     }});
    cases.push_back({k + "/rhs", random_tensor(mat, rng),
                     [apply, base, seed](Graph<double>& g, const Var<double>& x) {
                       return contract(g, apply(g.constant(base), x), seed);
                     }});
    cases.push_back({k + "/bias", random_tensor(Shape{4}, rng),
                     [apply, base, seed](Graph<double>& g, const Var<double>& x) {
                       return contract(g, apply(g.constant(base), x), seed);
                     }});
    cases.push_back({k + "/lhs_with_bias", random_tensor(mat, rng),
                     [apply, bias, seed](Graph<double>& g, const Var<double>& x) {
                       return contract(g, apply(x, g.constant(bias)), seed);
                     }});
  }

  cases.push_back(unary_case("scale", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::scale(x, -1.7); }, seed));
  cases.push_back(unary_case("add_scalar", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::add_scalar(x, 0.3); },
                             seed));
  cases.push_back(unary_case("relu", random_away_from_zero(mat, rng),
                             [](const Var<double>& x) { return tensor::relu(x); }, seed));
  cases.push_back(unary_case("sigmoid", random_tensor(mat, rng, -3.0, 3.0),
                             [](const Var<double>& x) { return tensor::sigmoid(x); }, seed));
  cases.push_back(unary_case("tanh", random_tensor(mat, rng, -2.0, 2.0),
                             [](const Var<double>& x) { return tensor::tanh(x); }, seed));
  cases.push_back(unary_case("exp", random_tensor(mat, rng, -2.0, 2.0),
                             [](const Var<double>& x) { return tensor::exp(x); }, seed));
  cases.push_back(unary_case("log", random_tensor(mat, rng, 0.2, 3.0),
                             [](const Var<double>& x) { return tensor::log(x); }, seed));
  cases.push_back(unary_case("square", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::square(x); }, seed));
  cases.push_back(unary_case("sqrt", random_tensor(mat, rng, 0.2, 3.0),
                             [](const Var<double>& x) { return tensor::sqrt(x); }, seed));
  cases.push_back(unary_case("abs", random_away_from_zero(mat, rng),
                             [](const Var<double>& x) { return tensor::abs(x); }, seed));
  cases.push_back(unary_case("reciprocal", random_tensor(mat, rng, 0.3, 2.0),
                             [](const Var<double>& x) { return tensor::reciprocal(x); }, seed));
  cases.push_back(unary_case("pow3", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::pow(x, 3); }, seed));
  {
    // Keep samples clear of the clamp bounds.
    Tensor<double> p = random_away_from_zero(mat, rng, 0.1, 0.4);
    for (std::size_t i = 0; i < p.size(); i += 2) p[i] += (p[i] > 0 ? 1.0 : -1.0);
    cases.push_back(unary_case("clamp", std::move(p),
                               [](const Var<double>& x) { return tensor::clamp(x, -1.0, 1.0); },
                               seed));
  }

  cases.push_back({"sum", random_tensor(mat, rng),
                   [](Graph<double>&, const Var<double>& x) {
                     return tensor::sum(tensor::square(x));
                   }});
  cases.push_back({"mean", random_tensor(mat, rng),
                   [](Graph<double>&, const Var<double>& x) {
                     return tensor::mean(tensor::square(x));
                   }});
  cases.push_back(unary_case("sum_rows", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::sum_rows(x); }, seed));
  cases.push_back(unary_case("mean_rows", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::mean_rows(x); }, seed));

  {
    Tensor<double> right = random_tensor(Shape{4, 5}, rng);
    Tensor<double> left = random_tensor(Shape{3, 4}, rng);
    cases.push_back({"matmul/lhs", random_tensor(Shape{3, 4}, rng),
                     [right, seed](Graph<double>& g, const Var<double>& x) {
                       return contract(g, tensor::matmul(x, g.constant(right)), seed);
                     }});
    cases.push_back({"matmul/rhs", random_tensor(Shape{4, 5}, rng),
                     [left, seed](Graph<double>& g, const Var<double>& x) {
                       return contract(g, tensor::matmul(g.constant(left), x), seed);
                     }});
  }
  cases.push_back(unary_case("transpose", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::transpose(x); }, seed));
  cases.push_back(unary_case("reshape", random_tensor(mat, rng),
                             [](const Var<double>& x) { return tensor::reshape(x, Shape{2, 6}); },
                             seed));
  cases.push_back(unary_case("slice", random_tensor(Shape{3, 4, 2}, rng),
                             [](const Var<double>& x) { return tensor::slice(x, 1, 1, 3); },
                             seed));
  {
    Tensor<double> other = random_tensor(Shape{3, 2}, rng);
    cases.push_back({"concat", random_tensor(mat, rng),
                     [other, seed](Graph<double>& g, const Var<double>& x) {
                       return contract(g, tensor::concat<double>({g.constant(other), x}, 1), seed);
                     }});
  }

  {
    const ConvAttrs attrs{2, 1};
    Tensor<double> w = random_tensor(Shape{3, 2, 3, 3}, rng);
    Tensor<double> b = random_tensor(Shape{3}, rng);
    Tensor<double> x = random_tensor(Shape{2, 2, 5, 5}, rng);
    cases.push_back({"conv2d/input", random_tensor(Shape{2, 2, 5, 5}, rng),
                     [w, b, attrs, seed](Graph<double>& g, const Var<double>& in) {
                       return contract(g, tensor::conv2d(in, g.constant(w), g.constant(b), attrs),
                                       seed);
                     }});
    cases.push_back({"conv2d/weight", random_tensor(Shape{3, 2, 3, 3}, rng),
                     [x, b, attrs, seed](Graph<double>& g, const Var<double>& wt) {
                       return contract(g, tensor::conv2d(g.constant(x), wt, g.constant(b), attrs),
                                       seed);
                     }});
    cases.push_back({"conv2d/bias", random_tensor(Shape{3}, rng),
                     [x, w, attrs, seed](Graph<double>& g, const Var<double>& bias) {
                       return contract(g, tensor::conv2d(g.constant(x), g.constant(w), bias, attrs),
                                       seed);
                     }});
  }
  {
    const ConvAttrs attrs{2, 1};
    Tensor<double> w = random_tensor(Shape{2, 3, 4, 4}, rng);
    Tensor<double> b = random_tensor(Shape{3}, rng);
    Tensor<double> x = random_tensor(Shape{2, 2, 3, 3}, rng);
    cases.push_back({"conv_transpose2d/input", random_tensor(Shape{2, 2, 3, 3}, rng),
                     [w, b, attrs, seed](Graph<double>& g, const Var<double>& in) {
                       return contract(
                           g, tensor::conv_transpose2d(in, g.constant(w), g.constant(b), attrs),
                           seed);
                     }});
    cases.push_back({"conv_transpose2d/weight", random_tensor(Shape{2, 3, 4, 4}, rng),
                     [x, b, attrs, seed](Graph<double>& g, const Var<double>& wt) {
                       return contract(
                           g, tensor::conv_transpose2d(g.constant(x), wt, g.constant(b), attrs),
                           seed);
                     }});
    cases.push_back({"conv_transpose2d/bias", random_tensor(Shape{3}, rng),
                     [x, w, attrs, seed](Graph<double>& g, const Var<double>& bias) {
                       return contract(
                           g, tensor::conv_transpose2d(g.constant(x), g.constant(w), bias, attrs),
                           seed);
                     }});
  }

  {
    Tensor<double> targets = random_tensor(mat, rng, 0.0, 1.0);
    Tensor<double> logits = random_tensor(mat, rng, -3.0, 3.0);
    cases.push_back({"bce_with_logits/logits", random_tensor(mat, rng, -3.0, 3.0),
                     [targets](Graph<double>& g, const Var<double>& l) {
                       return tensor::bce_with_logits_sum(l, g.constant(targets));
                     }});
    cases.push_back({"bce_with_logits/targets", random_tensor(mat, rng, 0.0, 1.0),
                     [logits](Graph<double>& g, const Var<double>& t) {
                       return tensor::bce_with_logits_sum(g.constant(logits), t);
                     }});
  }
  return cases;
}

}  // namespace auxvae::testing
