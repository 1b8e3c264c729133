#pragma once

#include <cstddef>
#include <functional>

#include "auxvae/tensor/graph.hpp"

namespace auxvae::tensor {

// f builds a scalar from a gradient-tracked leaf on the supplied graph.
using ScalarFunction = std::function<Var<double>(Graph<double>&, const Var<double>&)>;

struct GradCheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  // Denominator floor of the relative error, so coordinates whose true
  // gradient is ~0 are judged on absolute error instead.
  double floor = 1e-6;
};

struct GradCheckReport {
  double max_relative_error = 0.0;
  std::size_t worst_coordinate = 0;
  double analytic_at_worst = 0.0;
  double numeric_at_worst = 0.0;
  std::size_t coordinates = 0;
  bool passed = false;
};

// Compares reverse-mode gradients with central differences at every
// coordinate of `point`. Error per coordinate: |a - n| / max(|a|, |n|, floor).
// Throws NumericalError if f is non-finite at any probe point.
GradCheckReport grad_check(const ScalarFunction& f, const Tensor<double>& point,
                           const GradCheckOptions& options = {});

}  // namespace auxvae::tensor
