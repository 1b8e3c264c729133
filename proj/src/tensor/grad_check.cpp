#include "auxvae/tensor/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace auxvae::tensor {

namespace {

double evaluate(const ScalarFunction& f, const Tensor<double>& point) {
  Graph<double> g;
  Var<double> x = g.leaf(point, false);
  const Var<double> y = f(g, x);
  const double v = y.value().item();
  if (!std::isfinite(v)) throw NumericalError("grad_check: f is non-finite at a probe point");
  return v;
}

}  // namespace

GradCheckReport grad_check(const ScalarFunction& f, const Tensor<double>& point,
                           const GradCheckOptions& options) {
  Tensor<double> analytic;
  {
    Graph<double> g;
    Var<double> x = g.leaf(point, true);
    const Var<double> y = f(g, x);
    if (!std::isfinite(y.value().item())) {
      throw NumericalError("grad_check: f is non-finite at the base point");
    }
    analytic = backward(y)[x];
  }

  GradCheckReport report;
  report.coordinates = point.size();
  Tensor<double> probe = point;
  for (std::size_t i = 0; i < point.size(); ++i) {
    const double x0 = point[i];
    probe[i] = x0 + options.step;
    const double up = evaluate(f, probe);
    probe[i] = x0 - options.step;
    const double down = evaluate(f, probe);
    probe[i] = x0;
    const double numeric = (up - down) / (2.0 * options.step);
    const double a = analytic[i];
    const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
    const double err = std::abs(a - numeric) / denom;
    if (err > report.max_relative_error || i == 0) {
      report.max_relative_error = err;
      report.worst_coordinate = i;
      report.analytic_at_worst = a;
      report.numeric_at_worst = numeric;
    }
  }
  report.passed = report.max_relative_error <= options.tolerance;
  return report;
}

}  // namespace auxvae::tensor
