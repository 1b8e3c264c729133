#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "auxvae/tensor/tensor.hpp"

namespace auxvae::testing {

inline tensor::Tensor<double> random_tensor(tensor::Shape shape, std::mt19937_64& rng,
                                            double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  tensor::Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

// Values in [lo, hi] with magnitude at least `gap`, away from kinks at 0.
inline tensor::Tensor<double> random_away_from_zero(tensor::Shape shape, std::mt19937_64& rng,
                                                    double gap = 0.1, double hi = 1.0) {
  std::uniform_real_distribution<double> mag(gap, hi);
  std::bernoulli_distribution sign(0.5);
  tensor::Tensor<double> t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = sign(rng) ? mag(rng) : -mag(rng);
  return t;
}

inline double max_abs_diff(const tensor::Tensor<double>& a, const tensor::Tensor<double>& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace auxvae::testing
