#include "auxvae/nn/adam.hpp"

#include <cmath>

namespace auxvae::nn {

template <typename T>
void adam_step(ParamStore<T>& store, const GradMap<T>& grads, const AdamOptions& options) {
  if (grads.size() != store.size()) {
    for (const auto& [name, g] : grads) {
      if (!store.contains(name)) throw ConfigError("adam: gradient for unknown parameter '" + name + "'");
    }
  }
  for (auto& p : store) {
    auto it = grads.find(p.name);
    if (it == grads.end()) throw ConfigError("adam: missing gradient for '" + p.name + "'");
    if (it->second.shape() != p.value.shape()) {
      throw ShapeError("adam: gradient shape " + tensor::to_string(it->second.shape()) +
                       " does not match parameter '" + p.name + "' " +
                       tensor::to_string(p.value.shape()));
    }
  }
  const double b1 = options.beta1;
  const double b2 = options.beta2;
  for (auto& p : store) {
    const auto& g = grads.at(p.name);
    ++p.step;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(p.step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(p.step));
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double gi = g[i];
      const double m = b1 * p.first_moment[i] + (1.0 - b1) * gi;
      const double v = b2 * p.second_moment[i] + (1.0 - b2) * gi * gi;
      p.first_moment[i] = static_cast<T>(m);
      p.second_moment[i] = static_cast<T>(v);
      const double update = options.learning_rate * (m / c1) / (std::sqrt(v / c2) + options.epsilon);
      p.value[i] = static_cast<T>(p.value[i] - update);
    }
  }
}

template <typename T>
double clip_global_norm(GradMap<T>& grads, double max_norm) {
  double sq = 0.0;
  for (const auto& [name, g] : grads) {
    for (std::size_t i = 0; i < g.size(); ++i) sq += static_cast<double>(g[i]) * g[i];
  }
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0.0) {
    const T factor = static_cast<T>(max_norm / norm);
    for (auto& [name, g] : grads) {
      for (std::size_t i = 0; i < g.size(); ++i) g[i] *= factor;
    }
  }
  return norm;
}

template void adam_step(ParamStore<float>&, const GradMap<float>&, const AdamOptions&);
template void adam_step(ParamStore<double>&, const GradMap<double>&, const AdamOptions&);
template double clip_global_norm(GradMap<float>&, double);
template double clip_global_norm(GradMap<double>&, double);

}  // namespace auxvae::nn
