#include "auxvae/nn/params.hpp"

#include <cmath>
#include <random>

#include "auxvae/tensor/ops.hpp"

namespace auxvae::nn {

using tensor::Shape;
using tensor::Tensor;
using tensor::Var;

std::string weight_name(const std::string& prefix, std::size_t layer) {
  return prefix + std::to_string(layer) + ".weight";
}

std::string bias_name(const std::string& prefix, std::size_t layer) {
  return prefix + std::to_string(layer) + ".bias";
}

template <typename T>
void ParamStore<T>::add(std::string name, Tensor<T> value) {
  if (contains(name)) throw ConfigError("param store: duplicate parameter '" + name + "'");
  Parameter<T> p;
  p.name = std::move(name);
  p.first_moment = Tensor<T>(value.shape());
  p.second_moment = Tensor<T>(value.shape());
  p.value = std::move(value);
  params_.push_back(std::move(p));
}

template <typename T>
void ParamStore<T>::append(ParamStore other) {
  for (auto& p : other.params_) {
    if (contains(p.name)) throw ConfigError("param store: duplicate parameter '" + p.name + "'");
    params_.push_back(std::move(p));
  }
}

template <typename T>
bool ParamStore<T>::contains(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return true;
  }
  return false;
}

template <typename T>
const Parameter<T>& ParamStore<T>::at(const std::string& name) const {
  for (const auto& p : params_) {
    if (p.name == name) return p;
  }
  throw ConfigError("param store: no parameter '" + name + "'");
}

template <typename T>
Parameter<T>& ParamStore<T>::at(const std::string& name) {
  return const_cast<Parameter<T>&>(static_cast<const ParamStore&>(*this).at(name));
}

template <typename T>
bool ParamStore<T>::same_values(const ParamStore& other) const {
  if (params_.size() != other.params_.size()) return false;
  for (std::size_t i = 0; i < params_.size(); ++i) {
    if (params_[i].name != other.params_[i].name || !(params_[i].value == other.params_[i].value)) {
      return false;
    }
  }
  return true;
}

template <typename T>
ParamStore<T> init_params(const std::vector<LayerSpec>& specs, std::uint64_t seed,
                          const std::string& prefix) {
  validate_chain(specs);
  std::mt19937_64 rng(seed);
  ParamStore<T> store;
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    if (!s.has_params()) continue;
    Shape wshape;
    std::size_t fan_in = 0;
    std::size_t fan_out = 0;
    std::size_t bias_extent = 0;
    switch (s.kind) {
      case LayerKind::kDense:
        wshape = {s.out[0], s.in[0]};
        fan_in = s.in[0];
        fan_out = s.out[0];
        bias_extent = s.out[0];
        break;
      case LayerKind::kConv2d:
        wshape = {s.out[0], s.in[0], s.kernel, s.kernel};
        fan_in = s.in[0] * s.kernel * s.kernel;
        fan_out = s.out[0] * s.kernel * s.kernel;
        bias_extent = s.out[0];
        break;
      case LayerKind::kConvTranspose2d:
        wshape = {s.in[0], s.out[0], s.kernel, s.kernel};
        fan_in = s.in[0] * s.kernel * s.kernel;
        fan_out = s.out[0] * s.kernel * s.kernel;
        bias_extent = s.out[0];
        break;
      case LayerKind::kActivation:
        break;
    }
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    std::uniform_real_distribution<double> dist(-a, a);
    Tensor<T> w(wshape);
    for (std::size_t k = 0; k < w.size(); ++k) w[k] = static_cast<T>(dist(rng));
    store.add(weight_name(prefix, i), std::move(w));
    store.add(bias_name(prefix, i), Tensor<T>(Shape{bias_extent}));
  }
  return store;
}

template <typename T>
BoundParams<T>::BoundParams(tensor::Graph<T>& graph, const ParamStore<T>& store,
                            bool requires_grad) {
  for (const auto& p : store) vars_.emplace(p.name, graph.leaf(p.value, requires_grad));
}

template <typename T>
const Var<T>& BoundParams<T>::operator[](const std::string& name) const {
  auto it = vars_.find(name);
  if (it == vars_.end()) throw ConfigError("bound params: no parameter '" + name + "'");
  return it->second;
}

template <typename T>
GradMap<T> BoundParams<T>::gradients(const tensor::Gradients<T>& grads) const {
  GradMap<T> out;
  for (const auto& [name, var] : vars_) out.emplace(name, grads[var]);
  return out;
}

template <typename T>
Var<T> forward_chain(const std::vector<LayerSpec>& specs, const BoundParams<T>& params,
                     const std::string& prefix, Var<T> x) {
  const std::size_t batch = x.shape().at(0);
  for (std::size_t i = 0; i < specs.size(); ++i) {
    const LayerSpec& s = specs[i];
    Shape want{batch};
    want.insert(want.end(), s.in.begin(), s.in.end());
    if (x.shape() != want) {
      if (tensor::element_count(x.shape()) != tensor::element_count(want)) {
        throw ShapeError("layer " + std::to_string(i) + ": input " + tensor::to_string(x.shape()) +
                         " does not fit " + to_string(s));
      }
      x = tensor::reshape(x, want);
    }
    switch (s.kind) {
      case LayerKind::kDense:
        x = tensor::add(tensor::matmul(x, tensor::transpose(params[weight_name(prefix, i)])),
                        params[bias_name(prefix, i)]);
        break;
      case LayerKind::kConv2d:
        x = tensor::conv2d(x, params[weight_name(prefix, i)], params[bias_name(prefix, i)],
                           {s.stride, s.padding});
        break;
      case LayerKind::kConvTranspose2d:
        x = tensor::conv_transpose2d(x, params[weight_name(prefix, i)],
                                     params[bias_name(prefix, i)], {s.stride, s.padding});
        break;
      case LayerKind::kActivation:
        switch (s.activation) {
          case Activation::kNone: break;
          case Activation::kRelu: x = tensor::relu(x); break;
          case Activation::kSigmoid: x = tensor::sigmoid(x); break;
          case Activation::kTanh: x = tensor::tanh(x); break;
        }
        break;
    }
  }
  return x;
}

template class ParamStore<float>;
template class ParamStore<double>;
template class BoundParams<float>;
template class BoundParams<double>;
template ParamStore<float> init_params(const std::vector<LayerSpec>&, std::uint64_t,
                                       const std::string&);
template ParamStore<double> init_params(const std::vector<LayerSpec>&, std::uint64_t,
                                        const std::string&);
template Var<float> forward_chain(const std::vector<LayerSpec>&, const BoundParams<float>&,
                                  const std::string&, Var<float>);
template Var<double> forward_chain(const std::vector<LayerSpec>&, const BoundParams<double>&,
                                   const std::string&, Var<double>);

}  // namespace auxvae::nn
