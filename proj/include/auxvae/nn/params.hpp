#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "auxvae/nn/layers.hpp"
#include "auxvae/tensor/graph.hpp"

namespace auxvae::nn {

template <typename T>
struct Parameter {
  std::string name;
  tensor::Tensor<T> value;
  // Adam state; moments always match the value's shape.
  tensor::Tensor<T> first_moment;
  tensor::Tensor<T> second_moment;
  std::uint64_t step = 0;
};

template <typename T>
using GradMap = std::map<std::string, tensor::Tensor<T>>;

// Ordered, named parameters with per-parameter optimizer state.
template <typename T>
class ParamStore {
 public:
  void add(std::string name, tensor::Tensor<T> value);
  // Appends every parameter of `other`; names must stay unique.
  void append(ParamStore other);

  std::size_t size() const noexcept { return params_.size(); }
  bool contains(const std::string& name) const;
  const Parameter<T>& at(const std::string& name) const;
  Parameter<T>& at(const std::string& name);

  auto begin() noexcept { return params_.begin(); }
  auto end() noexcept { return params_.end(); }
  auto begin() const noexcept { return params_.begin(); }
  auto end() const noexcept { return params_.end(); }

  // Values converted to U; optimizer state is reset.
  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& p : params_) out.add(p.name, p.value.template cast<U>());
    return out;
  }

  // Equal names, shapes and values (optimizer state ignored).
  bool same_values(const ParamStore& other) const;

 private:
  std::vector<Parameter<T>> params_;
};

// Glorot-uniform weights, a = sqrt(6 / (fan_in + fan_out)), zero biases.
// Parameter names are "<prefix><layer index>.weight" / ".bias". A pure
// function of (specs, seed, prefix).
template <typename T>
ParamStore<T> init_params(const std::vector<LayerSpec>& specs, std::uint64_t seed,
                          const std::string& prefix = "");

// Parameters of a store placed on a graph as leaves.
template <typename T>
class BoundParams {
 public:
  BoundParams(tensor::Graph<T>& graph, const ParamStore<T>& store, bool requires_grad);
  // Parameters already on a graph, e.g. slices of one flat leaf.
  explicit BoundParams(std::map<std::string, tensor::Var<T>> vars) : vars_(std::move(vars)) {}
  const tensor::Var<T>& operator[](const std::string& name) const;
  bool contains(const std::string& name) const { return vars_.count(name) != 0; }
  GradMap<T> gradients(const tensor::Gradients<T>& grads) const;

 private:
  std::map<std::string, tensor::Var<T>> vars_;
};

// Runs a validated chain on a batch; x's leading axis is the batch.
template <typename T>
tensor::Var<T> forward_chain(const std::vector<LayerSpec>& specs, const BoundParams<T>& params,
                             const std::string& prefix, tensor::Var<T> x);

std::string weight_name(const std::string& prefix, std::size_t layer);
std::string bias_name(const std::string& prefix, std::size_t layer);

extern template class ParamStore<float>;
extern template class ParamStore<double>;
extern template class BoundParams<float>;
extern template class BoundParams<double>;

}  // namespace auxvae::nn
