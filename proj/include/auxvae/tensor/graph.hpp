#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "auxvae/tensor/tensor.hpp"

namespace auxvae::tensor {

template <typename T>
class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
template <typename T>
class Var {
 public:
  Var() = default;

  bool valid() const noexcept { return graph_ != nullptr; }
  Graph<T>& graph() const;
  std::size_t id() const noexcept { return id_; }

  const Tensor<T>& value() const;
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const;

 private:
  friend class Graph<T>;
  Var(Graph<T>* graph, std::size_t id) : graph_(graph), id_(id) {}

  Graph<T>* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Gradient buffers handed to a node's backward rule, indexed by the node's
// input position. slot() returns nullptr for inputs that do not need a
// gradient; otherwise a zero-initialised accumulator of the input's shape.
template <typename T>
class GradSink {
 public:
  virtual ~GradSink() = default;
  virtual Tensor<T>* slot(std::size_t input_position) = 0;
};

// Append-only record of a define-by-run computation. Nodes are appended in
// evaluation order, so every node's inputs precede it and a reverse sweep is
// a valid topological order. One graph per forward pass; confined to one
// thread.
template <typename T>
class Graph {
 public:
  using BackwardFn = std::function<void(const Tensor<T>& grad_out, GradSink<T>& sink)>;

  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var<T> leaf(Tensor<T> value, bool requires_grad = false);
  Var<T> constant(Tensor<T> value) { return leaf(std::move(value), false); }

  // Appends an op node. The backward rule is dropped when no input requires
  // a gradient.
  Var<T> record(std::string_view kind, Tensor<T> value, std::vector<std::size_t> inputs,
                BackwardFn backward);

  std::size_t size() const noexcept { return nodes_.size(); }
  const Tensor<T>& value(std::size_t id) const { return nodes_.at(id).value; }
  bool requires_grad(std::size_t id) const { return nodes_.at(id).requires_grad; }
  bool is_leaf(std::size_t id) const { return nodes_.at(id).leaf; }
  std::string_view kind(std::size_t id) const { return nodes_.at(id).kind; }
  const std::vector<std::size_t>& inputs(std::size_t id) const { return nodes_.at(id).inputs; }
  const BackwardFn& backward_fn(std::size_t id) const { return nodes_.at(id).backward; }

 private:
  struct Node {
    std::string_view kind;
    Tensor<T> value;
    std::vector<std::size_t> inputs;
    bool requires_grad = false;
    bool leaf = false;
    BackwardFn backward;
  };
  std::deque<Node> nodes_;  // stable references across appends
};

// Gradients of a scalar loss with respect to every leaf that requires a
// gradient. Leaves that do not influence the loss get zero tensors.
template <typename T>
class Gradients {
 public:
  const Tensor<T>& operator[](const Var<T>& leaf) const;
  bool contains(const Var<T>& leaf) const { return by_id_.count(leaf.id()) != 0; }
  std::size_t size() const noexcept { return by_id_.size(); }

 private:
  template <typename U>
  friend Gradients<U> backward(const Var<U>& loss);
  std::unordered_map<std::size_t, Tensor<T>> by_id_;
};

// Reverse sweep from a scalar loss. Throws ShapeError for a non-scalar loss
// and ConfigError when the loss does not depend on any gradient leaf.
template <typename T>
Gradients<T> backward(const Var<T>& loss);

extern template class Graph<float>;
extern template class Graph<double>;
extern template class Var<float>;
extern template class Var<double>;
extern template class Gradients<float>;
extern template class Gradients<double>;

}  // namespace auxvae::tensor
