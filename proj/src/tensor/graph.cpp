#include "auxvae/tensor/graph.hpp"

#include <memory>
#include <string>

namespace auxvae::tensor {

template <typename T>
Graph<T>& Var<T>::graph() const {
  if (!graph_) throw ConfigError("var: handle is not attached to a graph");
  return *graph_;
}

template <typename T>
const Tensor<T>& Var<T>::value() const {
  return graph().value(id_);
}

template <typename T>
bool Var<T>::requires_grad() const {
  return graph().requires_grad(id_);
}

template <typename T>
Var<T> Graph<T>::leaf(Tensor<T> value, bool requires_grad) {
  Node node;
  node.kind = "leaf";
  node.value = std::move(value);
  node.requires_grad = requires_grad;
  node.leaf = true;
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
Var<T> Graph<T>::record(std::string_view kind, Tensor<T> value, std::vector<std::size_t> inputs,
                        BackwardFn backward) {
  bool any = false;
  for (std::size_t in : inputs) {
    if (in >= nodes_.size()) {
      throw ConfigError(std::string(kind) + ": input node " + std::to_string(in) +
                        " does not precede the new node");
    }
    any = any || nodes_[in].requires_grad;
  }
#ifndef NDEBUG
  if (!value.all_finite()) {
    bool inputs_finite = true;
    for (std::size_t in : inputs) inputs_finite = inputs_finite && nodes_[in].value.all_finite();
    if (inputs_finite) {
      throw NumericalError(std::string(kind) + ": non-finite output from finite inputs");
    }
  }
#endif
  Node node;
  node.kind = kind;
  node.value = std::move(value);
  node.inputs = std::move(inputs);
  node.requires_grad = any;
  if (any) node.backward = std::move(backward);
  nodes_.push_back(std::move(node));
  return Var<T>(this, nodes_.size() - 1);
}

template <typename T>
const Tensor<T>& Gradients<T>::operator[](const Var<T>& leaf) const {
  auto it = by_id_.find(leaf.id());
  if (it == by_id_.end()) {
    throw ConfigError("gradients: node " + std::to_string(leaf.id()) +
                      " is not a gradient-tracked leaf");
  }
  return it->second;
}

namespace {

template <typename T>
class NodeGradSink final : public GradSink<T> {
 public:
  NodeGradSink(const Graph<T>& graph, std::vector<std::unique_ptr<Tensor<T>>>& grads)
      : graph_(graph), grads_(grads) {}

  void bind(std::size_t node) { node_ = node; }

  Tensor<T>* slot(std::size_t input_position) override {
    const std::size_t in = graph_.inputs(node_).at(input_position);
    if (!graph_.requires_grad(in)) return nullptr;
    auto& g = grads_[in];
    if (!g) g = std::make_unique<Tensor<T>>(graph_.value(in).shape());
    return g.get();
  }

 private:
  const Graph<T>& graph_;
  std::vector<std::unique_ptr<Tensor<T>>>& grads_;
  std::size_t node_ = 0;
};

}  // namespace

template <typename T>
Gradients<T> backward(const Var<T>& loss) {
  const Graph<T>& graph = loss.graph();
  const Tensor<T>& out = loss.value();
  if (out.size() != 1) {
    throw ShapeError("backward: loss must be scalar, got shape " + to_string(out.shape()));
  }
  if (!graph.requires_grad(loss.id())) {
    throw ConfigError("backward: loss is detached from every gradient leaf");
  }

  std::vector<std::unique_ptr<Tensor<T>>> grads(graph.size());
  grads[loss.id()] = std::make_unique<Tensor<T>>(out.shape(), T{1});
  NodeGradSink<T> sink(graph, grads);

  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    if (!grads[id] || graph.is_leaf(id) || !graph.requires_grad(id)) continue;
    const auto& fn = graph.backward_fn(id);
    if (!fn) continue;
    sink.bind(id);
    fn(*grads[id], sink);
    // Intermediate gradients are not part of the result.
    grads[id].reset();
  }

  Gradients<T> result;
  for (std::size_t id = 0; id < graph.size(); ++id) {
    if (!graph.is_leaf(id) || !graph.requires_grad(id)) continue;
    if (grads[id]) {
      result.by_id_.emplace(id, std::move(*grads[id]));
    } else {
      result.by_id_.emplace(id, Tensor<T>(graph.value(id).shape()));
    }
  }
  return result;
}

template class Graph<float>;
template class Graph<double>;
template class Var<float>;
template class Var<double>;
template class Gradients<float>;
template class Gradients<double>;
template Gradients<float> backward(const Var<float>&);
template Gradients<double> backward(const Var<double>&);

}  // namespace auxvae::tensor
