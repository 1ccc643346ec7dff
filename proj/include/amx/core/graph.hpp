#pragma once

#include <cmath>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "amx/core/tensor.hpp"
#include "amx/error.hpp"

namespace amx {

struct NodeId {
  std::size_t index = 0;
  auto operator<=>(const NodeId&) const = default;
};

enum class OpKind {
  kLeaf,
  kDense,
  kConv2d,
  kMaxPool2d,
  kRelu,
  kSigmoid,
  kSoftmax,
  kCrossEntropy,
  kMse,
  kReshape,
  kUpsample,
  kSelect,
  kMean,
};

const char* op_name(OpKind kind);

// 64-bit FNV-1a accumulator.
struct Fnv1a {
  std::uint64_t state = 0xcbf29ce484222325ull;
  void add(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
      state ^= (v >> (8 * i)) & 0xffu;
      state *= 0x100000001b3ull;
    }
  }
};

template <class T>
class Graph;

template <class T>
struct Node {
  using Fn = std::function<void(Graph<T>&, Node&)>;
  using SignatureFn = std::function<void(const Graph<T>&, const Node&, Fnv1a&)>;

  OpKind kind = OpKind::kLeaf;
  std::string name;
  std::vector<NodeId> inputs;
  Shape shape;
  std::vector<T> owned;
  std::span<const T> view;
  bool borrowed = false;
  bool requires_grad = false;
  std::vector<T> grad;
  std::vector<std::uint32_t> aux;
  Fn forward;
  Fn backward;
  // Feeds the piecewise-smooth state (relu masks, pool winners) into a hash;
  // gradient checking uses it to skip perturbations that cross a kink.
  SignatureFn signature;

  std::span<const T> values() const {
    return borrowed ? view : std::span<const T>(owned.data(), owned.size());
  }
  std::size_t size() const { return borrowed ? view.size() : owned.size(); }
};

// Append-only tape of operations. Node ids are insertion indices; inputs
// always precede consumers, and backward visits nodes in reverse order.
// One owner at a time; nothing here is synchronized.
template <class T>
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;
  Graph(Graph&&) noexcept = default;
  Graph& operator=(Graph&&) noexcept = default;

  NodeId leaf(Tensor<T> t, std::string name = {}) {
    check_finite(std::span<const T>(t.values), "leaf " + name);
    auto n = std::make_unique<Node<T>>();
    n->kind = OpKind::kLeaf;
    n->name = std::move(name);
    n->shape = std::move(t.shape);
    n->owned = std::move(t.values);
    n->requires_grad = t.requires_grad;
    return push(std::move(n));
  }

  // Leaf that reads caller-owned storage, which must outlive the graph.
  NodeId leaf_view(Shape shape, std::span<const T> values, bool requires_grad,
                   std::string name = {}) {
    if (shape_size(shape) != values.size()) {
      throw DimensionError("leaf_view: shape " + shape_to_string(shape) + " vs " +
                           std::to_string(values.size()) + " values");
    }
    auto n = std::make_unique<Node<T>>();
    n->kind = OpKind::kLeaf;
    n->name = std::move(name);
    n->shape = std::move(shape);
    n->view = values;
    n->borrowed = true;
    n->requires_grad = requires_grad;
    return push(std::move(n));
  }

  // Used by op implementations. Runs forward once immediately.
  NodeId append(OpKind kind, std::vector<NodeId> inputs, Shape shape, typename Node<T>::Fn forward,
                typename Node<T>::Fn backward, typename Node<T>::SignatureFn signature = {}) {
    auto n = std::make_unique<Node<T>>();
    n->kind = kind;
    n->inputs = std::move(inputs);
    for (const auto& in : n->inputs) {
      if (in.index >= nodes_.size()) throw IndexError("graph: input node id out of range");
      n->requires_grad = n->requires_grad || nodes_[in.index]->requires_grad;
    }
    n->owned.assign(shape_size(shape), T(0));
    n->shape = std::move(shape);
    n->forward = std::move(forward);
    n->backward = std::move(backward);
    n->signature = std::move(signature);
    Node<T>& ref = *n;
    const NodeId id = push(std::move(n));
    ref.forward(*this, ref);
    check_finite(ref.values(), std::string(op_name(ref.kind)) + " output");
    return id;
  }

  std::size_t size() const { return nodes_.size(); }
  Node<T>& node(NodeId id) { return *nodes_.at(id.index); }
  const Node<T>& node(NodeId id) const { return *nodes_.at(id.index); }

  std::span<const T> value(NodeId id) const { return node(id).values(); }
  const Shape& shape(NodeId id) const { return node(id).shape; }
  bool requires_grad(NodeId id) const { return node(id).requires_grad; }

  // Gradient of the last backward pass; zeros for nodes that require grad but
  // were not reached, empty for nodes that never require grad.
  std::span<const T> grad(NodeId id) const {
    const auto& n = node(id);
    return {n.grad.data(), n.grad.size()};
  }

  T scalar(NodeId id) const {
    const auto v = value(id);
    if (v.size() != 1) throw ContractError("graph: node is not scalar");
    return v[0];
  }

  Tensor<T> tensor(NodeId id) const {
    const auto& n = node(id);
    Tensor<T> t(n.shape, std::vector<T>(n.values().begin(), n.values().end()), n.requires_grad);
    t.grad = n.grad;
    return t;
  }

  // Reverse-mode sweep from a scalar loss. Leaf gradients accumulate across
  // calls; intermediate gradients are reset each time.
  void backward(NodeId loss) {
    if (loss.index >= nodes_.size()) throw IndexError("backward: loss id out of range");
    if (node(loss).size() != 1) {
      throw ContractError("backward: loss must be scalar, got shape " +
                          shape_to_string(node(loss).shape));
    }
    for (auto& n : nodes_) {
      if (!n->requires_grad) continue;
      if (n->kind == OpKind::kLeaf) {
        if (n->grad.size() != n->size()) n->grad.assign(n->size(), T(0));
      } else {
        n->grad.assign(n->size(), T(0));
      }
    }
    Node<T>& ln = node(loss);
    if (ln.grad.empty()) ln.grad.assign(1, T(0));
    ln.grad[0] += T(1);
    for (std::size_t i = loss.index + 1; i-- > 0;) {
      Node<T>& n = *nodes_[i];
      if (!n.requires_grad || n.kind == OpKind::kLeaf || !n.backward) continue;
      n.backward(*this, n);
    }
    for (auto& n : nodes_) {
      if (n->kind == OpKind::kLeaf && n->requires_grad) {
        check_finite(std::span<const T>(n->grad), "gradient of leaf " + n->name);
      }
    }
  }

  void zero_grad() {
    for (auto& n : nodes_) {
      if (!n->grad.empty()) std::fill(n->grad.begin(), n->grad.end(), T(0));
    }
  }

  // Re-evaluates every op node from the current leaf values.
  void forward() {
    for (auto& n : nodes_) {
      if (n->kind == OpKind::kLeaf) continue;
      n->forward(*this, *n);
      check_finite(n->values(), std::string(op_name(n->kind)) + " output");
    }
  }

  // Writable leaf storage; a borrowed leaf is copied into owned storage first.
  std::span<T> mutable_leaf_values(NodeId id) {
    Node<T>& n = node(id);
    if (n.kind != OpKind::kLeaf) throw ContractError("mutable_leaf_values: not a leaf");
    if (n.borrowed) {
      n.owned.assign(n.view.begin(), n.view.end());
      n.borrowed = false;
      n.view = {};
    }
    return {n.owned.data(), n.owned.size()};
  }

  std::uint64_t nonsmooth_signature() const {
    Fnv1a h;
    for (const auto& n : nodes_) {
      if (n->signature) n->signature(*this, *n, h);
    }
    return h.state;
  }

  // Gradient accumulator for an op input, allocated lazily; empty if the
  // input does not require grad.
  std::span<T> input_grad(NodeId id) {
    Node<T>& n = node(id);
    if (!n.requires_grad) return {};
    if (n.grad.size() != n.size()) n.grad.assign(n.size(), T(0));
    return {n.grad.data(), n.grad.size()};
  }

 private:
  NodeId push(std::unique_ptr<Node<T>> n) {
    nodes_.push_back(std::move(n));
    return NodeId{nodes_.size() - 1};
  }

  static void check_finite(std::span<const T> v, const std::string& what) {
    for (std::size_t i = 0; i < v.size(); ++i) {
      if (!std::isfinite(v[i])) {
        throw NumericError("non-finite value in " + what + " at element " + std::to_string(i));
      }
    }
  }

  std::vector<std::unique_ptr<Node<T>>> nodes_;
};

}  // namespace amx
