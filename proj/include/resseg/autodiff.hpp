#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "resseg/tensor.hpp"

namespace resseg {

namespace detail {
inline std::uint64_t next_sequence() {
  static std::atomic<std::uint64_t> counter{0};
  return counter.fetch_add(1, std::memory_order_relaxed) + 1;
}
}  // namespace detail

/// One recorded value in the computation graph. Leaves have no backward rule.
template <typename Scalar>
struct Node {
  Tensor<Scalar> value;
  Tensor<Scalar> grad;
  bool requires_grad = false;
  std::uint64_t seq = detail::next_sequence();
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> inputs;
  /// Reads `self.grad` and accumulates into the grads of `self.inputs`.
  std::function<void(Node& self)> backward;

  Tensor<Scalar>& grad_buffer() {
    if (grad.shape() != value.shape()) grad = Tensor<Scalar>(value.shape());
    return grad;
  }
  bool has_grad() const { return grad.shape() == value.shape() && !grad.empty(); }
};

/// Handle to a graph node. Copies share the node.
template <typename Scalar>
class Var {
 public:
  using NodePtr = std::shared_ptr<Node<Scalar>>;

  Var() : node_(std::make_shared<Node<Scalar>>()) {}
  explicit Var(Tensor<Scalar> value, bool requires_grad = false)
      : node_(std::make_shared<Node<Scalar>>()) {
    node_->value = std::move(value);
    node_->requires_grad = requires_grad;
  }
  explicit Var(NodePtr node) : node_(std::move(node)) {}

  const Tensor<Scalar>& value() const { return node_->value; }
  /// Mutable access for in-place parameter updates. Never use on op outputs
  /// that are still referenced by a live graph.
  Tensor<Scalar>& mutable_value() { return node_->value; }
  const Shape& shape() const { return node_->value.shape(); }
  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }

  bool has_grad() const { return node_->has_grad(); }
  /// Gradient buffer; zero-filled on first access.
  const Tensor<Scalar>& grad() const { return node_->grad_buffer(); }
  Tensor<Scalar>& mutable_grad() { return node_->grad_buffer(); }
  void zero_grad() {
    if (node_->has_grad()) node_->grad.fill(Scalar(0));
  }

  const NodePtr& node() const { return node_; }
  bool is_leaf() const { return !node_->backward; }

 private:
  NodePtr node_;
};

namespace detail {

#ifndef NDEBUG
inline constexpr bool kCheckFinite = true;
#else
inline constexpr bool kCheckFinite = false;
#endif

template <typename Scalar>
void check_finite(const Tensor<Scalar>& t, const char* op) {
  if constexpr (kCheckFinite) {
    if (!t.all_finite()) throw NumericError(std::string("non-finite value produced by ") + op);
  }
}

}  // namespace detail

/// Wraps a forward result. The backward rule is only kept when some input
/// requires grad, so inference builds no graph.
template <typename Scalar, typename Backward>
Var<Scalar> make_result(Tensor<Scalar> value, std::vector<Var<Scalar>> inputs, const char* op,
                        Backward&& backward) {
  detail::check_finite(value, op);
  auto node = std::make_shared<Node<Scalar>>();
  node->value = std::move(value);
  node->op = op;
  const bool any = std::any_of(inputs.begin(), inputs.end(),
                               [](const Var<Scalar>& v) { return v.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->inputs.reserve(inputs.size());
    for (auto& in : inputs) node->inputs.push_back(in.node());
    node->backward = std::forward<Backward>(backward);
  }
  return Var<Scalar>(std::move(node));
}

/// Reverse-ordered list of graph nodes reachable from a root. Creation order
/// is a valid topological order since inputs always exist before outputs.
template <typename Scalar>
class Tape {
 public:
  static Tape record(const Var<Scalar>& root) {
    Tape tape;
    std::vector<Node<Scalar>*> stack{root.node().get()};
    std::unordered_set<Node<Scalar>*> seen;
    while (!stack.empty()) {
      Node<Scalar>* n = stack.back();
      stack.pop_back();
      if (!n->requires_grad || !seen.insert(n).second) continue;
      tape.nodes_.push_back(n);
      for (auto& in : n->inputs) stack.push_back(in.get());
    }
    std::sort(tape.nodes_.begin(), tape.nodes_.end(),
              [](const Node<Scalar>* a, const Node<Scalar>* b) { return a->seq < b->seq; });
    return tape;
  }

  /// Nodes in topological (forward) order.
  const std::vector<Node<Scalar>*>& nodes() const { return nodes_; }
  std::size_t size() const { return nodes_.size(); }

  void run_backward() const {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) {
      Node<Scalar>* n = *it;
      if (n->backward && n->has_grad()) n->backward(*n);
    }
  }

 private:
  std::vector<Node<Scalar>*> nodes_;
};

/// Seeds d(loss)/d(loss) = 1 and propagates to every leaf that requires grad.
/// Leaf gradients accumulate across calls; clear them with `zero_grad`.
template <typename Scalar>
void backward(const Var<Scalar>& loss) {
  if (loss.shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("backward: loss must be scalar-shaped (1,1,1,1), got " + loss.shape().str());
  }
  if (!loss.requires_grad()) {
    throw ShapeError("backward: loss does not depend on any tensor that requires grad");
  }
  const Tape<Scalar> tape = Tape<Scalar>::record(loss);
  loss.node()->grad_buffer()[0] += Scalar(1);
  tape.run_backward();
}

// ---------------------------------------------------------------------------
// Element-wise arithmetic with the two supported broadcast patterns.

enum class Broadcast { Same, Channel, Spatial };

/// Classifies how `b` lines up against `a`: identical shape, a per-channel
/// vector (N|1, C, 1, 1) or a per-position map (N|1, 1, H, W).
inline Broadcast classify_broadcast(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return Broadcast::Same;
  const bool batch_ok = b.n == a.n || b.n == 1;
  if (batch_ok && b.c == a.c && b.h == 1 && b.w == 1) return Broadcast::Channel;
  if (batch_ok && b.c == 1 && b.h == a.h && b.w == a.w) return Broadcast::Spatial;
  throw ShapeError(std::string(op) + ": cannot broadcast " + b.str() + " onto " + a.str());
}

enum class ElementwiseKind { Add, Mul };

namespace detail {

// Visits (a-plane, b-offset-or-plane) pairs so that both forward and backward
// share one indexing scheme.
template <typename Fn>
void for_each_plane(const Shape& a, const Shape& b, Broadcast mode, Fn&& fn) {
  const std::size_t plane = a.plane();
  for (int n = 0; n < a.n; ++n) {
    const int nb = b.n == 1 ? 0 : n;
    for (int c = 0; c < a.c; ++c) {
      const std::size_t a_off = (static_cast<std::size_t>(n) * a.c + c) * plane;
      std::size_t b_off = 0;
      switch (mode) {
        case Broadcast::Same: b_off = a_off; break;
        case Broadcast::Channel: b_off = static_cast<std::size_t>(nb) * b.c + c; break;
        case Broadcast::Spatial: b_off = static_cast<std::size_t>(nb) * plane; break;
      }
      fn(a_off, b_off);
    }
  }
}

}  // namespace detail

template <typename Scalar>
Var<Scalar> elementwise(const Var<Scalar>& a, const Var<Scalar>& b, ElementwiseKind kind) {
  using Arr = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  const Shape as = a.shape();
  const Shape bs = b.shape();
  const Broadcast mode = classify_broadcast(as, bs, kind == ElementwiseKind::Add ? "add" : "mul");
  const Eigen::Index plane = static_cast<Eigen::Index>(as.plane());

  Tensor<Scalar> out(as);
  const Scalar* pa = a.value().data();
  const Scalar* pb = b.value().data();
  Scalar* po = out.data();
  detail::for_each_plane(as, bs, mode, [&](std::size_t ao, std::size_t bo) {
    Eigen::Map<const Arr> x(pa + ao, plane);
    Eigen::Map<Arr> y(po + ao, plane);
    if (mode == Broadcast::Channel) {
      y = kind == ElementwiseKind::Add ? (x + pb[bo]).eval() : (x * pb[bo]).eval();
    } else {
      Eigen::Map<const Arr> z(pb + bo, plane);
      y = kind == ElementwiseKind::Add ? (x + z).eval() : (x * z).eval();
    }
  });

  const char* name = kind == ElementwiseKind::Add ? "add" : "mul";
  return make_result<Scalar>(std::move(out), {a, b}, name, [mode, kind, plane](Node<Scalar>& self) {
    auto& na = *self.inputs[0];
    auto& nb = *self.inputs[1];
    const Shape as = na.value.shape();
    const Shape bs = nb.value.shape();
    const Scalar* g = self.grad.data();
    Scalar* ga = na.requires_grad ? na.grad_buffer().data() : nullptr;
    Scalar* gb = nb.requires_grad ? nb.grad_buffer().data() : nullptr;
    const Scalar* va = na.value.data();
    const Scalar* vb = nb.value.data();
    detail::for_each_plane(as, bs, mode, [&](std::size_t ao, std::size_t bo) {
      Eigen::Map<const Arr> go(g + ao, plane);
      if (mode == Broadcast::Channel) {
        if (kind == ElementwiseKind::Add) {
          if (ga) Eigen::Map<Arr>(ga + ao, plane) += go;
          if (gb) gb[bo] += go.sum();
        } else {
          Eigen::Map<const Arr> x(va + ao, plane);
          if (ga) Eigen::Map<Arr>(ga + ao, plane) += go * vb[bo];
          if (gb) gb[bo] += (go * x).sum();
        }
      } else {
        if (kind == ElementwiseKind::Add) {
          if (ga) Eigen::Map<Arr>(ga + ao, plane) += go;
          if (gb) Eigen::Map<Arr>(gb + bo, plane) += go;
        } else {
          Eigen::Map<const Arr> x(va + ao, plane);
          Eigen::Map<const Arr> z(vb + bo, plane);
          if (ga) Eigen::Map<Arr>(ga + ao, plane) += go * z;
          if (gb) Eigen::Map<Arr>(gb + bo, plane) += go * x;
        }
      }
    });
  });
}

template <typename Scalar>
Var<Scalar> add(const Var<Scalar>& a, const Var<Scalar>& b) {
  return elementwise(a, b, ElementwiseKind::Add);
}

template <typename Scalar>
Var<Scalar> mul(const Var<Scalar>& a, const Var<Scalar>& b) {
  return elementwise(a, b, ElementwiseKind::Mul);
}

/// x * s for a learnable scalar s of shape (1,1,1,1).
template <typename Scalar>
Var<Scalar> scale(const Var<Scalar>& x, const Var<Scalar>& s) {
  if (s.shape() != Shape{1, 1, 1, 1}) {
    throw ShapeError("scale: factor must be (1,1,1,1), got " + s.shape().str());
  }
  Tensor<Scalar> out(x.shape());
  const Scalar k = s.value()[0];
  out.array() = x.value().array() * k;
  return make_result<Scalar>(std::move(out), {x, s}, "scale", [](Node<Scalar>& self) {
    auto& nx = *self.inputs[0];
    auto& ns = *self.inputs[1];
    if (nx.requires_grad) nx.grad_buffer().array() += self.grad.array() * ns.value[0];
    if (ns.requires_grad) ns.grad_buffer()[0] += (self.grad.array() * nx.value.array()).sum();
  });
}

/// x * k for a constant k.
template <typename Scalar>
Var<Scalar> mul_const(const Var<Scalar>& x, Scalar k) {
  Tensor<Scalar> out(x.shape());
  out.array() = x.value().array() * k;
  return make_result<Scalar>(std::move(out), {x}, "mul_const", [k](Node<Scalar>& self) {
    auto& nx = *self.inputs[0];
    nx.grad_buffer().array() += self.grad.array() * k;
  });
}

/// Sum of all elements as a (1,1,1,1) tensor.
template <typename Scalar>
Var<Scalar> sum(const Var<Scalar>& x) {
  return make_result<Scalar>(Tensor<Scalar>::scalar(x.value().sum()), {x}, "sum",
                             [](Node<Scalar>& self) {
                               auto& nx = *self.inputs[0];
                               nx.grad_buffer().array() += self.grad[0];
                             });
}

template <typename Scalar>
Var<Scalar> mean(const Var<Scalar>& x) {
  const Scalar n = static_cast<Scalar>(x.value().size());
  return mul_const(sum(x), Scalar(1) / n);
}

}  // namespace resseg
