#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "dbat/tensor.hpp"

// Define-by-run reverse-mode differentiation. A Graph is an append-only tape
// of op records; it is built fresh for each training step and discarded
// afterwards. Graphs are not thread-safe; independent graphs may be used from
// different threads.
namespace dbat::ad {

enum class OpKind {
  leaf,
  constant,
  add,
  sub,
  mul,
  matmul,
  relu,
  exp,
  log,
  sum,
  mean,
  max,
  softmax,
  concat,
  slice,
  scale,
  clamp_min,
};

const char* op_name(OpKind kind);

// Per-op attributes stored alongside a node.
struct OpExtra {
  int axis = 0;
  bool has_axis = false;
  std::size_t begin = 0, end = 0;
  double scalar = 0.0;
  std::vector<std::size_t> index;
};

class Graph;

// Handle to a node of a Graph. Cheap to copy; valid while the graph lives.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  // Differentiable input (parameters, or inputs we want gradients for).
  Var leaf(Tensor value);
  // Input treated as constant; no gradient is propagated into it.
  Var constant(Tensor value);

  const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
  bool requires_grad(Var v) const { return nodes_.at(v.id).requires_grad; }
  OpKind kind(Var v) const { return nodes_.at(v.id).kind; }
  std::span<const std::size_t> inputs(Var v) const { return nodes_.at(v.id).inputs; }
  std::size_t size() const noexcept { return nodes_.size(); }

  // d(root)/d(v) after backward(); zeros if v does not influence root.
  std::vector<double> grad(Var v) const;
  // Copy of v's value with its gradient attached.
  Tensor extract(Var v) const;

  // Populates gradients of every differentiable node reachable from `root`.
  // Gradients accumulate across multiple uses of a node. May be called once
  // per graph; `root` must hold exactly one element.
  void backward(Var root);

  // Records an op. Used by the free functions below.
  using Extra = OpExtra;
  Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, Extra extra = {});

 private:
  struct Node {
    OpKind kind;
    std::vector<std::size_t> inputs;
    Tensor value;
    bool requires_grad = false;
    Extra extra;
    std::vector<double> grad;  // empty until something flows in
  };

  void accumulate(std::size_t id, const Tensor& g);
  void accumulate(std::size_t id, std::span<const double> g);
  void propagate(const Node& node, const Tensor& g);

  std::vector<Node> nodes_;
  bool backward_done_ = false;
};

// Ops. All operands must belong to the same graph. Shape rules are those of
// the matching dbat::ops functions.
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var matmul(Var a, Var b);
Var relu(Var a);
Var exp(Var a);
Var log(Var a);
Var sum(Var a, std::optional<int> axis = std::nullopt);
Var mean(Var a, std::optional<int> axis = std::nullopt);
Var max(Var a, int axis);
Var softmax(Var a, int axis);
Var concat(Var a, Var b, int axis);
Var slice(Var a, int axis, std::size_t begin, std::size_t end);
Var scale(Var a, double s);
// max(a, floor); gradient passes only where a > floor.
Var clamp_min(Var a, double floor);

inline Var operator+(Var a, Var b) { return add(a, b); }
inline Var operator-(Var a, Var b) { return sub(a, b); }
inline Var operator*(Var a, Var b) { return mul(a, b); }
inline Var operator*(double s, Var a) { return scale(a, s); }

}  // namespace dbat::ad
