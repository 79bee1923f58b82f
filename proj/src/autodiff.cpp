#include "dbat/autodiff.hpp"

#include <algorithm>

#include "dbat/error.hpp"
#include "dbat/kernels.hpp"

namespace dbat::ad {

const char* op_name(OpKind kind) {
  switch (kind) {
    case OpKind::leaf: return "leaf";
    case OpKind::constant: return "constant";
    case OpKind::add: return "add";
    case OpKind::sub: return "sub";
    case OpKind::mul: return "mul";
    case OpKind::matmul: return "matmul";
    case OpKind::relu: return "relu";
    case OpKind::exp: return "exp";
    case OpKind::log: return "log";
    case OpKind::sum: return "sum";
    case OpKind::mean: return "mean";
    case OpKind::max: return "max";
    case OpKind::softmax: return "softmax";
    case OpKind::concat: return "concat";
    case OpKind::slice: return "slice";
    case OpKind::scale: return "scale";
    case OpKind::clamp_min: return "clamp_min";
  }
  return "?";
}

const Tensor& Var::value() const {
  if (!graph) throw ContractError("Var is not attached to a graph");
  return graph->value(*this);
}

Var Graph::leaf(Tensor value) {
  nodes_.push_back(Node{OpKind::leaf, {}, std::move(value), true, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::constant(Tensor value) {
  nodes_.push_back(Node{OpKind::constant, {}, std::move(value), false, {}, {}});
  return Var{this, nodes_.size() - 1};
}

Var Graph::record(OpKind kind, std::vector<std::size_t> inputs, Tensor value, Extra extra) {
  bool rg = false;
  for (auto id : inputs) rg = rg || nodes_.at(id).requires_grad;
  nodes_.push_back(Node{kind, std::move(inputs), std::move(value), rg, std::move(extra), {}});
  return Var{this, nodes_.size() - 1};
}

std::vector<double> Graph::grad(Var v) const {
  const Node& n = nodes_.at(v.id);
  if (n.grad.empty()) return std::vector<double>(n.value.size(), 0.0);
  return n.grad;
}

Tensor Graph::extract(Var v) const {
  Tensor t = nodes_.at(v.id).value;
  if (nodes_.at(v.id).requires_grad) t.set_grad(grad(v));
  return t;
}

void Graph::accumulate(std::size_t id, std::span<const double> g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (n.grad.empty()) {
    n.grad.assign(g.begin(), g.end());
    return;
  }
  kernels::active().add(n.grad.data(), g.data(), n.grad.data(), g.size());
}

void Graph::accumulate(std::size_t id, const Tensor& g) {
  const Shape& target = nodes_[id].value.shape();
  if (g.shape() == target) {
    accumulate(id, g.values());
  } else {
    const Tensor r = ops::reduce_to(g, target);
    accumulate(id, r.values());
  }
}

void Graph::backward(Var root) {
  if (root.graph != this) throw ContractError("backward: root belongs to another graph");
  if (backward_done_) throw ContractError("backward: graph was already differentiated");
  const Node& r = nodes_.at(root.id);
  if (r.value.size() != 1)
    throw ContractError("backward: root must be a scalar, got shape " + to_string(r.value.shape()));
  backward_done_ = true;
  if (!r.requires_grad) return;
  nodes_[root.id].grad.assign(1, 1.0);
  for (std::size_t id = root.id + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (!n.requires_grad || n.grad.empty() || n.inputs.empty()) continue;
    const Tensor g(n.value.shape(), n.grad);
    propagate(n, g);
  }
}

void Graph::propagate(const Node& node, const Tensor& g) {
  const auto& in = node.inputs;
  const auto& k = kernels::active();
  auto val = [&](std::size_t i) -> const Tensor& { return nodes_[in[i]].value; };
  auto needs = [&](std::size_t i) { return nodes_[in[i]].requires_grad; };

  switch (node.kind) {
    case OpKind::leaf:
    case OpKind::constant:
      break;
    case OpKind::add:
      accumulate(in[0], g);
      accumulate(in[1], g);
      break;
    case OpKind::sub:
      accumulate(in[0], g);
      if (needs(1)) accumulate(in[1], ops::scale(g, -1.0));
      break;
    case OpKind::mul:
      if (needs(0)) accumulate(in[0], ops::mul(g, ops::broadcast_to(val(1), g.shape())));
      if (needs(1)) accumulate(in[1], ops::mul(g, ops::broadcast_to(val(0), g.shape())));
      break;
    case OpKind::matmul:
      // C = A B:  dA = G B^T,  dB = A^T G
      if (needs(0)) accumulate(in[0], ops::matmul(g, ops::transpose(val(1))));
      if (needs(1)) accumulate(in[1], ops::matmul(ops::transpose(val(0)), g));
      break;
    case OpKind::relu: {
      Tensor d(g.shape());
      k.relu_mask(val(0).values().data(), g.values().data(), d.values().data(), g.size());
      accumulate(in[0], d);
      break;
    }
    case OpKind::exp:
      accumulate(in[0], ops::mul(g, node.value));
      break;
    case OpKind::log: {
      Tensor d(g.shape());
      for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] / val(0)[i];
      accumulate(in[0], d);
      break;
    }
    case OpKind::sum:
    case OpKind::mean: {
      const Tensor& x = val(0);
      Tensor d(x.shape());
      double factor = 1.0;
      if (!node.extra.has_axis) {
        if (node.kind == OpKind::mean) factor = 1.0 / static_cast<double>(x.size());
        std::fill(d.values().begin(), d.values().end(), g[0] * factor);
      } else if (x.rank() == 1) {
        if (node.kind == OpKind::mean) factor = 1.0 / static_cast<double>(x.size());
        std::fill(d.values().begin(), d.values().end(), g[0] * factor);
      } else {
        const std::size_t rows = x.shape()[0], cols = x.shape()[1];
        const bool along_rows = node.extra.axis == 0;
        if (node.kind == OpKind::mean) factor = 1.0 / static_cast<double>(along_rows ? rows : cols);
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) d[r * cols + c] = g[along_rows ? c : r] * factor;
      }
      accumulate(in[0], d);
      break;
    }
    case OpKind::max: {
      Tensor d(val(0).shape());
      for (std::size_t i = 0; i < node.extra.index.size(); ++i) d[node.extra.index[i]] += g[i];
      accumulate(in[0], d);
      break;
    }
    case OpKind::softmax: {
      // dx = y * (g - sum_axis(g * y))
      const Tensor& y = node.value;
      const Tensor gy_sum = ops::sum(ops::mul(g, y), node.extra.axis);
      Tensor d(y.shape());
      if (y.rank() == 1) {
        for (std::size_t i = 0; i < y.size(); ++i) d[i] = y[i] * (g[i] - gy_sum[0]);
      } else {
        const std::size_t rows = y.shape()[0], cols = y.shape()[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t c = 0; c < cols; ++c) {
            const std::size_t i = r * cols + c;
            d[i] = y[i] * (g[i] - gy_sum[node.extra.axis == 0 ? c : r]);
          }
      }
      accumulate(in[0], d);
      break;
    }
    case OpKind::concat: {
      const int axis = node.extra.axis;
      const std::size_t split = val(0).shape()[static_cast<std::size_t>(axis)];
      const std::size_t total = g.shape()[static_cast<std::size_t>(axis)];
      if (needs(0)) accumulate(in[0], ops::slice(g, axis, 0, split));
      if (needs(1)) accumulate(in[1], ops::slice(g, axis, split, total));
      break;
    }
    case OpKind::slice: {
      const Tensor& x = val(0);
      Tensor d(x.shape());
      const std::size_t b = node.extra.begin, w = node.extra.end - node.extra.begin;
      if (x.rank() == 1) {
        for (std::size_t i = 0; i < w; ++i) d[b + i] = g[i];
      } else if (node.extra.axis == 0) {
        const std::size_t cols = x.shape()[1];
        std::copy(g.values().begin(), g.values().end(), d.values().begin() + b * cols);
      } else {
        const std::size_t rows = x.shape()[0], cols = x.shape()[1];
        for (std::size_t r = 0; r < rows; ++r)
          for (std::size_t i = 0; i < w; ++i) d[r * cols + b + i] = g[r * w + i];
      }
      accumulate(in[0], d);
      break;
    }
    case OpKind::scale:
      accumulate(in[0], ops::scale(g, node.extra.scalar));
      break;
    case OpKind::clamp_min: {
      const Tensor& x = val(0);
      Tensor d(x.shape());
      for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] > node.extra.scalar ? g[i] : 0.0;
      accumulate(in[0], d);
      break;
    }
  }
}

namespace {

Graph& same_graph(const char* op, Var a, Var b) {
  if (!a.graph || a.graph != b.graph)
    throw ContractError(std::string(op) + ": operands belong to different graphs");
  return *a.graph;
}

Graph& graph_of(Var a) {
  if (!a.graph) throw ContractError("Var is not attached to a graph");
  return *a.graph;
}

}  // namespace

Var add(Var a, Var b) {
  Graph& g = same_graph("add", a, b);
  return g.record(OpKind::add, {a.id, b.id}, ops::add(a.value(), b.value()));
}

Var sub(Var a, Var b) {
  Graph& g = same_graph("sub", a, b);
  return g.record(OpKind::sub, {a.id, b.id}, ops::sub(a.value(), b.value()));
}

Var mul(Var a, Var b) {
  Graph& g = same_graph("mul", a, b);
  return g.record(OpKind::mul, {a.id, b.id}, ops::mul(a.value(), b.value()));
}

Var matmul(Var a, Var b) {
  Graph& g = same_graph("matmul", a, b);
  return g.record(OpKind::matmul, {a.id, b.id}, ops::matmul(a.value(), b.value()));
}

Var relu(Var a) { return graph_of(a).record(OpKind::relu, {a.id}, ops::relu(a.value())); }

Var exp(Var a) { return graph_of(a).record(OpKind::exp, {a.id}, ops::exp(a.value())); }

Var log(Var a) { return graph_of(a).record(OpKind::log, {a.id}, ops::log(a.value())); }

Var sum(Var a, std::optional<int> axis) {
  Graph::Extra e;
  e.has_axis = axis.has_value();
  e.axis = axis.value_or(0);
  return graph_of(a).record(OpKind::sum, {a.id}, ops::sum(a.value(), axis), std::move(e));
}

Var mean(Var a, std::optional<int> axis) {
  Graph::Extra e;
  e.has_axis = axis.has_value();
  e.axis = axis.value_or(0);
  return graph_of(a).record(OpKind::mean, {a.id}, ops::mean(a.value(), axis), std::move(e));
}

Var max(Var a, int axis) {
  Graph::Extra e;
  e.has_axis = true;
  e.axis = axis;
  Tensor v = ops::max(a.value(), axis, &e.index);
  return graph_of(a).record(OpKind::max, {a.id}, std::move(v), std::move(e));
}

Var softmax(Var a, int axis) {
  Graph::Extra e;
  e.has_axis = true;
  e.axis = axis;
  return graph_of(a).record(OpKind::softmax, {a.id}, ops::softmax(a.value(), axis), std::move(e));
}

Var concat(Var a, Var b, int axis) {
  Graph& g = same_graph("concat", a, b);
  Graph::Extra e;
  e.has_axis = true;
  e.axis = axis;
  return g.record(OpKind::concat, {a.id, b.id}, ops::concat(a.value(), b.value(), axis), std::move(e));
}

Var slice(Var a, int axis, std::size_t begin, std::size_t end) {
  Graph::Extra e;
  e.has_axis = true;
  e.axis = axis;
  e.begin = begin;
  e.end = end;
  return graph_of(a).record(OpKind::slice, {a.id}, ops::slice(a.value(), axis, begin, end),
                            std::move(e));
}

Var scale(Var a, double s) {
  Graph::Extra e;
  e.scalar = s;
  return graph_of(a).record(OpKind::scale, {a.id}, ops::scale(a.value(), s), std::move(e));
}

Var clamp_min(Var a, double floor) {
  Graph::Extra e;
  e.scalar = floor;
  return graph_of(a).record(OpKind::clamp_min, {a.id}, ops::clamp_min(a.value(), floor),
                            std::move(e));
}

}  // namespace dbat::ad
