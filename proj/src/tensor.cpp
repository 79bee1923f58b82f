#include "dbat/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "dbat/error.hpp"
#include "dbat/kernels.hpp"

namespace dbat {

std::string to_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

namespace {

void check_shape(const Shape& shape) {
  if (shape.empty()) throw ShapeError("tensor shape must have at least one dimension");
  for (auto d : shape)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + to_string(shape));
}

}  // namespace

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  check_shape(shape_);
  values_.assign(shape_size(shape_), 0.0);
}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  check_shape(shape_);
  if (shape_size(shape_) != values_.size())
    throw ShapeError("shape " + to_string(shape_) + " holds " + std::to_string(shape_size(shape_)) +
                     " values, got " + std::to_string(values_.size()));
}

Tensor Tensor::full(Shape shape, double v) {
  Tensor t(std::move(shape));
  std::fill(t.values_.begin(), t.values_.end(), v);
  return t;
}

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor({rows, cols}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() requires a rank-2 tensor, got " + to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() requires a rank-2 tensor, got " + to_string(shape_));
  return shape_[1];
}

double Tensor::item() const {
  if (size() != 1) throw ShapeError("item() requires a one-element tensor, got " + to_string(shape_));
  return values_[0];
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return std::span<const double>(values_).subspan(r * c, c);
}

void Tensor::set_grad(std::vector<double> g) {
  if (g.size() != values_.size())
    throw ShapeError("gradient length " + std::to_string(g.size()) + " does not match tensor " +
                     to_string(shape_));
  grad_ = std::move(g);
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
}

namespace ops {
namespace {

// Layout of a tensor seen along one axis: `outer` independent lines of
// `len` elements, consecutive line elements `inner` apart.
struct AxisView {
  std::size_t outer, len, inner;
  Shape reduced;
};

AxisView axis_view(const char* op, const Shape& s, int axis) {
  if (s.size() == 1 && axis == 0) return {1, s[0], 1, {1}};
  if (s.size() == 2 && axis == 0) return {1, s[0], s[1], {s[1]}};
  if (s.size() == 2 && axis == 1) return {s[0], s[1], 1, {s[0]}};
  throw ShapeError(std::string(op) + ": axis " + std::to_string(axis) +
                   " is invalid for shape " + to_string(s));
}

bool is_row_of(const Shape& row, const Shape& mat) {
  if (mat.size() != 2) return false;
  if (row.size() == 1) return row[0] == mat[1];
  return row.size() == 2 && row[0] == 1 && row[1] == mat[1];
}

using Binary = void (*)(const double*, const double*, double*, std::size_t);

Tensor elementwise(const char* op, const Tensor& a, const Tensor& b, Binary kernel) {
  const Shape out_shape = broadcast_shape(op, a.shape(), b.shape());
  Tensor out(out_shape);
  const std::size_t n = out.size();
  if (a.shape() == out_shape && b.shape() == out_shape) {
    kernel(a.values().data(), b.values().data(), out.values().data(), n);
    return out;
  }
  const Tensor ea = a.shape() == out_shape ? a : broadcast_to(a, out_shape);
  const Tensor eb = b.shape() == out_shape ? b : broadcast_to(b, out_shape);
  kernel(ea.values().data(), eb.values().data(), out.values().data(), n);
  return out;
}

}  // namespace

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b) {
  if (a == b) return a;
  const std::size_t na = shape_size(a), nb = shape_size(b);
  if (nb == 1) return a;
  if (na == 1) return b;
  if (is_row_of(b, a)) return a;
  if (is_row_of(a, b)) return b;
  throw ShapeError(std::string(op) + ": cannot broadcast shapes " + to_string(a) + " and " +
                   to_string(b));
}

Tensor broadcast_to(const Tensor& t, const Shape& target) {
  if (t.shape() == target) return t;
  Tensor out(target);
  auto dst = out.values();
  const auto src = t.values();
  if (t.size() == 1) {
    std::fill(dst.begin(), dst.end(), src[0]);
  } else if (is_row_of(t.shape(), target)) {
    const std::size_t c = target[1];
    for (std::size_t r = 0; r < target[0]; ++r) std::copy(src.begin(), src.end(), dst.begin() + r * c);
  } else {
    throw ShapeError("broadcast: cannot expand " + to_string(t.shape()) + " to " + to_string(target));
  }
  return out;
}

Tensor reduce_to(const Tensor& g, const Shape& target) {
  if (g.shape() == target) return g;
  Tensor out(target);
  auto dst = out.values();
  const auto src = g.values();
  if (shape_size(target) == 1) {
    double acc = 0.0;
    for (double v : src) acc += v;
    dst[0] = acc;
  } else if (is_row_of(target, g.shape())) {
    const std::size_t c = g.shape()[1];
    for (std::size_t r = 0; r < g.shape()[0]; ++r)
      for (std::size_t j = 0; j < c; ++j) dst[j] += src[r * c + j];
  } else {
    throw ShapeError("reduce: cannot reduce " + to_string(g.shape()) + " to " + to_string(target));
  }
  return out;
}

Tensor add(const Tensor& a, const Tensor& b) {
  return elementwise("add", a, b, kernels::active().add);
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return elementwise("sub", a, b, kernels::active().sub);
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return elementwise("mul", a, b, kernels::active().mul);
}

Tensor scale(const Tensor& a, double s) {
  Tensor out(a.shape());
  kernels::active().scale(a.values().data(), s, out.values().data(), a.size());
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0])
    throw ShapeError("matmul: incompatible shapes " + to_string(a.shape()) + " and " +
                     to_string(b.shape()));
  const std::size_t n = a.shape()[0], k = a.shape()[1], m = b.shape()[1];
  Tensor out({n, m});
  kernels::active().gemm_acc(a.values().data(), b.values().data(), out.values().data(), n, k, m);
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  Tensor out({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  return out;
}

Tensor relu(const Tensor& a) {
  Tensor out(a.shape());
  kernels::active().relu(a.values().data(), out.values().data(), a.size());
  return out;
}

Tensor exp(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = std::exp(a[i]);
  return out;
}

Tensor log(const Tensor& a) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i] <= 0.0)
      throw DomainError("log: non-positive input " + std::to_string(a[i]) + " at index " +
                        std::to_string(i) + " of " + to_string(a.shape()));
    out[i] = std::log(a[i]);
  }
  return out;
}

Tensor clamp_min(const Tensor& a, double floor) {
  Tensor out(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] < floor ? floor : a[i];  // NaN passes through
  return out;
}

Tensor sum(const Tensor& a, std::optional<int> axis) {
  if (!axis) {
    double acc = 0.0;
    for (double v : a.values()) acc += v;
    return Tensor::scalar(acc);
  }
  const AxisView v = axis_view("sum", a.shape(), *axis);
  Tensor out(v.reduced);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      double acc = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) acc += a[(o * v.len + l) * v.inner + i];
      out[o * v.inner + i] = acc;
    }
  return out;
}

Tensor mean(const Tensor& a, std::optional<int> axis) {
  Tensor s = sum(a, axis);
  const double count = axis ? static_cast<double>(axis_view("mean", a.shape(), *axis).len)
                            : static_cast<double>(a.size());
  for (auto& x : s.values()) x /= count;
  return s;
}

Tensor max(const Tensor& a, int axis, std::vector<std::size_t>* argmax) {
  const AxisView v = axis_view("max", a.shape(), axis);
  Tensor out(v.reduced);
  if (argmax) argmax->assign(out.size(), 0);
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      std::size_t best = o * v.len * v.inner + i;
      for (std::size_t l = 1; l < v.len; ++l) {
        const std::size_t idx = (o * v.len + l) * v.inner + i;
        if (a[idx] > a[best]) best = idx;
      }
      out[o * v.inner + i] = a[best];
      if (argmax) (*argmax)[o * v.inner + i] = best;
    }
  return out;
}

Tensor softmax(const Tensor& a, int axis) {
  const AxisView v = axis_view("softmax", a.shape(), axis);
  Tensor out(a.shape());
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t i = 0; i < v.inner; ++i) {
      auto at = [&](std::size_t l) { return (o * v.len + l) * v.inner + i; };
      double hi = a[at(0)];
      for (std::size_t l = 1; l < v.len; ++l) hi = std::max(hi, a[at(l)]);
      double z = 0.0;
      for (std::size_t l = 0; l < v.len; ++l) {
        out[at(l)] = std::exp(a[at(l)] - hi);
        z += out[at(l)];
      }
      for (std::size_t l = 0; l < v.len; ++l) out[at(l)] /= z;
    }
  return out;
}

Tensor concat(const Tensor& a, const Tensor& b, int axis) {
  const bool ok = a.rank() == b.rank() &&
                  ((a.rank() == 1 && axis == 0) ||
                   (a.rank() == 2 && axis == 0 && a.shape()[1] == b.shape()[1]) ||
                   (a.rank() == 2 && axis == 1 && a.shape()[0] == b.shape()[0]));
  if (!ok)
    throw ShapeError("concat: cannot join " + to_string(a.shape()) + " and " + to_string(b.shape()) +
                     " along axis " + std::to_string(axis));
  if (a.rank() == 1 || axis == 0) {
    Shape s = a.shape();
    s[0] += b.shape()[0];
    std::vector<double> vals(a.data());
    vals.insert(vals.end(), b.data().begin(), b.data().end());
    return Tensor(std::move(s), std::move(vals));
  }
  const std::size_t r = a.shape()[0], ca = a.shape()[1], cb = b.shape()[1];
  Tensor out({r, ca + cb});
  for (std::size_t i = 0; i < r; ++i) {
    std::copy_n(a.data().begin() + i * ca, ca, out.values().begin() + i * (ca + cb));
    std::copy_n(b.data().begin() + i * cb, cb, out.values().begin() + i * (ca + cb) + ca);
  }
  return out;
}

Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end) {
  const AxisView v = axis_view("slice", a.shape(), axis);
  if (begin >= end || end > v.len)
    throw ShapeError("slice: range [" + std::to_string(begin) + ", " + std::to_string(end) +
                     ") is invalid for axis " + std::to_string(axis) + " of " + to_string(a.shape()));
  Shape s = a.shape();
  s[static_cast<std::size_t>(axis)] = end - begin;
  Tensor out(s);
  const std::size_t w = end - begin;
  for (std::size_t o = 0; o < v.outer; ++o)
    for (std::size_t l = 0; l < w; ++l)
      for (std::size_t i = 0; i < v.inner; ++i)
        out[(o * w + l) * v.inner + i] = a[(o * v.len + begin + l) * v.inner + i];
  return out;
}

std::vector<std::size_t> argmax_rows(const Tensor& a) {
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 1; j < c; ++j)
      if (a[i * c + j] > a[i * c + idx[i]]) idx[i] = j;
  return idx;
}

Tensor one_hot(std::span<const std::size_t> classes, std::size_t k) {
  Tensor out({classes.size(), k});
  for (std::size_t i = 0; i < classes.size(); ++i) {
    if (classes[i] >= k)
      throw ContractError("one_hot: class " + std::to_string(classes[i]) + " outside [0, " +
                          std::to_string(k) + ")");
    out[i * k + classes[i]] = 1.0;
  }
  return out;
}

}  // namespace ops
}  // namespace dbat
