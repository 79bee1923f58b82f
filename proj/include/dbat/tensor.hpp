#pragma once

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace dbat {

using Shape = std::vector<std::size_t>;

std::string to_string(const Shape& shape);
std::size_t shape_size(const Shape& shape);

// Dense row-major array of doubles. A Tensor is plain data; it becomes part of
// a differentiation graph only when wrapped by ad::Graph::leaf/constant.
class Tensor {
 public:
  Tensor() : Tensor(Shape{1}) {}
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor full(Shape shape, double v);
  static Tensor vector(std::vector<double> values);
  static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> values);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return values_.size(); }
  std::size_t rows() const;  // rank 2 only
  std::size_t cols() const;  // rank 2 only

  std::span<const double> values() const noexcept { return values_; }
  std::span<double> values() noexcept { return values_; }
  const std::vector<double>& data() const noexcept { return values_; }

  double operator[](std::size_t i) const { return values_[i]; }
  double& operator[](std::size_t i) { return values_[i]; }
  double at(std::size_t r, std::size_t c) const { return values_[r * cols() + c]; }
  double& at(std::size_t r, std::size_t c) { return values_[r * cols() + c]; }
  // Value of a one-element tensor.
  double item() const;

  std::span<const double> row(std::size_t r) const;

  // Populated by ad::Graph::extract for graph-attached tensors after backward.
  const std::optional<std::vector<double>>& grad() const noexcept { return grad_; }
  void set_grad(std::vector<double> g);
  void clear_grad() noexcept { grad_.reset(); }

  bool all_finite() const noexcept;

  friend bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape_ == b.shape_ && a.values_ == b.values_;
  }

 private:
  Shape shape_;
  std::vector<double> values_;
  std::optional<std::vector<double>> grad_;
};

// Forward-only tensor operations. These are the value computations shared by
// the differentiation graph and by graph-free inference.
//
// Broadcasting (add/sub/mul): operands must either have identical shapes, or
// one operand has a single element (scalar broadcast), or one operand is
// [n x c] and the other is [c] or [1 x c] (the row is repeated over all n
// rows). The result takes the larger shape.
//
// Axis reductions (sum/mean/max/softmax/concat/slice) accept rank-1 and
// rank-2 tensors. Reducing a rank-2 tensor along axis 0 gives shape [cols],
// along axis 1 gives [rows]; reducing a rank-1 tensor gives [1]. A reduction
// with no axis covers every element and gives [1].
namespace ops {

Shape broadcast_shape(const char* op, const Shape& a, const Shape& b);
// Expands `t` to `target` under the rules above.
Tensor broadcast_to(const Tensor& t, const Shape& target);
// Sums `g` (shaped like a broadcast result) back down to `target`.
Tensor reduce_to(const Tensor& g, const Shape& target);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
// [n x k] x [k x m] -> [n x m]
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
// Throws DomainError on any element <= 0; NaN propagates.
Tensor log(const Tensor& a);
Tensor clamp_min(const Tensor& a, double floor);
Tensor sum(const Tensor& a, std::optional<int> axis = std::nullopt);
Tensor mean(const Tensor& a, std::optional<int> axis = std::nullopt);
// Also returns the flat index (into `a`) of each selected maximum; ties go to
// the first occurrence.
Tensor max(const Tensor& a, int axis, std::vector<std::size_t>* argmax = nullptr);
// Max-subtracted softmax.
Tensor softmax(const Tensor& a, int axis);
Tensor concat(const Tensor& a, const Tensor& b, int axis);
Tensor slice(const Tensor& a, int axis, std::size_t begin, std::size_t end);

// Row-wise argmax of a rank-2 tensor (first occurrence on ties).
std::vector<std::size_t> argmax_rows(const Tensor& a);
Tensor one_hot(std::span<const std::size_t> classes, std::size_t k);

}  // namespace ops
}  // namespace dbat
