#include <doctest.h>

#include <cmath>

#include "dbat/error.hpp"
#include "dbat/tensor.hpp"
#include "gen.hpp"

using namespace dbat;

TEST_CASE("construction validates shape against values") {
  CHECK(Tensor({2, 3}).size() == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{0, 3}), ShapeError);
  CHECK_THROWS_AS(Tensor(Shape{}), ShapeError);
  CHECK(Tensor::full({2}, 7.0) == Tensor({2}, {7, 7}));
  CHECK(Tensor::scalar(4).item() == 4);
  CHECK_THROWS_AS(Tensor({2}, {1, 2}).item(), ShapeError);
  CHECK_THROWS_AS(Tensor({2}, {1, 2}).rows(), ShapeError);
}

TEST_CASE("add example") {
  CHECK(ops::add(Tensor::vector({1, 2}), Tensor::vector({3, 4})) == Tensor::vector({4, 6}));
}

TEST_CASE("softmax of zeros is uniform") {
  CHECK(ops::softmax(Tensor::vector({0, 0}), 0) == Tensor::vector({0.5, 0.5}));
}

TEST_CASE("matmul of ones") {
  const Tensor r = ops::matmul(Tensor::full({2, 3}, 1.0), Tensor::full({3, 1}, 1.0));
  CHECK(r.shape() == Shape{2, 1});
  CHECK(r == Tensor::full({2, 1}, 3.0));
}

TEST_CASE("broadcasting rules") {
  const Tensor m = Tensor::matrix(2, 2, {1, 2, 3, 4});
  CHECK(ops::add(m, Tensor::scalar(1)) == Tensor::matrix(2, 2, {2, 3, 4, 5}));
  CHECK(ops::add(Tensor::scalar(1), m) == Tensor::matrix(2, 2, {2, 3, 4, 5}));
  CHECK(ops::mul(m, Tensor::vector({10, 100})) == Tensor::matrix(2, 2, {10, 200, 30, 400}));
  CHECK(ops::sub(m, Tensor::matrix(1, 2, {1, 1})) == Tensor::matrix(2, 2, {0, 1, 2, 3}));
  CHECK(ops::reduce_to(Tensor::matrix(2, 2, {1, 2, 3, 4}), {2}) == Tensor::vector({4, 6}));
  CHECK(ops::reduce_to(Tensor::matrix(2, 2, {1, 2, 3, 4}), {1}) == Tensor::scalar(10));
}

TEST_CASE("shape mismatch errors name the op and both shapes") {
  try {
    ops::add(Tensor({2, 3}), Tensor({3, 2}));
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("add") != std::string::npos);
    CHECK(msg.find("[2x3]") != std::string::npos);
    CHECK(msg.find("[3x2]") != std::string::npos);
  }
  CHECK_THROWS_AS(ops::matmul(Tensor({2, 3}), Tensor({2, 3})), ShapeError);
  CHECK_THROWS_AS(ops::concat(Tensor({2, 3}), Tensor({2, 4}), 0), ShapeError);
  CHECK_THROWS_AS(ops::slice(Tensor({2, 3}), 1, 2, 4), ShapeError);
  CHECK_THROWS_AS(ops::slice(Tensor({2, 3}), 1, 2, 2), ShapeError);
  CHECK_THROWS_AS(ops::sum(Tensor({2, 3}), 2), ShapeError);
}

TEST_CASE("log of a non-positive value is a domain error") {
  CHECK_THROWS_AS(ops::log(Tensor::vector({1.0, 0.0})), DomainError);
  CHECK_THROWS_AS(ops::log(Tensor::vector({-1.0})), DomainError);
  CHECK(ops::log(Tensor::vector({1.0})) == Tensor::vector({0.0}));
}

TEST_CASE("reductions along axes") {
  const Tensor m = Tensor::matrix(2, 3, {1, 5, 3, 4, 2, 6});
  CHECK(ops::sum(m) == Tensor::scalar(21));
  CHECK(ops::sum(m, 0) == Tensor::vector({5, 7, 9}));
  CHECK(ops::sum(m, 1) == Tensor::vector({9, 12}));
  CHECK(ops::mean(m, 1) == Tensor::vector({3, 4}));
  CHECK(ops::sum(Tensor::vector({1, 2}), 0) == Tensor::scalar(3));
  std::vector<std::size_t> idx;
  CHECK(ops::max(m, 1, &idx) == Tensor::vector({5, 6}));
  CHECK(idx == std::vector<std::size_t>{1, 5});  // flat indices
  CHECK(ops::max(m, 0) == Tensor::vector({4, 5, 6}));
  CHECK(ops::argmax_rows(m) == std::vector<std::size_t>{1, 2});
}

TEST_CASE("concat, slice, transpose, one_hot") {
  const Tensor a = Tensor::matrix(1, 2, {1, 2}), b = Tensor::matrix(1, 2, {3, 4});
  CHECK(ops::concat(a, b, 0) == Tensor::matrix(2, 2, {1, 2, 3, 4}));
  CHECK(ops::concat(a, b, 1) == Tensor::matrix(1, 4, {1, 2, 3, 4}));
  const Tensor m = Tensor::matrix(2, 3, {1, 2, 3, 4, 5, 6});
  CHECK(ops::slice(m, 1, 1, 3) == Tensor::matrix(2, 2, {2, 3, 5, 6}));
  CHECK(ops::slice(m, 0, 1, 2) == Tensor::matrix(1, 3, {4, 5, 6}));
  CHECK(ops::transpose(m) == Tensor::matrix(3, 2, {1, 4, 2, 5, 3, 6}));
  const std::vector<std::size_t> cls{2, 0};
  CHECK(ops::one_hot(cls, 3) == Tensor::matrix(2, 3, {0, 0, 1, 1, 0, 0}));
}

TEST_CASE("softmax is stable for large logits and rows sum to one") {
  const Tensor s = ops::softmax(Tensor::matrix(2, 2, {1000, 1000, -1000, 0}), 1);
  CHECK(s.all_finite());
  CHECK(s.at(0, 0) == doctest::Approx(0.5));
  CHECK(s.at(1, 1) == doctest::Approx(1.0));
  gen::Gen g(4);
  for (int i = 0; i < 50; ++i) {
    const Tensor x = g.tensor({3, 5}, -50, 50);
    const Tensor p = ops::softmax(x, 1);
    const Tensor rows = ops::sum(p, 1);
    for (double v : rows.values()) CHECK(std::abs(v - 1.0) < 1e-12);
  }
}

TEST_CASE("property: forward ops on finite inputs stay finite") {
  gen::Gen g(5);
  for (int i = 0; i < 100; ++i) {
    const Tensor a = g.tensor({3, 4}, -5, 5), b = g.tensor({3, 4}, -5, 5);
    CHECK(ops::add(a, b).all_finite());
    CHECK(ops::mul(a, b).all_finite());
    CHECK(ops::exp(a).all_finite());
    CHECK(ops::softmax(a, 0).all_finite());
    CHECK(ops::matmul(a, ops::transpose(b)).all_finite());
    CHECK(ops::log(ops::exp(a)).all_finite());
  }
}

TEST_CASE("clamp_min lets NaN through") {
  const Tensor t = ops::clamp_min(Tensor::vector({std::nan(""), -1.0, 2.0}), 0.5);
  CHECK(std::isnan(t[0]));
  CHECK(t[1] == 0.5);
  CHECK(t[2] == 2.0);
}

TEST_CASE("log propagates NaN instead of rejecting it") {
  CHECK(std::isnan(ops::log(Tensor::vector({std::nan("")}))[0]));
}
