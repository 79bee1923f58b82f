#include "dbat/losses.hpp"

#include <string>
#include <vector>

#include "dbat/error.hpp"

namespace dbat {

void AgreementConfig::validate() const {
  if (!(alpha >= 0.0)) throw ContractError("agreement alpha must be >= 0");
  if (!(clamp_epsilon > 0.0 && clamp_epsilon < 1e-3))
    throw ContractError("clamp epsilon must lie in (0, 1e-3)");
}

namespace {

void require_distribution_batch(const char* op, const Shape& s) {
  if (s.size() != 2 || s[1] < 2)
    throw ShapeError(std::string(op) + ": expected [n x k] probabilities with k >= 2, got " + to_string(s));
}

// p[y_i] per row, as a [n] vector.
Tensor pick(const Tensor& probs, const Tensor& mask) { return ops::sum(ops::mul(probs, mask), 1); }

// -mean(log(max(inner, eps)))
ad::Var neg_mean_log(ad::Var inner, double eps) {
  return ad::scale(ad::mean(ad::log(ad::clamp_min(inner, eps))), -1.0);
}

}  // namespace

ad::Var cross_entropy(ad::Var probs, std::span<const std::size_t> labels, double eps) {
  require_distribution_batch("cross_entropy", probs.shape());
  const std::size_t n = probs.shape()[0], k = probs.shape()[1];
  if (labels.size() != n)
    throw ShapeError("cross_entropy: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(n) + " rows");
  for (auto y : labels)
    if (y >= k)
      throw ContractError("cross_entropy: label " + std::to_string(y) + " outside [0, " +
                          std::to_string(k) + ")");
  ad::Graph& g = *probs.graph;
  const ad::Var mask = g.constant(ops::one_hot(labels, k));
  return neg_mean_log(ad::sum(ad::mul(probs, mask), 1), eps);
}

ad::Var agreement_binary(ad::Var p1, ad::Var p2, double eps) {
  const Shape& s1 = p1.shape();
  const Shape& s2 = p2.shape();
  if (s1.size() != 2 || s1[1] != 2 || s1 != s2)
    throw ShapeError("agreement_binary: expected two [n x 2] batches, got " + to_string(s1) + " and " +
                     to_string(s2));
  const ad::Var a0 = ad::slice(p1, 1, 0, 1), a1 = ad::slice(p1, 1, 1, 2);
  const ad::Var b0 = ad::slice(p2, 1, 0, 1), b1 = ad::slice(p2, 1, 1, 2);
  return neg_mean_log(ad::add(ad::mul(a0, b1), ad::mul(a1, b0)), eps);
}

ad::Var agreement_multiclass(ad::Var current, std::span<const Tensor> previous,
                             const AgreementConfig& cfg) {
  cfg.validate();
  if (previous.empty()) throw ContractError("agreement_multiclass: previous model list is empty");
  require_distribution_batch("agreement_multiclass", current.shape());
  for (const auto& p : previous)
    if (p.shape() != current.shape())
      throw ShapeError("agreement_multiclass: previous predictions " + to_string(p.shape()) +
                       " do not match current " + to_string(current.shape()));

  ad::Graph& g = *current.graph;
  const std::size_t n = current.shape()[0], k = current.shape()[1];
  const Tensor& anchor =
      cfg.anchor == BinarizationAnchor::current_model ? current.value() : previous.front();
  const Tensor mask = ops::one_hot(ops::argmax_rows(anchor), k);
  const Tensor ones = Tensor::full({n}, 1.0);

  const ad::Var mask_v = g.constant(mask);
  const ad::Var cur_in = ad::sum(ad::mul(current, mask_v), 1);
  const ad::Var cur_out = ad::sub(g.constant(ones), cur_in);

  std::optional<ad::Var> total;
  for (const auto& prev : previous) {
    const Tensor prev_in = pick(prev, mask);
    const Tensor prev_out = ops::sub(ones, prev_in);
    const ad::Var inner = ad::add(ad::mul(g.constant(prev_in), cur_out),
                                  ad::mul(g.constant(prev_out), cur_in));
    const ad::Var term = ad::log(ad::clamp_min(inner, cfg.clamp_epsilon));
    total = total ? ad::add(*total, term) : term;
  }
  const std::size_t m = previous.size();
  double divisor = static_cast<double>(m);
  if (cfg.normalization == PreviousNormalization::count_minus_one)
    divisor = m > 1 ? static_cast<double>(m - 1) : 1.0;
  return ad::scale(ad::mean(*total), -1.0 / divisor);
}

ad::Var agreement_pair(ad::Var anchor, ad::Var other, double eps) {
  require_distribution_batch("agreement_pair", anchor.shape());
  if (anchor.shape() != other.shape())
    throw ShapeError("agreement_pair: shapes " + to_string(anchor.shape()) + " and " +
                     to_string(other.shape()) + " differ");
  ad::Graph& g = *anchor.graph;
  const std::size_t n = anchor.shape()[0], k = anchor.shape()[1];
  const ad::Var mask = g.constant(ops::one_hot(ops::argmax_rows(anchor.value()), k));
  const ad::Var ones = g.constant(Tensor::full({n}, 1.0));
  const ad::Var a_in = ad::sum(ad::mul(anchor, mask), 1);
  const ad::Var o_in = ad::sum(ad::mul(other, mask), 1);
  const ad::Var inner =
      ad::add(ad::mul(o_in, ad::sub(ones, a_in)), ad::mul(ad::sub(ones, o_in), a_in));
  return neg_mean_log(inner, eps);
}

ad::Var dbat_objective(ad::Var task_loss, ad::Var agreement, double alpha) {
  if (!(alpha >= 0.0)) throw ContractError("dbat_objective: alpha must be >= 0");
  if (alpha == 0.0) return task_loss;
  return ad::add(task_loss, ad::scale(agreement, alpha));
}

}  // namespace dbat
