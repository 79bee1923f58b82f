#pragma once

#include <cstddef>
#include <span>

#include "dbat/autodiff.hpp"

namespace dbat {

// Which model's predicted class defines the two bins when a k-class
// distribution is collapsed to (p[y], 1 - p[y]).
enum class BinarizationAnchor { current_model, first_model };

// Divisor applied to the sum of per-pair agreement terms when a model is
// trained against m previous models: `count` divides by m, `count_minus_one`
// by m - 1 (falls back to 1 when m == 1).
enum class PreviousNormalization { count, count_minus_one };

struct AgreementConfig {
  double alpha = 0.0;
  BinarizationAnchor anchor = BinarizationAnchor::current_model;
  double clamp_epsilon = 1e-12;
  PreviousNormalization normalization = PreviousNormalization::count;

  void validate() const;
};

// Mean over the batch of -log(max(p[i, label_i], eps)).
ad::Var cross_entropy(ad::Var probs, std::span<const std::size_t> labels, double eps = 1e-12);

// Agreement between two batches of 2-class distributions:
//   mean_i -log(max(p1[i,0] * p2[i,1] + p1[i,1] * p2[i,0], eps))
// The inner term is the probability that independent draws from the two
// predictions differ, so the loss is 0 under confident disagreement.
ad::Var agreement_binary(ad::Var p1, ad::Var p2, double eps = 1e-12);

// Multi-class agreement of `current` against frozen `previous` predictions.
// Rows are binarized on the anchor model's argmax class y:
//   inner_i = p_prev[y] * (1 - p_cur[y]) + (1 - p_prev[y]) * p_cur[y]
// and -log(max(inner, eps)) is summed over previous models, divided per
// cfg.normalization, and averaged over the batch. Gradients reach `current`
// only.
ad::Var agreement_multiclass(ad::Var current, std::span<const Tensor> previous,
                             const AgreementConfig& cfg);

// Same binarized term for two trainable predictions (gradients flow into
// both); the bins come from `anchor`'s argmax.
ad::Var agreement_pair(ad::Var anchor, ad::Var other, double eps = 1e-12);

// task + alpha * agreement. With alpha == 0 the task loss is returned as is.
ad::Var dbat_objective(ad::Var task_loss, ad::Var agreement, double alpha);

}  // namespace dbat
