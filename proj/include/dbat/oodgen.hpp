#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <vector>

#include "dbat/datasets.hpp"
#include "dbat/models.hpp"

namespace dbat {

// ---------------------------------------------------------------------------
// Agreement-minimizing perturbations. Intended for low-dimensional inputs:
// in high dimensions a tiny perturbation is usually enough to make deep
// models disagree, so the samples stop being informative.
// ---------------------------------------------------------------------------
enum class PgdNorm { l_inf, l2 };

struct PgdConfig {
  double epsilon = 0.1;
  std::size_t steps = 40;
  double step_size = 0.01;  // epsilon / 10 by default
  PgdNorm norm = PgdNorm::l_inf;

  static PgdConfig with_epsilon(double epsilon, PgdNorm norm = PgdNorm::l_inf) {
    return {epsilon, 40, epsilon / 10.0, norm};
  }
  void validate() const;
};

// Agreement of the two models at a single input (binary term for k = 2, the
// h1-anchored binarized term otherwise).
double agreement_at(const Classifier& h1, const Classifier& h2, std::span<const double> x);

// x + delta after projected descent on the agreement within the epsilon ball.
// l_inf steps along sign(grad) and clips each coordinate; l2 steps along the
// normalized gradient and rescales onto the ball. Models are not modified.
std::vector<double> pgd_disagreement(const Classifier& h1, const Classifier& h2,
                                     std::span<const double> x, const PgdConfig& cfg);

// Row-wise pgd_disagreement over a dataset.
UnlabeledDataset pgd_disagreement_set(const Classifier& h1, const Classifier& h2, const Tensor& points,
                                      const PgdConfig& cfg);

// ---------------------------------------------------------------------------
// Diversity theorem on binary features (c, s): a first model predicts
// P1(Y=1 | c, s) = c. A second model that agrees with it on the source support
// {(0,0), (1,1)} and minimizes agreement on {(0,1), (1,0)} should predict
// P2(Y=1 | c, s) = s.
// ---------------------------------------------------------------------------
struct PosteriorTable {
  // p[c][s] = P(Y = 1 | C = c, S = s)
  std::array<std::array<double, 2>, 2> p{};

  double at(int c, int s) const { return p[static_cast<std::size_t>(c)][static_cast<std::size_t>(s)]; }
  void validate() const;
};

// First model of the theorem: P1(Y=1 | c, s) = c.
PosteriorTable theorem_first_model();

// Expected agreement of `second` with theorem_first_model() over the OOD
// support of gen_counterfactual_pmf(), logs clamped at eps.
double theorem_objective(const PosteriorTable& second, double eps = 1e-12);

// Exhaustive search of the two free entries over a uniform grid of
// `resolution` points in [0, 1]; the source-support entries are pinned to
// the first model's values.
PosteriorTable theorem_oracle_bruteforce(std::size_t resolution = 1001);

struct GradientOracleResult {
  PosteriorTable table;
  std::vector<double> objective_trace;  // objective before each step, then final
};

// Gradient descent on the same objective with the free entries written as
// sigmoid(u), sigmoid(v), starting at u = v = 0 (both entries 0.5).
GradientOracleResult theorem_oracle_gradient(std::size_t iterations = 5000, double learning_rate = 1.0);

}  // namespace dbat
