#include "dbat/oodgen.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <limits>

#include "dbat/error.hpp"
#include "dbat/losses.hpp"

namespace dbat {

void PgdConfig::validate() const {
  if (!(epsilon >= 0.0)) throw ContractError("pgd: epsilon must be >= 0");
  if (steps == 0) throw ContractError("pgd: steps must be >= 1");
  if (!(step_size >= 0.0 && step_size <= epsilon))
    throw ContractError("pgd: step size must lie in [0, epsilon]");
}

namespace {

ad::Var agreement_var(const Classifier& h1, const Classifier& h2, ad::Graph& g, ad::Var x) {
  const auto p1 = forward(h1.spec(), h1.attach(g, false), x);
  const auto p2 = forward(h2.spec(), h2.attach(g, false), x);
  if (h1.spec().num_classes == 2) return agreement_binary(p1, p2);
  return agreement_pair(p1, p2);
}

void check_models(const Classifier& h1, const Classifier& h2, std::size_t dim) {
  if (h1.spec().input_dim != dim || h2.spec().input_dim != dim)
    throw ShapeError("pgd: models and input disagree on dimension");
  if (h1.spec().num_classes != h2.spec().num_classes)
    throw ShapeError("pgd: models disagree on class count");
}

}  // namespace

double agreement_at(const Classifier& h1, const Classifier& h2, std::span<const double> x) {
  check_models(h1, h2, x.size());
  ad::Graph g;
  const ad::Var xv = g.constant(Tensor({1, x.size()}, std::vector<double>(x.begin(), x.end())));
  return agreement_var(h1, h2, g, xv).value().item();
}

std::vector<double> pgd_disagreement(const Classifier& h1, const Classifier& h2,
                                     std::span<const double> x, const PgdConfig& cfg) {
  cfg.validate();
  check_models(h1, h2, x.size());
  const std::size_t d = x.size();
  std::vector<double> delta(d, 0.0);
  if (cfg.epsilon == 0.0) return {x.begin(), x.end()};

  for (std::size_t step = 0; step < cfg.steps; ++step) {
    ad::Graph g;
    std::vector<double> point(d);
    for (std::size_t i = 0; i < d; ++i) point[i] = x[i] + delta[i];
    const ad::Var xv = g.leaf(Tensor({1, d}, std::move(point)));
    const ad::Var agreement = agreement_var(h1, h2, g, xv);
    g.backward(agreement);
    const auto grad = g.grad(xv);

    if (cfg.norm == PgdNorm::l_inf) {
      for (std::size_t i = 0; i < d; ++i) {
        const double s = grad[i] > 0.0 ? 1.0 : (grad[i] < 0.0 ? -1.0 : 0.0);
        delta[i] = std::clamp(delta[i] - cfg.step_size * s, -cfg.epsilon, cfg.epsilon);
      }
    } else {
      double gn = 0.0;
      for (double v : grad) gn += v * v;
      gn = std::sqrt(gn);
      if (gn > 0.0)
        for (std::size_t i = 0; i < d; ++i) delta[i] -= cfg.step_size * grad[i] / gn;
      double dn = 0.0;
      for (double v : delta) dn += v * v;
      dn = std::sqrt(dn);
      if (dn > cfg.epsilon)
        for (auto& v : delta) v *= cfg.epsilon / dn;
    }
  }
  std::vector<double> out(d);
  for (std::size_t i = 0; i < d; ++i) out[i] = x[i] + delta[i];
  return out;
}

UnlabeledDataset pgd_disagreement_set(const Classifier& h1, const Classifier& h2, const Tensor& points,
                                      const PgdConfig& cfg) {
  const std::size_t n = points.rows(), d = points.cols();
  UnlabeledDataset out;
  out.features = Tensor({n, d});
  out.name = "pgd-ood";
  out.recipe = {{"generator", "pgd-disagreement"},
                {"epsilon", cfg.epsilon},
                {"steps", cfg.steps},
                {"step_size", cfg.step_size},
                {"norm", cfg.norm == PgdNorm::l_inf ? "l-inf" : "l2"}};
  for (std::size_t i = 0; i < n; ++i) {
    const auto moved = pgd_disagreement(h1, h2, points.row(i), cfg);
    std::copy(moved.begin(), moved.end(), out.features.values().begin() + i * d);
    out.sample_ids.push_back(i);
  }
  return out;
}

// --------------------------------------------------------------------------

void PosteriorTable::validate() const {
  for (const auto& row : p)
    for (double v : row)
      if (!(v >= 0.0 && v <= 1.0)) throw ContractError("posterior table entries must lie in [0, 1]");
}

PosteriorTable theorem_first_model() {
  PosteriorTable t;
  for (int c = 0; c <= 1; ++c)
    for (int s = 0; s <= 1; ++s) t.p[c][s] = static_cast<double>(c);
  return t;
}

double theorem_objective(const PosteriorTable& second, double eps) {
  const PosteriorTable first = theorem_first_model();
  double total = 0.0;
  for (const auto& [c, s, mass] : gen_counterfactual_pmf().ood) {
    const double p1 = first.at(c, s), p2 = second.at(c, s);
    const double differ = p1 * (1.0 - p2) + (1.0 - p1) * p2;
    total += mass * -std::log(std::max(differ, eps));
  }
  return total;
}

PosteriorTable theorem_oracle_bruteforce(std::size_t resolution) {
  if (resolution < 101) throw ContractError("theorem oracle grid resolution must be >= 101");
  const PosteriorTable first = theorem_first_model();
  PosteriorTable best = first;
  double best_obj = std::numeric_limits<double>::infinity();
  const double step = 1.0 / static_cast<double>(resolution - 1);
  for (std::size_t i = 0; i < resolution; ++i)
    for (std::size_t j = 0; j < resolution; ++j) {
      PosteriorTable cand = first;  // source support pinned to the first model
      cand.p[0][1] = static_cast<double>(i) * step;
      cand.p[1][0] = static_cast<double>(j) * step;
      const double obj = theorem_objective(cand);
      if (obj < best_obj) {
        best_obj = obj;
        best = cand;
      }
    }
  return best;
}

GradientOracleResult theorem_oracle_gradient(std::size_t iterations, double learning_rate) {
  if (!(learning_rate > 0.0)) throw ContractError("theorem gradient oracle: learning rate must be > 0");
  const PosteriorTable first = theorem_first_model();
  const auto support = gen_counterfactual_pmf().ood;
  // logits[k] drives P2(Y=1 | support[k]) = sigmoid(logits[k]).
  std::vector<double> logits(support.size(), 0.0);

  auto table_of = [&] {
    PosteriorTable t = first;
    for (std::size_t k = 0; k < support.size(); ++k)
      t.p[support[k].c][support[k].s] = 1.0 / (1.0 + std::exp(-logits[k]));
    return t;
  };

  GradientOracleResult result;
  for (std::size_t it = 0; it <= iterations; ++it) {
    ad::Graph g;
    std::optional<ad::Var> total;
    std::vector<ad::Var> leaves;
    for (std::size_t k = 0; k < support.size(); ++k) {
      const auto& [c, s, mass] = support[k];
      // softmax([0, u]) = (1 - sigmoid(u), sigmoid(u))
      const ad::Var z = g.leaf(Tensor::vector({0.0, logits[k]}));
      leaves.push_back(z);
      const ad::Var probs = ad::softmax(z, 0);
      const ad::Var p2_one = ad::slice(probs, 0, 1, 2);
      const ad::Var p2_zero = ad::slice(probs, 0, 0, 1);
      const double p1 = first.at(c, s);
      const ad::Var differ = ad::add(ad::scale(p2_zero, p1), ad::scale(p2_one, 1.0 - p1));
      const ad::Var term = ad::scale(ad::log(ad::clamp_min(differ, 1e-12)), -mass);
      total = total ? ad::add(*total, term) : term;
    }
    const double obj = total->value().item();
    if (!std::isfinite(obj))
      throw NumericError("theorem gradient oracle diverged at iteration " + std::to_string(it));
    result.objective_trace.push_back(obj);
    if (it == iterations) break;
    g.backward(*total);
    for (std::size_t k = 0; k < support.size(); ++k) logits[k] -= learning_rate * g.grad(leaves[k])[1];
  }
  result.table = table_of();
  return result;
}

}  // namespace dbat
