#include "dbat/training.hpp"

#include <cmath>
#include <numeric>

#include "dbat/error.hpp"
#include "dbat/evaluation.hpp"
#include "dbat/kernels.hpp"
#include "dbat/rng.hpp"

namespace dbat {

const char* to_string(TrainMode mode) {
  switch (mode) {
    case TrainMode::erm: return "erm";
    case TrainMode::dbat_sequential: return "dbat-sequential";
    case TrainMode::dbat_simultaneous: return "dbat-simultaneous";
  }
  return "?";
}

void TrainConfig::validate() const {
  if (epochs == 0) throw ContractError("epochs must be positive");
  if (batch_size == 0) throw ContractError("batch size must be positive");
  if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ContractError("momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ContractError("weight decay must be >= 0");
  if (!(alpha >= 0.0)) throw ContractError("alpha must be >= 0");
  agreement.validate();
}

void sgd_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, SgdState& state,
              double learning_rate, double momentum, double weight_decay) {
  if (grads.size() != params.size()) throw ShapeError("sgd_step: parameter/gradient count mismatch");
  if (state.velocity.empty())
    for (const auto& p : params) state.velocity.emplace_back(p.size(), 0.0);
  const auto& k = kernels::active();
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].values();
    auto& v = state.velocity[i];
    if (grads[i].size() != p.size() || v.size() != p.size())
      throw ShapeError("sgd_step: gradient " + std::to_string(i) + " does not match its parameter");
    k.scale(v.data(), momentum, v.data(), v.size());
    k.add(v.data(), grads[i].data(), v.data(), v.size());
    if (weight_decay != 0.0) k.axpy(weight_decay, p.data(), v.data(), v.size());
    k.axpy(-learning_rate, v.data(), p.data(), p.size());
  }
}

void EnsembleState::append(TrainResult result, const TrainConfig& cfg) {
  if (!models.empty() && !(models.front().spec() == result.model.spec()))
    throw ContractError("ensemble members must share one classifier spec");
  models.push_back(std::move(result.model));
  histories.push_back(std::move(result.history));
  configs.push_back(cfg);
}

std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size) {
  return (n + batch_size - 1) / batch_size;
}

namespace {

constexpr std::uint64_t kTrainStream = 0x7121;
constexpr std::uint64_t kOodStream = 0x00D;

// Seeded epoch-wise reshuffle of the training indices.
class BatchStream {
 public:
  BatchStream(std::size_t n, std::size_t batch, std::uint64_t seed)
      : n_(n), batch_(batch), rng_(seed), perm_(n) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
  }

  void start_epoch() {
    rng_.shuffle(std::span(perm_));
    pos_ = 0;
  }

  bool next(std::vector<std::size_t>& idx) {
    if (pos_ >= n_) return false;
    const std::size_t end = std::min(n_, pos_ + batch_);
    idx.assign(perm_.begin() + static_cast<long>(pos_), perm_.begin() + static_cast<long>(end));
    pos_ = end;
    return true;
  }

 private:
  std::size_t n_, batch_;
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
};

// Endless stream of OOD batches; reshuffles whenever the pool is exhausted.
class CyclingStream {
 public:
  CyclingStream(std::size_t n, std::uint64_t seed) : rng_(seed), perm_(n) {
    std::iota(perm_.begin(), perm_.end(), std::size_t{0});
    pos_ = n;
  }

  void next(std::size_t count, std::vector<std::size_t>& idx) {
    idx.clear();
    while (idx.size() < count) {
      if (pos_ == perm_.size()) {
        rng_.shuffle(std::span(perm_));
        pos_ = 0;
      }
      idx.push_back(perm_[pos_++]);
    }
  }

 private:
  Rng rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_;
};

std::vector<std::size_t> pick_labels(const std::vector<std::size_t>& labels,
                                     const std::vector<std::size_t>& idx) {
  std::vector<std::size_t> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

// Agreement of `current` (graph) against frozen predictions on the same batch.
ad::Var frozen_agreement(ad::Var current, std::span<const Tensor> previous, const AgreementConfig& cfg) {
  const std::size_t k = current.shape()[1];
  if (k != 2) return agreement_multiclass(current, previous, cfg);
  ad::Graph& g = *current.graph;
  std::optional<ad::Var> total;
  for (const auto& prev : previous) {
    const ad::Var term = agreement_binary(g.constant(prev), current, cfg.clamp_epsilon);
    total = total ? ad::add(*total, term) : term;
  }
  const std::size_t m = previous.size();
  double divisor = static_cast<double>(m);
  if (cfg.normalization == PreviousNormalization::count_minus_one)
    divisor = m > 1 ? static_cast<double>(m - 1) : 1.0;
  return divisor == 1.0 ? *total : ad::scale(*total, 1.0 / divisor);
}

void check_finite(double v, std::size_t epoch, std::size_t step) {
  if (!std::isfinite(v))
    throw NumericError("non-finite training objective at epoch " + std::to_string(epoch) + ", step " +
                       std::to_string(step));
}

// A finite objective can hide overflowed weights behind saturated softmaxes
// and dead units, so the update itself is checked as well.
void check_finite(std::span<const Tensor> params, std::size_t epoch, std::size_t step) {
  for (const auto& p : params)
    for (double v : p.values())
      if (!std::isfinite(v))
        throw NumericError("non-finite parameters after the update at epoch " + std::to_string(epoch) +
                           ", step " + std::to_string(step));
}

TrainResult train_single(const ClassifierSpec& spec, const LabeledDataset& train,
                         const UnlabeledDataset* ood, std::span<const Classifier> previous,
                         const TrainConfig& cfg) {
  cfg.validate();
  train.validate();
  if (train.dim() != spec.input_dim)
    throw DataError("training data dim " + std::to_string(train.dim()) + " does not match model input " +
                    std::to_string(spec.input_dim));
  if (train.num_classes != spec.num_classes)
    throw DataError("training data has " + std::to_string(train.num_classes) + " classes, model has " +
                    std::to_string(spec.num_classes));
  const bool with_agreement = ood && !previous.empty();
  if (ood) {
    ood->validate();
    if (ood->dim() != train.dim())
      throw DataError("OOD dim " + std::to_string(ood->dim()) + " does not match train dim " +
                      std::to_string(train.dim()));
  }

  Classifier model = init_classifier(spec, cfg.model_seed());
  SgdState sgd;
  BatchStream batches(train.size(), cfg.batch_size, Rng::derive(cfg.seed, kTrainStream));
  CyclingStream ood_batches(ood ? ood->size() : 0, Rng::derive(cfg.seed, kOodStream));

  TrainResult result{model, {}, {}};
  std::vector<std::size_t> idx, ood_idx;
  std::vector<Tensor> frozen;
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    batches.start_epoch();
    EpochRecord rec;
    rec.epoch = epoch;
    std::size_t steps = 0;
    while (batches.next(idx)) {
      ad::Graph g;
      const auto params = model.attach(g, true);
      const ad::Var x = g.constant(gather_rows(train.features, idx));
      const auto labels = pick_labels(train.labels, idx);
      const ad::Var task = cross_entropy(forward(spec, params, x), labels, cfg.agreement.clamp_epsilon);

      ad::Var objective = task;
      double agreement_value = 0.0;
      if (with_agreement) {
        ood_batches.next(cfg.batch_size, ood_idx);
        const Tensor x_ood = gather_rows(ood->features, ood_idx);
        frozen.clear();
        for (const auto& prev : previous) frozen.push_back(prev.predict(x_ood));
        const ad::Var p_ood = forward(spec, params, g.constant(x_ood));
        const ad::Var agreement = frozen_agreement(p_ood, frozen, cfg.agreement);
        agreement_value = agreement.value().item();
        objective = dbat_objective(task, agreement, cfg.alpha);
      }

      const double obj = objective.value().item();
      check_finite(obj, epoch, global_step);
      g.backward(objective);
      std::vector<std::vector<double>> grads;
      grads.reserve(params.size());
      for (const auto& p : params) grads.push_back(g.grad(p));
      sgd_step(model.parameters(), grads, sgd, cfg.learning_rate, cfg.momentum, cfg.weight_decay);
      check_finite(model.parameters(), epoch, global_step);

      rec.objective += obj;
      rec.task_loss += task.value().item();
      rec.agreement += agreement_value;
      result.step_objective.push_back(obj);
      ++steps;
      ++global_step;
    }
    const double inv = 1.0 / static_cast<double>(steps);
    rec.objective *= inv;
    rec.task_loss *= inv;
    rec.agreement *= inv;
    rec.train_accuracy = accuracy(model, train);
    result.history.push_back(rec);
  }
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult train_erm(const ClassifierSpec& spec, const LabeledDataset& train, const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::erm) throw ContractError("train_erm requires mode erm");
  return train_single(spec, train, nullptr, {}, cfg);
}

TrainResult train_dbat_next(const EnsembleState& ensemble, const ClassifierSpec& spec,
                            const LabeledDataset& train, const UnlabeledDataset& ood,
                            const TrainConfig& cfg) {
  if (cfg.mode != TrainMode::dbat_sequential)
    throw ContractError("train_dbat_next requires mode dbat-sequential");
  if (ensemble.empty()) throw ContractError("train_dbat_next needs at least one trained model");
  for (const auto& m : ensemble.models)
    if (!(m.spec() == spec)) throw ContractError("ensemble members must share the new model's spec");
  return train_single(spec, train, &ood, ensemble.models, cfg);
}

EnsembleState train_dbat_simultaneous(const ClassifierSpec& spec, const LabeledDataset& train,
                                      const UnlabeledDataset& ood, const TrainConfig& cfg,
                                      std::size_t k) {
  if (cfg.mode != TrainMode::dbat_simultaneous)
    throw ContractError("train_dbat_simultaneous requires mode dbat-simultaneous");
  if (k < 2) throw ContractError("simultaneous training needs K >= 2 (pairwise term undefined)");
  cfg.validate();
  train.validate();
  ood.validate();
  if (train.dim() != spec.input_dim || ood.dim() != train.dim())
    throw DataError("simultaneous training: train/OOD/model dimensions disagree");
  if (train.num_classes != spec.num_classes)
    throw DataError("simultaneous training: class count does not match model");

  std::vector<Classifier> models;
  std::vector<SgdState> sgd(k);
  std::vector<std::vector<EpochRecord>> histories(k);
  for (std::size_t m = 0; m < k; ++m) models.push_back(init_classifier(spec, cfg.model_seed() + m));

  BatchStream batches(train.size(), cfg.batch_size, Rng::derive(cfg.seed, kTrainStream));
  CyclingStream ood_batches(ood.size(), Rng::derive(cfg.seed, kOodStream));
  std::vector<std::size_t> idx, ood_idx;
  const double inv_k = 1.0 / static_cast<double>(k);
  const double inv_pairs = 2.0 / static_cast<double>(k * (k - 1));
  std::size_t global_step = 0;

  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    batches.start_epoch();
    std::vector<EpochRecord> recs(k);
    std::size_t steps = 0;
    while (batches.next(idx)) {
      ad::Graph g;
      std::vector<std::vector<ad::Var>> params;
      for (const auto& m : models) params.push_back(m.attach(g, true));
      const ad::Var x = g.constant(gather_rows(train.features, idx));
      const auto labels = pick_labels(train.labels, idx);
      ood_batches.next(cfg.batch_size, ood_idx);
      const ad::Var x_ood = g.constant(gather_rows(ood.features, ood_idx));

      std::vector<ad::Var> task, p_ood;
      for (std::size_t m = 0; m < k; ++m) {
        task.push_back(cross_entropy(forward(spec, params[m], x), labels, cfg.agreement.clamp_epsilon));
        p_ood.push_back(forward(spec, params[m], x_ood));
      }
      ad::Var task_sum = task[0];
      for (std::size_t m = 1; m < k; ++m) task_sum = ad::add(task_sum, task[m]);
      std::optional<ad::Var> agree_sum;
      for (std::size_t a = 0; a < k; ++a)
        for (std::size_t b = a + 1; b < k; ++b) {
          const ad::Var term = spec.num_classes == 2
                                   ? agreement_binary(p_ood[a], p_ood[b], cfg.agreement.clamp_epsilon)
                                   : agreement_pair(p_ood[b], p_ood[a], cfg.agreement.clamp_epsilon);
          agree_sum = agree_sum ? ad::add(*agree_sum, term) : term;
        }
      const ad::Var mean_task = ad::scale(task_sum, inv_k);
      const ad::Var mean_agree = ad::scale(*agree_sum, inv_pairs);
      const ad::Var objective = dbat_objective(mean_task, mean_agree, cfg.alpha);
      const double obj = objective.value().item();
      check_finite(obj, epoch, global_step);
      g.backward(objective);

      for (std::size_t m = 0; m < k; ++m) {
        std::vector<std::vector<double>> grads;
        for (const auto& p : params[m]) grads.push_back(g.grad(p));
        sgd_step(models[m].parameters(), grads, sgd[m], cfg.learning_rate, cfg.momentum,
                 cfg.weight_decay);
        check_finite(models[m].parameters(), epoch, global_step);
        recs[m].objective += obj;
        recs[m].task_loss += task[m].value().item();
        recs[m].agreement += mean_agree.value().item();
      }
      ++steps;
      ++global_step;
    }
    for (std::size_t m = 0; m < k; ++m) {
      const double inv = 1.0 / static_cast<double>(steps);
      recs[m].epoch = epoch;
      recs[m].objective *= inv;
      recs[m].task_loss *= inv;
      recs[m].agreement *= inv;
      recs[m].train_accuracy = accuracy(models[m], train);
      histories[m].push_back(recs[m]);
    }
  }

  EnsembleState state;
  for (std::size_t m = 0; m < k; ++m) {
    TrainConfig member = cfg;
    member.init_seed = cfg.model_seed() + m;
    state.append(TrainResult{std::move(models[m]), std::move(histories[m]), {}}, member);
  }
  return state;
}

EnsembleState train_ensemble(const ClassifierSpec& spec, const LabeledDataset& train,
                             const UnlabeledDataset& ood, const TrainConfig& cfg, std::size_t k) {
  if (k < 1) throw ContractError("train_ensemble: need at least one member");
  if (cfg.mode == TrainMode::dbat_simultaneous) return train_dbat_simultaneous(spec, train, ood, cfg, k);
  EnsembleState state;
  for (std::size_t m = 0; m < k; ++m) {
    TrainConfig member = cfg;
    member.seed = cfg.seed + m;
    if (cfg.init_seed) member.init_seed = *cfg.init_seed + m;
    if (cfg.mode == TrainMode::erm || m == 0) {
      member.mode = TrainMode::erm;
      state.append(train_erm(spec, train, member), member);
    } else {
      state.append(train_dbat_next(state, spec, train, ood, member), member);
    }
  }
  return state;
}

std::size_t select_best(std::span<const Classifier> ensemble, const LabeledDataset& val) {
  if (ensemble.empty()) throw ContractError("select_best: empty ensemble");
  std::size_t best = 0;
  double best_acc = accuracy(ensemble[0], val);
  for (std::size_t m = 1; m < ensemble.size(); ++m) {
    const double acc = accuracy(ensemble[m], val);
    if (acc > best_acc) {
      best = m;
      best_acc = acc;
    }
  }
  return best;
}

}  // namespace dbat
