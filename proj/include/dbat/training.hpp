#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "dbat/datasets.hpp"
#include "dbat/losses.hpp"
#include "dbat/models.hpp"

namespace dbat {

enum class TrainMode { erm, dbat_sequential, dbat_simultaneous };

const char* to_string(TrainMode mode);

struct TrainConfig {
  std::size_t epochs = 300;
  std::size_t batch_size = 64;
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  double alpha = 0.0;
  std::uint64_t seed = 0;
  // Seed for parameter initialization; defaults to `seed`.
  std::optional<std::uint64_t> init_seed;
  TrainMode mode = TrainMode::dbat_sequential;
  AgreementConfig agreement;

  void validate() const;
  std::uint64_t model_seed() const { return init_seed.value_or(seed); }
};

// Momentum SGD with L2 weight decay, per parameter tensor:
//   v <- momentum * v + grad + weight_decay * param
//   param <- param - learning_rate * v
struct SgdState {
  std::vector<std::vector<double>> velocity;
};

void sgd_step(std::span<Tensor> params, std::span<const std::vector<double>> grads, SgdState& state,
              double learning_rate, double momentum, double weight_decay);

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double objective = 0.0;  // mean over the epoch's steps
  double task_loss = 0.0;
  double agreement = 0.0;  // 0 when no previous models
  double train_accuracy = 0.0;
};

struct TrainResult {
  Classifier model;
  std::vector<EpochRecord> history;
  std::vector<double> step_objective;
};

struct EnsembleState {
  std::vector<Classifier> models;
  std::vector<std::vector<EpochRecord>> histories;
  std::vector<TrainConfig> configs;

  bool empty() const { return models.empty(); }
  std::size_t size() const { return models.size(); }
  // Appends a member; all members must share one ClassifierSpec.
  void append(TrainResult result, const TrainConfig& cfg);
};

// Steps per epoch: ceil(n / batch_size).
std::size_t steps_per_epoch(std::size_t n, std::size_t batch_size);

// Minibatch SGD on cross-entropy. Batches come from a seeded reshuffle of the
// training set every epoch.
TrainResult train_erm(const ClassifierSpec& spec, const LabeledDataset& train, const TrainConfig& cfg);

// Trains the next ensemble member: cross-entropy on a labeled batch plus
// alpha times its agreement with every existing member on an OOD batch drawn
// from an independent stream. Existing members are not modified.
TrainResult train_dbat_next(const EnsembleState& ensemble, const ClassifierSpec& spec,
                            const LabeledDataset& train, const UnlabeledDataset& ood,
                            const TrainConfig& cfg);

// Experimental: trains K members jointly on the mean task loss plus alpha
// times the mean pairwise agreement, with gradients reaching every member.
// Member m is initialized from model_seed() + m; all members see the same
// batches.
EnsembleState train_dbat_simultaneous(const ClassifierSpec& spec, const LabeledDataset& train,
                                      const UnlabeledDataset& ood, const TrainConfig& cfg,
                                      std::size_t k);

// K members per cfg.mode: erm trains each from seed + m; dbat-sequential
// trains member 0 with ERM and each later member with train_dbat_next on
// seed + m; dbat-simultaneous delegates to train_dbat_simultaneous.
EnsembleState train_ensemble(const ClassifierSpec& spec, const LabeledDataset& train,
                             const UnlabeledDataset& ood, const TrainConfig& cfg, std::size_t k);

// Index of the member with the highest validation accuracy; ties go to the
// earlier member.
std::size_t select_best(std::span<const Classifier> ensemble, const LabeledDataset& val);

}  // namespace dbat
