#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dbat/datasets.hpp"
#include "dbat/models.hpp"

namespace dbat {

// Uniform mean of member probabilities, [n x k]. The argmax matches that of
// the unnormalized sum h_1 + ... + h_M.
Tensor aggregate_ensemble(std::span<const Classifier> models, const Tensor& batch);

double accuracy(const Tensor& probs, std::span<const std::size_t> labels);
double accuracy(const Classifier& model, const LabeledDataset& data);
double accuracy(std::span<const Classifier> ensemble, const LabeledDataset& data);

// Per-row Shannon entropy in nats, with 0 log 0 = 0.
std::vector<double> entropy(const Tensor& probs);

// Fraction of rows whose argmax differs. A row whose top probability is
// shared by several classes counts as agreement.
double disagreement_rate(const Tensor& p1, const Tensor& p2);
double disagreement_rate(const Classifier& h1, const Classifier& h2, const UnlabeledDataset& data);

struct PathPoint {
  double t;
  double entropy;
};

// Ensemble entropy along a path made by gen_interpolation_path, in t order.
std::vector<PathPoint> path_entropy_profile(std::span<const Classifier> ensemble,
                                            const UnlabeledDataset& path);

// Ten equal bins over [0, 1]; the last bin is closed on the right.
struct Histogram {
  std::vector<double> edges;         // 11 edges
  std::vector<std::size_t> counts;   // 10 counts

  std::size_t total() const;
  // Fraction of samples in bins whose lower edge is >= `threshold`.
  double mass_at_or_above(double threshold) const;
};

Histogram histogram_of(std::span<const double> values);
// Histogram of the aggregated prediction's top probability on each sample.
Histogram confidence_histogram(std::span<const Classifier> ensemble, const UnlabeledDataset& ood);

// Fraction of rows of `probs` whose top probability exceeds `threshold`.
double confident_fraction(const Tensor& probs, double threshold);

// One metrics row. model_index is a member index or "ensemble".
struct MetricsRecord {
  std::string run_id;
  std::string model_index;
  std::string split;
  std::string metric;
  double value = 0.0;
  long epoch = -1;
};

// Fixed-format number rendering shared by every CSV writer ("%.17g").
std::string format_number(double v);

inline constexpr const char* kMetricsHeader = "run_id,model_index,split,metric,value,epoch";
void write_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path);
void write_histogram_csv(const Histogram& h, const std::filesystem::path& path);

}  // namespace dbat
