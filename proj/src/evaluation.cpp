#include "dbat/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "dbat/error.hpp"

namespace dbat {

Tensor aggregate_ensemble(std::span<const Classifier> models, const Tensor& batch) {
  if (models.empty()) throw ContractError("aggregate_ensemble: empty ensemble");
  Tensor acc = models[0].predict(batch);
  for (std::size_t m = 1; m < models.size(); ++m) acc = ops::add(acc, models[m].predict(batch));
  if (models.size() == 1) return acc;
  return ops::scale(acc, 1.0 / static_cast<double>(models.size()));
}

double accuracy(const Tensor& probs, std::span<const std::size_t> labels) {
  if (probs.rows() != labels.size())
    throw ShapeError("accuracy: " + std::to_string(probs.rows()) + " predictions for " +
                     std::to_string(labels.size()) + " labels");
  const auto pred = ops::argmax_rows(probs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

double accuracy(const Classifier& model, const LabeledDataset& data) {
  return accuracy(model.predict(data.features), data.labels);
}

double accuracy(std::span<const Classifier> ensemble, const LabeledDataset& data) {
  return accuracy(aggregate_ensemble(ensemble, data.features), data.labels);
}

std::vector<double> entropy(const Tensor& probs) {
  const std::size_t n = probs.rows(), k = probs.cols();
  std::vector<double> h(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double acc = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      const double p = probs[i * k + j];
      if (p > 0.0) acc -= p * std::log(p);
    }
    h[i] = acc;
  }
  return h;
}

namespace {

// argmax of a row, or k when the maximum is not unique.
std::size_t strict_argmax(std::span<const double> row) {
  std::size_t best = 0;
  bool tie = false;
  for (std::size_t j = 1; j < row.size(); ++j) {
    if (row[j] > row[best]) {
      best = j;
      tie = false;
    } else if (row[j] == row[best]) {
      tie = true;
    }
  }
  return tie ? row.size() : best;
}

}  // namespace

double disagreement_rate(const Tensor& p1, const Tensor& p2) {
  if (p1.shape() != p2.shape())
    throw ShapeError("disagreement_rate: shapes " + to_string(p1.shape()) + " and " +
                     to_string(p2.shape()) + " differ");
  const std::size_t n = p1.rows(), k = p1.cols();
  std::size_t differ = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t a = strict_argmax(p1.row(i)), b = strict_argmax(p2.row(i));
    if (a != k && b != k && a != b) ++differ;
  }
  return static_cast<double>(differ) / static_cast<double>(n);
}

double disagreement_rate(const Classifier& h1, const Classifier& h2, const UnlabeledDataset& data) {
  return disagreement_rate(h1.predict(data.features), h2.predict(data.features));
}

std::vector<PathPoint> path_entropy_profile(std::span<const Classifier> ensemble,
                                            const UnlabeledDataset& path) {
  if (!path.recipe.contains("t")) throw ContractError("path_entropy_profile: path has no t values");
  const auto t = path.recipe.at("t").get<std::vector<double>>();
  if (t.size() != path.size()) throw DataError("path_entropy_profile: t grid does not match path rows");
  const auto h = entropy(aggregate_ensemble(ensemble, path.features));
  std::vector<PathPoint> out;
  out.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) out.push_back({t[i], h[i]});
  return out;
}

std::size_t Histogram::total() const {
  std::size_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

double Histogram::mass_at_or_above(double threshold) const {
  std::size_t s = 0;
  for (std::size_t b = 0; b < counts.size(); ++b)
    if (edges[b] >= threshold - 1e-12) s += counts[b];
  const std::size_t n = total();
  return n ? static_cast<double>(s) / static_cast<double>(n) : 0.0;
}

Histogram histogram_of(std::span<const double> values) {
  Histogram h;
  for (int b = 0; b <= 10; ++b) h.edges.push_back(b / 10.0);
  h.counts.assign(10, 0);
  for (double v : values) {
    const auto b = static_cast<long>(std::floor(v * 10.0));
    ++h.counts[static_cast<std::size_t>(std::clamp(b, 0L, 9L))];
  }
  return h;
}

Histogram confidence_histogram(std::span<const Classifier> ensemble, const UnlabeledDataset& ood) {
  if (ood.size() == 0) throw ContractError("confidence_histogram: no samples");
  const Tensor probs = aggregate_ensemble(ensemble, ood.features);
  const auto top = ops::max(probs, 1);
  return histogram_of(top.values());
}

double confident_fraction(const Tensor& probs, double threshold) {
  const auto top = ops::max(probs, 1);
  std::size_t s = 0;
  for (double v : top.values()) s += v > threshold;
  return static_cast<double>(s) / static_cast<double>(top.size());
}

std::string format_number(double v) {
  if (v == 0.0) v = 0.0;  // fold -0
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

void write_metrics_csv(std::span<const MetricsRecord> records, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << kMetricsHeader << '\n';
  for (const auto& r : records) {
    if (!std::isfinite(r.value))
      throw NumericError("metric " + r.metric + " of run " + r.run_id + " is not finite");
    out << r.run_id << ',' << r.model_index << ',' << r.split << ',' << r.metric << ','
        << format_number(r.value) << ',' << r.epoch << '\n';
  }
}

void write_histogram_csv(const Histogram& h, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out << "bin_lo,bin_hi,count\n";
  for (std::size_t b = 0; b < h.counts.size(); ++b)
    out << format_number(h.edges[b]) << ',' << format_number(h.edges[b + 1]) << ',' << h.counts[b]
        << '\n';
}

}  // namespace dbat
