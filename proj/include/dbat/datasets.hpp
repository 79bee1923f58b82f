#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include <json.hpp>

#include "dbat/tensor.hpp"

namespace dbat {

struct LabeledDataset {
  Tensor features;                       // [n x d]
  std::vector<std::size_t> labels;       // n entries in [0, num_classes)
  std::size_t num_classes = 2;
  std::string name;
  nlohmann::json recipe;                 // generation parameters, seed included
  std::vector<std::uint64_t> sample_ids; // provenance; disjoint across splits

  std::size_t size() const { return labels.size(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;
};

struct UnlabeledDataset {
  Tensor features;  // [m x d]
  std::string name;
  nlohmann::json recipe;
  std::vector<std::uint64_t> sample_ids;

  std::size_t size() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  void validate() const;
};

// Rows `idx` of a feature matrix.
Tensor gather_rows(const Tensor& features, std::span<const std::size_t> idx);
UnlabeledDataset strip_labels(const LabeledDataset& data, std::string name);

// ---------------------------------------------------------------------------
// 2D toy task. Two classes, each explained by two features at once:
//   simple:  sign of x1 (class 1 iff x1 > 0), with no points in |x1| < 0.1
//   complex: x2 in one of 5 slabs of width 0.4 over [-1, 1]; class = slab
//            index parity (slabs 0, 2, 4 -> class 0; slabs 1, 3 -> class 1)
// Each point picks a slab uniformly among its class's slabs and is uniform
// inside its region.
// ---------------------------------------------------------------------------
inline constexpr double kToyMargin = 0.1;
inline constexpr double kToySlabWidth = 0.4;

std::size_t toy2d_slab(double x2);
std::size_t toy2d_simple_label(double x1);
std::size_t toy2d_complex_label(double x2);

struct Toy2d {
  LabeledDataset train;
  UnlabeledDataset grid;  // uniform lattice over [-1, 1]^2
};

Toy2d gen_toy2d(std::size_t n_per_class, std::uint64_t seed, std::size_t grid_side = 41);

// Same law as the training set except x1 is drawn independently of the label,
// so only the slab feature carries the class.
LabeledDataset gen_toy2d_randomized(std::size_t n_per_class, std::uint64_t seed);

// Lattice points whose simple and complex features disagree (|x1| >= 0.1):
// the counterfactual quadrants that never occur in training. Points lying on
// an interior slab edge are skipped.
UnlabeledDataset toy2d_counterfactual(const UnlabeledDataset& grid);

// ---------------------------------------------------------------------------
// Shortcut task: features = [simple block | complex block] + N(0, sigma^2).
//   simple block: one of two orthogonal templates (first / second half set
//                 to 1), selected by the class on train.
//   complex block: a sign pattern s in {-1,+1}^D; class = XOR of the signs
//                  of two secret coordinates (with secret sign flips).
// Half of all 2^D patterns form the training pool; the rest are held out.
// ---------------------------------------------------------------------------
enum class OodKind { target_like, held_out_patterns };

struct ShortcutRecipe {
  std::size_t n_train = 2000;
  std::size_t n_test = 1000;
  std::size_t n_val = 1000;
  std::size_t n_ood = 2000;
  std::size_t simple_dim = 4;
  std::size_t complex_dim = 8;
  double noise_sigma = 0.05;
  std::uint64_t seed = 0;
  OodKind ood_kind = OodKind::target_like;

  void validate() const;
  nlohmann::json to_json() const;
};

struct ShortcutData {
  LabeledDataset train;         // both blocks predict the label
  LabeledDataset test;          // same law as train (in-distribution test)
  LabeledDataset test_complex;  // simple block random; label from complex block
  LabeledDataset val;           // same law as test_complex
  UnlabeledDataset ood;         // per recipe.ood_kind
};

ShortcutData gen_shortcut(const ShortcutRecipe& recipe);

// Class of a complex block under the recipe's secret XOR rule.
std::size_t shortcut_complex_label(const ShortcutRecipe& recipe, std::span<const double> block);

// ---------------------------------------------------------------------------
// Counterfactual distribution of the diversity theorem on binary (c, s, y).
// ---------------------------------------------------------------------------
struct Triplet {
  int c, s, y;
  double mass;
};
struct InputPair {
  int c, s;
  double mass;
};
struct CounterfactualPmf {
  std::vector<Triplet> source;  // c = s = y, mass 1/2 each
  std::vector<InputPair> ood;   // input pairs outside the source support, uniform
};

CounterfactualPmf gen_counterfactual_pmf();

// ---------------------------------------------------------------------------
// Interpolation paths t * x1 + (1 - t) * x0.
// ---------------------------------------------------------------------------
// 121 evenly spaced points over [-1, 2]; contains 0 and 1 exactly.
std::vector<double> default_t_grid();
UnlabeledDataset gen_interpolation_path(std::span<const double> x0, std::span<const double> x1,
                                        std::span<const double> t_grid);

// ---------------------------------------------------------------------------
// IDX (MNIST) files. Images: magic 0x00000803, big-endian u32 n, rows, cols,
// then n*rows*cols bytes. Labels: magic 0x00000801, u32 n, n bytes.
// ---------------------------------------------------------------------------
inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

// Pixels scaled to [0, 1]; keeps `keep_classes` (all classes when empty) and
// relabels them 0..k-1 in ascending original-class order.
LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::vector<int> keep_classes = {});

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels);
void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels);

// Splits into disjoint random subsets of the given sizes.
std::vector<LabeledDataset> split_dataset(const LabeledDataset& data, std::span<const std::size_t> sizes,
                                          std::uint64_t seed);

// ---------------------------------------------------------------------------
// Dominoes: each sample is [top | bottom], one sample per bottom row.
//   aligned:          top class == bottom class == label (both binary)
//   randomized_top:   label from bottom, top class uniform at random
//   held_out_bottom:  unlabeled; bottoms come from classes absent in training
// ---------------------------------------------------------------------------
enum class DominoMode { aligned, randomized_top, held_out_bottom };

std::variant<LabeledDataset, UnlabeledDataset> make_dominoes(const LabeledDataset& top,
                                                             const LabeledDataset& bottom,
                                                             DominoMode mode, std::uint64_t seed);

// CSV with header f0..f{d-1},label (no label column for unlabeled data).
void write_csv(const LabeledDataset& data, const std::filesystem::path& path);
void write_csv(const UnlabeledDataset& data, const std::filesystem::path& path);

}  // namespace dbat
