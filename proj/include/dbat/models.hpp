#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dbat/autodiff.hpp"
#include "dbat/tensor.hpp"

namespace dbat {

enum class Activation : std::uint8_t { relu = 0 };

struct ClassifierSpec {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims{32};
  std::size_t num_classes = 2;
  Activation activation = Activation::relu;

  void validate() const;
  std::size_t layer_count() const { return hidden_dims.size() + 1; }
  // Shapes of the parameter tensors in layer order: W0, b0, W1, b1, ...
  // Weights are [fan_in x fan_out], biases [fan_out].
  std::vector<Shape> parameter_shapes() const;
  std::size_t parameter_count() const;

  friend bool operator==(const ClassifierSpec&, const ClassifierSpec&) = default;
};

// Feed-forward softmax classifier: relu MLP followed by a softmax over classes.
class Classifier {
 public:
  Classifier(ClassifierSpec spec, std::vector<Tensor> parameters, std::uint64_t seed);

  const ClassifierSpec& spec() const noexcept { return spec_; }
  std::uint64_t seed() const noexcept { return seed_; }
  const std::vector<Tensor>& parameters() const noexcept { return params_; }
  std::vector<Tensor>& parameters() noexcept { return params_; }

  // Class probabilities [n x k] for a batch [n x input_dim], without a graph.
  Tensor predict(const Tensor& batch) const;

  // Adds the parameters to `graph`, as leaves when `trainable`, otherwise as
  // constants (frozen model).
  std::vector<ad::Var> attach(ad::Graph& graph, bool trainable) const;

  friend bool operator==(const Classifier& a, const Classifier& b) {
    return a.spec_ == b.spec_ && a.seed_ == b.seed_ && a.params_ == b.params_;
  }

 private:
  ClassifierSpec spec_;
  std::vector<Tensor> params_;
  std::uint64_t seed_;
};

// Probabilities [n x k] through the graph, given parameters from attach().
ad::Var forward(const ClassifierSpec& spec, std::span<const ad::Var> params, ad::Var batch);

// Glorot-uniform weights, zero biases; deterministic in `seed`.
Classifier init_classifier(const ClassifierSpec& spec, std::uint64_t seed);

// Binary model container:
//   "DBAT" | u16 version | u32 input_dim | u32 hidden count | u32 hidden dims...
//   | u32 num_classes | u8 activation | u64 seed | f64 parameters in layer order
// All integers and floats are little-endian.
inline constexpr std::uint16_t kModelFormatVersion = 1;

std::vector<std::uint8_t> serialize_model(const Classifier& model);
// Throws FormatError carrying the byte offset of the first malformed field.
Classifier deserialize_model(std::span<const std::uint8_t> bytes);
void save_model(const Classifier& model, const std::filesystem::path& path);
Classifier load_model(const std::filesystem::path& path);

}  // namespace dbat
