#include "dbat/models.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include "dbat/error.hpp"
#include "dbat/rng.hpp"

namespace dbat {

void ClassifierSpec::validate() const {
  if (input_dim == 0) throw ContractError("classifier input_dim must be positive");
  if (num_classes < 2) throw ContractError("classifier needs at least 2 classes");
  for (auto h : hidden_dims)
    if (h == 0) throw ContractError("classifier hidden dims must be positive");
  if (activation != Activation::relu) throw ContractError("unsupported activation");
}

std::vector<Shape> ClassifierSpec::parameter_shapes() const {
  std::vector<Shape> shapes;
  std::size_t fan_in = input_dim;
  for (std::size_t l = 0; l < layer_count(); ++l) {
    const std::size_t fan_out = l < hidden_dims.size() ? hidden_dims[l] : num_classes;
    shapes.push_back({fan_in, fan_out});
    shapes.push_back({fan_out});
    fan_in = fan_out;
  }
  return shapes;
}

std::size_t ClassifierSpec::parameter_count() const {
  std::size_t n = 0;
  for (const auto& s : parameter_shapes()) n += shape_size(s);
  return n;
}

Classifier::Classifier(ClassifierSpec spec, std::vector<Tensor> parameters, std::uint64_t seed)
    : spec_(std::move(spec)), params_(std::move(parameters)), seed_(seed) {
  spec_.validate();
  const auto shapes = spec_.parameter_shapes();
  if (shapes.size() != params_.size())
    throw ShapeError("classifier expects " + std::to_string(shapes.size()) + " parameter tensors, got " +
                     std::to_string(params_.size()));
  for (std::size_t i = 0; i < shapes.size(); ++i)
    if (params_[i].shape() != shapes[i])
      throw ShapeError("parameter " + std::to_string(i) + " has shape " + to_string(params_[i].shape()) +
                       ", expected " + to_string(shapes[i]));
}

Tensor Classifier::predict(const Tensor& batch) const {
  if (batch.rank() != 2 || batch.cols() != spec_.input_dim)
    throw ShapeError("predict: batch shape " + to_string(batch.shape()) + " does not match input dim " +
                     std::to_string(spec_.input_dim));
  Tensor h = batch;
  for (std::size_t l = 0; l < spec_.layer_count(); ++l) {
    h = ops::add(ops::matmul(h, params_[2 * l]), params_[2 * l + 1]);
    if (l + 1 < spec_.layer_count()) h = ops::relu(h);
  }
  return ops::softmax(h, 1);
}

std::vector<ad::Var> Classifier::attach(ad::Graph& graph, bool trainable) const {
  std::vector<ad::Var> vars;
  vars.reserve(params_.size());
  for (const auto& p : params_) vars.push_back(trainable ? graph.leaf(p) : graph.constant(p));
  return vars;
}

ad::Var forward(const ClassifierSpec& spec, std::span<const ad::Var> params, ad::Var batch) {
  if (batch.shape().size() != 2 || batch.shape()[1] != spec.input_dim)
    throw ShapeError("forward: batch shape " + to_string(batch.shape()) + " does not match input dim " +
                     std::to_string(spec.input_dim));
  ad::Var h = batch;
  for (std::size_t l = 0; l < spec.layer_count(); ++l) {
    h = ad::add(ad::matmul(h, params[2 * l]), params[2 * l + 1]);
    if (l + 1 < spec.layer_count()) h = ad::relu(h);
  }
  return ad::softmax(h, 1);
}

Classifier init_classifier(const ClassifierSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed);
  std::vector<Tensor> params;
  for (const auto& shape : spec.parameter_shapes()) {
    Tensor t(shape);
    if (shape.size() == 2) {
      const double limit = std::sqrt(6.0 / static_cast<double>(shape[0] + shape[1]));
      for (auto& w : t.values()) w = rng.uniform(-limit, limit);
    }
    params.push_back(std::move(t));
  }
  return Classifier(spec, std::move(params), seed);
}

namespace {

class Writer {
 public:
  template <typename T>
  void put(T v) {
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    bytes.insert(bytes.end(), raw, raw + sizeof(T));
  }
  std::vector<std::uint8_t> bytes;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}

  template <typename T>
  T get(const char* field) {
    if (bytes_.size() - pos_ < sizeof(T))
      throw FormatError(std::string("model file truncated while reading ") + field, pos_);
    std::uint8_t raw[sizeof(T)];
    std::memcpy(raw, bytes_.data() + pos_, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) std::reverse(raw, raw + sizeof(T));
    pos_ += sizeof(T);
    T v;
    std::memcpy(&v, raw, sizeof(T));
    return v;
  }

  std::size_t pos() const { return pos_; }
  std::size_t remaining() const { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kMaxDim = 1u << 24;
constexpr std::uint32_t kMaxLayers = 1024;

}  // namespace

std::vector<std::uint8_t> serialize_model(const Classifier& model) {
  const auto& spec = model.spec();
  Writer w;
  for (char c : {'D', 'B', 'A', 'T'}) w.put(static_cast<std::uint8_t>(c));
  w.put(kModelFormatVersion);
  w.put(static_cast<std::uint32_t>(spec.input_dim));
  w.put(static_cast<std::uint32_t>(spec.hidden_dims.size()));
  for (auto h : spec.hidden_dims) w.put(static_cast<std::uint32_t>(h));
  w.put(static_cast<std::uint32_t>(spec.num_classes));
  w.put(static_cast<std::uint8_t>(spec.activation));
  w.put(model.seed());
  for (const auto& p : model.parameters())
    for (double v : p.values()) w.put(v);
  return std::move(w.bytes);
}

Classifier deserialize_model(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char expected : {'D', 'B', 'A', 'T'}) {
    const std::size_t at = r.pos();
    if (r.get<std::uint8_t>("magic") != static_cast<std::uint8_t>(expected))
      throw FormatError("bad magic: not a DBAT model file", at);
  }
  std::size_t at = r.pos();
  const auto version = r.get<std::uint16_t>("version");
  if (version != kModelFormatVersion)
    throw FormatError("unsupported model format version " + std::to_string(version), at);

  auto dim = [&](const char* field) {
    const std::size_t off = r.pos();
    const auto v = r.get<std::uint32_t>(field);
    if (v == 0 || v > kMaxDim)
      throw FormatError(std::string("invalid ") + field + " " + std::to_string(v), off);
    return static_cast<std::size_t>(v);
  };

  ClassifierSpec spec;
  spec.input_dim = dim("input_dim");
  at = r.pos();
  const auto n_hidden = r.get<std::uint32_t>("hidden count");
  if (n_hidden > kMaxLayers) throw FormatError("implausible hidden layer count", at);
  spec.hidden_dims.clear();
  for (std::uint32_t i = 0; i < n_hidden; ++i) spec.hidden_dims.push_back(dim("hidden dim"));
  at = r.pos();
  spec.num_classes = dim("num_classes");
  if (spec.num_classes < 2) throw FormatError("num_classes must be at least 2", at);
  at = r.pos();
  const auto act = r.get<std::uint8_t>("activation");
  if (act != static_cast<std::uint8_t>(Activation::relu))
    throw FormatError("unknown activation code " + std::to_string(act), at);
  const auto seed = r.get<std::uint64_t>("seed");

  std::vector<Tensor> params;
  for (const auto& shape : spec.parameter_shapes()) {
    const std::size_t n = shape_size(shape);
    if (r.remaining() < n * sizeof(double))
      throw FormatError("model file truncated in parameter data", r.pos());
    std::vector<double> vals(n);
    for (auto& v : vals) v = r.get<double>("parameter");
    params.emplace_back(shape, std::move(vals));
  }
  if (r.remaining() != 0) throw FormatError("trailing bytes after parameter data", r.pos());
  return Classifier(std::move(spec), std::move(params), seed);
}

void save_model(const Classifier& model, const std::filesystem::path& path) {
  const auto bytes = serialize_model(model);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw DataError("failed writing " + path.string());
}

Classifier load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_model(bytes);
}

}  // namespace dbat
