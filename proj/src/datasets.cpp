#include "dbat/datasets.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <map>
#include <set>

#include "dbat/error.hpp"
#include "dbat/rng.hpp"

namespace dbat {

void LabeledDataset::validate() const {
  if (features.rank() != 2) throw DataError(name + ": features must be [n x d]");
  if (labels.empty()) throw DataError(name + ": dataset is empty");
  if (features.rows() != labels.size())
    throw DataError(name + ": " + std::to_string(features.rows()) + " rows but " +
                    std::to_string(labels.size()) + " labels");
  for (auto y : labels)
    if (y >= num_classes)
      throw DataError(name + ": label " + std::to_string(y) + " outside [0, " +
                      std::to_string(num_classes) + ")");
}

void UnlabeledDataset::validate() const {
  if (features.rank() != 2) throw DataError(name + ": features must be [m x d]");
}

Tensor gather_rows(const Tensor& features, std::span<const std::size_t> idx) {
  const std::size_t d = features.cols();
  Tensor out({idx.size(), d});
  for (std::size_t i = 0; i < idx.size(); ++i) {
    const auto src = features.row(idx[i]);
    std::copy(src.begin(), src.end(), out.values().begin() + i * d);
  }
  return out;
}

UnlabeledDataset strip_labels(const LabeledDataset& data, std::string name) {
  return UnlabeledDataset{data.features, std::move(name), data.recipe, data.sample_ids};
}

// --------------------------------------------------------------------------
// toy 2D

std::size_t toy2d_slab(double x2) {
  const auto j = static_cast<long>(std::floor((x2 + 1.0) / kToySlabWidth));
  return static_cast<std::size_t>(std::clamp(j, 0L, 4L));
}

std::size_t toy2d_simple_label(double x1) { return x1 > 0.0 ? 1 : 0; }

std::size_t toy2d_complex_label(double x2) { return toy2d_slab(x2) % 2; }

namespace {

constexpr std::size_t kSlabsOfClass[2][3] = {{0, 2, 4}, {1, 3, 0}};
constexpr std::size_t kSlabCount[2] = {3, 2};

double draw_x2(Rng& rng, std::size_t label) {
  const std::size_t slab = kSlabsOfClass[label][rng.below(kSlabCount[label])];
  const double lo = -1.0 + kToySlabWidth * static_cast<double>(slab);
  return rng.uniform(lo, lo + kToySlabWidth);
}

double draw_x1(Rng& rng, std::size_t label) {
  const double mag = rng.uniform(kToyMargin, 1.0);
  return label == 1 ? mag : -mag;
}

LabeledDataset toy_points(std::size_t n_per_class, std::uint64_t seed, bool randomize_x1,
                          std::string name) {
  if (n_per_class < 10) throw DataError("toy2d needs at least 10 points per class");
  Rng rng(seed);
  const std::size_t n = 2 * n_per_class;
  LabeledDataset ds;
  ds.features = Tensor({n, 2});
  ds.labels.resize(n);
  ds.num_classes = 2;
  ds.name = std::move(name);
  ds.recipe = {{"generator", "toy2d"},
               {"n_per_class", n_per_class},
               {"seed", seed},
               {"randomized_simple_feature", randomize_x1}};
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t y = i < n_per_class ? 0 : 1;
    const std::size_t x1_class = randomize_x1 ? static_cast<std::size_t>(rng.below(2)) : y;
    ds.features.at(i, 0) = draw_x1(rng, x1_class);
    ds.features.at(i, 1) = draw_x2(rng, y);
    ds.labels[i] = y;
    ds.sample_ids.push_back(i);
  }
  return ds;
}

}  // namespace

Toy2d gen_toy2d(std::size_t n_per_class, std::uint64_t seed, std::size_t grid_side) {
  if (grid_side < 2) throw DataError("toy2d grid needs at least 2 points per side");
  Toy2d out{toy_points(n_per_class, seed, false, "toy2d-train"), {}};
  const std::size_t m = grid_side * grid_side;
  out.grid.features = Tensor({m, 2});
  out.grid.name = "toy2d-grid";
  out.grid.recipe = {{"generator", "toy2d-grid"}, {"side", grid_side}};
  const double step = 2.0 / static_cast<double>(grid_side - 1);
  for (std::size_t r = 0; r < grid_side; ++r)
    for (std::size_t c = 0; c < grid_side; ++c) {
      const std::size_t i = r * grid_side + c;
      out.grid.features.at(i, 0) = -1.0 + step * static_cast<double>(c);
      out.grid.features.at(i, 1) = -1.0 + step * static_cast<double>(r);
      out.grid.sample_ids.push_back(i);
    }
  return out;
}

LabeledDataset gen_toy2d_randomized(std::size_t n_per_class, std::uint64_t seed) {
  return toy_points(n_per_class, seed, true, "toy2d-randomized");
}

UnlabeledDataset toy2d_counterfactual(const UnlabeledDataset& grid) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    const double x1 = grid.features.at(i, 0), x2 = grid.features.at(i, 1);
    if (std::abs(x1) < kToyMargin) continue;
    // A point on an interior slab edge has no well-defined complex label.
    const double edge = std::remainder(x2 + 1.0, kToySlabWidth);
    if (std::abs(edge) < 1e-9 && std::abs(x2) < 1.0 - 1e-9) continue;
    if (toy2d_simple_label(x1) != toy2d_complex_label(x2)) keep.push_back(i);
  }
  if (keep.empty()) throw DataError("toy2d grid has no counterfactual points");
  UnlabeledDataset out;
  out.features = gather_rows(grid.features, keep);
  out.name = "toy2d-counterfactual";
  out.recipe = {{"generator", "toy2d-counterfactual"}, {"source", grid.recipe}};
  for (auto i : keep) out.sample_ids.push_back(grid.sample_ids.at(i));
  return out;
}

// --------------------------------------------------------------------------
// shortcut blocks

void ShortcutRecipe::validate() const {
  if (n_train == 0 || n_test == 0 || n_val == 0 || n_ood == 0)
    throw DataError("shortcut recipe: all sample counts must be positive");
  if (simple_dim < 4 || complex_dim < 4)
    throw DataError("shortcut recipe: block dims must be at least 4 (got simple " +
                    std::to_string(simple_dim) + ", complex " + std::to_string(complex_dim) + ")");
  if (!(noise_sigma >= 0.0)) throw DataError("shortcut recipe: noise sigma must be >= 0");
}

nlohmann::json ShortcutRecipe::to_json() const {
  return {{"generator", "shortcut"},
          {"n_train", n_train},
          {"n_test", n_test},
          {"n_val", n_val},
          {"n_ood", n_ood},
          {"simple_dim", simple_dim},
          {"complex_dim", complex_dim},
          {"noise_sigma", noise_sigma},
          {"seed", seed},
          {"ood_kind", ood_kind == OodKind::target_like ? "target-like" : "held-out-patterns"}};
}

namespace {

// The secret rule behind the complex block, derived from the recipe seed.
struct ComplexRule {
  std::size_t a, b, pool;  // distinct coordinates
  double sign_a, sign_b, sign_pool;
};

ComplexRule complex_rule(const ShortcutRecipe& r) {
  Rng rng(Rng::derive(r.seed, 0xC0));
  std::vector<std::size_t> coords(r.complex_dim);
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  rng.shuffle(std::span(coords));
  auto sign = [&] { return rng.below(2) ? 1.0 : -1.0; };
  const double sa = sign(), sb = sign(), sp = sign();
  return {coords[0], coords[1], coords[2], sa, sb, sp};
}

enum class SimpleBlock { aligned, random };
enum class PatternPool { train, held_out };

class ShortcutSampler {
 public:
  ShortcutSampler(const ShortcutRecipe& r, std::uint64_t stream)
      : r_(r), rule_(complex_rule(r)), rng_(Rng::derive(r.seed, stream)) {}

  // Writes one sample into `row`; returns the label carried by the complex block.
  std::size_t draw(std::span<double> row, SimpleBlock simple, PatternPool pool) {
    const std::size_t y = static_cast<std::size_t>(rng_.below(2));
    const std::size_t template_class = simple == SimpleBlock::aligned ? y : rng_.below(2);
    const std::size_t half = r_.simple_dim / 2;
    for (std::size_t i = 0; i < r_.simple_dim; ++i)
      row[i] = ((i < half) == (template_class == 0)) ? 1.0 : 0.0;

    auto block = row.subspan(r_.simple_dim, r_.complex_dim);
    for (auto& v : block) v = rng_.below(2) ? 1.0 : -1.0;
    block[rule_.pool] = pool == PatternPool::train ? rule_.sign_pool : -rule_.sign_pool;
    const bool bit_a = block[rule_.a] * rule_.sign_a > 0.0;
    const bool bit_b = (y == 1) != bit_a;
    block[rule_.b] = bit_b ? rule_.sign_b : -rule_.sign_b;

    if (r_.noise_sigma > 0.0)
      for (auto& v : row) v += r_.noise_sigma * rng_.normal();
    return y;
  }

 private:
  const ShortcutRecipe& r_;
  ComplexRule rule_;
  Rng rng_;
};

LabeledDataset shortcut_split(const ShortcutRecipe& r, std::size_t n, std::uint64_t stream,
                              SimpleBlock simple, std::uint64_t& next_id, const char* name) {
  const std::size_t d = r.simple_dim + r.complex_dim;
  LabeledDataset ds;
  ds.features = Tensor({n, d});
  ds.labels.resize(n);
  ds.num_classes = 2;
  ds.name = name;
  ds.recipe = r.to_json();
  ds.recipe["split"] = name;
  ShortcutSampler sampler(r, stream);
  for (std::size_t i = 0; i < n; ++i) {
    ds.labels[i] = sampler.draw(ds.features.values().subspan(i * d, d), simple, PatternPool::train);
    ds.sample_ids.push_back(next_id++);
  }
  return ds;
}

}  // namespace

std::size_t shortcut_complex_label(const ShortcutRecipe& recipe, std::span<const double> block) {
  const ComplexRule rule = complex_rule(recipe);
  const bool bit_a = block[rule.a] * rule.sign_a > 0.0;
  const bool bit_b = block[rule.b] * rule.sign_b > 0.0;
  return bit_a != bit_b ? 1 : 0;
}

ShortcutData gen_shortcut(const ShortcutRecipe& r) {
  r.validate();
  std::uint64_t next_id = 0;
  ShortcutData out;
  out.train = shortcut_split(r, r.n_train, 1, SimpleBlock::aligned, next_id, "shortcut-train");
  out.test = shortcut_split(r, r.n_test, 2, SimpleBlock::aligned, next_id, "shortcut-test");
  out.test_complex =
      shortcut_split(r, r.n_test, 3, SimpleBlock::random, next_id, "shortcut-test-complex");
  out.val = shortcut_split(r, r.n_val, 4, SimpleBlock::random, next_id, "shortcut-val");

  const std::size_t d = r.simple_dim + r.complex_dim;
  out.ood.features = Tensor({r.n_ood, d});
  out.ood.name = "shortcut-ood";
  out.ood.recipe = r.to_json();
  out.ood.recipe["split"] = "ood";
  ShortcutSampler sampler(r, 5);
  const PatternPool pool =
      r.ood_kind == OodKind::target_like ? PatternPool::train : PatternPool::held_out;
  for (std::size_t i = 0; i < r.n_ood; ++i) {
    sampler.draw(out.ood.features.values().subspan(i * d, d), SimpleBlock::random, pool);
    out.ood.sample_ids.push_back(next_id++);
  }
  return out;
}

// --------------------------------------------------------------------------

CounterfactualPmf gen_counterfactual_pmf() {
  CounterfactualPmf pmf;
  for (int c = 0; c <= 1; ++c)
    for (int s = 0; s <= 1; ++s)
      for (int y = 0; y <= 1; ++y)
        if (c == s && s == y) pmf.source.push_back({c, s, y, 0.5});
  for (int c = 0; c <= 1; ++c)
    for (int s = 0; s <= 1; ++s)
      if (c != s) pmf.ood.push_back({c, s, 0.5});
  return pmf;
}

std::vector<double> default_t_grid() {
  std::vector<double> t(121);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = -1.0 + (3.0 * static_cast<double>(i)) / 120.0;
  return t;
}

UnlabeledDataset gen_interpolation_path(std::span<const double> x0, std::span<const double> x1,
                                        std::span<const double> t_grid) {
  if (x0.size() != x1.size() || x0.empty())
    throw ShapeError("interpolation endpoints must share a positive dimension");
  if (t_grid.empty()) throw ContractError("interpolation t-grid is empty");
  const std::size_t d = x0.size();
  UnlabeledDataset out;
  out.features = Tensor({t_grid.size(), d});
  out.name = "interpolation-path";
  out.recipe = {{"generator", "interpolation"},
                {"x0", std::vector<double>(x0.begin(), x0.end())},
                {"x1", std::vector<double>(x1.begin(), x1.end())},
                {"t", std::vector<double>(t_grid.begin(), t_grid.end())}};
  for (std::size_t i = 0; i < t_grid.size(); ++i) {
    const double t = t_grid[i];
    for (std::size_t j = 0; j < d; ++j) out.features.at(i, j) = t * x1[j] + (1.0 - t) * x0[j];
    out.sample_ids.push_back(i);
  }
  return out;
}

// --------------------------------------------------------------------------
// IDX

namespace {

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off, const std::string& file) {
  if (b.size() < off + 4) throw FormatError(file + ": truncated IDX header", b.size());
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

std::string hex32(std::uint32_t v) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "0x%08X", v);
  return buf;
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int shift = 24; shift >= 0; shift -= 8) b.push_back(static_cast<std::uint8_t>(v >> shift));
}

void write_bytes(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

LabeledDataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels,
                        std::vector<int> keep_classes) {
  const auto img = read_file(images);
  const auto lab = read_file(labels);
  const std::string img_name = images.filename().string();
  const std::string lab_name = labels.filename().string();

  if (const auto magic = read_be32(img, 0, img_name); magic != kIdxImageMagic)
    throw FormatError(img_name + ": expected image magic 0x00000803, found " + hex32(magic), 0);
  if (const auto magic = read_be32(lab, 0, lab_name); magic != kIdxLabelMagic)
    throw FormatError(lab_name + ": expected label magic 0x00000801, found " + hex32(magic), 0);

  const std::size_t n = read_be32(img, 4, img_name);
  const std::size_t rows = read_be32(img, 8, img_name);
  const std::size_t cols = read_be32(img, 12, img_name);
  const std::size_t n_labels = read_be32(lab, 4, lab_name);
  if (n != n_labels)
    throw DataError("IDX count mismatch: " + std::to_string(n) + " images vs " +
                    std::to_string(n_labels) + " labels");
  if (rows == 0 || cols == 0) throw FormatError(img_name + ": zero image dimension", 8);
  const std::size_t d = rows * cols;
  if (img.size() < 16 + n * d)
    throw FormatError(img_name + ": truncated pixel data, expected " + std::to_string(16 + n * d) +
                          " bytes",
                      img.size());
  if (lab.size() < 8 + n)
    throw FormatError(lab_name + ": truncated label data, expected " + std::to_string(8 + n) + " bytes",
                      lab.size());

  std::set<int> present;
  for (std::size_t i = 0; i < n; ++i) present.insert(lab[8 + i]);
  std::set<int> keep = keep_classes.empty() ? present : std::set<int>(keep_classes.begin(), keep_classes.end());
  std::map<int, std::size_t> relabel;
  for (int c : keep) relabel.emplace(c, relabel.size());

  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < n; ++i)
    if (relabel.count(lab[8 + i])) idx.push_back(i);
  if (idx.empty()) throw DataError("IDX filter kept no samples");

  LabeledDataset ds;
  ds.features = Tensor({idx.size(), d});
  ds.labels.reserve(idx.size());
  ds.num_classes = std::max<std::size_t>(2, relabel.size());
  ds.name = img_name;
  ds.recipe = {{"generator", "idx"},
               {"images", images.string()},
               {"labels", labels.string()},
               {"keep_classes", std::vector<int>(keep.begin(), keep.end())}};
  for (std::size_t r = 0; r < idx.size(); ++r) {
    const std::size_t i = idx[r];
    for (std::size_t j = 0; j < d; ++j)
      ds.features.at(r, j) = static_cast<double>(img[16 + i * d + j]) / 255.0;
    ds.labels.push_back(relabel.at(lab[8 + i]));
    ds.sample_ids.push_back(i);
  }
  return ds;
}

void write_idx_images(const std::filesystem::path& path, std::size_t rows, std::size_t cols,
                      std::span<const std::uint8_t> pixels) {
  if (rows == 0 || cols == 0 || pixels.size() % (rows * cols) != 0)
    throw ContractError("write_idx_images: pixel count is not a multiple of rows*cols");
  std::vector<std::uint8_t> b;
  put_be32(b, kIdxImageMagic);
  put_be32(b, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
  put_be32(b, static_cast<std::uint32_t>(rows));
  put_be32(b, static_cast<std::uint32_t>(cols));
  b.insert(b.end(), pixels.begin(), pixels.end());
  write_bytes(path, b);
}

void write_idx_labels(const std::filesystem::path& path, std::span<const std::uint8_t> labels) {
  std::vector<std::uint8_t> b;
  put_be32(b, kIdxLabelMagic);
  put_be32(b, static_cast<std::uint32_t>(labels.size()));
  b.insert(b.end(), labels.begin(), labels.end());
  write_bytes(path, b);
}

std::vector<LabeledDataset> split_dataset(const LabeledDataset& data, std::span<const std::size_t> sizes,
                                          std::uint64_t seed) {
  std::size_t total = 0;
  for (auto s : sizes) total += s;
  if (total > data.size())
    throw DataError("split: requested " + std::to_string(total) + " samples from " +
                    std::to_string(data.size()));
  std::vector<std::size_t> perm(data.size());
  for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
  Rng rng(seed);
  rng.shuffle(std::span(perm));
  std::vector<LabeledDataset> parts;
  std::size_t at = 0;
  for (std::size_t p = 0; p < sizes.size(); ++p) {
    std::span<const std::size_t> idx(perm.data() + at, sizes[p]);
    LabeledDataset part;
    part.features = gather_rows(data.features, idx);
    part.num_classes = data.num_classes;
    part.name = data.name + "/part" + std::to_string(p);
    part.recipe = {{"split_of", data.recipe}, {"part", p}, {"seed", seed}};
    for (auto i : idx) {
      part.labels.push_back(data.labels[i]);
      part.sample_ids.push_back(data.sample_ids[i]);
    }
    parts.push_back(std::move(part));
    at += sizes[p];
  }
  return parts;
}

// --------------------------------------------------------------------------
// dominoes

namespace {

// Cycles through a shuffled list of top samples per class.
class TopPicker {
 public:
  TopPicker(const LabeledDataset& top, Rng& rng) : rng_(rng) {
    pools_.resize(top.num_classes);
    for (std::size_t i = 0; i < top.size(); ++i) pools_[top.labels[i]].push_back(i);
    for (auto& p : pools_) rng_.shuffle(std::span(p));
    cursor_.assign(pools_.size(), 0);
  }

  std::size_t pick(std::size_t cls) {
    auto& pool = pools_.at(cls);
    if (pool.empty()) throw DataError("dominoes: top data has no samples of class " + std::to_string(cls));
    const std::size_t i = pool[cursor_[cls]];
    cursor_[cls] = (cursor_[cls] + 1) % pool.size();
    return i;
  }

 private:
  Rng& rng_;
  std::vector<std::vector<std::size_t>> pools_;
  std::vector<std::size_t> cursor_;
};

void require_binary(const LabeledDataset& d, const char* role) {
  if (d.num_classes != 2)
    throw DataError(std::string("dominoes: ") + role + " data must be binary, has " +
                    std::to_string(d.num_classes) + " classes");
}

}  // namespace

std::variant<LabeledDataset, UnlabeledDataset> make_dominoes(const LabeledDataset& top,
                                                             const LabeledDataset& bottom,
                                                             DominoMode mode, std::uint64_t seed) {
  top.validate();
  bottom.validate();
  require_binary(top, "top");
  if (mode == DominoMode::aligned) require_binary(bottom, "bottom");

  Rng rng(seed);
  TopPicker picker(top, rng);
  const std::size_t n = bottom.size(), dt = top.dim(), db = bottom.dim();
  Tensor feats({n, dt + db});
  std::vector<std::size_t> labels(n);
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t top_class = mode == DominoMode::aligned ? bottom.labels[i] : rng.below(2);
    const std::size_t t = picker.pick(top_class);
    auto dst = feats.values().subspan(i * (dt + db), dt + db);
    std::copy_n(top.features.row(t).begin(), dt, dst.begin());
    std::copy_n(bottom.features.row(i).begin(), db, dst.begin() + dt);
    labels[i] = bottom.labels[i];
    ids[i] = bottom.sample_ids.empty() ? i : bottom.sample_ids[i];
  }

  const char* mode_name = mode == DominoMode::aligned          ? "aligned"
                          : mode == DominoMode::randomized_top ? "randomized-top"
                                                               : "held-out-bottom";
  nlohmann::json recipe = {{"generator", "dominoes"},
                           {"mode", mode_name},
                           {"seed", seed},
                           {"top", top.recipe},
                           {"bottom", bottom.recipe}};
  const std::string name = std::string("dominoes-") + mode_name;
  if (mode == DominoMode::held_out_bottom)
    return UnlabeledDataset{std::move(feats), name, std::move(recipe), std::move(ids)};
  LabeledDataset out;
  out.features = std::move(feats);
  out.labels = std::move(labels);
  out.num_classes = mode == DominoMode::aligned ? 2 : bottom.num_classes;
  out.name = name;
  out.recipe = std::move(recipe);
  out.sample_ids = std::move(ids);
  return out;
}

// --------------------------------------------------------------------------

namespace {

void write_rows(std::ofstream& out, const Tensor& f, const std::vector<std::size_t>* labels) {
  const std::size_t d = f.cols();
  for (std::size_t j = 0; j < d; ++j) out << (j ? "," : "") << 'f' << j;
  if (labels) out << ",label";
  out << '\n';
  char buf[32];
  for (std::size_t i = 0; i < f.rows(); ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", f.at(i, j));
      out << (j ? "," : "") << buf;
    }
    if (labels) out << ',' << (*labels)[i];
    out << '\n';
  }
}

}  // namespace

void write_csv(const LabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_rows(out, data.features, &data.labels);
}

void write_csv(const UnlabeledDataset& data, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  write_rows(out, data.features, nullptr);
}

}  // namespace dbat
