#include "dbat/config.hpp"

#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>

#include <json.hpp>

#include "dbat/evaluation.hpp"

namespace dbat {

const char* to_string(Experiment e) {
  switch (e) {
    case Experiment::toy2d: return "toy2d";
    case Experiment::shortcut: return "shortcut";
    case Experiment::dominoes_idx: return "dominoes-idx";
    case Experiment::interpolation: return "interpolation";
    case Experiment::theorem: return "theorem";
    case Experiment::alpha_sweep: return "alpha-sweep";
  }
  return "?";
}

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  std::string out(s.substr(b, e - b + 1));
  if (out.size() >= 2 && (out.front() == '"' || out.front() == '\'') && out.back() == out.front())
    out = out.substr(1, out.size() - 2);
  return out;
}

std::string normalize_key(std::string key) {
  std::replace(key.begin(), key.end(), '-', '_');
  return key;
}

struct BadValue {
  std::string why;
};

std::uint64_t to_u64(const std::string& v) {
  std::uint64_t out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw BadValue{"expected a non-negative integer"};
  return out;
}

std::size_t to_size(const std::string& v) { return static_cast<std::size_t>(to_u64(v)); }

double to_double(const std::string& v) {
  char* end = nullptr;
  const double out = std::strtod(v.c_str(), &end);
  if (v.empty() || end != v.c_str() + v.size()) throw BadValue{"expected a number"};
  return out;
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) throw BadValue{"empty item in list '" + v + "'"};
    out.push_back(item);
  }
  return out;
}

template <typename T, typename F>
std::vector<T> to_list(const std::string& v, F conv) {
  std::vector<T> out;
  for (const auto& s : split_list(v)) out.push_back(static_cast<T>(conv(s)));
  if (out.empty()) throw BadValue{"expected a comma-separated list"};
  return out;
}

int to_int(const std::string& v) {
  int out = 0;
  const auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || p != v.data() + v.size()) throw BadValue{"expected an integer"};
  return out;
}

Experiment to_experiment(const std::string& v) {
  for (auto e : {Experiment::toy2d, Experiment::shortcut, Experiment::dominoes_idx,
                 Experiment::interpolation, Experiment::theorem, Experiment::alpha_sweep})
    if (v == to_string(e) || normalize_key(v) == normalize_key(to_string(e))) return e;
  throw BadValue{"unknown experiment '" + v + "'"};
}

TrainMode to_mode(const std::string& v) {
  for (auto m : {TrainMode::erm, TrainMode::dbat_sequential, TrainMode::dbat_simultaneous})
    if (normalize_key(v) == normalize_key(to_string(m))) return m;
  throw BadValue{"unknown training mode '" + v + "'"};
}

template <typename T>
std::string join(const std::vector<T>& xs) {
  std::string out;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_floating_point_v<T>)
      out += format_number(xs[i]);
    else
      out += std::to_string(xs[i]);
  }
  return out;
}

using Setter = std::function<void(RunConfig&, const std::string&)>;

const std::map<std::string, Setter>& setters() {
  static const std::map<std::string, Setter> table = {
      {"experiment", [](RunConfig& c, const std::string& v) { c.experiment = to_experiment(v); }},
      {"output_dir", [](RunConfig& c, const std::string& v) { c.output_dir = v; }},
      {"run_id", [](RunConfig& c, const std::string& v) {
         if (v.empty() || v.find_first_of(",\n") != std::string::npos) throw BadValue{"run_id must be non-empty without commas"};
         c.run_id = v;
       }},
      {"seed", [](RunConfig& c, const std::string& v) { c.seed = to_u64(v); }},
      {"ensemble_size", [](RunConfig& c, const std::string& v) { c.ensemble_size = to_size(v); }},
      {"data.n_per_class", [](RunConfig& c, const std::string& v) { c.n_per_class = to_size(v); }},
      {"data.grid_side", [](RunConfig& c, const std::string& v) { c.grid_side = to_size(v); }},
      {"data.n_train", [](RunConfig& c, const std::string& v) { c.shortcut.n_train = to_size(v); }},
      {"data.n_test", [](RunConfig& c, const std::string& v) { c.shortcut.n_test = to_size(v); }},
      {"data.n_val", [](RunConfig& c, const std::string& v) { c.shortcut.n_val = to_size(v); }},
      {"data.n_ood", [](RunConfig& c, const std::string& v) { c.shortcut.n_ood = to_size(v); }},
      {"data.simple_block_dim", [](RunConfig& c, const std::string& v) { c.shortcut.simple_dim = to_size(v); }},
      {"data.complex_block_dim", [](RunConfig& c, const std::string& v) { c.shortcut.complex_dim = to_size(v); }},
      {"data.noise_sigma", [](RunConfig& c, const std::string& v) { c.shortcut.noise_sigma = to_double(v); }},
      {"data.ood_kind", [](RunConfig& c, const std::string& v) {
         if (normalize_key(v) == "target_like") c.shortcut.ood_kind = OodKind::target_like;
         else if (normalize_key(v) == "held_out_patterns") c.shortcut.ood_kind = OodKind::held_out_patterns;
         else throw BadValue{"ood_kind must be target-like or held-out-patterns"};
       }},
      {"data.top_images", [](RunConfig& c, const std::string& v) { c.top_images = v; }},
      {"data.top_labels", [](RunConfig& c, const std::string& v) { c.top_labels = v; }},
      {"data.bottom_images", [](RunConfig& c, const std::string& v) { c.bottom_images = v; }},
      {"data.bottom_labels", [](RunConfig& c, const std::string& v) { c.bottom_labels = v; }},
      {"data.top_classes", [](RunConfig& c, const std::string& v) { c.top_classes = to_list<int>(v, to_int); }},
      {"data.bottom_classes", [](RunConfig& c, const std::string& v) { c.bottom_classes = to_list<int>(v, to_int); }},
      {"data.ood_classes", [](RunConfig& c, const std::string& v) { c.ood_classes = to_list<int>(v, to_int); }},
      {"model.hidden_dims", [](RunConfig& c, const std::string& v) {
         c.hidden_dims = v == "none" ? std::vector<std::size_t>{} : to_list<std::size_t>(v, to_size);
       }},
      {"train.epochs", [](RunConfig& c, const std::string& v) { c.train.epochs = to_size(v); }},
      {"train.batch_size", [](RunConfig& c, const std::string& v) { c.train.batch_size = to_size(v); }},
      {"train.learning_rate", [](RunConfig& c, const std::string& v) { c.train.learning_rate = to_double(v); }},
      {"train.momentum", [](RunConfig& c, const std::string& v) { c.train.momentum = to_double(v); }},
      {"train.weight_decay", [](RunConfig& c, const std::string& v) { c.train.weight_decay = to_double(v); }},
      {"train.alpha", [](RunConfig& c, const std::string& v) { c.train.alpha = to_double(v); }},
      {"train.mode", [](RunConfig& c, const std::string& v) { c.train.mode = to_mode(v); }},
      {"train.agreement.binarization_anchor", [](RunConfig& c, const std::string& v) {
         if (normalize_key(v) == "current_model") c.train.agreement.anchor = BinarizationAnchor::current_model;
         else if (normalize_key(v) == "first_model") c.train.agreement.anchor = BinarizationAnchor::first_model;
         else throw BadValue{"binarization anchor must be current-model or first-model"};
       }},
      {"train.agreement.clamp_epsilon", [](RunConfig& c, const std::string& v) { c.train.agreement.clamp_epsilon = to_double(v); }},
      {"train.agreement.previous_model_normalization", [](RunConfig& c, const std::string& v) {
         if (normalize_key(v) == "count") c.train.agreement.normalization = PreviousNormalization::count;
         else if (normalize_key(v) == "count_minus_one") c.train.agreement.normalization = PreviousNormalization::count_minus_one;
         else throw BadValue{"normalization must be count or count-minus-one"};
       }},
      {"sweep.alphas", [](RunConfig& c, const std::string& v) { c.alphas = parse_double_list(v); }},
      {"sweep.dataset", [](RunConfig& c, const std::string& v) {
         const auto e = to_experiment(v);
         if (e != Experiment::toy2d && e != Experiment::shortcut) throw BadValue{"sweep dataset must be toy2d or shortcut"};
         c.sweep_dataset = e;
       }},
      {"theorem.grid", [](RunConfig& c, const std::string& v) { c.theorem_grid = to_size(v); }},
      {"theorem.iterations", [](RunConfig& c, const std::string& v) { c.theorem_iterations = to_size(v); }},
      {"theorem.learning_rate", [](RunConfig& c, const std::string& v) { c.theorem_learning_rate = to_double(v); }},
  };
  return table;
}

void validate(const RunConfig& c) {
  try {
    if (c.ensemble_size < 1) throw ConfigError("ensemble_size must be >= 1", 0);
    if (c.train.mode == TrainMode::dbat_simultaneous && c.ensemble_size < 2)
      throw ConfigError("dbat-simultaneous needs ensemble_size >= 2", 0);
    c.train.validate();
    if (c.experiment == Experiment::shortcut ||
        (c.experiment == Experiment::alpha_sweep && c.sweep_dataset == Experiment::shortcut))
      c.shortcut.validate();
    if (c.experiment == Experiment::dominoes_idx)
      for (const auto* p : {&c.top_images, &c.top_labels, &c.bottom_images, &c.bottom_labels})
        if (p->empty()) throw ConfigError("dominoes-idx needs data.top_images, data.top_labels, data.bottom_images and data.bottom_labels", 0);
    if (c.alphas.empty()) throw ConfigError("sweep.alphas must hold at least one value", 0);
    if (c.theorem_grid < 101) throw ConfigError("theorem.grid must be >= 101", 0);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(e.what(), 0);
  }
}

}  // namespace

std::vector<double> parse_double_list(std::string_view text) {
  try {
    auto out = to_list<double>(std::string(text), to_double);
    return out;
  } catch (const BadValue& b) {
    throw ConfigError("bad number list '" + std::string(text) + "': " + b.why, 0);
  }
}

RunConfig parse_config(std::string_view text) {
  RunConfig cfg;
  std::set<std::string> seen;
  std::istringstream in{std::string(text)};
  std::string raw;
  std::size_t line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    if (const auto hash = raw.find('#'); hash != std::string::npos) raw.erase(hash);
    const std::string line = trim(raw);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("expected 'key = value', got '" + line + "'", line_no);
    const std::string key = normalize_key(trim(line.substr(0, eq)));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError("unknown key '" + key + "'", line_no);
    if (!seen.insert(key).second) throw ConfigError("duplicate key '" + key + "'", line_no);
    try {
      it->second(cfg, value);
    } catch (const BadValue& b) {
      throw ConfigError("bad value for '" + key + "': " + b.why, line_no);
    } catch (const ConfigError& e) {
      throw ConfigError(e.what(), line_no);
    }
    // Range checks run as each key lands so the error points at its line.
    try {
      if (key.rfind("train.", 0) == 0) cfg.train.validate();
      if (key.rfind("data.", 0) == 0) cfg.shortcut.validate();
    } catch (const Error& e) {
      throw ConfigError("bad value for '" + key + "': " + e.what(), line_no);
    }
  }
  for (const char* required : {"experiment", "output_dir"})
    if (!seen.count(required)) throw ConfigError(std::string("missing required key '") + required + "'", 0);
  cfg.shortcut.seed = cfg.seed;
  cfg.train.seed = cfg.seed;
  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path.string(), 0);
  std::stringstream buf;
  buf << in.rdbuf();
  const std::string text = buf.str();
  const auto first = text.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && text[first] == '{') {
    nlohmann::json manifest;
    try {
      manifest = nlohmann::json::parse(text);
    } catch (const nlohmann::json::exception& e) {
      throw ConfigError(std::string("manifest is not valid JSON: ") + e.what(), 0);
    }
    if (!manifest.contains("config") || !manifest["config"].is_object())
      throw ConfigError("manifest has no \"config\" object", 0);
    std::string kv;
    for (const auto& [k, v] : manifest["config"].items())
      kv += k + " = " + (v.is_string() ? v.get<std::string>() : v.dump()) + "\n";
    return parse_config(kv);
  }
  return parse_config(text);
}

void apply_env_overrides(RunConfig& cfg) {
  if (const char* env = std::getenv("DBAT_SEED"); env && *env) {
    try {
      cfg.seed = to_u64(trim(env));
    } catch (const BadValue&) {
      throw ConfigError(std::string("DBAT_SEED is not a non-negative integer: ") + env, 0);
    }
    cfg.shortcut.seed = cfg.seed;
    cfg.train.seed = cfg.seed;
  }
}

std::map<std::string, std::string> RunConfig::resolved() const {
  auto anchor = train.agreement.anchor == BinarizationAnchor::current_model ? "current-model" : "first-model";
  auto norm = train.agreement.normalization == PreviousNormalization::count ? "count" : "count-minus-one";
  return {
      {"experiment", to_string(experiment)},
      {"output_dir", output_dir.string()},
      {"run_id", run_id},
      {"seed", std::to_string(seed)},
      {"ensemble_size", std::to_string(ensemble_size)},
      {"data.n_per_class", std::to_string(n_per_class)},
      {"data.grid_side", std::to_string(grid_side)},
      {"data.n_train", std::to_string(shortcut.n_train)},
      {"data.n_test", std::to_string(shortcut.n_test)},
      {"data.n_val", std::to_string(shortcut.n_val)},
      {"data.n_ood", std::to_string(shortcut.n_ood)},
      {"data.simple_block_dim", std::to_string(shortcut.simple_dim)},
      {"data.complex_block_dim", std::to_string(shortcut.complex_dim)},
      {"data.noise_sigma", format_number(shortcut.noise_sigma)},
      {"data.ood_kind", shortcut.ood_kind == OodKind::target_like ? "target-like" : "held-out-patterns"},
      {"data.top_images", top_images.string()},
      {"data.top_labels", top_labels.string()},
      {"data.bottom_images", bottom_images.string()},
      {"data.bottom_labels", bottom_labels.string()},
      {"data.top_classes", join(top_classes)},
      {"data.bottom_classes", join(bottom_classes)},
      {"data.ood_classes", join(ood_classes)},
      {"model.hidden_dims", hidden_dims.empty() ? "none" : join(hidden_dims)},
      {"train.epochs", std::to_string(train.epochs)},
      {"train.batch_size", std::to_string(train.batch_size)},
      {"train.learning_rate", format_number(train.learning_rate)},
      {"train.momentum", format_number(train.momentum)},
      {"train.weight_decay", format_number(train.weight_decay)},
      {"train.alpha", format_number(train.alpha)},
      {"train.mode", to_string(train.mode)},
      {"train.agreement.binarization_anchor", anchor},
      {"train.agreement.clamp_epsilon", format_number(train.agreement.clamp_epsilon)},
      {"train.agreement.previous_model_normalization", norm},
      {"sweep.alphas", join(alphas)},
      {"sweep.dataset", to_string(sweep_dataset)},
      {"theorem.grid", std::to_string(theorem_grid)},
      {"theorem.iterations", std::to_string(theorem_iterations)},
      {"theorem.learning_rate", format_number(theorem_learning_rate)},
  };
}

std::string RunConfig::render() const {
  std::string out;
  for (const auto& [k, v] : resolved())
    if (!v.empty()) out += k + " = " + v + "\n";
  return out;
}

}  // namespace dbat
