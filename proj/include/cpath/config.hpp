#pragma once

// Experiment configuration: a plain-text INI-style file.
//
//   # comment
//   seed = 7
//   [dataset]
//   kind = rings
//
// Keys before the first section header are top-level. Unknown keys and
// duplicates are rejected. README.md lists every key with its default.

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdint>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cpath/checkpoint.hpp"
#include "cpath/classifier.hpp"
#include "cpath/dataset.hpp"
#include "cpath/decoder.hpp"
#include "cpath/error.hpp"
#include "cpath/pathfind.hpp"

namespace cpath {

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

/// 12 significant digits; shortest general form.
inline std::string fmt_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v, std::chars_format::general, 12);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

/// Round-trip exact representation, for canonical config dumps.
inline std::string fmt_exact(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) return "nan";
  return std::string(buf, end);
}

}  // namespace detail

using IniMap = std::map<std::string, std::string>;

/// Flattens an INI document to "section.key" -> value ("key" at top level).
inline IniMap parse_ini(const std::string& text) {
  IniMap out;
  std::istringstream in(text);
  std::string line;
  std::string section;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') {
        throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
      }
      section = detail::trim(line.substr(1, line.size() - 2));
      if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = detail::trim(line.substr(0, eq));
    if (key.empty()) throw ConfigError("line " + std::to_string(lineno) + ": empty key");
    const std::string full = section.empty() ? key : section + "." + key;
    if (!out.emplace(full, detail::trim(line.substr(eq + 1))).second) {
      throw ConfigError("line " + std::to_string(lineno) + ": duplicate key '" + full + "'");
    }
  }
  return out;
}

enum class TargetRule { fixed, most_correct };

struct DecoderJobConfig {
  std::vector<std::size_t> layers;  // empty: no decoders are trained
  std::vector<std::size_t> hidden{64, 64};
  DecoderTrainConfig first = DecoderTrainConfig::first_hidden_layer();
  DecoderTrainConfig last = DecoderTrainConfig::last_layer();
  std::optional<std::uint64_t> seed;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::string out_dir = "out";

  DatasetKind dataset_kind = DatasetKind::rings;
  std::size_t dataset_n = 1000;
  DatasetParams dataset_params;
  std::optional<std::uint64_t> dataset_seed;

  std::vector<std::size_t> hidden{32, 32};
  std::string checkpoint;  // load instead of training when set
  std::optional<std::uint64_t> classifier_seed;
  TrainConfig train;
  std::optional<std::uint64_t> train_seed;

  std::vector<std::size_t> layers;  // empty: {0, first hidden, last hidden}
  std::size_t pair_count = 25;
  TargetRule target_rule = TargetRule::most_correct;
  ClassIndex target_class = 0;
  std::size_t opposite_pairs = 0;
  std::size_t threads = 1;
  std::optional<std::uint64_t> experiment_seed;

  NebConfig neb;
  DecoderJobConfig decoder;

  std::optional<Tensor> pair_x1;
  std::optional<Tensor> pair_x2;
  std::optional<ClassIndex> pair_target;

  std::uint64_t resolved_dataset_seed() const { return dataset_seed.value_or(seed); }
  std::uint64_t resolved_classifier_seed() const { return classifier_seed.value_or(seed); }
  std::uint64_t resolved_train_seed() const { return train_seed.value_or(seed); }
  std::uint64_t resolved_experiment_seed() const { return experiment_seed.value_or(seed); }
  std::uint64_t resolved_decoder_seed() const { return decoder.seed.value_or(seed); }

  std::vector<std::size_t> layer_dims(std::size_t input_dim, std::size_t classes) const {
    std::vector<std::size_t> dims{input_dim};
    dims.insert(dims.end(), hidden.begin(), hidden.end());
    dims.push_back(classes);
    return dims;
  }

  /// Layer indices to test for a model with `hidden_layers` hidden layers.
  std::vector<std::size_t> resolved_layers(std::size_t hidden_layers) const {
    std::vector<std::size_t> out = layers;
    if (out.empty()) {
      out.push_back(0);
      if (hidden_layers >= 1) out.push_back(1);
      if (hidden_layers > 1) out.push_back(hidden_layers);
    }
    for (std::size_t l : out) {
      if (l > hidden_layers) {
        throw ConfigError("layer index " + std::to_string(l) + " invalid for a model with " +
                          std::to_string(hidden_layers) + " hidden layers");
      }
    }
    return out;
  }

  void validate() const {
    if (pair_count < 1) throw ConfigError("experiment.pairs must be >= 1");
    if (opposite_pairs > pair_count) {
      throw ConfigError("experiment.opposite_pairs exceeds experiment.pairs");
    }
    if (threads < 1) throw ConfigError("experiment.threads must be >= 1");
    neb.validate();
    train.validate();
  }
};

namespace detail {

class IniReader {
 public:
  explicit IniReader(IniMap map) : map_(std::move(map)) {}

  std::optional<std::string> take(const std::string& key) {
    auto it = map_.find(key);
    if (it == map_.end()) return std::nullopt;
    std::string v = it->second;
    map_.erase(it);
    return v;
  }

  void str(const std::string& key, std::string& dst) {
    if (auto v = take(key)) dst = *v;
  }
  template <class T>
  void num(const std::string& key, T& dst) {
    if (auto v = take(key)) dst = parse<T>(key, *v);
  }
  template <class T>
  void opt(const std::string& key, std::optional<T>& dst) {
    if (auto v = take(key); v && !v->empty()) dst = parse<T>(key, *v);
  }
  void flag(const std::string& key, bool& dst) {
    if (auto v = take(key)) {
      if (*v == "true" || *v == "1" || *v == "yes") {
        dst = true;
      } else if (*v == "false" || *v == "0" || *v == "no") {
        dst = false;
      } else {
        throw ConfigError(key + ": expected a boolean, got '" + *v + "'");
      }
    }
  }
  void sizes(const std::string& key, std::vector<std::size_t>& dst) {
    if (auto v = take(key)) {
      dst.clear();
      for (const std::string& item : split(*v)) dst.push_back(parse<std::size_t>(key, item));
    }
  }
  void point(const std::string& key, std::optional<Tensor>& dst) {
    if (auto v = take(key); v && !v->empty()) dst = parse_point(key, *v);
  }

  void finish() const {
    if (!map_.empty()) throw ConfigError("unknown config key '" + map_.begin()->first + "'");
  }

  static std::vector<std::string> split(const std::string& s) {
    std::vector<std::string> out;
    std::string item;
    std::istringstream in(s);
    while (std::getline(in, item, ',')) {
      item = trim(item);
      if (!item.empty()) out.push_back(item);
    }
    return out;
  }

  static Tensor parse_point(const std::string& key, const std::string& s) {
    std::vector<double> xs;
    for (const std::string& item : split(s)) xs.push_back(parse<double>(key, item));
    if (xs.empty()) throw ConfigError(key + ": empty point");
    return Tensor::vector(std::move(xs));
  }

  template <class T>
  static T parse(const std::string& key, const std::string& s) {
    T v{};
    const char* b = s.data();
    const char* e = s.data() + s.size();
    if (!s.empty() && *b == '+') ++b;
    auto [p, ec] = std::from_chars(b, e, v);
    if (ec != std::errc() || p != e) {
      throw ConfigError(key + ": cannot parse '" + s + "'");
    }
    return v;
  }

 private:
  IniMap map_;
};

}  // namespace detail

inline ExperimentConfig config_from_ini(const IniMap& ini) {
  ExperimentConfig c;
  detail::IniReader r(ini);
  r.num("seed", c.seed);
  r.str("out", c.out_dir);

  if (auto kind = r.take("dataset.kind")) c.dataset_kind = parse_dataset_kind(*kind);
  r.num("dataset.n", c.dataset_n);
  r.opt("dataset.seed", c.dataset_seed);
  r.num("dataset.classes", c.dataset_params.classes);
  r.num("dataset.separation", c.dataset_params.separation);
  r.num("dataset.noise", c.dataset_params.noise);
  r.num("dataset.inner_radius", c.dataset_params.inner_radius);
  r.num("dataset.gap_radius", c.dataset_params.gap_radius);
  r.num("dataset.outer_radius", c.dataset_params.outer_radius);

  r.sizes("classifier.hidden", c.hidden);
  r.str("classifier.checkpoint", c.checkpoint);
  r.opt("classifier.seed", c.classifier_seed);

  r.num("train.learning_rate", c.train.learning_rate);
  r.num("train.batch_size", c.train.batch_size);
  r.num("train.epochs", c.train.epochs);
  r.num("train.beta1", c.train.adam_beta1);
  r.num("train.beta2", c.train.adam_beta2);
  r.num("train.eps", c.train.adam_eps);
  r.opt("train.seed", c.train_seed);

  if (auto layers = r.take("experiment.layers"); layers && *layers != "default") {
    for (const std::string& item : detail::IniReader::split(*layers)) {
      c.layers.push_back(detail::IniReader::parse<std::size_t>("experiment.layers", item));
    }
  }
  r.num("experiment.pairs", c.pair_count);
  if (auto t = r.take("experiment.target_class")) {
    if (*t == "auto") {
      c.target_rule = TargetRule::most_correct;
    } else {
      c.target_rule = TargetRule::fixed;
      c.target_class = detail::IniReader::parse<std::size_t>("experiment.target_class", *t);
    }
  }
  r.num("experiment.opposite_pairs", c.opposite_pairs);
  r.num("experiment.threads", c.threads);
  r.opt("experiment.seed", c.experiment_seed);

  r.num("neb.pivots", c.neb.pivots);
  r.num("neb.spring_k", c.neb.spring_k);
  r.num("neb.step_size", c.neb.step_size);
  r.num("neb.max_iters", c.neb.max_iters);
  r.num("neb.force_tol", c.neb.force_tol);
  r.num("neb.samples_per_segment", c.neb.samples_per_segment);
  r.flag("neb.improved_tangent", c.neb.improved_tangent);

  r.sizes("decoder.layers", c.decoder.layers);
  r.sizes("decoder.hidden", c.decoder.hidden);
  if (auto lr = r.take("decoder.learning_rate")) {
    c.decoder.first.learning_rate = c.decoder.last.learning_rate =
        detail::IniReader::parse<double>("decoder.learning_rate", *lr);
  }
  r.num("decoder.batch_size_first", c.decoder.first.batch_size);
  r.num("decoder.batch_size_last", c.decoder.last.batch_size);
  r.num("decoder.epochs_first", c.decoder.first.epochs);
  r.num("decoder.epochs_last", c.decoder.last.epochs);
  r.opt("decoder.seed", c.decoder.seed);

  r.point("pair.x1", c.pair_x1);
  r.point("pair.x2", c.pair_x2);
  r.opt("pair.target", c.pair_target);

  r.finish();
  c.validate();
  return c;
}

inline ExperimentConfig parse_config(const std::string& text) {
  return config_from_ini(parse_ini(text));
}

inline ExperimentConfig load_config(const std::string& path) {
  return parse_config(detail::read_file(path));
}

/// Fully resolved configuration in the file syntax, without `out` and
/// `experiment.threads`. The provenance config hash is taken over this text.
inline std::string canonical_config(const ExperimentConfig& c) {
  using detail::fmt_exact;
  auto list = [](const std::vector<std::size_t>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
  };
  auto point = [](const std::optional<Tensor>& p) {
    std::string s;
    if (!p) return s;
    for (std::size_t i = 0; i < p->size(); ++i) s += (i ? "," : "") + fmt_exact((*p)[i]);
    return s;
  };
  std::ostringstream o;
  o << "seed = " << c.seed << "\n"
    << "[dataset]\n"
    << "kind = " << dataset_kind_name(c.dataset_kind) << "\n"
    << "n = " << c.dataset_n << "\n"
    << "seed = " << c.resolved_dataset_seed() << "\n"
    << "classes = " << c.dataset_params.classes << "\n"
    << "separation = " << fmt_exact(c.dataset_params.separation) << "\n"
    << "noise = " << fmt_exact(c.dataset_params.noise) << "\n"
    << "inner_radius = " << fmt_exact(c.dataset_params.inner_radius) << "\n"
    << "gap_radius = " << fmt_exact(c.dataset_params.gap_radius) << "\n"
    << "outer_radius = " << fmt_exact(c.dataset_params.outer_radius) << "\n"
    << "[classifier]\n"
    << "hidden = " << list(c.hidden) << "\n"
    << "checkpoint = " << c.checkpoint << "\n"
    << "seed = " << c.resolved_classifier_seed() << "\n"
    << "[train]\n"
    << "learning_rate = " << fmt_exact(c.train.learning_rate) << "\n"
    << "batch_size = " << c.train.batch_size << "\n"
    << "epochs = " << c.train.epochs << "\n"
    << "beta1 = " << fmt_exact(c.train.adam_beta1) << "\n"
    << "beta2 = " << fmt_exact(c.train.adam_beta2) << "\n"
    << "eps = " << fmt_exact(c.train.adam_eps) << "\n"
    << "seed = " << c.resolved_train_seed() << "\n"
    << "[experiment]\n"
    << "layers = " << (c.layers.empty() ? std::string("default") : list(c.layers)) << "\n"
    << "pairs = " << c.pair_count << "\n"
    << "target_class = "
    << (c.target_rule == TargetRule::fixed ? std::to_string(c.target_class) : "auto") << "\n"
    << "opposite_pairs = " << c.opposite_pairs << "\n"
    << "seed = " << c.resolved_experiment_seed() << "\n"
    << "[neb]\n"
    << "pivots = " << c.neb.pivots << "\n"
    << "spring_k = " << fmt_exact(c.neb.spring_k) << "\n"
    << "step_size = " << fmt_exact(c.neb.step_size) << "\n"
    << "max_iters = " << c.neb.max_iters << "\n"
    << "force_tol = " << fmt_exact(c.neb.force_tol) << "\n"
    << "samples_per_segment = " << c.neb.samples_per_segment << "\n"
    << "improved_tangent = " << (c.neb.improved_tangent ? "true" : "false") << "\n"
    << "[decoder]\n"
    << "layers = " << list(c.decoder.layers) << "\n"
    << "hidden = " << list(c.decoder.hidden) << "\n"
    << "learning_rate = " << fmt_exact(c.decoder.first.learning_rate) << "\n"
    << "batch_size_first = " << c.decoder.first.batch_size << "\n"
    << "batch_size_last = " << c.decoder.last.batch_size << "\n"
    << "epochs_first = " << c.decoder.first.epochs << "\n"
    << "epochs_last = " << c.decoder.last.epochs << "\n"
    << "seed = " << c.resolved_decoder_seed() << "\n"
    << "[pair]\n"
    << "x1 = " << point(c.pair_x1) << "\n"
    << "x2 = " << point(c.pair_x2) << "\n"
    << "target = " << (c.pair_target ? std::to_string(*c.pair_target) : "") << "\n";
  return o.str();
}

}  // namespace cpath
