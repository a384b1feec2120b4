#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "cpath/checkpoint.hpp"
#include "cpath/classifier.hpp"
#include "cpath/config.hpp"
#include "cpath/dataset.hpp"
#include "cpath/pathfind.hpp"

namespace cpath {

struct PreparedModel {
  MlpModel model;
  Dataset data;
  std::vector<double> loss_trace;  // empty when loaded from a checkpoint
  double train_accuracy = 0.0;
  std::string source;  // "trained" or the checkpoint path
};

inline Dataset make_config_dataset(const ExperimentConfig& cfg) {
  return make_dataset(cfg.dataset_kind, cfg.dataset_n, cfg.dataset_params,
                      cfg.resolved_dataset_seed());
}

/// Loads the checkpoint named by the config, or trains a fresh classifier.
inline PreparedModel prepare_model(const ExperimentConfig& cfg) {
  PreparedModel p;
  p.data = make_config_dataset(cfg);
  if (!cfg.checkpoint.empty()) {
    if (!std::filesystem::exists(cfg.checkpoint)) {
      throw IoError("checkpoint '" + cfg.checkpoint + "' not found");
    }
    p.model = load_model(cfg.checkpoint);
    p.source = cfg.checkpoint;
    if (p.model.input_dim() != p.data.points.front().size()) {
      throw DimensionError("checkpoint input dim does not match dataset");
    }
  } else {
    MlpSpec spec{cfg.layer_dims(p.data.points.front().size(), p.data.num_classes()),
                 cfg.resolved_classifier_seed()};
    TrainConfig tc = cfg.train;
    tc.seed = cfg.resolved_train_seed();
    TrainResult tr = train_adam(init_model(spec), p.data, tc);
    p.model = std::move(tr.model);
    p.loss_trace = std::move(tr.loss_trace);
    p.source = "trained";
  }
  p.train_accuracy = accuracy(p.model, p.data);
  return p;
}

struct SampledPair {
  Tensor x1;
  Tensor x2;
  long index1 = -1;  // dataset index, -1 for a reflected point
  long index2 = -1;
};

struct LayerCounts {
  std::size_t layer = 0;
  std::size_t linear = 0;
  std::size_t nonlinear = 0;
  std::size_t none = 0;

  std::size_t total() const { return linear + nonlinear + none; }
  friend bool operator==(const LayerCounts&, const LayerCounts&) = default;
};

struct PairRecord {
  SampledPair pair;
  std::vector<PairVerdict> verdicts;  // one per tested layer, in report order
};

struct Provenance {
  std::string config_hash;
  std::string model_hash;
  std::string model_source;
  std::uint64_t dataset_seed = 0;
  std::uint64_t classifier_seed = 0;
  std::uint64_t train_seed = 0;
  std::uint64_t experiment_seed = 0;
  double train_accuracy = 0.0;
  std::size_t rejected_pairs = 0;
};

struct ExperimentReport {
  std::size_t pair_count = 0;
  ClassIndex target = 0;
  std::vector<std::size_t> layers;
  std::vector<LayerCounts> counts;
  std::vector<PairRecord> pairs;
  Provenance provenance;
};

/// Counts recomputed from the stored per-pair verdicts.
inline std::vector<LayerCounts> recount(const ExperimentReport& r) {
  std::vector<LayerCounts> out;
  for (std::size_t li = 0; li < r.layers.size(); ++li) {
    LayerCounts c;
    c.layer = r.layers[li];
    for (const PairRecord& p : r.pairs) {
      switch (p.verdicts.at(li).verdict) {
        case Verdict::linearly_connectable: ++c.linear; break;
        case Verdict::nonlinearly_connectable: ++c.nonlinear; break;
        case Verdict::not_connected: ++c.none; break;
      }
    }
    out.push_back(c);
  }
  return out;
}

inline ClassIndex resolve_target(const ExperimentConfig& cfg, const MlpModel& model,
                                 const Dataset& data) {
  if (cfg.target_rule == TargetRule::fixed) {
    if (cfg.target_class >= model.class_count()) {
      throw ConfigError("experiment.target_class " + std::to_string(cfg.target_class) +
                        " out of range");
    }
    return cfg.target_class;
  }
  std::vector<std::size_t> correct(model.class_count(), 0);
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (predict(model, data.points[i]).label == data.labels[i]) ++correct[data.labels[i]];
  }
  return static_cast<ClassIndex>(std::max_element(correct.begin(), correct.end()) -
                                 correct.begin());
}

/// Draws `cfg.pair_count` pairs of target-class points that the model
/// predicts as the target. The first `cfg.opposite_pairs` pairs are (x, -x).
/// Misclassified draws are rejected and redrawn; more than 100 rejections
/// per requested pair is fatal.
inline std::vector<SampledPair> sample_pairs(const ExperimentConfig& cfg, const MlpModel& model,
                                             const Dataset& data, ClassIndex target,
                                             std::size_t& rejections, std::ostream* log) {
  std::vector<std::size_t> pool;
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (data.labels[i] == target) pool.push_back(i);
  }
  if (pool.size() < 2) {
    throw ConfigError("fewer than two points of target class " + std::to_string(target));
  }
  std::mt19937_64 rng(cfg.resolved_experiment_seed());
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  const std::size_t limit = 100 * cfg.pair_count;
  std::vector<SampledPair> pairs;
  rejections = 0;
  while (pairs.size() < cfg.pair_count) {
    SampledPair p;
    const std::size_t a = pool[pick(rng)];
    p.x1 = data.points[a];
    p.index1 = static_cast<long>(a);
    if (pairs.size() < cfg.opposite_pairs) {
      p.x2 = p.x1 * -1.0;
    } else {
      std::size_t b = a;
      while (b == a) b = pool[pick(rng)];
      p.x2 = data.points[b];
      p.index2 = static_cast<long>(b);
    }
    const bool ok1 = predict(model, p.x1).label == target;
    const bool ok2 = predict(model, p.x2).label == target;
    if (ok1 && ok2) {
      pairs.push_back(std::move(p));
      continue;
    }
    ++rejections;
    if (log) {
      *log << "rejected pair draw: endpoint " << (ok1 ? 2 : 1)
           << " not predicted as class " << target << "\n";
    }
    if (rejections > limit) {
      throw SamplingError("pair sampling exhausted: " + std::to_string(rejections) +
                        " rejections for " + std::to_string(cfg.pair_count) + " pairs");
    }
  }
  return pairs;
}

namespace detail {

// Runs job(i) for i in [0, n) on up to `threads` workers; rethrows the first
// failure after all workers stop.
template <class Job>
void parallel_for(std::size_t n, std::size_t threads, Job&& job) {
  if (threads <= 1 || n <= 1) {
    for (std::size_t i = 0; i < n; ++i) job(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> workers;
  for (std::size_t w = 0; w < std::min(threads, n); ++w) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          job(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          next = n;
        }
      }
    });
  }
  for (std::thread& t : workers) t.join();
  if (failure) std::rethrow_exception(failure);
}

}  // namespace detail

/// Runs connect_pair for every sampled pair at every configured layer. The
/// same pairs are used for all layers.
inline ExperimentReport run_experiment(const ExperimentConfig& cfg, const PreparedModel& prepared,
                                       std::ostream* log = nullptr) {
  cfg.validate();
  const MlpModel& model = prepared.model;
  ExperimentReport rep;
  rep.pair_count = cfg.pair_count;
  rep.layers = cfg.resolved_layers(model.hidden_layers());
  rep.target = resolve_target(cfg, model, prepared.data);

  Provenance& prov = rep.provenance;
  prov.config_hash = hex64(fnv1a64(canonical_config(cfg)));
  prov.model_hash = hex64(fnv1a64(serialize_model(model)));
  prov.model_source = prepared.source;
  prov.dataset_seed = cfg.resolved_dataset_seed();
  prov.classifier_seed = cfg.resolved_classifier_seed();
  prov.train_seed = cfg.resolved_train_seed();
  prov.experiment_seed = cfg.resolved_experiment_seed();
  prov.train_accuracy = prepared.train_accuracy;

  std::vector<SampledPair> pairs =
      sample_pairs(cfg, model, prepared.data, rep.target, prov.rejected_pairs, log);

  const std::size_t nl = rep.layers.size();
  rep.pairs.resize(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    rep.pairs[p].pair = pairs[p];
    rep.pairs[p].verdicts.resize(nl);
  }
  detail::parallel_for(pairs.size() * nl, cfg.threads, [&](std::size_t job) {
    const std::size_t p = job / nl;
    const std::size_t li = job % nl;
    rep.pairs[p].verdicts[li] =
        connect_pair(model, rep.layers[li], pairs[p].x1, pairs[p].x2, cfg.neb, rep.target);
  });
  rep.counts = recount(rep);
  return rep;
}

// ---------------------------------------------------------------------------
// File output

namespace detail {

inline std::ofstream open_out(const std::string& path) {
  const std::filesystem::path p(path);
  if (p.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(p.parent_path(), ec);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open '" + path + "' for writing");
  return out;
}

inline void finish_out(std::ofstream& out, const std::string& path) {
  out.flush();
  if (!out) throw IoError("write failed for '" + path + "'");
}

inline std::string join_point(const Tensor& x, char sep) {
  std::string s;
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (i) s += sep;
    s += fmt_double(x[i]);
  }
  return s;
}

}  // namespace detail

inline void check_counts(const ExperimentReport& r) {
  if (r.counts.size() != r.layers.size()) {
    throw ContractError("report has " + std::to_string(r.counts.size()) + " count rows for " +
                        std::to_string(r.layers.size()) + " layers");
  }
  for (const LayerCounts& c : r.counts) {
    if (c.total() != r.pair_count) {
      throw ContractError("layer " + std::to_string(c.layer) + " counts sum to " +
                          std::to_string(c.total()) + ", expected " +
                          std::to_string(r.pair_count));
    }
  }
}

/// Rows are verdict kinds, columns are tested layers.
inline std::string render_connectivity_text(const ExperimentReport& r) {
  check_counts(r);
  auto column_name = [&](std::size_t layer) {
    if (layer == 0) return std::string("Original");
    return "Layer " + std::to_string(layer);
  };
  const std::vector<std::string> rows{"Linear path exists", "Nonlinear path exists",
                                      "No path exists"};
  std::size_t label_w = 0;
  for (const std::string& s : rows) label_w = std::max(label_w, s.size());
  std::vector<std::size_t> col_w;
  for (std::size_t l : r.layers) col_w.push_back(std::max<std::size_t>(column_name(l).size(), 3));

  std::ostringstream o;
  auto pad = [](const std::string& s, std::size_t w, bool right) {
    const std::string fill(w > s.size() ? w - s.size() : 0, ' ');
    return right ? fill + s : s + fill;
  };
  o << pad("", label_w, false);
  for (std::size_t i = 0; i < r.layers.size(); ++i) o << "  " << pad(column_name(r.layers[i]), col_w[i], true);
  o << "\n";
  for (std::size_t row = 0; row < rows.size(); ++row) {
    o << pad(rows[row], label_w, false);
    for (std::size_t i = 0; i < r.counts.size(); ++i) {
      const LayerCounts& c = r.counts[i];
      const std::size_t v = row == 0 ? c.linear : row == 1 ? c.nonlinear : c.none;
      o << "  " << pad(std::to_string(v), col_w[i], true);
    }
    o << "\n";
  }
  o << "(" << r.pair_count << " pairs, target class " << r.target << ")\n";
  return o.str();
}

/// Writes `path` (CSV: layer,linear,nonlinear,none) and `path` with its
/// extension replaced by ".txt" (aligned table).
inline void emit_connectivity_table(const ExperimentReport& r, const std::string& path) {
  check_counts(r);
  {
    std::ofstream out = detail::open_out(path);
    out << "layer,linear,nonlinear,none\n";
    for (const LayerCounts& c : r.counts) {
      out << c.layer << ',' << c.linear << ',' << c.nonlinear << ',' << c.none << '\n';
    }
    detail::finish_out(out, path);
  }
  const std::string txt = std::filesystem::path(path).replace_extension(".txt").string();
  std::ofstream out = detail::open_out(txt);
  out << render_connectivity_text(r);
  detail::finish_out(out, txt);
}

/// Columns: block,t,class_0_prob..class_{K-1}_prob,argmax,is_target. The
/// linear block comes first, then the final block.
inline void emit_path_profile_csv(const PairVerdict& v, const std::string& path) {
  if (v.linear_profile.samples.empty() || v.final_profile.samples.empty()) {
    throw ContractError("emit_path_profile_csv: verdict carries no profiles");
  }
  const std::size_t k = v.linear_profile.samples.front().probs.size();
  std::ofstream out = detail::open_out(path);
  out << "block,t";
  for (std::size_t c = 0; c < k; ++c) out << ",class_" << c << "_prob";
  out << ",argmax,is_target\n";
  auto block = [&](const char* name, const ClassProfile& prof) {
    for (const ProfileSample& s : prof.samples) {
      out << name << ',' << detail::fmt_double(s.t);
      for (std::size_t c = 0; c < k; ++c) out << ',' << detail::fmt_double(s.probs[c]);
      out << ',' << s.label << ',' << (s.label == v.target ? 1 : 0) << '\n';
    }
  };
  block("linear", v.linear_profile);
  block("final", v.final_profile);
  detail::finish_out(out, path);
}

/// One row per path point, comma-separated coordinates, endpoints first/last.
inline void write_path_csv(const PathState& path, const std::string& file) {
  std::ofstream out = detail::open_out(file);
  for (const Tensor& p : path.points) out << detail::join_point(p, ',') << '\n';
  detail::finish_out(out, file);
}

inline PathState read_path_csv(const std::string& file, std::size_t layer_index = 0) {
  std::ifstream in(file);
  if (!in) throw IoError("cannot open '" + file + "' for reading");
  PathState path;
  path.layer_index = layer_index;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    line = detail::trim(line);
    if (line.empty()) continue;
    try {
      path.points.push_back(detail::IniReader::parse_point("line " + std::to_string(lineno), line));
    } catch (const ConfigError& e) {
      throw FormatError(std::string("path file: ") + e.what());
    }
  }
  try {
    path.validate();
  } catch (const Error& e) {
    throw FormatError(std::string("path file '") + file + "': " + e.what());
  }
  return path;
}

inline std::string pair_file_stem(std::size_t pair, std::size_t layer) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "pair_%03zu_layer_%zu", pair, layer);
  return buf;
}

inline void write_pairs_csv(const ExperimentReport& r, const std::string& path) {
  std::ofstream out = detail::open_out(path);
  out << "pair,layer,target,verdict,iterations,max_energy_initial,max_energy_final,"
         "index1,index2,x1,x2\n";
  for (std::size_t p = 0; p < r.pairs.size(); ++p) {
    const PairRecord& rec = r.pairs[p];
    for (std::size_t li = 0; li < r.layers.size(); ++li) {
      const PairVerdict& v = rec.verdicts[li];
      out << p << ',' << r.layers[li] << ',' << v.target << ',' << verdict_name(v.verdict) << ','
          << v.iterations_used << ',' << detail::fmt_double(v.max_energy_initial) << ','
          << detail::fmt_double(v.max_energy_final) << ',' << rec.pair.index1 << ','
          << rec.pair.index2 << ',' << detail::join_point(rec.pair.x1, ' ') << ','
          << detail::join_point(rec.pair.x2, ' ') << '\n';
    }
  }
  detail::finish_out(out, path);
}

inline std::string render_provenance(const ExperimentReport& r) {
  const Provenance& p = r.provenance;
  std::ostringstream o;
  o << "config_hash = " << p.config_hash << "\n"
    << "model_hash = " << p.model_hash << "\n"
    << "model_source = " << p.model_source << "\n"
    << "dataset_seed = " << p.dataset_seed << "\n"
    << "classifier_seed = " << p.classifier_seed << "\n"
    << "train_seed = " << p.train_seed << "\n"
    << "experiment_seed = " << p.experiment_seed << "\n"
    << "train_accuracy = " << detail::fmt_double(p.train_accuracy) << "\n"
    << "rejected_pairs = " << p.rejected_pairs << "\n"
    << "pairs = " << r.pair_count << "\n"
    << "target_class = " << r.target << "\n";
  return o.str();
}

/// Writes connectivity.{csv,txt}, pairs.csv, provenance.txt, and per pair
/// and layer profiles/<stem>.csv and paths/<stem>.csv under `dir`.
inline void write_report(const ExperimentReport& r, const std::string& dir) {
  if (recount(r) != r.counts) throw ContractError("report counts disagree with verdicts");
  const std::filesystem::path root(dir);
  emit_connectivity_table(r, (root / "connectivity.csv").string());
  write_pairs_csv(r, (root / "pairs.csv").string());
  {
    const std::string prov = (root / "provenance.txt").string();
    std::ofstream out = detail::open_out(prov);
    out << render_provenance(r);
    detail::finish_out(out, prov);
  }
  for (std::size_t p = 0; p < r.pairs.size(); ++p) {
    for (std::size_t li = 0; li < r.layers.size(); ++li) {
      const std::string stem = pair_file_stem(p, r.layers[li]);
      const PairVerdict& v = r.pairs[p].verdicts[li];
      emit_path_profile_csv(v, (root / "profiles" / (stem + ".csv")).string());
      write_path_csv(v.final_path, (root / "paths" / (stem + ".csv")).string());
    }
  }
}

}  // namespace cpath
