// Acceptance suite: one PASS/FAIL line per criterion. Exit status is the
// number of failing criteria.

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numbers>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cpath/cpath.hpp"

#ifndef CPATH_SOURCE_DIR
#define CPATH_SOURCE_DIR "."
#endif

using namespace cpath;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok && pass) detail = what;
    pass = pass && ok;
  }
};

Tensor gaussian(std::mt19937_64& rng, std::size_t n, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t = Tensor::zeros(n);
  for (double& v : t.data()) v = g(rng);
  return t;
}

std::string num(double v) { return detail::fmt_double(v); }

// ---------------------------------------------------------------------------

Outcome gradient_oracle() {
  Outcome o;
  const std::vector<std::vector<std::size_t>> shapes{{2, 3}, {2, 8, 3}, {2, 16, 3}, {2, 32, 32, 3}};
  double worst_in = 0.0, worst_par = 0.0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    for (const auto& dims : shapes) {
      std::vector<LayerParams> net = init_layers(dims, seed, Activation::identity);
      std::mt19937_64 rng(seed * 7919 + dims.size());
      for (LayerParams& l : net) l.bias = gaussian(rng, l.out_dim(), 0.3);

      const Tensor z = gaussian(rng, 2);
      const ClassIndex target = seed % 3;
      const GradResult gi = grad_wrt_input(net, z, target);
      const Tensor fdi = fd_gradient(
          [&](const Tensor& p) { return cross_entropy(forward(net, p), target); }, z, 1e-5);
      worst_in = std::max(worst_in, relative_l2_error(gi.grad_input, fdi));

      std::vector<LabeledPoint> batch;
      for (int i = 0; i < 4; ++i) batch.push_back({gaussian(rng, 2), static_cast<ClassIndex>(i % 3)});
      const GradResult gp = grad_wrt_params(net, batch);
      const Tensor fdp = fd_gradient(
          [&](const Tensor& theta) {
            const auto layers = unflatten_params(net, theta);
            double s = 0.0;
            for (const LabeledPoint& p : batch) s += cross_entropy(forward(layers, p.x), p.label);
            return s / static_cast<double>(batch.size());
          },
          flatten_params(net), 1e-5);
      worst_par = std::max(worst_par, relative_l2_error(flatten_grads(*gp.grad_params), fdp));
    }
  }
  o.require(worst_in < 1e-4, "input gradient relative error " + num(worst_in));
  o.require(worst_par < 1e-4, "parameter gradient relative error " + num(worst_par));
  o.detail += (o.detail.empty() ? "" : "; ") + std::string("worst relative error input ") +
              num(worst_in) + ", params " + num(worst_par);
  return o;
}

PathState bent_valley_path(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> amp(0.05, 0.3);
  std::normal_distribution<double> jitter(0.0, 0.02);
  const double a = (seed % 2 ? 1.0 : -1.0) * amp(rng);
  PathState p = straight_line_path(Tensor::vector({1.5, 0}), Tensor::vector({-1.5, 0}), 15);
  for (std::size_t i = 1; i <= 15; ++i) {
    const double t = static_cast<double>(i) / 16.0;
    p.points[i][0] += jitter(rng);
    p.points[i][1] += a * std::sin(std::numbers::pi * t) + jitter(rng);
  }
  return p;
}

bool endpoints_kept(const PathState& before, const PathState& after) {
  return bitwise_equal(before.points.front(), after.points.front()) &&
         bitwise_equal(before.points.back(), after.points.back());
}

std::size_t g_relaxations = 0;
std::size_t g_endpoint_violations = 0;

Outcome analytic_mep() {
  Outcome o;
  const RadialValleyField field(Tensor::vector({0, 0}), 1.5);
  NebConfig cfg;
  cfg.pivots = 15;
  std::size_t good = 0;
  std::ostringstream runs;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const PathState start = bent_valley_path(seed);
    const RelaxResult r = neb_relax(start, field, cfg);
    ++g_relaxations;
    if (!endpoints_kept(start, r.path)) ++g_endpoint_violations;
    double radial = 0.0, energy = 0.0;
    for (std::size_t i = 1; i <= 15; ++i) {
      radial = std::max(radial, std::abs(norm(r.path.points[i]) - 1.5));
      energy = std::max(energy, field.energy(r.path.points[i]));
    }
    const bool ok = r.iterations <= 2000 && radial < 0.05 && energy < 0.01;
    good += ok;
    runs << (seed > 1 ? " " : "") << r.iterations;
  }
  o.require(good >= 9, std::to_string(good) + "/10 seeds converged to the arc");
  if (o.pass) o.detail = std::to_string(good) + "/10 seeds on the arc; iterations " + runs.str();
  return o;
}

struct RingsRun {
  ExperimentConfig cfg;
  PreparedModel prepared;
  ExperimentReport report;
  double seconds = 0.0;
};

Outcome neb_mechanics(const RingsRun* t) {
  Outcome o;
  std::mt19937_64 rng(2024);
  std::uniform_real_distribution<double> k(0.0, 3.0);
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t dim = 2 + trial % 31;
    PathState p;
    for (int j = 0; j < 3; ++j) p.points.push_back(gaussian(rng, dim));
    const std::vector<double> e{gaussian(rng, 1)[0], gaussian(rng, 1)[0], gaussian(rng, 1)[0]};
    const Tensor tau = neb_tangent(p, 1, e, trial % 2 == 1);
    const Tensor grad = gaussian(rng, dim, 2.0);
    const double spring_k = k(rng);
    const Tensor f = neb_force(p, 1, grad, tau, spring_k);
    const double spring =
        spring_k * (distance(p.points[1], p.points[2]) - distance(p.points[0], p.points[1]));
    Tensor perp_f = f;
    perp_f.axpy(-dot(f, tau), tau);
    Tensor perp_g = grad;
    perp_g.axpy(-dot(grad, tau), tau);
    worst = std::max({worst, std::abs(dot(f, tau) - spring), norm(perp_f + perp_g)});
  }
  o.require(worst <= 1e-10, "decomposition residual " + num(worst));

  const PathState line = straight_line_path(Tensor::vector({-1, 2, 0.5}), Tensor::vector({3, 0, -1}), 9);
  const RelaxResult fixed = neb_relax(line, ConstantField(1.0), NebConfig{});
  ++g_relaxations;
  bool unchanged = fixed.iterations == 0;
  for (std::size_t i = 0; i < line.points.size(); ++i) {
    unchanged = unchanged && bitwise_equal(line.points[i], fixed.path.points[i]);
  }
  o.require(unchanged, "constant-field straight line moved");

  if (t) {
    for (const PairRecord& p : t->report.pairs) {
      for (const PairVerdict& v : p.verdicts) {
        if (v.iterations_used == 0) continue;
        ++g_relaxations;
        const MlpModel& m = t->prepared.model;
        if (!bitwise_equal(v.final_path.points.front(), latent(m, p.pair.x1, v.layer_index)) ||
            !bitwise_equal(v.final_path.points.back(), latent(m, p.pair.x2, v.layer_index))) {
          ++g_endpoint_violations;
        }
      }
    }
  }
  o.require(g_endpoint_violations == 0,
            std::to_string(g_endpoint_violations) + " relaxations moved an endpoint");
  if (o.pass) {
    o.detail = "decomposition residual " + num(worst) + "; fixed point held; endpoints intact over " +
               std::to_string(g_relaxations) + " relaxations";
  }
  return o;
}


RingsRun run_rings() {
  RingsRun t;
  t.cfg = load_config(CPATH_SOURCE_DIR "/configs/rings.ini");
  const auto start = std::chrono::steady_clock::now();
  t.prepared = prepare_model(t.cfg);
  t.report = run_experiment(t.cfg, t.prepared);
  t.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return t;
}

Outcome rings_counts(const RingsRun& t) {
  Outcome o;
  const ExperimentReport& r = t.report;
  o.require(t.cfg.dataset_kind == DatasetKind::rings && t.prepared.model.layers.size() == 3 &&
                t.prepared.model.dim_at(1) == 32 && t.prepared.model.dim_at(2) == 32,
            "config is not the rings [2,32,32,2] setup");
  o.require(t.prepared.train_accuracy >= 0.98, "train accuracy " + num(t.prepared.train_accuracy));
  o.require(r.pair_count == 25 && r.layers == std::vector<std::size_t>{0, 1, 2},
            "expected 25 pairs over layers 0,1,2");
  const LayerCounts* first = nullptr;
  const LayerCounts* last = nullptr;
  for (const LayerCounts& c : r.counts) {
    o.require(c.total() == 25, "layer " + std::to_string(c.layer) + " sums to " + std::to_string(c.total()));
    o.require(c.none == 0, "layer " + std::to_string(c.layer) + " has " + std::to_string(c.none) +
                               " pairs without a path");
    if (c.layer == 0) first = &c;
    if (c.layer == t.prepared.model.hidden_layers()) last = &c;
  }
  o.require(recount(r) == r.counts, "counts disagree with stored verdicts");
  o.require(first && first->nonlinear >= 1, "no nonlinear pair in input space");
  o.require(first && last && last->linear >= first->linear, "last-layer linear count below input-space count");
  if (o.pass) {
    std::ostringstream s;
    s << "accuracy " << num(t.prepared.train_accuracy) << "; (linear,nonlinear,none)";
    for (const LayerCounts& c : r.counts) {
      s << " layer " << c.layer << "=(" << c.linear << "," << c.nonlinear << "," << c.none << ")";
    }
    s << "; " << num(t.seconds) << " s";
    o.detail = s.str();
  }
  return o;
}

Outcome verdict_soundness(const RingsRun& t) {
  Outcome o;
  std::size_t checked = 0, nonlinear = 0;
  for (const PairRecord& p : t.report.pairs) {
    for (const PairVerdict& v : p.verdicts) {
      ++checked;
      const bool linear_ok = every_sample_is(v.linear_profile, v.target);
      const bool final_ok = every_sample_is(v.final_profile, v.target);
      switch (v.verdict) {
        case Verdict::linearly_connectable:
          o.require(linear_ok, "linear verdict with a failing straight line");
          break;
        case Verdict::nonlinearly_connectable:
          ++nonlinear;
          o.require(!linear_ok && final_ok, "nonlinear verdict with inconsistent profiles");
          o.require(v.max_energy_final < v.max_energy_initial, "nonlinear verdict without energy decrease");
          break;
        case Verdict::not_connected:
          o.require(!linear_ok && !final_ok, "none verdict with a passing profile");
          break;
      }
      o.require(verdict_is_sound(v), "verdict_is_sound rejected a verdict");
    }
  }
  if (o.pass) {
    o.detail = std::to_string(checked) + " verdicts checked, " + std::to_string(nonlinear) +
               " nonlinear with decreased max energy";
  }
  return o;
}

Outcome decoder_quality(const RingsRun& t) {
  Outcome o;
  const MlpModel& m = t.prepared.model;
  const Dataset& data = t.prepared.data;
  DecoderTrainConfig first = t.cfg.decoder.first;
  first.seed = 3;
  const DecoderTrainResult id = train_decoder(m, 0, data, {2, {}, 2, 3}, first);
  const double id_mse = reconstruction_mse(id.decoder, m, data);
  o.require(id_mse < 1e-4, "layer-0 identity MSE " + num(id_mse));

  const std::size_t last = m.hidden_layers();
  DecoderTrainConfig lc = t.cfg.decoder.last;
  lc.seed = t.cfg.resolved_decoder_seed();
  o.require(lc.learning_rate == 0.001 && lc.batch_size == 128, "last-layer decoder is not at lr 0.001, batch 128");
  const DecoderTrainResult dl = train_decoder(
      m, last, data, {m.dim_at(last), t.cfg.decoder.hidden, m.input_dim(), lc.seed}, lc);
  const Dataset held_out = make_dataset(DatasetKind::rings, 500, t.cfg.dataset_params, 1 + t.cfg.seed);
  const double held_mse = reconstruction_mse(dl.decoder, m, held_out);
  o.require(held_mse < 0.05, "last-layer held-out MSE " + num(held_mse));
  if (o.pass) {
    o.detail = "identity MSE " + num(id_mse) + " (" + std::to_string(first.epochs) +
               " epochs); last-layer held-out MSE " + num(held_mse) + " (" +
               std::to_string(lc.epochs) + " epochs)";
  }
  return o;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

Outcome reproducibility(const RingsRun& t) {
  Outcome o;
  const fs::path root = fs::temp_directory_path() / "cpath_acceptance";
  fs::remove_all(root);
  write_report(t.report, (root / "a").string());
  const RingsRun again = run_rings();
  write_report(again.report, (root / "b").string());
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "a")) {
    if (!e.is_regular_file()) continue;
    ++files;
    const fs::path rel = fs::relative(e.path(), root / "a");
    o.require(slurp(e.path()) == slurp(root / "b" / rel), rel.string() + " differs between runs");
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(root / "b")) files_b += e.is_regular_file();
  o.require(files == files_b, "runs wrote different file sets");

  const std::string bytes = serialize_model(t.prepared.model);
  save_model(t.prepared.model, (root / "model.cpth").string());
  const MlpModel back = load_model((root / "model.cpth").string());
  o.require(bitwise_equal(back, t.prepared.model) && serialize_model(back) == bytes,
            "checkpoint round trip is not bitwise");
  fs::remove_all(root);
  if (o.pass) {
    o.detail = std::to_string(files) + " report files byte-identical; checkpoint " +
               std::to_string(bytes.size()) + " bytes round-trips bitwise";
  }
  return o;
}

Outcome composition(const RingsRun& t) {
  Outcome o;
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(-3.0, 3.0);
  const MlpModel& m = t.prepared.model;
  const MlpModel deep = init_model({{2, 16, 16, 16, 16, 3}, 5});
  std::size_t mismatches = 0;
  for (int i = 0; i < 1000; ++i) {
    const MlpModel& model = i % 2 ? deep : m;
    const Tensor x = Tensor::vector({u(rng), u(rng)});
    const std::size_t l = static_cast<std::size_t>(i / 2) % (model.hidden_layers() + 1);
    if (!bitwise_equal(partial_forward(model, latent(model, x, l), l), logits(model, x))) ++mismatches;
  }
  o.require(mismatches == 0, std::to_string(mismatches) + " of 1000 probes differ");
  if (o.pass) o.detail = "1000 probes bitwise equal";
  return o;
}

int report(int id, const char* name, const std::function<Outcome()>& fn) {
  Outcome o;
  try {
    o = fn();
  } catch (const std::exception& e) {
    o.pass = false;
    o.detail = std::string("exception: ") + e.what();
  }
  std::cout << "criterion " << id << " [" << name << "]: " << (o.pass ? "PASS" : "FAIL") << " - "
            << o.detail << std::endl;
  return o.pass ? 0 : 1;
}

}  // namespace

int main() {
  int failures = 0;
  failures += report(1, "gradient oracle", gradient_oracle);
  failures += report(2, "analytic minimum energy path", analytic_mep);

  RingsRun t;
  std::string table_error;
  try {
    t = run_rings();
  } catch (const std::exception& e) {
    table_error = e.what();
  }
  auto needs_table = [&](const std::function<Outcome()>& fn) {
    return [&, fn] {
      if (!table_error.empty()) return Outcome{false, "rings experiment failed: " + table_error};
      return fn();
    };
  };

  failures += report(3, "NEB mechanics",
                     [&] { return neb_mechanics(table_error.empty() ? &t : nullptr); });
  failures += report(4, "rings connectivity counts", needs_table([&] { return rings_counts(t); }));
  failures += report(5, "verdict soundness", needs_table([&] { return verdict_soundness(t); }));
  failures += report(6, "decoder", needs_table([&] { return decoder_quality(t); }));
  failures += report(7, "reproducibility", needs_table([&] { return reproducibility(t); }));
  failures += report(8, "composition exactness", needs_table([&] { return composition(t); }));
  std::cout << (failures ? "FAILED " : "ALL PASSED ") << 8 - failures << "/8" << std::endl;
  return failures;
}
