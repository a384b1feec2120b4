#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpath/classifier.hpp"
#include "cpath/diffcore.hpp"
#include "cpath/error.hpp"
#include "cpath/tensor.hpp"

namespace cpath {

/// Differentiable scalar field over a representation space. Implementations
/// must allow concurrent const calls.
class EnergyField {
 public:
  virtual ~EnergyField() = default;

  virtual double energy(const Tensor& z) const = 0;
  virtual Tensor gradient(const Tensor& z) const = 0;

  virtual std::pair<double, Tensor> energy_and_gradient(const Tensor& z) const {
    return {energy(z), gradient(z)};
  }

  virtual bool can_classify() const { return false; }
  virtual Prediction classify(const Tensor&) const {
    throw CapabilityError("energy field has no classify capability");
  }
  /// Class the field pulls toward, when there is one. neb_relax stops as
  /// soon as the whole path is classified to it.
  virtual std::optional<ClassIndex> target_class() const { return std::nullopt; }
};

/// L(z) = cross_entropy(f_{l:L}(z), target) for a trained classifier.
class ClassifierEnergy final : public EnergyField {
 public:
  ClassifierEnergy(const MlpModel& model, std::size_t layer_index, ClassIndex target)
      : model_(&model), layer_(layer_index), target_(target) {
    model.check_layer_index(layer_index);
    if (target >= model.class_count()) {
      throw ContractError("target class " + std::to_string(target) + " out of range");
    }
  }

  double energy(const Tensor& z) const override {
    return cross_entropy(partial_forward(*model_, z, layer_), target_);
  }
  Tensor gradient(const Tensor& z) const override {
    return energy_and_gradient(z).second;
  }
  std::pair<double, Tensor> energy_and_gradient(const Tensor& z) const override {
    if (z.rank() != 1 || z.size() != model_->dim_at(layer_)) {
      throw DimensionError("ClassifierEnergy: point " + Tensor::shape_string(z.shape()) +
                           " vs layer dim " + std::to_string(model_->dim_at(layer_)));
    }
    GradResult g = grad_wrt_input(model_->tail(layer_), z, target_);
    return {g.loss, std::move(g.grad_input)};
  }
  bool can_classify() const override { return true; }
  Prediction classify(const Tensor& z) const override {
    return predict_logits(partial_forward(*model_, z, layer_));
  }
  std::optional<ClassIndex> target_class() const override { return target_; }

  std::size_t layer_index() const { return layer_; }

 private:
  const MlpModel* model_;
  std::size_t layer_;
  ClassIndex target_;
};

/// E(z) = (|z - c| - r)^2, whose minimum-energy paths run along the sphere of
/// radius r. The gradient at the centre is taken as zero.
class RadialValleyField final : public EnergyField {
 public:
  RadialValleyField(Tensor centre, double radius) : centre_(std::move(centre)), radius_(radius) {}

  double energy(const Tensor& z) const override {
    const double d = distance(centre_, z) - radius_;
    return d * d;
  }
  Tensor gradient(const Tensor& z) const override {
    Tensor g = z - centre_;
    const double r = norm(g);
    if (r == 0.0) return Tensor(z.shape());
    g *= 2.0 * (r - radius_) / r;
    return g;
  }

 private:
  Tensor centre_;
  double radius_;
};

class ConstantField final : public EnergyField {
 public:
  explicit ConstantField(double value) : value_(value) {}
  double energy(const Tensor&) const override { return value_; }
  Tensor gradient(const Tensor& z) const override { return Tensor(z.shape()); }

 private:
  double value_;
};

/// Discretised path: points.front() and points.back() are the fixed
/// endpoints, everything in between is a movable pivot.
struct PathState {
  std::vector<Tensor> points;
  std::size_t layer_index = 0;

  std::size_t pivot_count() const { return points.size() - 2; }

  void validate() const {
    if (points.size() < 3) throw ContractError("path needs at least one pivot");
    for (const Tensor& p : points) {
      if (!p.same_shape(points.front())) {
        throw DimensionError("path points have mixed shapes " +
                             Tensor::shape_string(points.front().shape()) + " and " +
                             Tensor::shape_string(p.shape()));
      }
    }
  }
};

struct NebConfig {
  std::size_t pivots = 20;
  double spring_k = 1.0;
  double step_size = 0.05;
  std::size_t max_iters = 2000;
  double force_tol = 1e-3;
  std::size_t samples_per_segment = 10;
  bool improved_tangent = false;

  void validate() const {
    if (pivots < 1) throw ContractError("NebConfig: pivots must be >= 1");
    if (!(spring_k >= 0.0)) throw ContractError("NebConfig: spring_k must be >= 0");
    if (!(step_size > 0.0)) throw ContractError("NebConfig: step_size must be > 0");
    if (samples_per_segment < 1) {
      throw ContractError("NebConfig: samples_per_segment must be >= 1");
    }
    if (!(force_tol >= 0.0)) throw ContractError("NebConfig: force_tol must be >= 0");
  }
};

/// points[i] = a + i/(N+1) (b - a), i = 0..N+1.
inline PathState straight_line_path(const Tensor& a, const Tensor& b, std::size_t pivots,
                                    std::size_t layer_index = 0) {
  if (!a.same_shape(b)) {
    throw DimensionError("straight_line_path: endpoint shapes " +
                         Tensor::shape_string(a.shape()) + " and " +
                         Tensor::shape_string(b.shape()));
  }
  if (pivots < 1) throw ContractError("straight_line_path: need at least one pivot");
  PathState path;
  path.layer_index = layer_index;
  path.points.reserve(pivots + 2);
  path.points.push_back(a);
  const Tensor delta = b - a;
  const double denom = static_cast<double>(pivots + 1);
  for (std::size_t i = 1; i <= pivots; ++i) {
    Tensor p = a;
    p.axpy(static_cast<double>(i) / denom, delta);
    path.points.push_back(std::move(p));
  }
  path.points.push_back(b);
  return path;
}

struct PathSample {
  double t;
  Tensor point;
};

/// All pivots plus `per_segment` equally spaced points strictly inside each
/// segment, ordered by t. Pivot i sits at t = i/(N+1).
inline std::vector<PathSample> densify(const PathState& path, std::size_t per_segment) {
  if (per_segment < 1) throw ContractError("densify: need at least one sample per segment");
  path.validate();
  const std::size_t segments = path.points.size() - 1;
  const double seg = static_cast<double>(segments);
  const double sub = static_cast<double>(per_segment + 1);
  std::vector<PathSample> out;
  out.reserve(path.points.size() + segments * per_segment);
  for (std::size_t s = 0; s < segments; ++s) {
    const Tensor& a = path.points[s];
    const Tensor& b = path.points[s + 1];
    out.push_back({static_cast<double>(s) / seg, a});
    const Tensor delta = b - a;
    for (std::size_t j = 1; j <= per_segment; ++j) {
      const double frac = static_cast<double>(j) / sub;
      Tensor p = a;
      p.axpy(frac, delta);
      out.push_back({(static_cast<double>(s) + frac) / seg, std::move(p)});
    }
  }
  out.push_back({1.0, path.points.back()});
  return out;
}

struct ProfileSample {
  double t;
  Tensor probs;
  ClassIndex label;
  double energy;
};

struct ClassProfile {
  bool all_target = false;
  std::vector<ProfileSample> samples;

  double max_energy() const {
    double m = -std::numeric_limits<double>::infinity();
    for (const ProfileSample& s : samples) m = std::max(m, s.energy);
    return m;
  }
};

/// Classifies every densified sample. A sample passes when its argmax (ties
/// to the lowest index) equals `target`.
inline ClassProfile path_class_profile(const PathState& path, const EnergyField& field,
                                       ClassIndex target, std::size_t per_segment) {
  if (!field.can_classify()) {
    throw CapabilityError("path_class_profile: energy field cannot classify");
  }
  ClassProfile prof;
  prof.all_target = true;
  for (PathSample& s : densify(path, per_segment)) {
    Prediction p = field.classify(s.point);
    const double e = field.energy(s.point);
    prof.all_target = prof.all_target && p.label == target;
    prof.samples.push_back({s.t, std::move(p.probs), p.label, e});
  }
  return prof;
}

namespace detail {

inline Tensor normalized(Tensor v, std::size_t i) {
  const double n = norm(v);
  if (!(n > 0.0)) {
    throw DegeneratePathError("zero-length tangent at pivot " + std::to_string(i));
  }
  v *= 1.0 / n;
  return v;
}

}  // namespace detail

/// Unit tangent at interior pivot i.
///
/// Default: central difference points[i+1] - points[i-1].
/// Improved: upwind difference toward the higher-energy neighbour; at a
/// local extremum both one-sided differences are blended with weights
/// max/min of the neighbouring energy gaps.
inline Tensor neb_tangent(const PathState& path, std::size_t i,
                          std::span<const double> energies, bool improved = false) {
  if (i < 1 || i + 1 >= path.points.size()) {
    throw ContractError("neb_tangent: index " + std::to_string(i) + " is not interior");
  }
  const Tensor& prev = path.points[i - 1];
  const Tensor& cur = path.points[i];
  const Tensor& next = path.points[i + 1];
  if (!improved) return detail::normalized(next - prev, i);

  if (energies.size() != path.points.size()) {
    throw ContractError("neb_tangent: energies length does not match path");
  }
  const double e_prev = energies[i - 1];
  const double e_cur = energies[i];
  const double e_next = energies[i + 1];
  Tensor fwd = next - cur;
  Tensor bwd = cur - prev;
  if (e_next > e_cur && e_cur > e_prev) return detail::normalized(std::move(fwd), i);
  if (e_next < e_cur && e_cur < e_prev) return detail::normalized(std::move(bwd), i);

  const double d_next = std::abs(e_next - e_cur);
  const double d_prev = std::abs(e_prev - e_cur);
  const double d_max = std::max(d_next, d_prev);
  const double d_min = std::min(d_next, d_prev);
  Tensor tau = e_next > e_prev ? fwd * d_max + bwd * d_min : fwd * d_min + bwd * d_max;
  if (!(norm(tau) > 0.0)) tau = next - prev;  // flat neighbourhood
  return detail::normalized(std::move(tau), i);
}

/// Nudged force at pivot i: the true force perpendicular to the tangent plus
/// the spring force along it.
inline Tensor neb_force(const PathState& path, std::size_t i, const Tensor& grad,
                        const Tensor& tau, double spring_k) {
  const double right = distance(path.points[i], path.points[i + 1]);
  const double left = distance(path.points[i - 1], path.points[i]);
  Tensor f = grad * -1.0;
  f.axpy(dot(grad, tau), tau);
  f.axpy(spring_k * (right - left), tau);
  return f;
}

struct NebIteration {
  double max_pivot_energy;
  double max_force_norm;
};

enum class StopReason { converged, class_target, budget };

inline const char* stop_reason_name(StopReason r) {
  switch (r) {
    case StopReason::converged: return "converged";
    case StopReason::class_target: return "class_target";
    case StopReason::budget: return "budget";
  }
  return "?";
}

struct RelaxResult {
  PathState path;
  std::vector<NebIteration> trace;
  std::size_t iterations = 0;
  StopReason reason = StopReason::budget;
};

/// Fixed-step NEB relaxation. Endpoints are never written.
inline RelaxResult neb_relax(PathState path, const EnergyField& field, const NebConfig& cfg) {
  cfg.validate();
  path.validate();
  const std::size_t n = path.points.size();
  const std::optional<ClassIndex> target =
      field.can_classify() ? field.target_class() : std::nullopt;

  RelaxResult res;
  std::vector<double> energies(n);
  std::vector<Tensor> grads(n);
  std::vector<Tensor> forces(n);
  energies.front() = field.energy(path.points.front());
  energies.back() = field.energy(path.points.back());

  for (std::size_t it = 0;; ++it) {
    if (target && path_class_profile(path, field, *target, cfg.samples_per_segment).all_target) {
      res.reason = StopReason::class_target;
      break;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) {
      auto [e, g] = field.energy_and_gradient(path.points[i]);
      if (!std::isfinite(e) || !g.all_finite()) {
        throw NumericError("neb_relax: non-finite energy or gradient at pivot " +
                           std::to_string(i) + " in iteration " + std::to_string(it));
      }
      energies[i] = e;
      grads[i] = std::move(g);
    }
    double max_force = 0.0;
    for (std::size_t i = 1; i + 1 < n; ++i) {
      const Tensor tau = neb_tangent(path, i, energies, cfg.improved_tangent);
      forces[i] = neb_force(path, i, grads[i], tau, cfg.spring_k);
      const double fn = norm(forces[i]);
      if (!std::isfinite(fn)) {
        throw NumericError("neb_relax: non-finite force at pivot " + std::to_string(i) +
                           " in iteration " + std::to_string(it));
      }
      max_force = std::max(max_force, fn);
    }
    res.trace.push_back({*std::max_element(energies.begin(), energies.end()), max_force});
    if (max_force < cfg.force_tol) {
      res.reason = StopReason::converged;
      break;
    }
    if (it == cfg.max_iters) {
      res.reason = StopReason::budget;
      break;
    }
    for (std::size_t i = 1; i + 1 < n; ++i) path.points[i].axpy(cfg.step_size, forces[i]);
    ++res.iterations;
  }
  res.path = std::move(path);
  return res;
}

enum class Verdict { linearly_connectable, nonlinearly_connectable, not_connected };

inline const char* verdict_name(Verdict v) {
  switch (v) {
    case Verdict::linearly_connectable: return "linear";
    case Verdict::nonlinearly_connectable: return "nonlinear";
    case Verdict::not_connected: return "none";
  }
  return "?";
}

/// Outcome for one endpoint pair. `max_energy_*` are maxima of the energy
/// over the densified samples of the straight-line and final paths.
struct PairVerdict {
  Verdict verdict = Verdict::not_connected;
  ClassIndex target = 0;
  std::size_t layer_index = 0;
  ClassProfile linear_profile;
  ClassProfile final_profile;
  PathState final_path;
  std::size_t iterations_used = 0;
  double max_energy_initial = 0.0;
  double max_energy_final = 0.0;
};

inline bool every_sample_is(const ClassProfile& p, ClassIndex target) {
  return std::all_of(p.samples.begin(), p.samples.end(),
                     [&](const ProfileSample& s) { return s.label == target; });
}

/// Re-derives the verdict implications from the stored profiles alone.
inline bool verdict_is_sound(const PairVerdict& v) {
  const bool lin_ok = every_sample_is(v.linear_profile, v.target);
  const bool fin_ok = every_sample_is(v.final_profile, v.target);
  switch (v.verdict) {
    case Verdict::linearly_connectable: return lin_ok;
    case Verdict::nonlinearly_connectable: return !lin_ok && fin_ok;
    case Verdict::not_connected: return !fin_ok;
  }
  return false;
}

/// Tests whether x1 and x2 can be joined inside the target class at layer
/// index l: straight line first, NEB relaxation when that fails. Without an
/// explicit target the shared predicted class is used.
inline PairVerdict connect_pair(const MlpModel& model, std::size_t layer_index, const Tensor& x1,
                                const Tensor& x2, const NebConfig& cfg,
                                std::optional<ClassIndex> target = std::nullopt) {
  cfg.validate();
  model.check_layer_index(layer_index);
  const ClassIndex c1 = predict(model, x1).label;
  const ClassIndex c2 = predict(model, x2).label;
  const ClassIndex tgt = target.value_or(c1);
  if (c1 != tgt) {
    throw RejectedPairError("endpoint 1 predicted as class " + std::to_string(c1) +
                            ", target is " + std::to_string(tgt));
  }
  if (c2 != tgt) {
    throw RejectedPairError("endpoint 2 predicted as class " + std::to_string(c2) +
                            ", target is " + std::to_string(tgt));
  }

  const ClassifierEnergy field(model, layer_index, tgt);
  PathState line = straight_line_path(latent(model, x1, layer_index),
                                      latent(model, x2, layer_index), cfg.pivots, layer_index);

  PairVerdict v;
  v.target = tgt;
  v.layer_index = layer_index;
  v.linear_profile = path_class_profile(line, field, tgt, cfg.samples_per_segment);
  v.max_energy_initial = v.linear_profile.max_energy();
  if (v.linear_profile.all_target) {
    v.verdict = Verdict::linearly_connectable;
    v.final_profile = v.linear_profile;
    v.final_path = std::move(line);
    v.max_energy_final = v.max_energy_initial;
    return v;
  }

  RelaxResult relaxed = neb_relax(std::move(line), field, cfg);
  v.iterations_used = relaxed.iterations;
  v.final_profile = path_class_profile(relaxed.path, field, tgt, cfg.samples_per_segment);
  v.max_energy_final = v.final_profile.max_energy();
  v.final_path = std::move(relaxed.path);
  v.verdict = v.final_profile.all_target ? Verdict::nonlinearly_connectable
                                         : Verdict::not_connected;
  return v;
}

}  // namespace cpath
