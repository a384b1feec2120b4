#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "cpath/diffcore.hpp"
#include "cpath/error.hpp"
#include "cpath/tensor.hpp"

namespace cpath {

enum class DatasetKind { blobs, rings, moons };

inline const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::blobs: return "blobs";
    case DatasetKind::rings: return "rings";
    case DatasetKind::moons: return "moons";
  }
  return "?";
}

inline DatasetKind parse_dataset_kind(const std::string& s) {
  if (s == "blobs") return DatasetKind::blobs;
  if (s == "rings") return DatasetKind::rings;
  if (s == "moons") return DatasetKind::moons;
  throw ContractError("unknown dataset kind '" + s + "'");
}

/// Generator parameters. Fields unused by a kind are ignored.
struct DatasetParams {
  std::size_t classes = 2;    // blobs only
  double separation = 3.0;    // blobs: distance between opposite cluster centres
  double noise = 0.3;         // blobs: cluster std-dev; moons: jitter std-dev
  double inner_radius = 1.0;  // rings: class 0 is |z| < inner_radius
  double gap_radius = 1.25;   // rings: class 1 is gap_radius < |z| < outer_radius
  double outer_radius = 2.0;
};

struct Dataset {
  std::vector<Tensor> points;
  std::vector<ClassIndex> labels;
  DatasetKind kind = DatasetKind::blobs;
  std::size_t n = 0;
  std::uint64_t seed = 0;
  DatasetParams params;

  std::size_t size() const { return points.size(); }
  std::size_t num_classes() const {
    return kind == DatasetKind::blobs ? params.classes : 2;
  }
  std::vector<LabeledPoint> labeled() const {
    std::vector<LabeledPoint> out;
    out.reserve(points.size());
    for (std::size_t i = 0; i < points.size(); ++i) out.push_back({points[i], labels[i]});
    return out;
  }
};

/// Every coordinate of shipped generators stays inside [-kDataBound, kDataBound].
inline constexpr double kDataBound = 3.0;

namespace detail {

inline bool in_bounds(double x, double y) {
  return std::abs(x) <= kDataBound && std::abs(y) <= kDataBound;
}

// Uniform-by-area radius in the open annulus (lo, hi).
inline double annulus_radius(std::mt19937_64& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo * lo, hi * hi);
  for (;;) {
    const double r = std::sqrt(u(rng));
    if (r > lo && r < hi) return r;
  }
}

}  // namespace detail

/// Balanced synthetic 2-D classification set. Point i has class i mod K.
inline Dataset make_dataset(DatasetKind kind, std::size_t n, const DatasetParams& params,
                            std::uint64_t seed) {
  Dataset ds;
  ds.kind = kind;
  ds.n = n;
  ds.seed = seed;
  ds.params = params;
  const std::size_t k = ds.num_classes();
  if (k < 2) throw ContractError("make_dataset: need at least 2 classes");
  if (n < 2 * k) {
    throw ContractError("make_dataset: need at least 2 points per class, got n=" +
                        std::to_string(n));
  }
  if (kind == DatasetKind::rings &&
      !(0.0 < params.inner_radius && params.inner_radius < params.gap_radius &&
        params.gap_radius < params.outer_radius && params.outer_radius <= kDataBound)) {
    throw ContractError("make_dataset: rings radii must satisfy 0 < inner < gap < outer <= 3");
  }

  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> angle(0.0, 2.0 * std::numbers::pi);
  std::uniform_real_distribution<double> half(0.0, std::numbers::pi);

  ds.points.reserve(n);
  ds.labels.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    const ClassIndex c = i % k;
    double x = 0.0;
    double y = 0.0;
    switch (kind) {
      case DatasetKind::blobs: {
        const double phi = 2.0 * std::numbers::pi * static_cast<double>(c) /
                           static_cast<double>(k);
        const double cx = 0.5 * params.separation * std::cos(phi);
        const double cy = 0.5 * params.separation * std::sin(phi);
        do {
          x = cx + params.noise * gauss(rng);
          y = cy + params.noise * gauss(rng);
        } while (!detail::in_bounds(x, y));
        break;
      }
      case DatasetKind::rings: {
        const double r = c == 0
                             ? detail::annulus_radius(rng, 0.0, params.inner_radius)
                             : detail::annulus_radius(rng, params.gap_radius,
                                                      params.outer_radius);
        const double a = angle(rng);
        x = r * std::cos(a);
        y = r * std::sin(a);
        break;
      }
      case DatasetKind::moons: {
        do {
          const double t = half(rng);
          if (c == 0) {
            x = std::cos(t) - 0.5;
            y = std::sin(t) - 0.25;
          } else {
            x = 0.5 - std::cos(t);
            y = 0.25 - std::sin(t);
          }
          x += params.noise * gauss(rng);
          y += params.noise * gauss(rng);
        } while (!detail::in_bounds(x, y));
        break;
      }
    }
    ds.points.push_back(Tensor::vector({x, y}));
    ds.labels.push_back(c);
  }
  return ds;
}

}  // namespace cpath
