#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "skm/gaussian.hpp"
#include "skm/kalman.hpp"

namespace skm {

/// Density tabulated on an equispaced value grid lower = x_0 < ... < x_{k-1} = upper.
struct MarginalDensity {
  double lower = 0.0;
  double upper = 1.0;
  Vector values;

  Index size() const { return values.size(); }
  double step() const { return (upper - lower) / static_cast<double>(values.size() - 1); }
  double point(Index k) const { return lower + static_cast<double>(k) * step(); }
  /// Trapezoid rule over the whole grid.
  double integral() const;

  /// Evaluates f at `points` grid nodes spanning [lower, upper].
  static MarginalDensity tabulate(const std::function<double(double)>& f, double lower,
                                  double upper, Index points);
};

struct HdiBand {
  double mass = 0.0;          // target
  double covered_mass = 0.0;  // trapezoid mass of the returned region
  IntervalUnion intervals;
};

/// Grid argmax; ties go to the lowest value.
double mmap(const MarginalDensity& density);

/// Superlevel set {f >= c} of the piecewise-linear interpolant, with c found by
/// bisection so that its mass matches `mass` within 0.01. On a flat plateau the
/// level set is trimmed in increasing value order. Throws ResolutionError when
/// the target cannot be met.
HdiBand hdi(const MarginalDensity& density, double mass = 0.8);

/// Trapezoid mass of the density over a union of intervals.
double covered_mass(const MarginalDensity& density, const IntervalUnion& region);

double rmse(const Vector& prediction, const Vector& truth);

struct SummaryConfig {
  Index grid_points = 512;
  double support_sd = 4.0;  // value grid spans [min mean - k sd, max mean + k sd]
  double hdi_mass = 0.8;
  std::vector<Index> nodes;  // nodes that get an exported density and HDI band
  Index n_realizations = 100;
  std::uint64_t realization_seed = 0;
};

struct NodeSummary {
  Index node = 0;
  MarginalDensity density;
  HdiBand band;
};

struct PosteriorSummary {
  Vector prediction;  // MMAP per node
  Vector mean;
  std::vector<NodeSummary> nodes;
  Matrix realizations;  // n_realizations x n
};

PosteriorSummary summarize_posterior(const SelectionPosterior& post, const SummaryConfig& cfg);
PosteriorSummary summarize_posterior(const GaussianDist& post, const SummaryConfig& cfg);

}  // namespace skm
