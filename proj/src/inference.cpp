#include "skm/inference.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "skm/errors.hpp"

namespace skm {

double MarginalDensity::integral() const {
  if (values.size() < 2) return 0.0;
  return step() * (values.sum() - 0.5 * (values(0) + values(values.size() - 1)));
}

MarginalDensity MarginalDensity::tabulate(const std::function<double(double)>& f, double lower,
                                          double upper, Index points) {
  if (points < 2) throw PreconditionError("MarginalDensity: need at least two grid points");
  if (!(lower < upper) || !std::isfinite(lower) || !std::isfinite(upper))
    throw PreconditionError("MarginalDensity: need finite lower < upper");
  MarginalDensity d{lower, upper, Vector(points)};
  for (Index k = 0; k < points; ++k) d.values(k) = f(d.point(k));
  if ((d.values.array() < 0.0).any() || !d.values.allFinite())
    throw NumericalError("MarginalDensity: density values must be finite and non-negative");
  return d;
}

double mmap(const MarginalDensity& density) {
  Index best = 0;
  for (Index k = 1; k < density.size(); ++k)
    if (density.values(k) > density.values(best)) best = k;
  return density.point(best);
}

namespace {

// Integral of the linear interpolant over [a, b], a sub-range of grid cell k.
double cell_mass(const MarginalDensity& d, Index k, double a, double b) {
  const double x0 = d.point(k);
  const double h = d.step();
  const double f0 = d.values(k);
  const double f1 = d.values(k + 1);
  auto f = [&](double x) { return f0 + (f1 - f0) * (x - x0) / h; };
  return 0.5 * (b - a) * (f(a) + f(b));
}

// Part of grid cell k where the linear interpolant is >= level; empty when lower >= upper.
Segment cell_superlevel(const MarginalDensity& d, Index k, double level) {
  const double x0 = d.point(k);
  const double x1 = d.point(k + 1);
  const double f0 = d.values(k);
  const double f1 = d.values(k + 1);
  const bool in0 = f0 >= level;
  const bool in1 = f1 >= level;
  if (in0 && in1) return {x0, x1};
  if (!in0 && !in1) return {x0, x0};
  const double cross = x0 + (level - f0) / (f1 - f0) * (x1 - x0);
  return in0 ? Segment{x0, cross} : Segment{cross, x1};
}

double superlevel_mass(const MarginalDensity& d, double level) {
  double acc = 0.0;
  for (Index k = 0; k + 1 < d.size(); ++k) {
    const Segment s = cell_superlevel(d, k, level);
    if (s.upper > s.lower) acc += cell_mass(d, k, s.lower, s.upper);
  }
  return acc;
}

IntervalUnion merge_pieces(const std::vector<Segment>& pieces, double tol) {
  std::vector<Segment> merged;
  for (const Segment& s : pieces) {
    if (!(s.upper > s.lower)) continue;
    if (!merged.empty() && s.lower <= merged.back().upper + tol)
      merged.back().upper = std::max(merged.back().upper, s.upper);
    else
      merged.push_back(s);
  }
  return IntervalUnion(std::move(merged));
}

}  // namespace

double covered_mass(const MarginalDensity& density, const IntervalUnion& region) {
  double acc = 0.0;
  for (const Segment& seg : region.segments()) {
    for (Index k = 0; k + 1 < density.size(); ++k) {
      const double a = std::max(seg.lower, density.point(k));
      const double b = std::min(seg.upper, density.point(k + 1));
      if (b > a) acc += cell_mass(density, k, a, b);
    }
  }
  return acc;
}

HdiBand hdi(const MarginalDensity& density, double mass) {
  constexpr double kTolerance = 0.01;
  constexpr int kIterations = 60;
  if (!(mass > 0.0 && mass < 1.0)) throw PreconditionError("hdi: mass must lie in (0, 1)");
  if (density.size() < 2) throw PreconditionError("hdi: density needs at least two grid points");
  const double total = density.integral();
  if (total < mass - kTolerance)
    throw ResolutionError("hdi: tabulated density holds only " + std::to_string(total) + " mass");

  double lo = 0.0;
  double hi = density.values.maxCoeff();
  for (int it = 0; it < kIterations; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (superlevel_mass(density, mid) >= mass)
      lo = mid;
    else
      hi = mid;
  }

  std::vector<Segment> pieces;
  const double mass_lo = superlevel_mass(density, lo);
  if (std::abs(mass_lo - mass) <= kTolerance) {
    for (Index k = 0; k + 1 < density.size(); ++k) pieces.push_back(cell_superlevel(density, k, lo));
  } else {
    // Plateau at the threshold: keep the part strictly above it and add the
    // plateau cell by cell in increasing value order until the target is met.
    const double eps = 1e-9 * density.values.maxCoeff();
    const double above = lo + eps, below = lo - eps;
    double need = mass - superlevel_mass(density, above);
    for (Index k = 0; k + 1 < density.size(); ++k) {
      const Segment inner = cell_superlevel(density, k, above);
      const Segment outer = cell_superlevel(density, k, below);
      const double inner_mass = inner.upper > inner.lower ? cell_mass(density, k, inner.lower, inner.upper) : 0.0;
      const double outer_mass = outer.upper > outer.lower ? cell_mass(density, k, outer.lower, outer.upper) : 0.0;
      const double extra = outer_mass - inner_mass;
      if (need > 0.0 && extra > 0.0 && extra <= need) {
        pieces.push_back(outer);
        need -= extra;
      } else if (need > 0.0 && extra > 0.0 && !(inner.upper > inner.lower)) {
        const double frac = need / extra;
        pieces.push_back({outer.lower, outer.lower + frac * (outer.upper - outer.lower)});
        need = 0.0;
      } else {
        pieces.push_back(inner);
      }
    }
  }

  HdiBand band{mass, 0.0, merge_pieces(pieces, 1e-12 * density.step())};
  band.covered_mass = covered_mass(density, band.intervals);
  if (std::abs(band.covered_mass - mass) > kTolerance)
    throw ResolutionError("hdi: covered mass " + std::to_string(band.covered_mass) +
                          " misses the target " + std::to_string(mass));
  return band;
}

double rmse(const Vector& prediction, const Vector& truth) {
  if (prediction.size() != truth.size()) throw PreconditionError("rmse: dimension mismatch");
  if (prediction.size() == 0) throw PreconditionError("rmse: empty fields");
  return std::sqrt((prediction - truth).squaredNorm() / static_cast<double>(truth.size()));
}

namespace {

void check_summary_config(const SummaryConfig& cfg, Index n) {
  if (cfg.grid_points < 2) throw PreconditionError("summary: grid_points must be at least 2");
  if (!(cfg.support_sd > 0.0)) throw PreconditionError("summary: support_sd must be positive");
  if (cfg.n_realizations < 0) throw PreconditionError("summary: negative realization count");
  for (Index node : cfg.nodes)
    if (node < 0 || node >= n) throw PreconditionError("summary: node " + std::to_string(node) + " out of range");
}

template <typename DensityAt>
void fill_nodes(PosteriorSummary& out, Index n, const SummaryConfig& cfg, DensityAt density_at) {
  out.prediction.resize(n);
  for (Index i = 0; i < n; ++i) out.prediction(i) = mmap(density_at(i));
  for (Index node : cfg.nodes) {
    MarginalDensity d = density_at(node);
    HdiBand band = hdi(d, cfg.hdi_mass);
    out.nodes.push_back(NodeSummary{node, std::move(d), std::move(band)});
  }
}

}  // namespace

PosteriorSummary summarize_posterior(const SelectionPosterior& post, const SummaryConfig& cfg) {
  const Index n = post.state_dim();
  check_summary_config(cfg, n);
  PosteriorSummary out;
  fill_nodes(out, n, cfg, [&](Index i) {
    const MixtureDensity mix = post.node_density(i);
    const auto [lower, upper] = mix.support(cfg.support_sd);
    return MarginalDensity::tabulate(std::cref(mix), lower, upper, cfg.grid_points);
  });
  out.mean = post.mean();
  out.realizations = post.realizations(cfg.n_realizations, cfg.realization_seed);
  return out;
}

PosteriorSummary summarize_posterior(const GaussianDist& post, const SummaryConfig& cfg) {
  const Index n = post.dim();
  check_summary_config(cfg, n);
  PosteriorSummary out;
  fill_nodes(out, n, cfg, [&](Index i) {
    const double mu = post.mean()(i);
    const double var = post.cov()(i, i);
    if (!(var > 0.0)) throw NumericalError("summary: posterior variance at node " + std::to_string(i) + " is not positive");
    const double sd = std::sqrt(var);
    const double norm = 1.0 / (sd * std::sqrt(2.0 * std::numbers::pi));
    auto f = [&](double x) {
      const double z = (x - mu) / sd;
      return norm * std::exp(-0.5 * z * z);
    };
    return MarginalDensity::tabulate(f, mu - cfg.support_sd * sd, mu + cfg.support_sd * sd, cfg.grid_points);
  });
  out.mean = post.mean();
  out.realizations = sample(post, cfg.n_realizations, cfg.realization_seed);
  return out;
}

}  // namespace skm
