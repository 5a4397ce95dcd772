#include "skm/gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

#include "skm/errors.hpp"
#include "skm/truncated_normal.hpp"

namespace skm {
namespace {

constexpr double kSymmetryTolerance = 1e-10;

void check_indices(Index k, std::span<const Index> idx, const char* what) {
  std::vector<Index> sorted(idx.begin(), idx.end());
  std::sort(sorted.begin(), sorted.end());
  if (std::adjacent_find(sorted.begin(), sorted.end()) != sorted.end())
    throw PreconditionError(std::string(what) + ": duplicate index");
  for (Index i : sorted) {
    if (i < 0 || i >= k)
      throw PreconditionError(std::string(what) + ": index " + std::to_string(i) +
                              " out of range for dimension " + std::to_string(k));
  }
}

Vector gather(const Vector& v, std::span<const Index> idx) {
  Vector out(static_cast<Index>(idx.size()));
  for (std::size_t a = 0; a < idx.size(); ++a) out(static_cast<Index>(a)) = v(idx[a]);
  return out;
}

Matrix gather(const Matrix& m, std::span<const Index> rows, std::span<const Index> cols) {
  Matrix out(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t b = 0; b < cols.size(); ++b)
    for (std::size_t a = 0; a < rows.size(); ++a)
      out(static_cast<Index>(a), static_cast<Index>(b)) = m(rows[a], cols[b]);
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// IntervalUnion / SelectionSet

IntervalUnion::IntervalUnion(std::vector<Segment> segments) : segments_(std::move(segments)) {
  for (std::size_t k = 0; k < segments_.size(); ++k) {
    const Segment& s = segments_[k];
    if (std::isnan(s.lower) || std::isnan(s.upper) || !(s.lower < s.upper))
      throw PreconditionError("IntervalUnion: segment requires lower < upper");
    if (k > 0 && !(segments_[k - 1].upper < s.lower))
      throw PreconditionError("IntervalUnion: segments must be sorted and disjoint");
  }
}

bool IntervalUnion::contains(double x) const {
  return std::any_of(segments_.begin(), segments_.end(),
                     [x](const Segment& s) { return s.lower <= x && x <= s.upper; });
}

double IntervalUnion::project(double x) const {
  if (segments_.empty()) throw PreconditionError("IntervalUnion: projection onto empty set");
  double best = x;
  double best_dist = kInf;
  for (const Segment& s : segments_) {
    const double p = std::clamp(x, s.lower, s.upper);
    const double d = std::abs(p - x);
    if (d < best_dist) {
      best = p;
      best_dist = d;
    }
  }
  return best;
}

bool IntervalUnion::is_real_line() const {
  return segments_.size() == 1 && segments_[0].lower == -kInf && segments_[0].upper == kInf;
}

bool SelectionSet::contains(const Vector& x) const {
  if (x.size() != dim()) throw PreconditionError("SelectionSet::contains: dimension mismatch");
  for (Index i = 0; i < dim(); ++i)
    if (!(*this)[i].contains(x(i))) return false;
  return true;
}

Vector SelectionSet::project(const Vector& x) const {
  if (x.size() != dim()) throw PreconditionError("SelectionSet::project: dimension mismatch");
  Vector out(x.size());
  for (Index i = 0; i < dim(); ++i) out(i) = (*this)[i].project(x(i));
  return out;
}

// ---------------------------------------------------------------------------
// GaussianDist

GaussianDist::GaussianDist(Vector mean, Matrix cov) : mean_(std::move(mean)), cov_(std::move(cov)) {
  if (cov_.rows() != cov_.cols())
    throw PreconditionError("GaussianDist: covariance must be square");
  if (cov_.rows() != mean_.size())
    throw PreconditionError("GaussianDist: mean length " + std::to_string(mean_.size()) +
                            " does not match covariance dimension " +
                            std::to_string(cov_.rows()));
  if (!mean_.allFinite() || !cov_.allFinite())
    throw PreconditionError("GaussianDist: non-finite parameters");
  if (cov_.size() > 0) {
    const double scale = std::max(cov_.cwiseAbs().maxCoeff(), 1e-300);
    const double asym = (cov_ - cov_.transpose()).cwiseAbs().maxCoeff();
    if (asym > kSymmetryTolerance * scale)
      throw PreconditionError("GaussianDist: covariance is not symmetric");
    cov_ = 0.5 * (cov_ + cov_.transpose()).eval();
  }
}

JitteredCholesky jittered_cholesky(const Matrix& cov) {
  if (cov.rows() != cov.cols()) throw PreconditionError("jittered_cholesky: matrix not square");
  const Index k = cov.rows();
  if (k == 0) return {Matrix(0, 0), 0.0};
  Matrix sym = 0.5 * (cov + cov.transpose());
  if (sym.cwiseAbs().maxCoeff() == 0.0) return {Matrix::Zero(k, k), 0.0};

  const double mean_diag = sym.diagonal().mean();
  if (!(mean_diag > 0.0)) throw NumericalError("jittered_cholesky: non-positive mean diagonal");

  Eigen::LLT<Matrix> llt(sym);
  if (llt.info() == Eigen::Success) return {llt.matrixL(), 0.0};
  for (double rel = 1e-12; rel <= 1e-8 * 1.0000001; rel *= 10.0) {
    const double jitter = rel * mean_diag;
    Matrix shifted = sym;
    shifted.diagonal().array() += jitter;
    llt.compute(shifted);
    if (llt.info() == Eigen::Success) return {llt.matrixL(), jitter};
  }
  throw NumericalError("jittered_cholesky: matrix is not positive semi-definite within jitter");
}

bool is_psd(const Matrix& cov) {
  try {
    jittered_cholesky(cov);
    return true;
  } catch (const NumericalError&) {
    return false;
  }
}

std::vector<Index> complement(Index k, std::span<const Index> subset) {
  std::vector<char> taken(static_cast<std::size_t>(k), 0);
  for (Index i : subset) {
    if (i < 0 || i >= k) throw PreconditionError("complement: index out of range");
    taken[static_cast<std::size_t>(i)] = 1;
  }
  std::vector<Index> out;
  for (Index i = 0; i < k; ++i)
    if (!taken[static_cast<std::size_t>(i)]) out.push_back(i);
  return out;
}

std::vector<Index> index_range(Index first, Index count) {
  std::vector<Index> out(static_cast<std::size_t>(count));
  for (Index i = 0; i < count; ++i) out[static_cast<std::size_t>(i)] = first + i;
  return out;
}

GaussianDist marginalize(const GaussianDist& g, std::span<const Index> keep) {
  if (keep.empty()) throw PreconditionError("marginalize: empty index set");
  check_indices(g.dim(), keep, "marginalize");
  return GaussianDist(gather(g.mean(), keep), gather(g.cov(), keep, keep));
}

GaussianRegression regress(const GaussianDist& g, std::span<const Index> observed) {
  check_indices(g.dim(), observed, "condition");
  GaussianRegression out;
  out.observed.assign(observed.begin(), observed.end());
  out.kept = complement(g.dim(), observed);
  out.kept_mean = gather(g.mean(), out.kept);
  out.observed_mean = gather(g.mean(), out.observed);

  const Matrix cov_kk = gather(g.cov(), out.kept, out.kept);
  if (out.observed.empty()) {
    out.gain = Matrix::Zero(out.kept_mean.size(), 0);
    out.cov = cov_kk;
    return out;
  }
  const Matrix cov_oo = gather(g.cov(), out.observed, out.observed);
  const Matrix cov_ok = gather(g.cov(), out.observed, out.kept);

  Matrix lower;
  try {
    lower = jittered_cholesky(cov_oo).lower;
  } catch (const NumericalError&) {
    throw NumericalError("condition: observed covariance block is singular beyond jitter");
  }
  if ((lower.diagonal().array() <= 0.0).any())
    throw NumericalError("condition: observed covariance block is singular beyond jitter");

  // W = L^{-1} S_ok, gain = W^T L^{-1}, conditional cov = S_kk - W^T W.
  const Matrix w = lower.triangularView<Eigen::Lower>().solve(cov_ok);
  out.gain = lower.transpose().triangularView<Eigen::Upper>().solve(w).transpose();
  out.cov = cov_kk - w.transpose() * w;
  out.cov = 0.5 * (out.cov + out.cov.transpose()).eval();
  return out;
}

GaussianDist condition(const GaussianDist& g, std::span<const Index> observed,
                       const Vector& values) {
  if (values.size() != static_cast<Index>(observed.size()))
    throw PreconditionError("condition: observed values length does not match index set");
  GaussianRegression reg = regress(g, observed);
  return GaussianDist(reg.mean_given(values), std::move(reg.cov));
}

GaussianSampler::GaussianSampler(const GaussianDist& g) : GaussianSampler(g.mean(), g.cov()) {}

GaussianSampler::GaussianSampler(Vector mean, const Matrix& cov)
    : mean_(std::move(mean)), lower_(jittered_cholesky(cov).lower) {
  if (lower_.rows() != mean_.size()) throw PreconditionError("GaussianSampler: dimension mismatch");
}

Vector GaussianSampler::draw_around(const Vector& center, Rng& rng) const {
  std::normal_distribution<double> normal(0.0, 1.0);
  Vector z(center.size());
  for (Index i = 0; i < z.size(); ++i) z(i) = normal(rng);
  return center + lower_.triangularView<Eigen::Lower>() * z;
}

Matrix sample(const GaussianDist& g, Index n_draws, std::uint64_t seed) {
  if (n_draws < 0) throw PreconditionError("sample: negative draw count");
  const GaussianSampler sampler(g);
  Rng rng(seed);
  Matrix out(n_draws, g.dim());
  for (Index s = 0; s < n_draws; ++s) out.row(s) = sampler.draw(rng).transpose();
  return out;
}

double log_density(const GaussianDist& g, const Vector& x) {
  if (x.size() != g.dim()) throw PreconditionError("log_density: dimension mismatch");
  const Matrix lower = jittered_cholesky(g.cov()).lower;
  if ((lower.diagonal().array() <= 0.0).any())
    throw NumericalError("log_density: singular covariance");
  const Vector z = lower.triangularView<Eigen::Lower>().solve(x - g.mean());
  const double log_det = 2.0 * lower.diagonal().array().log().sum();
  const double k = static_cast<double>(g.dim());
  return -0.5 * (k * std::log(2.0 * std::numbers::pi) + log_det + z.squaredNorm());
}

ProbabilityEstimate rect_probability(const GaussianDist& g, const SelectionSet& a,
                                     const RectProbabilityConfig& cfg) {
  if (a.dim() != g.dim()) throw PreconditionError("rect_probability: selection set dimension mismatch");
  if (cfg.n_samples < 2) throw PreconditionError("rect_probability: need at least two samples");
  const Index k = g.dim();
  bool trivial = true;
  for (Index i = 0; i < k; ++i) {
    if (a[i].empty()) return {0.0, 0.0};
    trivial = trivial && a[i].is_real_line();
  }
  if (trivial) return {1.0, 0.0};

  const Matrix lower = jittered_cholesky(g.cov()).lower;
  Rng rng(cfg.seed);
  Vector z(k);
  double sum = 0.0;
  double sum_sq = 0.0;
  for (Index s = 0; s < cfg.n_samples; ++s) {
    double log_weight = 0.0;
    for (Index i = 0; i < k; ++i) {
      const double center = g.mean()(i) + lower.row(i).head(i).dot(z.head(i));
      const double scale = lower(i, i);
      // z_i is standard normal; x_i = center + scale * z_i must land in A_i.
      const truncnorm::Draw d = [&] {
        if (scale <= 0.0) {
          return truncnorm::Draw{0.0, a[i].contains(center) ? 0.0 : -kInf};
        }
        if (truncnorm::log_mass(center, scale, a[i]) == -kInf) return truncnorm::Draw{0.0, -kInf};
        truncnorm::Draw x = truncnorm::sample(center, scale, a[i], rng);
        return truncnorm::Draw{(x.value - center) / scale, x.log_mass};
      }();
      log_weight += d.log_mass;
      if (log_weight == -kInf) break;
      z(i) = d.value;
    }
    const double w = std::exp(log_weight);
    sum += w;
    sum_sq += w * w;
  }
  const double n = static_cast<double>(cfg.n_samples);
  const double mean = sum / n;
  const double var = std::max(0.0, (sum_sq / n - mean * mean) * n / (n - 1.0));
  return {std::clamp(mean, 0.0, 1.0), std::sqrt(var / n)};
}

}  // namespace skm
