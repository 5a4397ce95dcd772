#pragma once

#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace skm {

using Index = Eigen::Index;
using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;
using Rng = std::mt19937_64;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Closed segment [lower, upper]; either end may be infinite.
struct Segment {
  double lower = -kInf;
  double upper = kInf;

  bool operator==(const Segment&) const = default;
};

/// Sorted, disjoint union of closed segments. Default-constructed value is the empty set.
class IntervalUnion {
 public:
  IntervalUnion() = default;
  explicit IntervalUnion(std::vector<Segment> segments);

  static IntervalUnion real_line() { return IntervalUnion({Segment{}}); }

  bool contains(double x) const;
  /// Nearest member of the set; ties go to the lower segment.
  double project(double x) const;
  bool empty() const { return segments_.empty(); }
  bool is_real_line() const;
  std::span<const Segment> segments() const { return segments_; }

  bool operator==(const IntervalUnion&) const = default;

 private:
  std::vector<Segment> segments_;
};

/// Separable selection set A = A_0 x A_1 x ... x A_{q-1}.
class SelectionSet {
 public:
  SelectionSet() = default;
  explicit SelectionSet(std::vector<IntervalUnion> per_coordinate)
      : sets_(std::move(per_coordinate)) {}

  static SelectionSet uniform(Index q, const IntervalUnion& set) {
    return SelectionSet(std::vector<IntervalUnion>(static_cast<std::size_t>(q), set));
  }

  Index dim() const { return static_cast<Index>(sets_.size()); }
  const IntervalUnion& operator[](Index i) const { return sets_[static_cast<std::size_t>(i)]; }
  bool contains(const Vector& x) const;
  Vector project(const Vector& x) const;

 private:
  std::vector<IntervalUnion> sets_;
};

/// Finite-dimensional Gaussian. Construction checks shapes and symmetry and stores
/// the symmetrized covariance; positive semi-definiteness is checked by the
/// operations that factorize it.
class GaussianDist {
 public:
  GaussianDist() = default;
  GaussianDist(Vector mean, Matrix cov);

  const Vector& mean() const { return mean_; }
  const Matrix& cov() const { return cov_; }
  Index dim() const { return mean_.size(); }

 private:
  Vector mean_;
  Matrix cov_;
};

struct JitteredCholesky {
  Matrix lower;
  double jitter = 0.0;
};

/// Cholesky factor of (S + S^T)/2 + jitter*I. Jitter starts at zero, then escalates
/// by factors of ten from 1e-12 to 1e-8 times the mean diagonal.
/// Throws NumericalError when even the largest jitter fails.
JitteredCholesky jittered_cholesky(const Matrix& cov);
bool is_psd(const Matrix& cov);

GaussianDist marginalize(const GaussianDist& g, std::span<const Index> keep);
GaussianDist condition(const GaussianDist& g, std::span<const Index> observed,
                       const Vector& values);

/// Conditional law of the unobserved coordinates as an affine function of the
/// observed ones: mean = kept_mean + gain * (obs - observed_mean), covariance fixed.
struct GaussianRegression {
  std::vector<Index> kept;
  std::vector<Index> observed;
  Vector kept_mean;
  Vector observed_mean;
  Matrix gain;
  Matrix cov;

  Vector mean_given(const Vector& obs) const { return kept_mean + gain * (obs - observed_mean); }
};

GaussianRegression regress(const GaussianDist& g, std::span<const Index> observed);

/// Draws x = mean + L z with L the jittered Cholesky factor.
class GaussianSampler {
 public:
  explicit GaussianSampler(const GaussianDist& g);
  GaussianSampler(Vector mean, const Matrix& cov);

  Vector draw(Rng& rng) const { return draw_around(mean_, rng); }
  Vector draw_around(const Vector& center, Rng& rng) const;
  Index dim() const { return mean_.size(); }

 private:
  Vector mean_;
  Matrix lower_;
};

/// n_draws x k matrix, one draw per row. Bit-reproducible for a given seed.
Matrix sample(const GaussianDist& g, Index n_draws, std::uint64_t seed);

double log_density(const GaussianDist& g, const Vector& x);

struct RectProbabilityConfig {
  Index n_samples = 10000;
  std::uint64_t seed = 0;
};

struct ProbabilityEstimate {
  double probability = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo estimate of P(x in A) by sequential conditioning over the Cholesky
/// factor (separation-of-variables importance sampling).
ProbabilityEstimate rect_probability(const GaussianDist& g, const SelectionSet& a,
                                     const RectProbabilityConfig& cfg = {});

/// Indices in [0, k) that are not in `subset`, ascending.
std::vector<Index> complement(Index k, std::span<const Index> subset);

/// Consecutive indices [first, first + count).
std::vector<Index> index_range(Index first, Index count);

}  // namespace skm
