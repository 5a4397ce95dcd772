#pragma once

#include <cstdint>
#include <utility>

#include "skm/forward_model.hpp"
#include "skm/gaussian.hpp"

namespace skm {

/// Discretized stationary Gaussian random field with correlation exp(-tau^2 / delta^2).
struct StationaryFieldSpec {
  GridSpec grid;
  double mean_level = 0.0;
  double std_level = 1.0;
  double corr_range = 1.0;
};

/// n x n correlation matrix exp(-|x_i - x_j|^2 / delta^2) over the grid nodes.
Matrix correlation_matrix(const GridSpec& grid, double corr_range);

GaussianDist build_stationary_field(const StationaryFieldSpec& spec);

/// How the case-study auxiliary variable sees the field.
///   raw:          nu = gamma (r - mu) + eps
///   standardized: nu = gamma (r - mu) / sigma + eps
/// with eps ~ N(0, (1 - gamma^2) I) in both.
enum class AuxScaling { standardized, raw };

struct CaseCoupling {
  double gamma = 0.0;
  AuxScaling scaling = AuxScaling::standardized;

  void validate() const;
};

/// Theta = (base over r, mu_nu, Gamma_{nu|r}, Sigma_{nu|r}, A).
struct SelectionGaussianParams {
  GaussianDist base;
  Vector aux_mean;
  Matrix coupling;       // q x n
  Matrix aux_noise_cov;  // q x q
  SelectionSet selection;

  Index state_dim() const { return base.dim(); }
  Index aux_dim() const { return aux_mean.size(); }
  /// Gaussian over (r, nu), dimension n + q.
  GaussianDist joint() const;
  void validate() const;
};

/// Case-study coupling: Gamma = gamma I (scaled by 1/sigma_i when standardized),
/// Sigma_{nu|r} = (1 - gamma^2) I, mu_nu = 0.
SelectionGaussianParams case_selection_params(const GaussianDist& base, const CaseCoupling& c,
                                              SelectionSet selection);

/// Joint (r, nu) of the case-study coupling, dimension 2n.
GaussianDist couple_case_auxiliary(const GaussianDist& base, const CaseCoupling& c);

struct ChainConfig {
  Index n_samples = 1000;  // retained draws
  Index burn_in = 1000;    // sweeps discarded before the first retained draw
  Index thinning = 10;     // sweeps between retained draws
  Index block_size = 10;
  Index inner_sweeps = 1;  // coordinate sweeps per block visit
  std::uint64_t seed = 0;

  void validate(Index q) const;
  bool operator==(const ChainConfig&) const = default;
};

/// Retained auxiliary draws, one per row; every row lies in the selection set.
struct AuxSampleSet {
  Matrix draws;

  Index size() const { return draws.rows(); }
  Index dim() const { return draws.cols(); }
  Vector mean() const;
  Matrix covariance() const;
};

/// Block Gibbs sampler for nu ~ aux restricted to nu in a. Blocks are contiguous
/// runs of block_size coordinates; each block visit performs inner_sweeps
/// coordinate-wise exact conditional draws (inverse CDF on the interval union).
/// The chain starts at the aux mean projected into the selection set.
AuxSampleSet gibbs_truncated(const GaussianDist& aux, const SelectionSet& a, const ChainConfig& cfg);

/// Realizations of r_A = [r | nu in A], one per retained nu draw (rows).
Matrix sample_selection_gaussian(const SelectionGaussianParams& p, const ChainConfig& cfg);

/// Equal-weight mixture of univariate Gaussians sharing one standard deviation.
class MixtureDensity {
 public:
  MixtureDensity(Vector means, double sd);

  double operator()(double x) const;
  double mean() const { return means_.mean(); }
  double sd() const { return sd_; }
  const Vector& means() const { return means_; }
  /// [min mean - k sd, max mean + k sd]
  std::pair<double, double> support(double k_sd) const;

 private:
  Vector means_;
  double sd_;
  double norm_;
};

/// Rao-Blackwellized marginal of state coordinate `node`: the average over nu
/// draws of the exact Gaussian conditional of r_node given nu. `joint` is over
/// (r, nu) with nu occupying the last nu_draws.dim() coordinates.
MixtureDensity marginal_mixture_density(Index node, const AuxSampleSet& nu_draws,
                                        const GaussianDist& joint);

}  // namespace skm
