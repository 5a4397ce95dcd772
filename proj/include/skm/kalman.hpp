#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "skm/gaussian.hpp"
#include "skm/selection_gaussian.hpp"

namespace skm {

/// Gauss-linear dynamics r_{t+1} = A_t r_t + eps and observations d_t = H r_t + eps.
struct ProcessModel {
  /// Either a single time-invariant A or one matrix per step t = 0..horizon.
  std::vector<Matrix> forward;
  /// Dynamic noise covariance; an empty matrix means exact dynamics.
  Matrix dyn_noise_cov;
  Matrix obs_matrix;
  Matrix obs_noise_cov;
  Index horizon = 0;

  Index state_dim() const { return obs_matrix.cols(); }
  Index obs_dim() const { return obs_matrix.rows(); }
  const Matrix& forward_at(Index t) const {
    return forward.size() == 1 ? forward.front() : forward[static_cast<std::size_t>(t)];
  }
  bool exact_dynamics() const { return dyn_noise_cov.size() == 0; }

  /// Dimension and PSD checks; throws PreconditionError.
  void validate() const;
};

enum class Storage { full, targeted };

struct RecursionOptions {
  /// Full mode is refused when n(T+2) + q + m(T+1) exceeds this.
  Index full_dim_cap = 5000;
};

/// Joint Gaussian over (r_0, [nu,] d_0..d_T): the blocks a study of r_0 needs.
struct TargetedJoint {
  GaussianDist joint;
  Index state_dim = 0;
  Index aux_dim = 0;  // 0 in traditional mode
  Index obs_dim = 0;
  Index horizon = 0;

  bool selection_mode() const { return aux_dim > 0; }
  Index data_offset() const { return state_dim + aux_dim; }
  Index data_dim() const { return obs_dim * (horizon + 1); }
  /// Same joint restricted to d_0..d_T for an earlier horizon T.
  TargetedJoint truncated(Index earlier_horizon) const;
};

/// Every block of the space-time joint (r_0..r_{T+1}, [nu,] d_0..d_T).
class JointMoments {
 public:
  JointMoments(Index n, Index q, Index m, Index horizon, Matrix obs_matrix);

  Index state_dim() const { return n_; }
  Index aux_dim() const { return q_; }
  Index obs_dim() const { return m_; }
  Index horizon() const { return horizon_; }

  const Vector& mean_r(Index t) const { return mean_r_[static_cast<std::size_t>(t)]; }
  const Vector& mean_d(Index t) const { return mean_d_[static_cast<std::size_t>(t)]; }
  const Vector& mean_nu() const { return mean_nu_; }

  /// Cov(r_t, r_s) for any t, s in 0..T+1.
  Matrix cov_rr(Index t, Index s) const;
  /// Cov(r_t, d_s) for t in 0..T+1, s in 0..T.
  Matrix cov_rd(Index t, Index s) const;
  /// Cov(d_t, d_s).
  Matrix cov_dd(Index t, Index s) const;
  const Matrix& cov_r_nu(Index t) const { return cov_r_nu_[static_cast<std::size_t>(t)]; }
  const Matrix& cov_d_nu(Index t) const { return cov_d_nu_[static_cast<std::size_t>(t)]; }
  const Matrix& cov_nu_nu() const { return cov_nu_nu_; }

  /// Joint over [r_0..r_{T+1}, nu, d_0..d_T] in that order.
  GaussianDist assemble() const;
  TargetedJoint targeted() const;

 private:
  friend JointMoments run_full(const GaussianDist&, Index, const ProcessModel&,
                               const RecursionOptions&);

  Index n_, q_, m_, horizon_;
  Matrix h_;
  std::vector<Vector> mean_r_, mean_d_;
  Vector mean_nu_;
  // Lower-triangular storage: [t][s] for s <= t.
  std::vector<std::vector<Matrix>> rr_;  // Sigma^{rr}_{ts}
  std::vector<std::vector<Matrix>> rd_;  // Gamma^{rd}_{ts}, s <= min(t, T)
  std::vector<std::vector<Matrix>> dd_;  // Sigma^{dd}_{ts}
  std::vector<Matrix> cov_r_nu_, cov_d_nu_;
  Matrix cov_nu_nu_;
};

/// Full-storage recursion over (r_0, nu) with aux_dim = q; q = 0 is the traditional model.
JointMoments run_full(const GaussianDist& init, Index aux_dim, const ProcessModel& pm,
                      const RecursionOptions& opts);
/// Targeted-storage counterpart of run_full.
TargetedJoint run_targeted(const GaussianDist& init, Index aux_dim, const ProcessModel& pm);

/// Joint traditional Kalman model: Gaussian initial state.
JointMoments run_traditional_full(const GaussianDist& init, const ProcessModel& pm,
                                  const RecursionOptions& opts = {});
TargetedJoint run_traditional_targeted(const GaussianDist& init, const ProcessModel& pm);

/// Joint selection Kalman model: Gaussian (r_0, nu) initial joint of dimension n + q.
JointMoments run_selection_full(const GaussianDist& init_joint, Index aux_dim,
                                const ProcessModel& pm, const RecursionOptions& opts = {});
TargetedJoint run_selection_targeted(const GaussianDist& init_joint, Index aux_dim,
                                     const ProcessModel& pm);

/// Gaussian posterior of r_0 given d_0..d_T = data (data stacked by time).
GaussianDist posterior_r0_traditional(const TargetedJoint& tj, const Vector& data);

/// Posterior of r_0 under the selection model: (r_0, nu) | d is Gaussian, nu is
/// then sampled under nu in A, and r_0 | nu, d is Gaussian with an affine mean.
class SelectionPosterior {
 public:
  SelectionPosterior(GaussianDist joint_given_data, Index state_dim, AuxSampleSet nu_draws);

  Index state_dim() const { return state_dim_; }
  Index aux_dim() const { return joint_.dim() - state_dim_; }
  /// (r_0, nu) | d before selection.
  const GaussianDist& joint_given_data() const { return joint_; }
  const AuxSampleSet& nu_draws() const { return draws_; }
  /// r_0 | nu, d.
  const GaussianRegression& r0_given_nu() const { return r0_given_nu_; }

  MixtureDensity node_density(Index node) const;
  /// Posterior mean of r_0 as the average of the conditional means.
  Vector mean() const;
  /// Monte Carlo standard error of mean() per node, ignoring autocorrelation.
  Vector mean_std_error() const;
  /// One exact Gaussian draw of r_0 | nu_s, d per selected nu draw (cycling).
  Matrix realizations(Index count, std::uint64_t seed) const;

 private:
  GaussianDist joint_;
  Index state_dim_;
  AuxSampleSet draws_;
  GaussianRegression r0_given_nu_;
  Matrix conditional_means_;  // draws x n
};

SelectionPosterior posterior_r0_selection(const TargetedJoint& tj, const Vector& data,
                                          const SelectionSet& a, const ChainConfig& cfg);

}  // namespace skm
