#include "skm/kalman.hpp"

#include <string>

#include "skm/errors.hpp"

namespace skm {
namespace {

std::size_t at(Index i) { return static_cast<std::size_t>(i); }

// Cov(r_s, d_t) for s < t, from Cov(r_t, r_s): (H Sigma^{rr}_{ts})^T. Both
// storage modes go through this so that shared blocks are bit-identical.
Matrix cross_state_future_obs(const Matrix& rr_ts, const Matrix& h) {
  return (h * rr_ts).transpose();
}

struct TargetedBlocks {
  Index n = 0, q = 0, m = 0, horizon = 0;
  Vector mean_r0, mean_nu;
  std::vector<Vector> mean_d;
  Matrix rr00, r0_nu, nu_nu;
  std::vector<Matrix> r0_d;                 // Cov(r_0, d_s)
  std::vector<Matrix> d_nu;                 // Cov(d_s, nu)
  std::vector<std::vector<Matrix>> dd;      // Cov(d_t, d_s), s <= t
};

TargetedJoint assemble_targeted(const TargetedBlocks& b) {
  const Index n = b.n, q = b.q, m = b.m, steps = b.horizon + 1;
  const Index dim = n + q + m * steps;
  Vector mean(dim);
  Matrix cov(dim, dim);
  mean.head(n) = b.mean_r0;
  if (q > 0) mean.segment(n, q) = b.mean_nu;
  cov.topLeftCorner(n, n) = b.rr00;
  if (q > 0) {
    cov.block(0, n, n, q) = b.r0_nu;
    cov.block(n, 0, q, n) = b.r0_nu.transpose();
    cov.block(n, n, q, q) = b.nu_nu;
  }
  const Index d0 = n + q;
  for (Index t = 0; t < steps; ++t) {
    mean.segment(d0 + t * m, m) = b.mean_d[at(t)];
    cov.block(0, d0 + t * m, n, m) = b.r0_d[at(t)];
    cov.block(d0 + t * m, 0, m, n) = b.r0_d[at(t)].transpose();
    if (q > 0) {
      cov.block(d0 + t * m, n, m, q) = b.d_nu[at(t)];
      cov.block(n, d0 + t * m, q, m) = b.d_nu[at(t)].transpose();
    }
    for (Index s = 0; s <= t; ++s) {
      cov.block(d0 + t * m, d0 + s * m, m, m) = b.dd[at(t)][at(s)];
      cov.block(d0 + s * m, d0 + t * m, m, m) = b.dd[at(t)][at(s)].transpose();
    }
  }
  return TargetedJoint{GaussianDist(std::move(mean), std::move(cov)), n, q, m, b.horizon};
}

void check_init(const GaussianDist& init, Index aux_dim, const ProcessModel& pm) {
  pm.validate();
  if (aux_dim < 0 || init.dim() != pm.state_dim() + aux_dim)
    throw PreconditionError("recursion: initial distribution has dimension " +
                            std::to_string(init.dim()) + ", expected " +
                            std::to_string(pm.state_dim() + aux_dim));
}

}  // namespace

void ProcessModel::validate() const {
  const Index n = state_dim();
  const Index m = obs_dim();
  if (horizon < 0) throw PreconditionError("process model: negative horizon");
  if (forward.empty()) throw PreconditionError("process model: no forward matrix");
  if (forward.size() != 1 && static_cast<Index>(forward.size()) < horizon + 1)
    throw PreconditionError("process model: need one forward matrix per step");
  for (const Matrix& a : forward)
    if (a.rows() != n || a.cols() != n)
      throw PreconditionError("process model: forward matrix must be n x n");
  if (!exact_dynamics()) {
    if (dyn_noise_cov.rows() != n || dyn_noise_cov.cols() != n)
      throw PreconditionError("process model: dynamic noise covariance must be n x n");
    if (!is_psd(dyn_noise_cov)) throw PreconditionError("process model: dynamic noise not PSD");
  }
  if (obs_noise_cov.rows() != m || obs_noise_cov.cols() != m)
    throw PreconditionError("process model: observation noise covariance must be m x m");
  if (m > 0 && !is_psd(obs_noise_cov))
    throw PreconditionError("process model: observation noise not PSD");
}

TargetedJoint TargetedJoint::truncated(Index earlier_horizon) const {
  if (earlier_horizon < 0 || earlier_horizon > horizon)
    throw PreconditionError("TargetedJoint::truncated: horizon out of range");
  const std::vector<Index> keep = index_range(0, data_offset() + obs_dim * (earlier_horizon + 1));
  return TargetedJoint{marginalize(joint, keep), state_dim, aux_dim, obs_dim, earlier_horizon};
}

// ---------------------------------------------------------------------------
// Full storage

JointMoments::JointMoments(Index n, Index q, Index m, Index horizon, Matrix obs_matrix)
    : n_(n), q_(q), m_(m), horizon_(horizon), h_(std::move(obs_matrix)) {
  mean_r_.resize(at(horizon + 2));
  mean_d_.resize(at(horizon + 1));
  rr_.resize(at(horizon + 2));
  rd_.resize(at(horizon + 2));
  dd_.resize(at(horizon + 1));
  cov_r_nu_.resize(at(horizon + 2));
  cov_d_nu_.resize(at(horizon + 1));
  for (Index t = 0; t < horizon + 2; ++t) {
    rr_[at(t)].resize(at(t + 1));
    rd_[at(t)].resize(at(std::min(t, horizon) + 1));
  }
  for (Index t = 0; t <= horizon; ++t) dd_[at(t)].resize(at(t + 1));
}

Matrix JointMoments::cov_rr(Index t, Index s) const {
  if (s <= t) return rr_[at(t)][at(s)];
  return rr_[at(s)][at(t)].transpose();
}

Matrix JointMoments::cov_rd(Index t, Index s) const {
  if (s <= t) return rd_[at(t)][at(s)];
  return cross_state_future_obs(rr_[at(s)][at(t)], h_);
}

Matrix JointMoments::cov_dd(Index t, Index s) const {
  if (s <= t) return dd_[at(t)][at(s)];
  return dd_[at(s)][at(t)].transpose();
}

GaussianDist JointMoments::assemble() const {
  const Index nr = n_ * (horizon_ + 2);
  const Index nd = m_ * (horizon_ + 1);
  const Index dim = nr + q_ + nd;
  Vector mean(dim);
  Matrix cov(dim, dim);
  for (Index t = 0; t < horizon_ + 2; ++t) {
    mean.segment(t * n_, n_) = mean_r_[at(t)];
    for (Index s = 0; s < horizon_ + 2; ++s) cov.block(t * n_, s * n_, n_, n_) = cov_rr(t, s);
    if (q_ > 0) {
      cov.block(t * n_, nr, n_, q_) = cov_r_nu_[at(t)];
      cov.block(nr, t * n_, q_, n_) = cov_r_nu_[at(t)].transpose();
    }
    for (Index s = 0; s <= horizon_; ++s) {
      const Matrix rd = cov_rd(t, s);
      cov.block(t * n_, nr + q_ + s * m_, n_, m_) = rd;
      cov.block(nr + q_ + s * m_, t * n_, m_, n_) = rd.transpose();
    }
  }
  if (q_ > 0) {
    mean.segment(nr, q_) = mean_nu_;
    cov.block(nr, nr, q_, q_) = cov_nu_nu_;
  }
  for (Index t = 0; t <= horizon_; ++t) {
    mean.segment(nr + q_ + t * m_, m_) = mean_d_[at(t)];
    if (q_ > 0) {
      cov.block(nr + q_ + t * m_, nr, m_, q_) = cov_d_nu_[at(t)];
      cov.block(nr, nr + q_ + t * m_, q_, m_) = cov_d_nu_[at(t)].transpose();
    }
    for (Index s = 0; s <= horizon_; ++s)
      cov.block(nr + q_ + t * m_, nr + q_ + s * m_, m_, m_) = cov_dd(t, s);
  }
  return GaussianDist(std::move(mean), std::move(cov));
}

TargetedJoint JointMoments::targeted() const {
  TargetedBlocks b;
  b.n = n_;
  b.q = q_;
  b.m = m_;
  b.horizon = horizon_;
  b.mean_r0 = mean_r_[0];
  b.mean_nu = mean_nu_;
  b.mean_d = mean_d_;
  b.rr00 = rr_[0][0];
  b.r0_nu = cov_r_nu_[0];
  b.nu_nu = cov_nu_nu_;
  b.d_nu = cov_d_nu_;
  b.dd = dd_;
  for (Index t = 0; t <= horizon_; ++t)
    b.r0_d.push_back(t == 0 ? rd_[0][0] : cross_state_future_obs(rr_[at(t)][0], h_));
  return assemble_targeted(b);
}

namespace {

Matrix symmetrized(const Matrix& m) { return 0.5 * (m + m.transpose()); }

// Sigma_{t+1,t+1} = A Sigma_tt A^T + Sigma^{r|r}; skipped noise when exact.
Matrix forward_marginal(const Matrix& a, const Matrix& rr_tt, const ProcessModel& pm) {
  Matrix next = symmetrized(a * rr_tt * a.transpose());
  if (!pm.exact_dynamics()) next += pm.dyn_noise_cov;
  return next;
}

}  // namespace

JointMoments run_full(const GaussianDist& init, Index aux_dim, const ProcessModel& pm,
                      const RecursionOptions& opts) {
  check_init(init, aux_dim, pm);
  const Index n = pm.state_dim(), q = aux_dim, m = pm.obs_dim(), horizon = pm.horizon;
  const Index dim = n * (horizon + 2) + q + m * (horizon + 1);
  if (dim > opts.full_dim_cap)
    throw MemoryGuardError("full storage needs a " + std::to_string(dim) + "-dimensional joint (cap " +
                           std::to_string(opts.full_dim_cap) + "); use targeted storage");
  const Matrix& h = pm.obs_matrix;

  JointMoments jm(n, q, m, horizon, h);
  jm.mean_r_[0] = init.mean().head(n);
  jm.mean_nu_ = init.mean().tail(q);
  jm.rr_[0][0] = init.cov().topLeftCorner(n, n);
  jm.cov_r_nu_[0] = init.cov().topRightCorner(n, q);
  jm.cov_nu_nu_ = init.cov().bottomRightCorner(q, q);

  for (Index t = 0; t <= horizon; ++t) {
    // Likelihood model. Gamma^{rd}_{ts} for s < t already holds A_{t-1} Gamma^{rd}_{t-1,s},
    // which equals Sigma^{rr}_{ts} H^T.
    const Matrix& rr_tt = jm.rr_[at(t)][at(t)];
    jm.mean_d_[at(t)] = h * jm.mean_r_[at(t)];
    jm.dd_[at(t)][at(t)] = symmetrized(h * rr_tt * h.transpose()) + pm.obs_noise_cov;
    jm.cov_d_nu_[at(t)] = h * jm.cov_r_nu_[at(t)];
    jm.rd_[at(t)][at(t)] = rr_tt * h.transpose();
    for (Index s = 0; s < t; ++s) jm.dd_[at(t)][at(s)] = h * jm.rd_[at(t)][at(s)];

    // Forwarding model.
    const Matrix& a = pm.forward_at(t);
    jm.mean_r_[at(t + 1)] = a * jm.mean_r_[at(t)];
    jm.rr_[at(t + 1)][at(t + 1)] = forward_marginal(a, rr_tt, pm);
    jm.cov_r_nu_[at(t + 1)] = a * jm.cov_r_nu_[at(t)];
    for (Index s = 0; s <= t; ++s) {
      jm.rr_[at(t + 1)][at(s)] = a * jm.rr_[at(t)][at(s)];
      jm.rd_[at(t + 1)][at(s)] = a * jm.rd_[at(t)][at(s)];
    }
  }
  return jm;
}

TargetedJoint run_targeted(const GaussianDist& init, Index aux_dim, const ProcessModel& pm) {
  check_init(init, aux_dim, pm);
  const Index n = pm.state_dim(), q = aux_dim, m = pm.obs_dim(), horizon = pm.horizon;
  const Matrix& h = pm.obs_matrix;

  TargetedBlocks b;
  b.n = n;
  b.q = q;
  b.m = m;
  b.horizon = horizon;
  b.mean_r0 = init.mean().head(n);
  b.mean_nu = init.mean().tail(q);
  b.rr00 = init.cov().topLeftCorner(n, n);
  b.r0_nu = init.cov().topRightCorner(n, q);
  b.nu_nu = init.cov().bottomRightCorner(q, q);
  b.dd.resize(at(horizon + 1));

  Vector mean_r = b.mean_r0;
  Matrix rr_tt = b.rr00;
  Matrix rr_t0 = b.rr00;
  Matrix r_nu = b.r0_nu;
  std::vector<Matrix> rd_past;  // Gamma^{rd}_{ts}, s < t

  for (Index t = 0; t <= horizon; ++t) {
    b.mean_d.push_back(h * mean_r);
    b.d_nu.push_back(h * r_nu);
    Matrix rd_tt = rr_tt * h.transpose();
    auto& dd_row = b.dd[at(t)];
    dd_row.resize(at(t + 1));
    for (Index s = 0; s < t; ++s) dd_row[at(s)] = h * rd_past[at(s)];
    dd_row[at(t)] = symmetrized(h * rr_tt * h.transpose()) + pm.obs_noise_cov;
    b.r0_d.push_back(t == 0 ? rd_tt : cross_state_future_obs(rr_t0, h));

    const Matrix& a = pm.forward_at(t);
    mean_r = a * mean_r;
    Matrix rr_next = forward_marginal(a, rr_tt, pm);
    rr_t0 = a * rr_t0;
    r_nu = a * r_nu;
    rd_past.push_back(std::move(rd_tt));
    for (Matrix& blk : rd_past) blk = a * blk;
    rr_tt = std::move(rr_next);
  }
  return assemble_targeted(b);
}

JointMoments run_traditional_full(const GaussianDist& init, const ProcessModel& pm,
                                  const RecursionOptions& opts) {
  return run_full(init, 0, pm, opts);
}

TargetedJoint run_traditional_targeted(const GaussianDist& init, const ProcessModel& pm) {
  return run_targeted(init, 0, pm);
}

JointMoments run_selection_full(const GaussianDist& init_joint, Index aux_dim,
                                const ProcessModel& pm, const RecursionOptions& opts) {
  if (aux_dim <= 0) throw PreconditionError("run_selection: auxiliary dimension must be positive");
  return run_full(init_joint, aux_dim, pm, opts);
}

TargetedJoint run_selection_targeted(const GaussianDist& init_joint, Index aux_dim,
                                     const ProcessModel& pm) {
  if (aux_dim <= 0) throw PreconditionError("run_selection: auxiliary dimension must be positive");
  return run_targeted(init_joint, aux_dim, pm);
}

// ---------------------------------------------------------------------------
// Posterior assessment of r_0

namespace {

void check_data(const TargetedJoint& tj, const Vector& data) {
  if (data.size() != tj.data_dim())
    throw PreconditionError("posterior: data length " + std::to_string(data.size()) +
                            " does not match m(T+1) = " + std::to_string(tj.data_dim()));
}

}  // namespace

GaussianDist posterior_r0_traditional(const TargetedJoint& tj, const Vector& data) {
  if (tj.selection_mode()) throw PreconditionError("posterior_r0_traditional: joint is in selection mode");
  check_data(tj, data);
  return condition(tj.joint, index_range(tj.data_offset(), tj.data_dim()), data);
}

SelectionPosterior::SelectionPosterior(GaussianDist joint_given_data, Index state_dim,
                                       AuxSampleSet nu_draws)
    : joint_(std::move(joint_given_data)), state_dim_(state_dim), draws_(std::move(nu_draws)) {
  if (draws_.size() == 0) throw PreconditionError("SelectionPosterior: no auxiliary draws");
  if (draws_.dim() != aux_dim()) throw PreconditionError("SelectionPosterior: draw dimension mismatch");
  r0_given_nu_ = regress(joint_, index_range(state_dim_, aux_dim()));
  conditional_means_ =
      (draws_.draws.rowwise() - r0_given_nu_.observed_mean.transpose()) * r0_given_nu_.gain.transpose();
  conditional_means_.rowwise() += r0_given_nu_.kept_mean.transpose();
}

MixtureDensity SelectionPosterior::node_density(Index node) const {
  if (node < 0 || node >= state_dim_) throw PreconditionError("node_density: node out of range");
  return MixtureDensity(conditional_means_.col(node), std::sqrt(std::max(r0_given_nu_.cov(node, node), 0.0)));
}

Vector SelectionPosterior::mean() const { return conditional_means_.colwise().mean().transpose(); }

Vector SelectionPosterior::mean_std_error() const {
  const double s = static_cast<double>(conditional_means_.rows());
  const Matrix centered = conditional_means_.rowwise() - conditional_means_.colwise().mean();
  const Vector var = centered.colwise().squaredNorm().transpose() / std::max(1.0, s - 1.0);
  return (var / s).cwiseSqrt();
}

Matrix SelectionPosterior::realizations(Index count, std::uint64_t seed) const {
  const GaussianSampler noise(Vector::Zero(state_dim_), r0_given_nu_.cov);
  Rng rng(seed);
  const Index s_total = conditional_means_.rows();
  Matrix out(count, state_dim_);
  for (Index k = 0; k < count; ++k) {
    const Index s = (k * s_total) / std::max<Index>(count, 1) % s_total;
    out.row(k) = noise.draw_around(conditional_means_.row(s).transpose(), rng).transpose();
  }
  return out;
}

SelectionPosterior posterior_r0_selection(const TargetedJoint& tj, const Vector& data,
                                          const SelectionSet& a, const ChainConfig& cfg) {
  if (!tj.selection_mode()) throw PreconditionError("posterior_r0_selection: joint is in traditional mode");
  check_data(tj, data);
  if (a.dim() != tj.aux_dim) throw PreconditionError("posterior_r0_selection: selection set dimension mismatch");
  GaussianDist given_data = tj.data_dim() == 0
                                ? tj.joint
                                : condition(tj.joint, index_range(tj.data_offset(), tj.data_dim()), data);
  const GaussianDist nu_given_data = marginalize(given_data, index_range(tj.state_dim, tj.aux_dim));
  AuxSampleSet draws = gibbs_truncated(nu_given_data, a, cfg);
  return SelectionPosterior(std::move(given_data), tj.state_dim, std::move(draws));
}

}  // namespace skm
