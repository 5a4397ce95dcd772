#include "skm/selection_gaussian.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "skm/errors.hpp"
#include "skm/truncated_normal.hpp"

namespace skm {

Matrix correlation_matrix(const GridSpec& grid, double corr_range) {
  if (!(corr_range > 0.0)) throw PreconditionError("correlation_matrix: range must be positive");
  const Index n = grid.size();
  Matrix corr(n, n);
  const double inv_range2 = 1.0 / (corr_range * corr_range);
  for (Index a = 0; a < n; ++a) {
    for (Index b = 0; b <= a; ++b) {
      const double dx = grid.x(a) - grid.x(b);
      const double dy = grid.y(a) - grid.y(b);
      const double rho = std::exp(-(dx * dx + dy * dy) * inv_range2);
      corr(a, b) = rho;
      corr(b, a) = rho;
    }
  }
  return corr;
}

GaussianDist build_stationary_field(const StationaryFieldSpec& spec) {
  spec.grid.validate(1);
  if (!(spec.std_level > 0.0)) throw PreconditionError("stationary field: std_level must be positive");
  const Index n = spec.grid.size();
  Matrix cov = spec.std_level * spec.std_level * correlation_matrix(spec.grid, spec.corr_range);
  if (!is_psd(cov)) throw NumericalError("stationary field: covariance not PSD within jitter");
  return GaussianDist(Vector::Constant(n, spec.mean_level), std::move(cov));
}

void CaseCoupling::validate() const {
  if (!(std::abs(gamma) <= 1.0)) throw PreconditionError("coupling gamma must lie in [-1, 1]");
}

GaussianDist SelectionGaussianParams::joint() const {
  const Index n = state_dim();
  const Index q = aux_dim();
  const Matrix& s = base.cov();
  Vector mean(n + q);
  mean << base.mean(), aux_mean;
  Matrix cov(n + q, n + q);
  const Matrix cross = s * coupling.transpose();  // n x q
  cov.topLeftCorner(n, n) = s;
  cov.topRightCorner(n, q) = cross;
  cov.bottomLeftCorner(q, n) = cross.transpose();
  cov.bottomRightCorner(q, q) = coupling * cross + aux_noise_cov;
  return GaussianDist(std::move(mean), std::move(cov));
}

void SelectionGaussianParams::validate() const {
  const Index n = state_dim();
  const Index q = aux_dim();
  if (coupling.rows() != q || coupling.cols() != n)
    throw PreconditionError("selection params: coupling must be q x n");
  if (aux_noise_cov.rows() != q || aux_noise_cov.cols() != q)
    throw PreconditionError("selection params: aux noise covariance must be q x q");
  if (selection.dim() != q)
    throw PreconditionError("selection params: selection set dimension must equal q");
  if (!is_psd(joint().cov())) throw NumericalError("selection params: joint covariance not PSD");
}

SelectionGaussianParams case_selection_params(const GaussianDist& base, const CaseCoupling& c,
                                              SelectionSet selection) {
  c.validate();
  const Index n = base.dim();
  Vector scale = Vector::Ones(n);
  if (c.scaling == AuxScaling::standardized) {
    for (Index i = 0; i < n; ++i) {
      const double var = base.cov()(i, i);
      if (!(var > 0.0)) throw PreconditionError("case coupling: standardized scaling needs positive variances");
      scale(i) = 1.0 / std::sqrt(var);
    }
  }
  SelectionGaussianParams p{
      .base = base,
      .aux_mean = Vector::Zero(n),
      .coupling = (c.gamma * scale).asDiagonal(),
      .aux_noise_cov = Matrix::Identity(n, n) * (1.0 - c.gamma * c.gamma),
      .selection = std::move(selection),
  };
  return p;
}

GaussianDist couple_case_auxiliary(const GaussianDist& base, const CaseCoupling& c) {
  return case_selection_params(base, c, SelectionSet::uniform(base.dim(), IntervalUnion::real_line()))
      .joint();
}

void ChainConfig::validate(Index q) const {
  if (n_samples <= 0 || burn_in < 0 || thinning <= 0 || block_size <= 0 || inner_sweeps <= 0)
    throw PreconditionError("chain config: counts must be positive");
  if (q > 0 && block_size > q) throw PreconditionError("chain config: block_size exceeds dimension");
}

Vector AuxSampleSet::mean() const { return draws.colwise().mean().transpose(); }

Matrix AuxSampleSet::covariance() const {
  const Matrix centered = draws.rowwise() - draws.colwise().mean();
  return centered.transpose() * centered / static_cast<double>(std::max<Index>(1, draws.rows() - 1));
}

namespace {

Vector initial_state(const GaussianDist& aux, const SelectionSet& a, Rng& rng) {
  Vector x = a.project(aux.mean());
  if (x.allFinite() && a.contains(x)) return x;
  // Fallback: seeded unconstrained proposals.
  const GaussianSampler sampler(aux);
  for (int attempt = 0; attempt < 10000; ++attempt) {
    Vector y = sampler.draw(rng);
    if (a.contains(y)) return y;
  }
  throw InitializationError("gibbs_truncated: no starting point inside the selection set");
}

}  // namespace

AuxSampleSet gibbs_truncated(const GaussianDist& aux, const SelectionSet& a, const ChainConfig& cfg) {
  const Index q = aux.dim();
  if (a.dim() != q) throw PreconditionError("gibbs_truncated: selection set dimension mismatch");
  cfg.validate(q);
  for (Index i = 0; i < q; ++i)
    if (a[i].empty()) throw InitializationError("gibbs_truncated: empty selection segment list");

  Rng rng(cfg.seed);
  AuxSampleSet out{Matrix(cfg.n_samples, q)};
  if (q == 0) return out;

  Vector x = initial_state(aux, a, rng);

  const Matrix lower = jittered_cholesky(aux.cov()).lower;
  if ((lower.diagonal().array() <= 0.0).any())
    throw NumericalError("gibbs_truncated: auxiliary covariance is singular");
  // Precision matrix Q = L^{-T} L^{-1}.
  Matrix inv_lower = lower.triangularView<Eigen::Lower>().solve(Matrix::Identity(q, q));
  const Matrix precision = inv_lower.transpose() * inv_lower;
  inv_lower.resize(0, 0);

  const Vector& mu = aux.mean();
  Vector resid = x - mu;
  Vector cond_sd(q);
  for (Index i = 0; i < q; ++i) cond_sd(i) = 1.0 / std::sqrt(precision(i, i));

  auto sweep = [&] {
    for (Index start = 0; start < q; start += cfg.block_size) {
      const Index stop = std::min(q, start + cfg.block_size);
      for (Index pass = 0; pass < cfg.inner_sweeps; ++pass) {
        for (Index i = start; i < stop; ++i) {
          const double qii = precision(i, i);
          const double others = precision.col(i).dot(resid) - qii * resid(i);
          const double cond_mean = mu(i) - others / qii;
          const double value = truncnorm::sample(cond_mean, cond_sd(i), a[i], rng).value;
          resid(i) = value - mu(i);
        }
      }
    }
  };

  for (Index s = 0; s < cfg.burn_in; ++s) sweep();
  for (Index kept = 0; kept < cfg.n_samples; ++kept) {
    for (Index s = 0; s < cfg.thinning; ++s) sweep();
    out.draws.row(kept) = (mu + resid).transpose();
  }
  return out;
}

Matrix sample_selection_gaussian(const SelectionGaussianParams& p, const ChainConfig& cfg) {
  p.validate();
  const Index n = p.state_dim();
  const Index q = p.aux_dim();
  const GaussianDist joint = p.joint();
  const std::vector<Index> aux_idx = index_range(n, q);
  const AuxSampleSet nu = gibbs_truncated(marginalize(joint, aux_idx), p.selection, cfg);

  const GaussianRegression field_given_nu = regress(joint, aux_idx);
  const GaussianSampler noise(Vector::Zero(n), field_given_nu.cov);
  // Separate stream so that nu draws do not depend on the field draws.
  Rng rng(cfg.seed ^ 0x5bd1e9955bd1e995ULL);
  Matrix out(nu.size(), n);
  for (Index s = 0; s < nu.size(); ++s) {
    const Vector center = field_given_nu.mean_given(nu.draws.row(s).transpose());
    out.row(s) = noise.draw_around(center, rng).transpose();
  }
  return out;
}

MixtureDensity::MixtureDensity(Vector means, double sd) : means_(std::move(means)), sd_(sd) {
  if (means_.size() == 0) throw PreconditionError("MixtureDensity: no components");
  if (!(sd_ > 0.0)) throw PreconditionError("MixtureDensity: standard deviation must be positive");
  norm_ = 1.0 / (static_cast<double>(means_.size()) * sd_ * std::sqrt(2.0 * std::numbers::pi));
}

double MixtureDensity::operator()(double x) const {
  const double inv_sd = 1.0 / sd_;
  double acc = 0.0;
  for (Index s = 0; s < means_.size(); ++s) {
    const double z = (x - means_(s)) * inv_sd;
    acc += std::exp(-0.5 * z * z);
  }
  return acc * norm_;
}

std::pair<double, double> MixtureDensity::support(double k_sd) const {
  return {means_.minCoeff() - k_sd * sd_, means_.maxCoeff() + k_sd * sd_};
}

MixtureDensity marginal_mixture_density(Index node, const AuxSampleSet& nu_draws,
                                        const GaussianDist& joint) {
  if (nu_draws.size() == 0) throw PreconditionError("marginal_mixture_density: empty sample set");
  const Index q = nu_draws.dim();
  const Index n = joint.dim() - q;
  if (node < 0 || node >= n) throw PreconditionError("marginal_mixture_density: node out of range");

  std::vector<Index> idx{node};
  for (Index k = 0; k < q; ++k) idx.push_back(n + k);
  const GaussianDist pair = marginalize(joint, idx);
  const std::vector<Index> aux_idx = index_range(1, q);
  const GaussianRegression reg = regress(pair, aux_idx);

  const Vector centered = (nu_draws.draws.rowwise() - reg.observed_mean.transpose()) *
                          reg.gain.row(0).transpose();
  Vector means = centered.array() + reg.kept_mean(0);
  const double var = std::max(reg.cov(0, 0), 0.0);
  return MixtureDensity(std::move(means), std::sqrt(var));
}

}  // namespace skm
