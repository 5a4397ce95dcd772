#include "skm/forward_model.hpp"

#include <cmath>
#include <string>

#include "skm/errors.hpp"
#include "skm/kalman.hpp"

namespace skm {

void GridSpec::validate(Index min_nodes) const {
  if (nx < min_nodes || ny < min_nodes)
    throw PreconditionError("grid: nx and ny must be at least " + std::to_string(min_nodes));
  if (!(dx > 0.0)) throw PreconditionError("grid: dx must be positive");
}

void AdvectionDiffusionParams::validate() const {
  if (!(lambda >= 0.0)) throw PreconditionError("advection-diffusion: lambda must be non-negative");
  if (!(dt > 0.0)) throw PreconditionError("advection-diffusion: dt must be positive");
  if (!std::isfinite(c1) || !std::isfinite(c2))
    throw PreconditionError("advection-diffusion: velocity must be finite");
}

Matrix implicit_operator(const GridSpec& grid, const AdvectionDiffusionParams& p) {
  grid.validate();
  p.validate();
  const Index n = grid.size();
  const double diff = p.lambda / (grid.dx * grid.dx);
  const double adv1 = p.c1 / grid.dx;
  const double adv2 = p.c2 / grid.dx;

  // L r at node (i, j); a neighbour outside the grid is replaced by the node
  // itself (zero-flux ghost), so its contribution cancels.
  Matrix lap = Matrix::Zero(n, n);
  auto add = [&](Index row, Index i, Index j, double w) {
    const Index ii = std::clamp<Index>(i, 0, grid.nx - 1);
    const Index jj = std::clamp<Index>(j, 0, grid.ny - 1);
    lap(row, grid.index(ii, jj)) += w;
  };
  for (Index j = 0; j < grid.ny; ++j) {
    for (Index i = 0; i < grid.nx; ++i) {
      const Index row = grid.index(i, j);
      add(row, i + 1, j, diff);
      add(row, i - 1, j, diff);
      add(row, i, j + 1, diff);
      add(row, i, j - 1, diff);
      add(row, i, j, -4.0 * diff);
      // -c . grad r with one-sided differences toward +i and +j.
      add(row, i + 1, j, -adv1);
      add(row, i, j, adv1);
      add(row, i, j + 1, -adv2);
      add(row, i, j, adv2);
    }
  }
  Matrix m = Matrix::Identity(n, n) - p.dt * lap;
  return m;
}

Matrix assemble_propagator(const GridSpec& grid, const AdvectionDiffusionParams& p) {
  const Matrix m = implicit_operator(grid, p);
  const Index n = m.rows();
  Eigen::PartialPivLU<Matrix> lu(m);
  const double rcond = lu.rcond();
  if (!(rcond > 1e-14)) throw NumericalError("assemble_propagator: implicit operator is singular");
  return lu.solve(Matrix::Identity(n, n));
}

Matrix build_observation_matrix(const GridSpec& grid, const ObservationLayout& layout) {
  const Index n = grid.size();
  const Index m = static_cast<Index>(layout.sites.size());
  Matrix h = Matrix::Zero(m, n);
  for (Index k = 0; k < m; ++k) {
    const Index site = layout.sites[static_cast<std::size_t>(k)];
    if (site < 0 || site >= n)
      throw PreconditionError("observation layout: site " + std::to_string(site) + " out of range");
    for (Index prev = 0; prev < k; ++prev)
      if (layout.sites[static_cast<std::size_t>(prev)] == site)
        throw PreconditionError("observation layout: duplicate site " + std::to_string(site));
    h(k, site) = 1.0;
  }
  return h;
}

SimulatedTruth simulate_truth(const Vector& r0, const ProcessModel& pm, Index horizon,
                              std::uint64_t seed) {
  if (r0.size() != pm.state_dim()) throw PreconditionError("simulate_truth: dimension mismatch");
  if (horizon < 0) throw PreconditionError("simulate_truth: negative horizon");
  const Index m = pm.obs_dim();
  Rng rng(seed);
  const GaussianSampler obs_noise(Vector::Zero(m), pm.obs_noise_cov);
  std::optional<GaussianSampler> dyn_noise;
  if (!pm.exact_dynamics()) dyn_noise.emplace(Vector::Zero(r0.size()), pm.dyn_noise_cov);

  SimulatedTruth out;
  out.states.reserve(static_cast<std::size_t>(horizon + 2));
  out.states.push_back(r0);
  out.observations.resize(horizon + 1, m);
  for (Index t = 0; t <= horizon; ++t) {
    const Vector& r = out.states.back();
    out.observations.row(t) = (pm.obs_matrix * r + obs_noise.draw(rng)).transpose();
    Vector next = pm.forward_at(t) * r;
    if (dyn_noise) next += dyn_noise->draw(rng);
    out.states.push_back(std::move(next));
  }
  return out;
}

}  // namespace skm
