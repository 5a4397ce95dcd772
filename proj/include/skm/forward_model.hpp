#pragma once

#include <cstdint>
#include <vector>

#include "skm/gaussian.hpp"

namespace skm {

/// Regular 2-D grid. Node (i, j) sits at (i*dx, j*dx) and is stored at flat
/// index j*nx + i (row-major, row j = y level).
struct GridSpec {
  Index nx = 0;
  Index ny = 0;
  double dx = 1.0;

  Index size() const { return nx * ny; }
  Index index(Index i, Index j) const { return j * nx + i; }
  Index column(Index node) const { return node % nx; }
  Index row(Index node) const { return node / nx; }
  double x(Index node) const { return static_cast<double>(column(node)) * dx; }
  double y(Index node) const { return static_cast<double>(row(node)) * dx; }

  /// Throws PreconditionError unless nx, ny >= min_nodes and dx > 0.
  void validate(Index min_nodes = 2) const;

  bool operator==(const GridSpec&) const = default;
};

struct AdvectionDiffusionParams {
  double lambda = 0.0;  // diffusivity
  double c1 = 0.0;      // velocity along i (x)
  double c2 = 0.0;      // velocity along j (y)
  double dt = 1.0;

  void validate() const;
  bool operator==(const AdvectionDiffusionParams&) const = default;
};

struct ObservationLayout {
  std::vector<Index> sites;  // flat node indices
};

/// One implicit step r^{t+1} = A r^t of the advection-diffusion equation:
/// A = (I - dt L)^{-1} with the 5-point Laplacian, one-sided advection
/// differences in +i / +j, and zero-flux closure (ghost value equals the
/// adjacent boundary value). Returned densely.
Matrix assemble_propagator(const GridSpec& grid, const AdvectionDiffusionParams& p);

/// The operator I - dt L itself (sparse pattern stored densely).
Matrix implicit_operator(const GridSpec& grid, const AdvectionDiffusionParams& p);

/// Binary m x n selection matrix, H(k, sites[k]) = 1.
Matrix build_observation_matrix(const GridSpec& grid, const ObservationLayout& layout);

struct ProcessModel;

struct SimulatedTruth {
  std::vector<Vector> states;  // r_0 .. r_{T+1}
  Matrix observations;         // (T+1) x m, row t = d_t
};

/// r_{t+1} = A_t r_t (+ dynamic noise when the model has any), d_t = H r_t + eps_t.
SimulatedTruth simulate_truth(const Vector& r0, const ProcessModel& pm, Index horizon,
                              std::uint64_t seed);

}  // namespace skm
