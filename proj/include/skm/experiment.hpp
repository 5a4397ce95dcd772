#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "skm/forward_model.hpp"
#include "skm/inference.hpp"
#include "skm/kalman.hpp"
#include "skm/selection_gaussian.hpp"

namespace skm::experiment {

inline constexpr int kConfigVersion = 1;

/// Grid coordinate (i, j) = (column, row).
using Cell = std::pair<Index, Index>;

/// Axis-aligned block of nodes i0..i0+width-1, j0..j0+height-1 set to `value`.
struct EventSpec {
  Index i0 = 0;
  Index j0 = 0;
  Index width = 3;
  Index height = 3;
  double value = 45.0;

  bool operator==(const EventSpec&) const = default;
};

struct TruthSpec {
  double background = 20.0;
  std::vector<EventSpec> events;

  bool operator==(const TruthSpec&) const = default;
};

struct SelectionPriorSpec {
  double mean = 28.75;
  double std = 10.0;
  double corr_range = 0.15;
  double gamma = 0.95;
  AuxScaling scaling = AuxScaling::standardized;
  IntervalUnion set = IntervalUnion({{-kInf, -0.2}, {0.5, kInf}});

  bool operator==(const SelectionPriorSpec&) const = default;
};

struct GaussianPriorSpec {
  double mean = 20.0;
  double std = 10.0;
  double corr_range = 0.15;

  bool operator==(const GaussianPriorSpec&) const = default;
};

struct SummarySpec {
  Index grid_points = 512;
  double support_sd = 4.0;
  double hdi_mass = 0.8;
  Index n_realizations = 100;
  std::vector<Cell> monitor;

  bool operator==(const SummarySpec&) const = default;
};

struct ExperimentConfig {
  int version = kConfigVersion;
  GridSpec grid{21, 21, 0.1};
  AdvectionDiffusionParams dynamics{1.43e-2, 0.0, -0.1, 0.5};
  SelectionPriorSpec selection_prior;
  GaussianPriorSpec gaussian_prior;
  std::vector<Cell> sites{{5, 5}, {15, 5}, {10, 10}, {5, 15}, {15, 15}};
  double obs_noise_std = 0.1;
  TruthSpec truth;
  std::vector<Index> horizons{0, 20, 30, 50};
  ChainConfig chain;  // seed is derived per model and horizon, not read
  SummarySpec summary;
  std::uint64_t seed = 1;
  std::string output_dir = "output";

  Index max_horizon() const { return horizons.back(); }
  bool operator==(const ExperimentConfig&) const = default;
};

enum class Model { skm, tkm };
std::string model_name(Model m);
Model parse_model(const std::string& name);

/// JSON text round trip. Parsing throws ConfigError carrying the offending field path.
ExperimentConfig parse_config(const std::string& json_text);
std::string emit_config(const ExperimentConfig& cfg);
ExperimentConfig load_config(const std::filesystem::path& path);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(const std::string& bytes);
/// Child seed: splitmix64 of root ^ fnv1a(stream).
std::uint64_t derive_seed(std::uint64_t root, const std::string& stream);

Vector truth_field(const ExperimentConfig& cfg);
Matrix observation_matrix(const ExperimentConfig& cfg);
ProcessModel process_model(const ExperimentConfig& cfg, Index horizon);
/// Joint (r_0, nu) for the selection prior.
GaussianDist selection_prior_joint(const ExperimentConfig& cfg);
SelectionSet selection_set(const ExperimentConfig& cfg);
GaussianDist gaussian_prior(const ExperimentConfig& cfg);

/// States r_0..r_{T+1} and observations d_0..d_T up to the largest horizon.
SimulatedTruth simulate(const ExperimentConfig& cfg);

/// Observations d_0..d_T stacked by time into one vector.
Vector stack_observations(const Matrix& observations, Index horizon);

struct InversionResult {
  Index horizon = 0;
  PosteriorSummary summary;
  double rmse = 0.0;
};

/// Targeted recursion to the largest requested horizon, then posterior
/// assessment and summaries at every requested horizon.
std::vector<InversionResult> invert(const ExperimentConfig& cfg, Model model,
                                    const Matrix& observations, const Vector& truth0,
                                    const std::vector<Index>& horizons);

}  // namespace skm::experiment
