#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "skm/experiment.hpp"

namespace skm::experiment {

namespace fs = std::filesystem;

/// Environment variable that, when set, prefixes relative output directories.
inline constexpr const char* kOutputRootEnv = "SKM_OUTPUT_ROOT";

/// --out wins over the config's output_dir; a relative result is placed under
/// $SKM_OUTPUT_ROOT when that variable is set.
fs::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<std::string>& cli_out);

/// Field CSV: "# nx,ny,dx" line with the values, then ny rows of nx values, row 0 = y = 0.
void write_field_csv(const fs::path& path, const GridSpec& grid, const Vector& field);
Vector read_field_csv(const fs::path& path, GridSpec* grid = nullptr);

/// Observation CSV: grid line, column header, one row per time t = 0..T.
void write_observations_csv(const fs::path& path, const GridSpec& grid, const std::vector<Cell>& sites,
                            const Matrix& observations);
Matrix read_observations_csv(const fs::path& path);

/// Binary PGM (P5), top raster row = largest y, window [lo, hi] mapped linearly to 0..255.
void write_pgm(const fs::path& path, const GridSpec& grid, const Vector& field, double lo, double hi);

inline constexpr double kFieldWindowLow = 15.0;
inline constexpr double kFieldWindowHigh = 50.0;
inline constexpr double kErrorWindowHigh = 25.0;

/// Writes truth fields at t = 0 and each horizon plus the observation series.
void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out);

/// Inverts the simulated observations for each horizon under one model.
void cmd_invert(const ExperimentConfig& cfg, Model model, const std::vector<Index>& horizons,
                const fs::path& out);

/// RMSE table and rasters from the manifest in `out`.
void cmd_report(const fs::path& out);

}  // namespace skm::experiment
