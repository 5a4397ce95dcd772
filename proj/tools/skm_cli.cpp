#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "skm/errors.hpp"
#include "skm/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kConfig = 2, kNumerical = 3, kIo = 4 };

struct Args {
  std::string config;
  std::optional<std::string> model;
  std::optional<long> horizon;
  std::optional<unsigned long long> seed;
  std::optional<std::string> out;
};

void add_common(CLI::App* sub, Args& a, bool with_model) {
  sub->add_option("--config", a.config, "experiment configuration (JSON)")->required();
  if (with_model) sub->add_option("--model", a.model, "skm or tkm (default: both)");
  sub->add_option("--horizon", a.horizon, "single current time T instead of the configured list");
  sub->add_option("--seed", a.seed, "root seed override");
  sub->add_option("--out", a.out, "output directory override");
}

int run(const std::string& command, const Args& a) {
  using namespace skm::experiment;
  ExperimentConfig cfg = load_config(a.config);
  if (a.seed) cfg.seed = *a.seed;
  if (a.horizon) {
    if (*a.horizon < 0) throw skm::ConfigError("--horizon", "must be non-negative");
    cfg.horizons = {static_cast<skm::Index>(*a.horizon)};
  }
  const fs::path out = resolve_output_dir(cfg, a.out);

  if (command == "simulate") {
    cmd_simulate(cfg, out);
  } else if (command == "invert") {
    if (a.model) {
      cmd_invert(cfg, parse_model(*a.model), cfg.horizons, out);
    } else {
      for (Model m : {Model::skm, Model::tkm}) cmd_invert(cfg, m, cfg.horizons, out);
    }
  } else {
    cmd_report(out);
  }
  std::cout << command << ": wrote " << out.string() << "\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Selection and traditional Kalman inversion of an advection-diffusion initial state"};
  app.require_subcommand(1);
  Args args;
  add_common(app.add_subcommand("simulate", "generate the true states and observations"), args, false);
  add_common(app.add_subcommand("invert", "posterior assessment of the initial state"), args, true);
  add_common(app.add_subcommand("report", "RMSE table and heatmap rasters"), args, false);
  CLI11_PARSE(app, argc, argv);

  const std::string command = app.get_subcommands().front()->get_name();
  try {
    return run(command, args);
  } catch (const skm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const skm::PreconditionError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kConfig;
  } catch (const skm::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const skm::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  }
}
