#include "skm/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skm/errors.hpp"

namespace skm::experiment {

using nlohmann::json;

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string grid_line(const GridSpec& grid) {
  return "# " + std::to_string(grid.nx) + "," + std::to_string(grid.ny) + "," + fmt(grid.dx) + "\n";
}

std::vector<std::string> split(const std::string& line, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

double to_double(const std::string& s, const fs::path& path) {
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw IoError(path.string() + ": malformed number '" + s + "'");
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  if (path.has_parent_path()) fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed for " + path.string());
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) lines.push_back(line);
  return lines;
}

GridSpec parse_grid_line(const std::string& line, const fs::path& path) {
  if (line.rfind("# ", 0) != 0) throw IoError(path.string() + ": missing grid header");
  const auto cells = split(line.substr(2));
  if (cells.size() != 3) throw IoError(path.string() + ": grid header needs nx,ny,dx");
  return GridSpec{static_cast<Index>(to_double(cells[0], path)), static_cast<Index>(to_double(cells[1], path)),
                  to_double(cells[2], path)};
}

std::string timestamp() {
  std::time_t t = std::time(nullptr);
  if (const char* sde = std::getenv("SOURCE_DATE_EPOCH")) t = static_cast<std::time_t>(std::strtoll(sde, nullptr, 10));
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string hex64(std::uint64_t v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

const char* kManifest = "manifest.json";

json load_manifest(const fs::path& out) {
  const fs::path p = out / kManifest;
  std::ifstream in(p);
  if (!in) throw IoError("missing " + p.string() + "; run simulate first");
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(p.string() + ": " + e.what());
  }
}

void save_manifest(const fs::path& out, const json& m) { write_text(out / kManifest, m.dump(2) + "\n"); }

std::string horizon_dir(Model model, Index horizon) {
  return model_name(model) + "/T" + std::to_string(horizon);
}

}  // namespace

fs::path resolve_output_dir(const ExperimentConfig& cfg, const std::optional<std::string>& cli_out) {
  fs::path dir = cli_out ? fs::path(*cli_out) : fs::path(cfg.output_dir);
  if (dir.is_relative())
    if (const char* root = std::getenv(kOutputRootEnv); root && *root) dir = fs::path(root) / dir;
  return dir;
}

void write_field_csv(const fs::path& path, const GridSpec& grid, const Vector& field) {
  if (field.size() != grid.size()) throw PreconditionError("write_field_csv: field size does not match grid");
  std::string text = grid_line(grid);
  for (Index j = 0; j < grid.ny; ++j) {
    for (Index i = 0; i < grid.nx; ++i) {
      if (i > 0) text += ',';
      text += fmt(field(grid.index(i, j)));
    }
    text += '\n';
  }
  write_text(path, text);
}

Vector read_field_csv(const fs::path& path, GridSpec* grid_out) {
  const auto lines = read_lines(path);
  if (lines.empty()) throw IoError(path.string() + ": empty file");
  const GridSpec grid = parse_grid_line(lines[0], path);
  if (static_cast<Index>(lines.size()) != grid.ny + 1)
    throw IoError(path.string() + ": expected " + std::to_string(grid.ny) + " rows");
  Vector field(grid.size());
  for (Index j = 0; j < grid.ny; ++j) {
    const auto cells = split(lines[static_cast<std::size_t>(j + 1)]);
    if (static_cast<Index>(cells.size()) != grid.nx) throw IoError(path.string() + ": row width mismatch");
    for (Index i = 0; i < grid.nx; ++i) field(grid.index(i, j)) = to_double(cells[static_cast<std::size_t>(i)], path);
  }
  if (grid_out) *grid_out = grid;
  return field;
}

void write_observations_csv(const fs::path& path, const GridSpec& grid, const std::vector<Cell>& sites,
                            const Matrix& observations) {
  std::string text = grid_line(grid) + "t";
  for (const auto& [i, j] : sites) text += ",site_" + std::to_string(i) + "_" + std::to_string(j);
  text += '\n';
  for (Index t = 0; t < observations.rows(); ++t) {
    text += std::to_string(t);
    for (Index k = 0; k < observations.cols(); ++k) text += ',' + fmt(observations(t, k));
    text += '\n';
  }
  write_text(path, text);
}

Matrix read_observations_csv(const fs::path& path) {
  const auto lines = read_lines(path);
  if (lines.size() < 2) throw IoError(path.string() + ": missing header");
  parse_grid_line(lines[0], path);
  const Index m = static_cast<Index>(split(lines[1]).size()) - 1;
  const Index rows = static_cast<Index>(lines.size()) - 2;
  Matrix obs(rows, m);
  for (Index t = 0; t < rows; ++t) {
    const auto cells = split(lines[static_cast<std::size_t>(t + 2)]);
    if (static_cast<Index>(cells.size()) != m + 1) throw IoError(path.string() + ": row width mismatch");
    for (Index k = 0; k < m; ++k) obs(t, k) = to_double(cells[static_cast<std::size_t>(k + 1)], path);
  }
  return obs;
}

void write_pgm(const fs::path& path, const GridSpec& grid, const Vector& field, double lo, double hi) {
  if (field.size() != grid.size()) throw PreconditionError("write_pgm: field size does not match grid");
  std::string bytes = "P5\n" + std::to_string(grid.nx) + " " + std::to_string(grid.ny) + "\n255\n";
  for (Index j = grid.ny - 1; j >= 0; --j) {
    for (Index i = 0; i < grid.nx; ++i) {
      const double u = (field(grid.index(i, j)) - lo) / (hi - lo);
      const long level = std::lround(255.0 * std::clamp(u, 0.0, 1.0));
      bytes += static_cast<char>(static_cast<unsigned char>(level));
    }
  }
  write_text(path, bytes);
}

void cmd_simulate(const ExperimentConfig& cfg, const fs::path& out) {
  const SimulatedTruth st = simulate(cfg);
  json files = json::array();
  auto put_field = [&](const std::string& name, const Vector& f) {
    write_field_csv(out / name, cfg.grid, f);
    files.push_back(name);
  };
  put_field("truth_t0.csv", st.states.front());
  for (Index t : cfg.horizons)
    if (t > 0) put_field("truth_t" + std::to_string(t) + ".csv", st.states[static_cast<std::size_t>(t)]);
  write_observations_csv(out / "observations.csv", cfg.grid, cfg.sites, st.observations);
  files.push_back("observations.csv");
  write_text(out / "config.json", emit_config(cfg));
  files.push_back("config.json");

  json m;
  m["config_hash"] = hex64(fnv1a(emit_config(cfg)));
  m["grid"] = {{"nx", cfg.grid.nx}, {"ny", cfg.grid.ny}, {"dx", cfg.grid.dx}};
  m["horizons"] = cfg.horizons;
  m["seeds"] = {{"root", cfg.seed}, {"simulate", derive_seed(cfg.seed, "simulate")}};
  m["timestamps"] = {{"simulate", timestamp()}};
  m["files"] = {{"simulate", files}};
  m["rmse"] = json::object();
  save_manifest(out, m);
}

namespace {

void write_summary(const fs::path& dir, const ExperimentConfig& cfg, const PosteriorSummary& s, json& files,
                   const std::string& rel) {
  const GridSpec& g = cfg.grid;
  write_field_csv(dir / "mmap.csv", g, s.prediction);
  write_field_csv(dir / "mean.csv", g, s.mean);

  std::string marg = grid_line(g) + "node,i,j,value,density\n";
  std::string bands = grid_line(g) + "node,i,j,mass,covered_mass,interval,lower,upper\n";
  for (const NodeSummary& ns : s.nodes) {
    const std::string prefix =
        std::to_string(ns.node) + "," + std::to_string(g.column(ns.node)) + "," + std::to_string(g.row(ns.node)) + ",";
    for (Index k = 0; k < ns.density.size(); ++k)
      marg += prefix + fmt(ns.density.point(k)) + "," + fmt(ns.density.values(k)) + "\n";
    Index seg_id = 0;
    for (const Segment& seg : ns.band.intervals.segments())
      bands += prefix + fmt(ns.band.mass) + "," + fmt(ns.band.covered_mass) + "," + std::to_string(seg_id++) + "," +
               fmt(seg.lower) + "," + fmt(seg.upper) + "\n";
  }
  write_text(dir / "marginals.csv", marg);
  write_text(dir / "hdi.csv", bands);

  std::string real = grid_line(g);
  for (Index r = 0; r < s.realizations.rows(); ++r) {
    for (Index k = 0; k < s.realizations.cols(); ++k) {
      if (k > 0) real += ',';
      real += fmt(s.realizations(r, k));
    }
    real += '\n';
  }
  write_text(dir / "realizations.csv", real);
  for (const char* name : {"mmap.csv", "mean.csv", "marginals.csv", "hdi.csv", "realizations.csv"})
    files.push_back(rel + "/" + name);
}

}  // namespace

void cmd_invert(const ExperimentConfig& cfg, Model model, const std::vector<Index>& horizons, const fs::path& out) {
  json m = load_manifest(out);
  if (m.value("config_hash", std::string()) != hex64(fnv1a(emit_config(cfg))))
    throw ConfigError("<config>", "does not match the configuration used by simulate in " + out.string());
  const Matrix obs = read_observations_csv(out / "observations.csv");
  const Vector truth0 = read_field_csv(out / "truth_t0.csv");
  for (Index t : horizons)
    if (t < 0 || t >= obs.rows())
      throw ConfigError("horizon", "T=" + std::to_string(t) + " lies beyond the simulated series");

  const std::vector<InversionResult> results = invert(cfg, model, obs, truth0, horizons);
  const std::string name = model_name(model);
  for (const InversionResult& r : results) {
    const std::string rel = horizon_dir(model, r.horizon);
    const std::string key = std::to_string(r.horizon);
    json files = json::array();
    write_summary(out / rel, cfg, r.summary, files, rel);
    m["files"][name][key] = files;
    m["rmse"][name][key] = r.rmse;
    m["seeds"]["realizations/" + name + "/T" + key] = derive_seed(cfg.seed, "realizations/" + name + "/T" + key);
    if (model == Model::skm) m["seeds"]["chain/skm/T" + key] = derive_seed(cfg.seed, "chain/skm/T" + key);
  }
  m["timestamps"]["invert/" + name] = timestamp();
  save_manifest(out, m);
}

void cmd_report(const fs::path& out) {
  const json m = load_manifest(out);
  for (const auto& group : m.at("files").items()) {
    auto check = [&](const json& list) {
      for (const auto& f : list)
        if (!fs::exists(out / f.get<std::string>())) throw IoError("manifest lists missing file " + f.get<std::string>());
    };
    if (group.value().is_array())
      check(group.value());
    else
      for (const auto& h : group.value().items()) check(h.value());
  }
  const json& rmse = m.at("rmse");
  if (rmse.empty()) throw IoError("manifest has no inversion results; run invert first");

  GridSpec grid;
  const Vector truth0 = read_field_csv(out / "truth_t0.csv", &grid);
  write_pgm(out / "report/truth_t0.pgm", grid, truth0, kFieldWindowLow, kFieldWindowHigh);

  std::vector<Index> horizons = m.at("horizons").get<std::vector<Index>>();
  std::string table = "model";
  for (Index t : horizons) {
    char buf[24];
    std::snprintf(buf, sizeof buf, "%10s", ("T=" + std::to_string(t)).c_str());
    table += buf;
  }
  table += '\n';
  for (Model model : {Model::skm, Model::tkm}) {
    const std::string name = model_name(model);
    if (!rmse.contains(name)) continue;
    table += name + "  ";
    for (Index t : horizons) {
      const std::string key = std::to_string(t);
      char buf[24];
      if (rmse[name].contains(key)) {
        std::snprintf(buf, sizeof buf, "%10.4f", rmse[name][key].get<double>());
        const Vector mmap_field = read_field_csv(out / horizon_dir(model, t) / "mmap.csv");
        const std::string stem = "report/" + name + "_T" + key;
        write_pgm(out / (stem + "_mmap.pgm"), grid, mmap_field, kFieldWindowLow, kFieldWindowHigh);
        write_pgm(out / (stem + "_error.pgm"), grid, (mmap_field - truth0).cwiseAbs(), 0.0, kErrorWindowHigh);
      } else {
        std::snprintf(buf, sizeof buf, "%10s", "-");
      }
      table += buf;
    }
    table += '\n';
  }
  write_text(out / "report/rmse_table.txt", table);
}

}  // namespace skm::experiment
