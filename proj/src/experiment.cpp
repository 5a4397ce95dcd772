#include "skm/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "skm/errors.hpp"

namespace skm::experiment {

using nlohmann::json;

std::string model_name(Model m) { return m == Model::skm ? "skm" : "tkm"; }

Model parse_model(const std::string& name) {
  if (name == "skm") return Model::skm;
  if (name == "tkm") return Model::tkm;
  throw ConfigError("model", "expected skm or tkm, got '" + name + "'");
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t derive_seed(std::uint64_t root, const std::string& stream) {
  std::uint64_t z = root ^ fnv1a(stream);
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// JSON reading with field paths

namespace {

class Node {
 public:
  Node(const json& j, std::string path) : j_(j), path_(std::move(path)) {}

  const std::string& path() const { return path_; }
  const json& raw() const { return j_; }

  Node at(const std::string& key) const {
    if (!j_.is_object()) throw ConfigError(path_, "expected an object");
    if (!j_.contains(key)) throw ConfigError(join(key), "missing field");
    return Node(j_.at(key), join(key));
  }
  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  Node at(std::size_t k) const { return Node(j_.at(k), path_ + "[" + std::to_string(k) + "]"); }
  std::size_t size() const {
    if (!j_.is_array()) throw ConfigError(path_, "expected an array");
    return j_.size();
  }

  double number() const {
    if (j_.is_number()) return j_.get<double>();
    if (j_.is_string()) {
      const std::string s = j_.get<std::string>();
      if (s == "inf") return kInf;
      if (s == "-inf") return -kInf;
    }
    throw ConfigError(path_, "expected a number");
  }
  double finite() const {
    const double v = number();
    if (!std::isfinite(v)) throw ConfigError(path_, "expected a finite number");
    return v;
  }
  double positive() const {
    const double v = finite();
    if (!(v > 0.0)) throw ConfigError(path_, "must be positive");
    return v;
  }
  Index integer(Index min_value = 0) const {
    if (!j_.is_number_integer()) throw ConfigError(path_, "expected an integer");
    const auto v = j_.get<std::int64_t>();
    if (v < min_value) throw ConfigError(path_, "must be at least " + std::to_string(min_value));
    return static_cast<Index>(v);
  }
  std::uint64_t unsigned_integer() const {
    if (!j_.is_number_unsigned() && !(j_.is_number_integer() && j_.get<std::int64_t>() >= 0))
      throw ConfigError(path_, "expected a non-negative integer");
    return j_.get<std::uint64_t>();
  }
  std::string string() const {
    if (!j_.is_string()) throw ConfigError(path_, "expected a string");
    return j_.get<std::string>();
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  const json& j_;
  std::string path_;
};

Cell read_cell(const Node& n, const GridSpec& grid) {
  if (n.size() != 2) throw ConfigError(n.path(), "expected [i, j]");
  const Index i = n.at(0).integer();
  const Index j = n.at(1).integer();
  if (i >= grid.nx || j >= grid.ny) throw ConfigError(n.path(), "cell outside the grid");
  return {i, j};
}

std::vector<Cell> read_cells(const Node& n, const GridSpec& grid) {
  std::vector<Cell> out;
  for (std::size_t k = 0; k < n.size(); ++k) out.push_back(read_cell(n.at(k), grid));
  return out;
}

IntervalUnion read_set(const Node& n) {
  std::vector<Segment> segs;
  for (std::size_t k = 0; k < n.size(); ++k) {
    const Node s = n.at(k);
    if (s.size() != 2) throw ConfigError(s.path(), "expected [lower, upper]");
    segs.push_back({s.at(0).number(), s.at(1).number()});
  }
  try {
    return IntervalUnion(std::move(segs));
  } catch (const PreconditionError& e) {
    throw ConfigError(n.path(), e.what());
  }
}

json number_json(double v) {
  if (v == kInf) return "inf";
  if (v == -kInf) return "-inf";
  return v;
}

}  // namespace

ExperimentConfig parse_config(const std::string& json_text) {
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw ConfigError("<document>", e.what());
  }
  const Node root(doc, "");
  ExperimentConfig cfg;

  cfg.version = static_cast<int>(root.at("version").integer(1));
  if (cfg.version != kConfigVersion)
    throw ConfigError("version", "unsupported version " + std::to_string(cfg.version));

  const Node grid = root.at("grid");
  cfg.grid = GridSpec{grid.at("nx").integer(2), grid.at("ny").integer(2), grid.at("dx").positive()};

  const Node dyn = root.at("dynamics");
  cfg.dynamics.lambda = dyn.at("lambda").finite();
  if (cfg.dynamics.lambda < 0.0) throw ConfigError("dynamics.lambda", "must be non-negative");
  cfg.dynamics.c1 = dyn.at("c1").finite();
  cfg.dynamics.c2 = dyn.at("c2").finite();
  cfg.dynamics.dt = dyn.at("dt").positive();

  const Node sel = root.at("selection_prior");
  cfg.selection_prior.mean = sel.at("mean").finite();
  cfg.selection_prior.std = sel.at("std").positive();
  cfg.selection_prior.corr_range = sel.at("corr_range").positive();
  cfg.selection_prior.gamma = sel.at("gamma").finite();
  if (std::abs(cfg.selection_prior.gamma) > 1.0)
    throw ConfigError("selection_prior.gamma", "must lie in [-1, 1]");
  const std::string scaling = sel.at("coupling_scaling").string();
  if (scaling == "standardized")
    cfg.selection_prior.scaling = AuxScaling::standardized;
  else if (scaling == "raw")
    cfg.selection_prior.scaling = AuxScaling::raw;
  else
    throw ConfigError("selection_prior.coupling_scaling", "expected standardized or raw");
  cfg.selection_prior.set = read_set(sel.at("set"));
  if (cfg.selection_prior.set.empty()) throw ConfigError("selection_prior.set", "must not be empty");

  const Node gauss = root.at("gaussian_prior");
  cfg.gaussian_prior.mean = gauss.at("mean").finite();
  cfg.gaussian_prior.std = gauss.at("std").positive();
  cfg.gaussian_prior.corr_range = gauss.at("corr_range").positive();

  const Node obs = root.at("observations");
  cfg.sites = read_cells(obs.at("sites"), cfg.grid);
  for (std::size_t a = 0; a < cfg.sites.size(); ++a)
    for (std::size_t b = 0; b < a; ++b)
      if (cfg.sites[a] == cfg.sites[b])
        throw ConfigError("observations.sites[" + std::to_string(a) + "]", "duplicate site");
  cfg.obs_noise_std = obs.at("noise_std").finite();
  if (cfg.obs_noise_std < 0.0) throw ConfigError("observations.noise_std", "must be non-negative");

  const Node truth = root.at("truth");
  cfg.truth.background = truth.at("background").finite();
  cfg.truth.events.clear();
  const Node events = truth.at("events");
  for (std::size_t k = 0; k < events.size(); ++k) {
    const Node e = events.at(k);
    EventSpec ev{e.at("i0").integer(), e.at("j0").integer(), e.at("width").integer(1),
                 e.at("height").integer(1), e.at("value").finite()};
    if (ev.i0 + ev.width > cfg.grid.nx || ev.j0 + ev.height > cfg.grid.ny)
      throw ConfigError(e.path(), "event extends outside the grid");
    cfg.truth.events.push_back(ev);
  }

  const Node horizons = root.at("horizons");
  cfg.horizons.clear();
  for (std::size_t k = 0; k < horizons.size(); ++k) {
    const Index t = horizons.at(k).integer();
    if (!cfg.horizons.empty() && t <= cfg.horizons.back())
      throw ConfigError(horizons.at(k).path(), "horizons must be strictly ascending");
    cfg.horizons.push_back(t);
  }
  if (cfg.horizons.empty()) throw ConfigError("horizons", "must not be empty");

  const Node chain = root.at("chain");
  cfg.chain.n_samples = chain.at("n_samples").integer(1);
  cfg.chain.burn_in = chain.at("burn_in").integer(0);
  cfg.chain.thinning = chain.at("thinning").integer(1);
  cfg.chain.block_size = chain.at("block_size").integer(1);
  cfg.chain.inner_sweeps = chain.at("inner_sweeps").integer(1);
  if (cfg.chain.block_size > cfg.grid.size())
    throw ConfigError("chain.block_size", "exceeds the number of grid nodes");

  const Node summary = root.at("summary");
  cfg.summary.grid_points = summary.at("grid_points").integer(2);
  cfg.summary.support_sd = summary.at("support_sd").positive();
  cfg.summary.hdi_mass = summary.at("hdi_mass").positive();
  if (cfg.summary.hdi_mass >= 1.0) throw ConfigError("summary.hdi_mass", "must be below 1");
  cfg.summary.n_realizations = summary.at("n_realizations").integer(0);
  cfg.summary.monitor = read_cells(summary.at("monitor"), cfg.grid);

  cfg.seed = root.at("seed").unsigned_integer();
  cfg.output_dir = root.at("output_dir").string();
  return cfg;
}

std::string emit_config(const ExperimentConfig& cfg) {
  auto cells = [](const std::vector<Cell>& cs) {
    json a = json::array();
    for (const auto& [i, j] : cs) a.push_back({i, j});
    return a;
  };
  json set = json::array();
  for (const Segment& s : cfg.selection_prior.set.segments())
    set.push_back({number_json(s.lower), number_json(s.upper)});
  json events = json::array();
  for (const EventSpec& e : cfg.truth.events)
    events.push_back({{"i0", e.i0}, {"j0", e.j0}, {"width", e.width}, {"height", e.height}, {"value", e.value}});

  json doc = {
      {"version", cfg.version},
      {"grid", {{"nx", cfg.grid.nx}, {"ny", cfg.grid.ny}, {"dx", cfg.grid.dx}}},
      {"dynamics",
       {{"lambda", cfg.dynamics.lambda}, {"c1", cfg.dynamics.c1}, {"c2", cfg.dynamics.c2}, {"dt", cfg.dynamics.dt}}},
      {"selection_prior",
       {{"mean", cfg.selection_prior.mean},
        {"std", cfg.selection_prior.std},
        {"corr_range", cfg.selection_prior.corr_range},
        {"gamma", cfg.selection_prior.gamma},
        {"coupling_scaling", cfg.selection_prior.scaling == AuxScaling::standardized ? "standardized" : "raw"},
        {"set", set}}},
      {"gaussian_prior",
       {{"mean", cfg.gaussian_prior.mean}, {"std", cfg.gaussian_prior.std}, {"corr_range", cfg.gaussian_prior.corr_range}}},
      {"observations", {{"sites", cells(cfg.sites)}, {"noise_std", cfg.obs_noise_std}}},
      {"truth", {{"background", cfg.truth.background}, {"events", events}}},
      {"horizons", cfg.horizons},
      {"chain",
       {{"n_samples", cfg.chain.n_samples},
        {"burn_in", cfg.chain.burn_in},
        {"thinning", cfg.chain.thinning},
        {"block_size", cfg.chain.block_size},
        {"inner_sweeps", cfg.chain.inner_sweeps}}},
      {"summary",
       {{"grid_points", cfg.summary.grid_points},
        {"support_sd", cfg.summary.support_sd},
        {"hdi_mass", cfg.summary.hdi_mass},
        {"n_realizations", cfg.summary.n_realizations},
        {"monitor", cells(cfg.summary.monitor)}}},
      {"seed", cfg.seed},
      {"output_dir", cfg.output_dir},
  };
  return doc.dump(2) + "\n";
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

// ---------------------------------------------------------------------------
// Case construction

Vector truth_field(const ExperimentConfig& cfg) {
  Vector r = Vector::Constant(cfg.grid.size(), cfg.truth.background);
  for (const EventSpec& e : cfg.truth.events)
    for (Index j = e.j0; j < e.j0 + e.height; ++j)
      for (Index i = e.i0; i < e.i0 + e.width; ++i) r(cfg.grid.index(i, j)) = e.value;
  return r;
}

Matrix observation_matrix(const ExperimentConfig& cfg) {
  ObservationLayout layout;
  for (const auto& [i, j] : cfg.sites) layout.sites.push_back(cfg.grid.index(i, j));
  return build_observation_matrix(cfg.grid, layout);
}

ProcessModel process_model(const ExperimentConfig& cfg, Index horizon) {
  ProcessModel pm;
  pm.forward = {assemble_propagator(cfg.grid, cfg.dynamics)};
  pm.obs_matrix = observation_matrix(cfg);
  const Index m = pm.obs_matrix.rows();
  pm.obs_noise_cov = Matrix::Identity(m, m) * (cfg.obs_noise_std * cfg.obs_noise_std);
  pm.horizon = horizon;
  return pm;
}

GaussianDist selection_prior_joint(const ExperimentConfig& cfg) {
  const auto& p = cfg.selection_prior;
  const GaussianDist base = build_stationary_field({cfg.grid, p.mean, p.std, p.corr_range});
  return couple_case_auxiliary(base, CaseCoupling{p.gamma, p.scaling});
}

SelectionSet selection_set(const ExperimentConfig& cfg) {
  return SelectionSet::uniform(cfg.grid.size(), cfg.selection_prior.set);
}

GaussianDist gaussian_prior(const ExperimentConfig& cfg) {
  const auto& p = cfg.gaussian_prior;
  return build_stationary_field({cfg.grid, p.mean, p.std, p.corr_range});
}

SimulatedTruth simulate(const ExperimentConfig& cfg) {
  const ProcessModel pm = process_model(cfg, cfg.max_horizon());
  return simulate_truth(truth_field(cfg), pm, cfg.max_horizon(), derive_seed(cfg.seed, "simulate"));
}

Vector stack_observations(const Matrix& observations, Index horizon) {
  if (horizon < 0 || horizon >= observations.rows())
    throw PreconditionError("stack_observations: horizon beyond the observed series");
  const Index m = observations.cols();
  Vector d(m * (horizon + 1));
  for (Index t = 0; t <= horizon; ++t) d.segment(t * m, m) = observations.row(t).transpose();
  return d;
}

std::vector<InversionResult> invert(const ExperimentConfig& cfg, Model model,
                                    const Matrix& observations, const Vector& truth0,
                                    const std::vector<Index>& horizons) {
  if (horizons.empty()) return {};
  const Index tmax = *std::max_element(horizons.begin(), horizons.end());
  const ProcessModel pm = process_model(cfg, tmax);
  const Index n = cfg.grid.size();
  const TargetedJoint full = model == Model::skm
                                 ? run_selection_targeted(selection_prior_joint(cfg), n, pm)
                                 : run_traditional_targeted(gaussian_prior(cfg), pm);
  const SelectionSet set = selection_set(cfg);

  SummaryConfig scfg;
  scfg.grid_points = cfg.summary.grid_points;
  scfg.support_sd = cfg.summary.support_sd;
  scfg.hdi_mass = cfg.summary.hdi_mass;
  scfg.n_realizations = cfg.summary.n_realizations;
  for (const auto& [i, j] : cfg.summary.monitor) scfg.nodes.push_back(cfg.grid.index(i, j));

  std::vector<InversionResult> out;
  for (Index horizon : horizons) {
    const std::string tag = model_name(model) + "/T" + std::to_string(horizon);
    const TargetedJoint tj = horizon == tmax ? full : full.truncated(horizon);
    const Vector data = stack_observations(observations, horizon);
    scfg.realization_seed = derive_seed(cfg.seed, "realizations/" + tag);
    InversionResult res;
    res.horizon = horizon;
    if (model == Model::skm) {
      ChainConfig chain = cfg.chain;
      chain.seed = derive_seed(cfg.seed, "chain/" + tag);
      res.summary = summarize_posterior(posterior_r0_selection(tj, data, set, chain), scfg);
    } else {
      res.summary = summarize_posterior(posterior_r0_traditional(tj, data), scfg);
    }
    res.rmse = rmse(res.summary.prediction, truth0);
    out.push_back(std::move(res));
  }
  return out;
}

}  // namespace skm::experiment
