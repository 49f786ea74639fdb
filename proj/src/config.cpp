#include "mkvb/config.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <sstream>

#include "mkvb/error.hpp"

namespace mkvb {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ',')) out.push_back(trim(item));
  return out;
}

double parse_real(const std::string& key, const std::string& text) {
  double v = 0.0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ConfigError(key, "'" + key + "' expects a real number, got '" + text + "'");
  }
  return v;
}

std::uint64_t parse_integer(const std::string& key, const std::string& text) {
  std::uint64_t v = 0;
  const char* begin = text.data();
  const char* end = begin + text.size();
  auto [ptr, ec] = std::from_chars(begin, end, v);
  if (ec != std::errc{} || ptr != end || text.empty()) {
    throw ConfigError(key, "'" + key + "' expects a nonnegative integer, got '" + text + "'");
  }
  return v;
}

void load_tree(RunConfig& cfg, const boost::property_tree::ptree& tree) {
  for (const auto& [section, body] : tree) {
    if (body.empty()) {
      throw ConfigError(section, "key '" + section + "' must appear inside a [section]");
    }
    for (const auto& [key, value] : body) cfg.set(section + "." + key, value.data());
  }
}

}  // namespace

const std::vector<ConfigKey>& config_schema() {
  static const std::vector<ConfigKey> schema = {
      {"run.seed", "1", "master seed; the MKVB_SEED environment variable overrides it"},
      {"run.workers", "1", "worker threads, 0 = one per hardware thread"},
      {"run.explosion_cap", "1000000", "abort once more particles have ever been alive"},
      {"run.timing_in_csv", "false", "add wall_ms to iterates.csv (breaks byte-identical reruns)"},
      {"run.export_tree", "0", "replica (or tree) index written to records.csv and traj.csv"},
      {"grid.horizon", "1", "horizon T"},
      {"grid.step", "0.03125", "base step dt; T / dt must be an integer"},
      {"grid.dim", "1", "spatial dimension d"},
      {"model.family", "constant", "constant | logistic | position_coupled"},
      {"model.drift", "0", "constant drift b0, one value or d values"},
      {"model.sigma", "0.5", "diffusion: one value (times identity) or d*d row-major values"},
      {"model.gamma0", "0.5", "base death rate"},
      {"model.gamma_bar", "1", "death-rate cap"},
      {"model.progeny", "0.3,0.3,0.4", "offspring law p_0, p_1, ..."},
      {"model.progeny_mean_cap", "", "M; empty = mean of the offspring law"},
      {"model.coupling", "0.5", "logistic coupling a"},
      {"model.functional", "one", "logistic label function f, e.g. one, tanh, sin@0.5"},
      {"model.kappa", "1", "position_coupled attraction strength"},
      {"model.radius", "2", "position_coupled projection radius"},
      {"initial.count", "0,0.5,0.5", "law of the initial particle count (no mass on 0)"},
      {"initial.law", "normal", "point | normal | uniform"},
      {"initial.center", "0", "position center, one value or d values"},
      {"initial.scale", "1", "position scale"},
      {"simulate.replicas", "1000", "simulate-tree replica count"},
      {"simulate.n", "64", "simulate-n system size"},
      {"simulate.times", "", "population report times; empty = base grid"},
      {"solver.replicas", "256", "replicas R of each Picard iterate"},
      {"solver.tol", "0.01", "W1 stopping tolerance"},
      {"solver.max_iter", "30", "Picard steps per window"},
      {"solver.window", "", "window length T'; empty = none, auto = contraction window"},
      {"solver.mode", "exact", "W1 mode: exact | approx"},
      {"solver.theta", "0.9", "contraction safety factor in (0, 1]"},
      {"solver.c_d", "", "stability constant c_d; empty = heuristic default"},
      {"solver.c_w", "", "stability constant c_w; empty = heuristic default"},
      {"solver.residual_salt", "1", "salt of the independent-source residual"},
      {"transport.exact_threshold", "512", "largest support for exact W1"},
      {"transport.sinkhorn_iterations", "500", "Sinkhorn scaling iterations"},
      {"transport.reg_factor", "0.01", "entropic epsilon as a multiple of the median cost"},
      {"chaos.n_list", "8,32,128,512", "system sizes"},
      {"chaos.system_replicas", "8", "independent systems per size"},
      {"martingale.paths", "10000", "paths per system kind"},
      {"martingale.n", "64", "interacting system size"},
      {"martingale.systems", "frozen,interacting", "system kinds to test"},
      {"martingale.environment", "fixed_point", "frozen environment: fixed_point | initial"},
      {"martingale.substeps", "1", "quadrature subdivisions per knot interval"},
      {"martingale.variance_n", "", "system sizes for the increment-variance study"},
      {"stability.replicas", "1000", "coupled replica pairs per perturbation"},
      {"stability.eps", "0.02,0.04,0.08", "death-rate shifts"},
      {"stability.probes", "256", "probe points for the deviation norms"},
      {"stability.shift", "0", "position shift of the perturbed initial law"},
  };
  return schema;
}

RunConfig::RunConfig() {
  for (const auto& k : config_schema()) values_[k.name] = k.default_value;
}

RunConfig RunConfig::from_file(const std::string& path) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::ini_parser::read_ini(path, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", "cannot read config: " + std::string(e.what()));
  }
  RunConfig cfg;
  load_tree(cfg, tree);
  return cfg;
}

RunConfig RunConfig::from_string(const std::string& text) {
  boost::property_tree::ptree tree;
  std::istringstream is(text);
  try {
    boost::property_tree::ini_parser::read_ini(is, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError("", "cannot parse config: " + std::string(e.what()));
  }
  RunConfig cfg;
  load_tree(cfg, tree);
  return cfg;
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown config key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::apply_override(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) {
    throw ConfigError(assignment, "override '" + assignment + "' must look like section.key=value");
  }
  set(trim(assignment.substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::text(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(key, "unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::real(const std::string& key) const { return parse_real(key, text(key)); }

std::uint64_t RunConfig::integer(const std::string& key) const {
  return parse_integer(key, text(key));
}

bool RunConfig::boolean(const std::string& key) const {
  const auto& v = text(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError(key, "'" + key + "' expects true or false, got '" + v + "'");
}

std::vector<double> RunConfig::reals(const std::string& key) const {
  std::vector<double> out;
  if (text(key).empty()) return out;
  for (const auto& item : split_list(text(key))) out.push_back(parse_real(key, item));
  return out;
}

std::vector<std::size_t> RunConfig::integers(const std::string& key) const {
  std::vector<std::size_t> out;
  if (text(key).empty()) return out;
  for (const auto& item : split_list(text(key))) out.push_back(parse_integer(key, item));
  return out;
}

namespace {

/// Rethrows library argument errors as config errors naming the key.
template <class F>
auto guarded(const std::string& key, F&& f) {
  try {
    return f();
  } catch (const ConfigError&) {
    throw;
  } catch (const InvalidArgument& e) {
    throw ConfigError(key, "'" + key + "': " + e.what());
  }
}

std::vector<double> vector_of(const RunConfig& cfg, const std::string& key, std::size_t dim) {
  auto v = cfg.reals(key);
  if (v.size() == 1 && dim > 1) v.assign(dim, v[0]);
  if (v.size() != dim) throw ConfigError(key, "'" + key + "' needs 1 or d values");
  return v;
}

}  // namespace

SimulationGrid make_grid(const RunConfig& cfg) {
  return guarded("grid.step", [&] { return SimulationGrid(cfg.real("grid.horizon"), cfg.real("grid.step")); });
}

CoefficientPtr make_coefficients(const RunConfig& cfg) {
  const std::size_t dim = cfg.integer("grid.dim");
  if (dim == 0) throw ConfigError("grid.dim", "'grid.dim' must be positive");
  const auto drift = vector_of(cfg, "model.drift", dim);
  auto sigma = cfg.reals("model.sigma");
  if (sigma.size() == 1) {
    sigma = scaled_identity(dim, sigma[0]);
  } else if (sigma.size() != dim * dim) {
    throw ConfigError("model.sigma", "'model.sigma' needs 1 or d*d values");
  }
  const auto progeny = cfg.reals("model.progeny");
  guarded("model.progeny", [&] { return CountingDistribution(progeny); });
  const double gamma0 = cfg.real("model.gamma0");
  const double gamma_bar = cfg.real("model.gamma_bar");
  const double cap = cfg.is_set("model.progeny_mean_cap") ? cfg.real("model.progeny_mean_cap") : -1.0;
  const auto& family = cfg.text("model.family");
  return guarded("model.family", [&]() -> CoefficientPtr {
    if (family == "constant") {
      return std::make_shared<ConstantCoefficients>(dim, drift, sigma, gamma0, progeny, gamma_bar, cap);
    }
    if (family == "logistic") {
      const auto f = guarded("model.functional",
                             [&] { return LabelFunction::parse(cfg.text("model.functional")); });
      return std::make_shared<MeanFieldLogistic>(dim, drift, sigma, gamma0, cfg.real("model.coupling"),
                                                 f, progeny, gamma_bar, cap);
    }
    if (family == "position_coupled") {
      return std::make_shared<PositionCoupled>(dim, cfg.real("model.kappa"), cfg.real("model.radius"),
                                               sigma, gamma0, progeny, gamma_bar, cap);
    }
    throw ConfigError("model.family", "unknown family '" + family + "'");
  });
}

InitialCondition make_initial_condition(const RunConfig& cfg) {
  const std::size_t dim = cfg.integer("grid.dim");
  const auto center = vector_of(cfg, "initial.center", dim);
  const auto law = guarded("initial.law", [&] { return parse_position_law(cfg.text("initial.law")); });
  return guarded("initial.count", [&] {
    return InitialCondition::random(CountingDistribution(cfg.reals("initial.count")), law, center,
                                    cfg.real("initial.scale"));
  });
}

SimulationOptions make_simulation_options(const RunConfig& cfg) {
  SimulationOptions o;
  o.explosion_cap = cfg.integer("run.explosion_cap");
  o.workers = cfg.integer("run.workers");
  return o;
}

W1Options make_w1_options(const RunConfig& cfg) {
  W1Options o;
  o.exact_threshold = cfg.integer("transport.exact_threshold");
  o.sinkhorn_iterations = cfg.integer("transport.sinkhorn_iterations");
  o.reg_factor = cfg.real("transport.reg_factor");
  o.workers = cfg.integer("run.workers");
  return o;
}

}  // namespace mkvb
