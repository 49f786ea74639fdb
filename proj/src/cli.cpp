#include "mkvb/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <json.hpp>
#include <sstream>

#include "mkvb/config.hpp"
#include "mkvb/diagnostics.hpp"
#include "mkvb/error.hpp"
#include "mkvb/solver.hpp"
#include "mkvb/version.hpp"

namespace mkvb::cli {

namespace {

using nlohmann::json;

/// Salts separating the derived sources of one run.
constexpr std::uint64_t kEnvironmentSalt = 0xe1;
constexpr std::uint64_t kFrozenSampleSalt = 0xf2;
constexpr std::uint64_t kSystemSalt = 0x5a;
constexpr std::uint64_t kChaosSalt = 0xc3;

class NumericalGuard : public Error {
 public:
  using Error::Error;
};

struct Context {
  RunConfig cfg;
  std::string command;
  std::filesystem::path out;
  RandomnessSource rng{0};
  json manifest = json::object();
  json results = json::object();
  std::vector<std::string> outputs;
};

void write_file(Context& ctx, const std::string& name, const std::string& content) {
  std::ofstream os(ctx.out / name, std::ios::binary);
  if (!os) throw Error("cannot write " + (ctx.out / name).string());
  os << content;
  ctx.outputs.push_back(name);
}

std::string real(double v) { return format_real(v); }

json bounds_json(const CoefficientBounds& b) {
  return {{"gamma_bar", b.gamma_bar},
          {"progeny_mean_cap", b.progeny_mean_cap},
          {"drift_sup", b.drift_sup},
          {"diffusion_sup", b.diffusion_sup},
          {"lipschitz", b.lipschitz},
          {"progeny_lipschitz", b.progeny_lipschitz}};
}

void describe_model(Context& ctx, const CoefficientSet& c, const InitialCondition& ic,
                    const SimulationGrid& grid) {
  json params = json::object();
  for (const auto& [k, v] : c.parameters()) params[k] = v;
  ctx.manifest["model"] = {{"family", c.family()},
                           {"dim", c.dim()},
                           {"parameters", params},
                           {"bounds", bounds_json(c.bounds())},
                           {"initial_condition", ic.describe()}};
  ctx.manifest["grid"] = {{"horizon", grid.horizon()}, {"step", grid.step()}, {"steps", grid.steps()}};
  ctx.manifest["explosion_cap"] = ctx.cfg.integer("run.explosion_cap");
  const auto w1 = make_w1_options(ctx.cfg);
  ctx.manifest["transport"] = {{"exact_threshold", w1.exact_threshold},
                               {"sinkhorn_iterations", w1.sinkhorn_iterations},
                               {"reg_factor", w1.reg_factor}};
}

std::vector<double> report_times(const RunConfig& cfg, const SimulationGrid& grid) {
  auto times = cfg.reals("simulate.times");
  if (times.empty()) return grid.times();
  for (double t : times) {
    if (!(t >= 0.0 && t <= grid.horizon())) {
      throw ConfigError("simulate.times", "'simulate.times' must lie in [0, T]");
    }
  }
  return times;
}

void write_population(Context& ctx, std::span<const TreePath> paths, const SimulationGrid& grid) {
  const auto times = report_times(ctx.cfg, grid);
  const auto stats = population_statistics(paths, times);
  std::ostringstream os;
  os << "t,mean,se,replicas\n";
  for (std::size_t i = 0; i < times.size(); ++i) {
    os << real(times[i]) << ',' << real(stats.mean[i]) << ',' << real(stats.standard_error[i]) << ','
       << paths.size() << '\n';
  }
  write_file(ctx, "population.csv", os.str());
}

void write_tree(Context& ctx, std::span<const TreePath> paths) {
  const std::size_t index = ctx.cfg.integer("run.export_tree");
  if (index >= paths.size()) {
    throw ConfigError("run.export_tree", "'run.export_tree' exceeds the number of trees");
  }
  std::ostringstream records, traj;
  write_records_csv(records, paths[index]);
  write_trajectory_csv(traj, paths[index]);
  write_file(ctx, "records.csv", records.str());
  write_file(ctx, "traj.csv", traj.str());
}

double mean_total_ever_alive(std::span<const TreePath> paths) {
  double s = 0.0;
  for (const auto& p : paths) s += static_cast<double>(total_ever_alive(p));
  return s / static_cast<double>(paths.size());
}

/// Frozen environment for single-tree commands: the no-motion law of the
/// initial condition.
EnvironmentMeasure initial_environment(const Context& ctx, const InitialCondition& ic,
                                       const SimulationGrid& grid, std::size_t size) {
  return frozen_initial_law(ic, grid.horizon(), ctx.rng.derive(kEnvironmentSalt), size);
}

// ---------------------------------------------------------------------------

int cmd_simulate_tree(Context& ctx) {
  const auto grid = make_grid(ctx.cfg);
  const auto c = make_coefficients(ctx.cfg);
  const auto ic = make_initial_condition(ctx.cfg);
  describe_model(ctx, *c, ic, grid);
  const std::size_t replicas = ctx.cfg.integer("simulate.replicas");
  if (replicas == 0) throw ConfigError("simulate.replicas", "'simulate.replicas' must be positive");
  ctx.manifest["replicas"] = replicas;
  const auto env = initial_environment(ctx, ic, grid, std::min<std::size_t>(replicas, 256));
  const auto paths = simulate_replicas(ic, *c, env, grid, ctx.rng, replicas, make_simulation_options(ctx.cfg));
  write_population(ctx, paths, grid);
  write_tree(ctx, paths);
  ctx.results["mean_total_ever_alive"] = mean_total_ever_alive(paths);
  return kSuccess;
}

int cmd_simulate_n(Context& ctx) {
  const auto grid = make_grid(ctx.cfg);
  const auto c = make_coefficients(ctx.cfg);
  const auto ic = make_initial_condition(ctx.cfg);
  describe_model(ctx, *c, ic, grid);
  const std::size_t n = ctx.cfg.integer("simulate.n");
  if (n == 0) throw ConfigError("simulate.n", "'simulate.n' must be positive");
  ctx.manifest["n"] = n;
  const auto paths = simulate_interacting(n, ic, *c, grid, ctx.rng, make_simulation_options(ctx.cfg));
  write_population(ctx, paths, grid);
  write_tree(ctx, paths);
  ctx.results["mean_total_ever_alive"] = mean_total_ever_alive(paths);
  return kSuccess;
}

struct Solved {
  PicardState state;
  PicardProblem problem;
};

std::optional<ContractionWindow> contraction_for(Context& ctx, const CoefficientSet& c,
                                                 const InitialCondition& ic, const SimulationGrid& grid) {
  try {
    auto budget = default_budget(c.bounds(), ic.mean_count(), grid.horizon());
    if (ctx.cfg.is_set("solver.c_d")) budget.c_d = ctx.cfg.real("solver.c_d");
    if (ctx.cfg.is_set("solver.c_w")) budget.c_w = ctx.cfg.real("solver.c_w");
    const bool heuristic = !ctx.cfg.is_set("solver.c_d") || !ctx.cfg.is_set("solver.c_w");
    const auto w = contraction_window(budget, ctx.cfg.real("solver.theta"));
    ctx.results["contraction"] = {{"window", w.window},   {"kappa", w.kappa},
                                  {"c_d", budget.c_d},    {"c_w", budget.c_w},
                                  {"growth", budget.growth()}, {"rigorous", !heuristic}};
    return w;
  } catch (const InvalidArgument& e) {
    ctx.results["contraction"] = {{"unavailable", e.what()}};
    return std::nullopt;
  }
}

Solved solve(Context& ctx, const CoefficientSet& c, const InitialCondition& ic,
             const SimulationGrid& grid, bool write_iterates) {
  const std::size_t replicas = ctx.cfg.integer("solver.replicas");
  if (replicas < 2) throw ConfigError("solver.replicas", "'solver.replicas' must be at least 2");
  PicardProblem problem{&ic, &c, grid, ctx.rng, replicas, make_simulation_options(ctx.cfg)};
  SolverOptions options;
  options.tol = ctx.cfg.real("solver.tol");
  if (!(options.tol > 0.0)) throw ConfigError("solver.tol", "'solver.tol' must be positive");
  options.max_iter = ctx.cfg.integer("solver.max_iter");
  if (options.max_iter == 0) throw ConfigError("solver.max_iter", "'solver.max_iter' must be positive");
  options.mode = [&] {
    try {
      return parse_w1_mode(ctx.cfg.text("solver.mode"));
    } catch (const InvalidArgument& e) {
      throw ConfigError("solver.mode", e.what());
    }
  }();
  options.w1 = make_w1_options(ctx.cfg);
  const auto contraction = contraction_for(ctx, c, ic, grid);
  const auto& window = ctx.cfg.text("solver.window");
  if (window == "auto") {
    if (!contraction) throw ConfigError("solver.window", "contraction window unavailable for this model");
    options.window = contraction->window;
  } else if (!window.empty()) {
    options.window = ctx.cfg.real("solver.window");
    if (!(*options.window > 0.0)) throw ConfigError("solver.window", "'solver.window' must be positive");
  }
  ctx.manifest["solver"] = {{"replicas", replicas},
                            {"tol", options.tol},
                            {"max_iter", options.max_iter},
                            {"mode", to_string(options.mode)},
                            {"window", options.window ? json(*options.window) : json(nullptr)}};

  const auto initial = frozen_initial_law(ic, grid.horizon(), ctx.rng, replicas);
  auto state = solve_fixed_point(initial, problem, options);

  if (write_iterates) {
    const bool timing = ctx.cfg.boolean("run.timing_in_csv");
    std::ostringstream os;
    os << "iter,window,w1_to_prev" << (timing ? ",wall_ms" : "") << '\n';
    for (std::size_t i = 0; i < state.history.size(); ++i) {
      const auto& h = state.history[i];
      os << (i + 1) << ',' << h.window << ',' << real(h.distance);
      if (timing) os << ',' << real(h.wall_ms);
      os << '\n';
    }
    write_file(ctx, "iterates.csv", os.str());
  }
  json wall = json::array();
  for (const auto& h : state.history) wall.push_back(h.wall_ms);
  const double residual = independent_residual(state.current, problem,
                                               ctx.cfg.integer("solver.residual_salt"), options.mode,
                                               options.w1);
  ctx.results["fixed_point"] = {{"converged", state.converged},
                                {"iterations", state.iterations},
                                {"final_distance", state.history.back().distance},
                                {"window_ends", state.window_ends},
                                {"independent_residual", residual},
                                {"iterate_wall_ms", wall}};
  return {std::move(state), problem};
}

void require_converged(const Solved& s) {
  if (!s.state.converged) throw NumericalGuard("Picard iteration did not reach the tolerance");
}

int cmd_solve_mkv(Context& ctx) {
  const auto grid = make_grid(ctx.cfg);
  const auto c = make_coefficients(ctx.cfg);
  const auto ic = make_initial_condition(ctx.cfg);
  describe_model(ctx, *c, ic, grid);
  auto solved = solve(ctx, *c, ic, grid, true);
  std::vector<TreePath> paths;
  for (std::size_t i = 0; i < solved.state.current.size(); ++i) paths.push_back(solved.state.current.path(i));
  write_population(ctx, paths, grid);
  require_converged(solved);
  return kSuccess;
}

int cmd_chaos_study(Context& ctx) {
  const auto grid = make_grid(ctx.cfg);
  const auto c = make_coefficients(ctx.cfg);
  const auto ic = make_initial_condition(ctx.cfg);
  describe_model(ctx, *c, ic, grid);
  const auto n_list = ctx.cfg.integers("chaos.n_list");
  if (n_list.empty()) throw ConfigError("chaos.n_list", "'chaos.n_list' must not be empty");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] == 0 || (i > 0 && n_list[i] <= n_list[i - 1])) {
      throw ConfigError("chaos.n_list", "'chaos.n_list' must be positive and strictly increasing");
    }
  }
  auto solved = solve(ctx, *c, ic, grid, true);
  require_converged(solved);
  ChaosOptions options;
  options.system_replicas = ctx.cfg.integer("chaos.system_replicas");
  if (options.system_replicas == 0) {
    throw ConfigError("chaos.system_replicas", "'chaos.system_replicas' must be positive");
  }
  options.w1 = make_w1_options(ctx.cfg);
  options.simulation = make_simulation_options(ctx.cfg);
  const auto rows = chaos_study(n_list, solved.state.current, ic, *c, grid, ctx.rng.derive(kChaosSalt), options);
  std::ostringstream table, scatter;
  table << "n,w1_mean,w1_se,replicas\n";
  scatter << "n,replica,w1\n";
  for (const auto& row : rows) {
    table << row.n << ',' << real(row.w1_mean) << ',' << real(row.w1_se) << ',' << row.replicas << '\n';
    for (std::size_t r = 0; r < row.values.size(); ++r) {
      scatter << row.n << ',' << r << ',' << real(row.values[r]) << '\n';
    }
  }
  write_file(ctx, "chaos.csv", table.str());
  write_file(ctx, "chaos_replicas.csv", scatter.str());
  return kSuccess;
}

int cmd_diagnose_martingale(Context& ctx) {
  const auto grid = make_grid(ctx.cfg);
  const auto c = make_coefficients(ctx.cfg);
  const auto ic = make_initial_condition(ctx.cfg);
  describe_model(ctx, *c, ic, grid);
  const std::size_t paths = ctx.cfg.integer("martingale.paths");
  const std::size_t n = ctx.cfg.integer("martingale.n");
  if (paths == 0) throw ConfigError("martingale.paths", "'martingale.paths' must be positive");
  if (n == 0) throw ConfigError("martingale.n", "'martingale.n' must be positive");
  const std::size_t substeps = ctx.cfg.integer("martingale.substeps");
  if (substeps == 0) throw ConfigError("martingale.substeps", "'martingale.substeps' must be positive");
  const auto sim = make_simulation_options(ctx.cfg);
  auto battery = default_battery(grid.horizon());
  for (auto& spec : battery) spec.substeps = substeps;

  std::vector<std::string> kinds;
  {
    std::stringstream ss(ctx.cfg.text("martingale.systems"));
    std::string item;
    while (std::getline(ss, item, ',')) {
      item.erase(0, item.find_first_not_of(' '));
      item.erase(item.find_last_not_of(' ') + 1);
      if (item != "frozen" && item != "interacting") {
        throw ConfigError("martingale.systems", "unknown system kind '" + item + "'");
      }
      kinds.push_back(item);
    }
  }
  if (kinds.empty()) throw ConfigError("martingale.systems", "'martingale.systems' must not be empty");

  std::ostringstream os;
  os << "system,phi_id,h_id,s,t,value,se,z\n";
  auto emit = [&](const std::string& kind, std::span<const MartingaleGroup> groups) {
    for (const auto& spec : battery) {
      const auto r = martingale_statistic(spec, groups, *c, grid, sim.workers);
      os << kind << ',' << spec.fn.outer.name() << '|' << spec.fn.inner.name() << ','
         << spec.h.name << ',' << real(spec.s) << ',' << real(spec.t) << ',' << real(r.value) << ','
         << real(r.standard_error) << ',' << real(r.z) << '\n';
    }
  };
  for (const auto& kind : kinds) {
    if (kind == "frozen") {
      const auto& source = ctx.cfg.text("martingale.environment");
      EnvironmentMeasure env = [&] {
        if (source == "fixed_point") {
          auto solved = solve(ctx, *c, ic, grid, false);
          require_converged(solved);
          return solved.state.current;
        }
        if (source == "initial") return initial_environment(ctx, ic, grid, 256);
        throw ConfigError("martingale.environment", "unknown environment '" + source + "'");
      }();
      const auto sample = simulate_replicas(ic, *c, env, grid, ctx.rng.derive(kFrozenSampleSalt), paths, sim);
      const std::vector<MartingaleGroup> groups{{sample, env}};
      emit(kind, groups);
    } else {
      std::vector<std::vector<TreePath>> systems;
      const std::size_t count = (paths + n - 1) / n;
      for (std::size_t r = 0; r < count; ++r) {
        systems.push_back(simulate_interacting(n, ic, *c, grid, ctx.rng.derive(kSystemSalt + r), sim));
      }
      std::vector<MartingaleGroup> groups;
      for (const auto& s : systems) groups.push_back({s, EnvironmentMeasure(s)});
      emit(kind, groups);
    }
  }
  write_file(ctx, "battery.csv", os.str());

  const auto sizes = ctx.cfg.integers("martingale.variance_n");
  if (!sizes.empty()) {
    std::ostringstream var;
    var << "n,systems,mean,variance,n_variance\n";
    const auto& spec = battery.front();
    for (std::size_t size : sizes) {
      if (size == 0) throw ConfigError("martingale.variance_n", "system sizes must be positive");
      const std::size_t count = std::max<std::size_t>(2, paths / size);
      std::vector<double> averages;
      for (std::size_t r = 0; r < count; ++r) {
        const auto system = simulate_interacting(size, ic, *c, grid,
                                                 ctx.rng.derive(kSystemSalt ^ (size << 32) ^ r), sim);
        const std::vector<MartingaleGroup> group{{system, EnvironmentMeasure(system)}};
        const auto inc = martingale_increments(spec, group, *c, grid, sim.workers);
        double s = 0.0;
        for (double v : inc) s += v;
        averages.push_back(s / static_cast<double>(inc.size()));
      }
      const auto summary = summarize_increments(averages, "");
      const double variance = summary.standard_error * summary.standard_error *
                              static_cast<double>(averages.size());
      var << size << ',' << count << ',' << real(summary.value) << ',' << real(variance) << ','
          << real(variance * static_cast<double>(size)) << '\n';
    }
    write_file(ctx, "variance.csv", var.str());
  }
  return kSuccess;
}

int cmd_stability(Context& ctx) {
  const auto grid = make_grid(ctx.cfg);
  const auto c = make_coefficients(ctx.cfg);
  const auto ic = make_initial_condition(ctx.cfg);
  describe_model(ctx, *c, ic, grid);
  StabilityOptions options;
  options.replicas = ctx.cfg.integer("stability.replicas");
  options.probes = ctx.cfg.integer("stability.probes");
  options.simulation = make_simulation_options(ctx.cfg);
  if (options.replicas == 0) throw ConfigError("stability.replicas", "'stability.replicas' must be positive");
  const std::vector<double> shift(ic.dim(), ctx.cfg.real("stability.shift"));
  const auto ic2 = ic.shifted(shift);
  const auto env = initial_environment(ctx, ic, grid, 256);
  std::vector<double> eps{0.0};
  for (double e : ctx.cfg.reals("stability.eps")) {
    if (!(e >= 0.0)) throw ConfigError("stability.eps", "'stability.eps' entries must be nonnegative");
    eps.push_back(e);
  }
  std::ostringstream os;
  os << "eps,lhs,se,term_b,term_sigma,term_gamma,term_p,term_init\n";
  for (double e : eps) {
    const auto perturbed = e == 0.0 ? c : std::make_shared<ShiftedDeathRate>(c, e);
    const auto r = stability_experiment(*c, *perturbed, ic, ic2, env, grid, ctx.rng, options);
    os << real(e) << ',' << real(r.lhs) << ',' << real(r.lhs_se) << ',' << real(r.term_b) << ','
       << real(r.term_sigma) << ',' << real(r.term_gamma) << ',' << real(r.term_p) << ','
       << real(r.term_init) << '\n';
  }
  write_file(ctx, "stability.csv", os.str());
  return kSuccess;
}

// ---------------------------------------------------------------------------
// Selftest: the quick example suite.

std::vector<std::pair<std::string, std::function<bool()>>> selftest_checks() {
  using Checks = std::vector<std::pair<std::string, std::function<bool()>>>;
  auto bbm = [] {
    return std::make_shared<ConstantCoefficients>(1, std::vector<double>{0.1}, std::vector<double>{0.7},
                                                  1.5, std::vector<double>{0.3, 0.2, 0.5}, 2.0);
  };
  auto ic = [] {
    return InitialCondition::random(CountingDistribution({0.0, 0.5, 0.5}),
                                    InitialCondition::PositionLaw::normal, {0.0}, 1.0);
  };
  auto pool = [bbm, ic](std::size_t n, std::uint64_t seed) {
    const auto init = ic();
    const SimulationGrid grid(1.0, 1.0 / 16);
    return simulate_replicas(init, *bbm(), frozen_initial_law(init, 1.0, RandomnessSource(1), 2), grid,
                             RandomnessSource(seed), n);
  };
  return Checks{
      {"empty configuration has zero distance to itself",
       [] { return config_distance(ParticleConfiguration(1), ParticleConfiguration(1)) == 0.0; }},
      {"label distance counts the symmetric difference",
       [] {
         ParticleConfiguration a(1, {{Label{1}, {0.0}}});
         ParticleConfiguration b(1, {{Label{2}, {0.0}}});
         return config_distance(a, b) == 2.0;
       }},
      {"w1 on counts vanishes on identical laws",
       [] {
         CountingDistribution p({0.2, 0.3, 0.5});
         return w1_counting(p, p) == 0.0 && w1_counting_via_intervals(p, p) == 0.0;
       }},
      {"dirac counts are at distance |l - l'|",
       [] { return w1_counting(CountingDistribution::dirac(0), CountingDistribution::dirac(3)) == 3.0; }},
      {"path distance to itself is zero",
       [pool] {
         auto p = pool(3, 4);
         return path_distance(p[0], p[0]) == 0.0 && path_distance(p[0], p[1]) == path_distance(p[1], p[0]);
       }},
      {"pushforwards compose by the smaller stop time",
       [pool] {
         EnvironmentMeasure m(pool(4, 5));
         return pushforward(pushforward(m, 0.7), 0.4).stop_time() == 0.4;
       }},
      {"exact w1 of a measure with itself is zero",
       [pool] {
         EnvironmentMeasure m(pool(6, 6));
         return w1_paths(m, m, W1Mode::exact).value == 0.0;
       }},
      {"reruns are bit-identical across worker counts",
       [bbm, ic] {
         const auto init = ic();
         const SimulationGrid grid(1.0, 1.0 / 16);
         const auto env = frozen_initial_law(init, 1.0, RandomnessSource(1), 2);
         SimulationOptions one, two;
         two.workers = 2;
         auto a = simulate_replicas(init, *bbm(), env, grid, RandomnessSource(9), 8, one);
         auto b = simulate_replicas(init, *bbm(), env, grid, RandomnessSource(9), 8, two);
         for (std::size_t i = 0; i < a.size(); ++i) {
           if (path_distance(a[i], b[i]) != 0.0 || a[i].grid() != b[i].grid()) return false;
         }
         return true;
       }},
      {"interacting system without interaction equals independent trees",
       [bbm, ic] {
         const auto init = ic();
         const SimulationGrid grid(1.0, 1.0 / 16);
         const RandomnessSource rng(11);
         auto sys = simulate_interacting(5, init, *bbm(), grid, rng);
         const auto env = frozen_initial_law(init, 1.0, rng, 2);
         for (std::size_t i = 0; i < sys.size(); ++i) {
           if (path_distance(sys[i], simulate_tree(init, *bbm(), env, grid, rng, i)) != 0.0) return false;
         }
         return true;
       }},
      {"picard step ignores the environment without interaction",
       [bbm, ic, pool] {
         const auto init = ic();
         const auto c = bbm();
         PicardProblem p{&init, c.get(), SimulationGrid(1.0, 1.0 / 16), RandomnessSource(3), 6, {}};
         auto a = picard_step(frozen_initial_law(init, 1.0, p.rng, 6), p);
         auto b = picard_step(EnvironmentMeasure(pool(3, 12)), p);
         return a.size() == 6 && w1_paths(a, b, W1Mode::exact).value == 0.0;
       }},
      {"solve without interaction converges in two steps",
       [bbm, ic] {
         const auto init = ic();
         const auto c = bbm();
         PicardProblem p{&init, c.get(), SimulationGrid(1.0, 1.0 / 16), RandomnessSource(3), 8, {}};
         auto s = solve_fixed_point(frozen_initial_law(init, 1.0, p.rng, 8), p);
         return s.converged && s.iterations == 2 && s.history[1].distance == 0.0;
       }},
      {"infinite tolerance stops after one step",
       [bbm, ic] {
         const auto init = ic();
         const auto c = bbm();
         PicardProblem p{&init, c.get(), SimulationGrid(1.0, 1.0 / 16), RandomnessSource(3), 4, {}};
         SolverOptions o;
         o.tol = kInfinity;
         return solve_fixed_point(frozen_initial_law(init, 1.0, p.rng, 4), p, o).iterations == 1;
       }},
      {"contraction window solves r^2 + r = 1/2",
       [] {
         ContractionBudget b;
         b.gamma_bar = 0.0;
         const auto w = contraction_window(b, 1.0);
         const double r = (std::sqrt(3.0) - 1.0) / 2.0;
         return std::abs(w.window - r * r) < 1e-9 && std::abs(w.kappa - 1.0) < 1e-9;
       }},
      {"generator vanishes without motion or deaths",
       [] {
         ConstantCoefficients still(1, {0.0}, {0.0}, 0.0, {1.0}, 1.0);
         ParticleConfiguration e(1, {{Label{1}, {0.3}}});
         const auto path = frozen_path(e, 1.0);
         const TestFunctionPair fn{ScalarFunction::parse("sin"), LabelFunction::parse("gauss")};
         return generator(fn, 0.5, path, EnvironmentMeasure({path}), still) == 0.0;
       }},
      {"martingale statistic with h = 0 is zero",
       [bbm, pool] {
         auto paths = pool(10, 13);
         const auto env = EnvironmentMeasure({paths[0]});
         const std::vector<MartingaleGroup> groups{{paths, env}};
         const MartingaleSpec spec{{ScalarFunction::parse("x"), LabelFunction::parse("one")},
                                   PathFunctional::parse("zero"), 0.0, 1.0, 1};
         const auto r = martingale_statistic(spec, groups, *bbm(), SimulationGrid(1.0, 1.0 / 16));
         return r.value == 0.0 && r.standard_error == 0.0;
       }},
      {"identical coupled systems are at distance zero",
       [bbm, ic] {
         const auto init = ic();
         const auto c = bbm();
         StabilityOptions o;
         o.replicas = 20;
         o.probes = 5;
         const auto r = stability_experiment(*c, *c, init, init, frozen_initial_law(init, 1.0, RandomnessSource(2), 2),
                                             SimulationGrid(1.0, 1.0 / 16), RandomnessSource(7), o);
         return r.lhs == 0.0 && r.term_gamma == 0.0;
       }},
  };
}

int cmd_selftest(Context& ctx) {
  std::ostringstream os;
  os << "check,status\n";
  int failures = 0;
  for (const auto& [name, check] : selftest_checks()) {
    bool ok = false;
    try {
      ok = check();
    } catch (const std::exception& e) {
      ok = false;
    }
    if (!ok) ++failures;
    std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    os << '"' << name << "\"," << (ok ? "pass" : "fail") << '\n';
  }
  write_file(ctx, "selftest.csv", os.str());
  ctx.results["failures"] = failures;
  return failures == 0 ? kSuccess : kSelftestFailed;
}

// ---------------------------------------------------------------------------

void emit_error(int code, const std::string& kind, const std::string& message,
                const std::string& key = "") {
  json line = {{"level", "error"}, {"exit_code", code}, {"kind", kind}, {"message", message}};
  if (!key.empty()) line["key"] = key;
  std::cerr << line.dump() << std::endl;
}

}  // namespace

int run(const std::vector<std::string>& args) {
  CLI::App app{"Branching diffusions with mean-field interaction", "mkvb"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  std::string config_path, out_dir = "mkvb-out";
  std::vector<std::string> overrides;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;

  const std::vector<std::pair<std::string, std::string>> commands = {
      {"simulate-tree", "independent trees under the initial frozen environment"},
      {"solve-mkv", "Picard iteration for the self-consistent law"},
      {"simulate-n", "one n-interacting system"},
      {"chaos-study", "W1 between n-interacting systems and the fixed point"},
      {"diagnose-martingale", "martingale battery on frozen and interacting systems"},
      {"stability", "coupled runs under death-rate perturbations"},
      {"selftest", "quick example suite"},
  };
  for (const auto& [name, help] : commands) {
    auto* sub = app.add_subcommand(name, help);
    sub->add_option("-c,--config", config_path, "INI configuration file");
    sub->add_option("-o,--out", out_dir, "output directory");
    sub->add_option("-s,--set", overrides, "override, e.g. --set grid.step=0.01");
    sub->add_option("--seed", seed, "master seed (overrides config and MKVB_SEED)");
    sub->add_option("-w,--workers", workers, "worker threads, 0 = auto");
  }

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp& e) {
    std::cout << app.help();
    return kSuccess;
  } catch (const CLI::CallForVersion&) {
    std::cout << kVersion << '\n';
    return kSuccess;
  } catch (const CLI::ParseError& e) {
    emit_error(kConfigError, "usage", e.what());
    return kConfigError;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  const auto start = std::chrono::steady_clock::now();
  Context ctx;
  ctx.command = command;
  try {
    if (!config_path.empty()) ctx.cfg = RunConfig::from_file(config_path);
    if (const char* env = std::getenv("MKVB_SEED")) ctx.cfg.set("run.seed", env);
    for (const auto& o : overrides) ctx.cfg.apply_override(o);
    if (seed) ctx.cfg.set("run.seed", std::to_string(*seed));
    if (workers) ctx.cfg.set("run.workers", std::to_string(*workers));
    ctx.rng = RandomnessSource(ctx.cfg.integer("run.seed"));
    ctx.cfg.integer("run.workers");
    ctx.out = out_dir;
    std::filesystem::create_directories(ctx.out);
  } catch (const ConfigError& e) {
    emit_error(kConfigError, "config", e.what(), e.key());
    return kConfigError;
  } catch (const std::exception& e) {
    emit_error(kConfigError, "config", e.what());
    return kConfigError;
  }

  int code = kSuccess;
  std::string failure;
  try {
    if (command == "simulate-tree") code = cmd_simulate_tree(ctx);
    else if (command == "solve-mkv") code = cmd_solve_mkv(ctx);
    else if (command == "simulate-n") code = cmd_simulate_n(ctx);
    else if (command == "chaos-study") code = cmd_chaos_study(ctx);
    else if (command == "diagnose-martingale") code = cmd_diagnose_martingale(ctx);
    else if (command == "stability") code = cmd_stability(ctx);
    else code = cmd_selftest(ctx);
    if (code == kSelftestFailed) {
      failure = "selftest failed";
      emit_error(code, "selftest", std::to_string(ctx.results["failures"].get<int>()) + " checks failed");
    }
  } catch (const ConfigError& e) {
    emit_error(kConfigError, "config", e.what(), e.key());
    return kConfigError;
  } catch (const NumericalGuard& e) {
    code = kNumericalGuard;
    failure = e.what();
    emit_error(code, "non_convergence", e.what());
  } catch (const ExplosionError& e) {
    code = kNumericalGuard;
    failure = e.what();
    emit_error(code, "explosion", e.what());
  } catch (const BoundViolation& e) {
    code = kNumericalGuard;
    failure = e.what();
    emit_error(code, "bound_violation", e.what());
  } catch (const InvalidArgument& e) {
    emit_error(kConfigError, "invalid_argument", e.what());
    return kConfigError;
  } catch (const std::exception& e) {
    emit_error(kInternalError, "internal", e.what());
    return kInternalError;
  }

  ctx.manifest["version"] = kVersion;
  ctx.manifest["csv_schema"] = kCsvSchemaVersion;
  ctx.manifest["command"] = command;
  ctx.manifest["seed"] = ctx.cfg.integer("run.seed");
  ctx.manifest["workers"] = ctx.cfg.integer("run.workers");
  json config = json::object();
  for (const auto& [k, v] : ctx.cfg.values()) config[k] = v;
  ctx.manifest["config"] = config;
  ctx.manifest["results"] = ctx.results;
  ctx.manifest["outputs"] = ctx.outputs;
  ctx.manifest["exit_code"] = code;
  if (!failure.empty()) ctx.manifest["failure"] = failure;
  ctx.manifest["wall_ms"] =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  try {
    std::ofstream os(ctx.out / "manifest.json");
    os << ctx.manifest.dump(2) << '\n';
  } catch (const std::exception& e) {
    emit_error(kInternalError, "internal", e.what());
    return kInternalError;
  }
  return code;
}

int run(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args);
}

}  // namespace mkvb::cli
