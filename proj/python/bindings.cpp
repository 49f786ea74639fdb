#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "mkvb/cli.hpp"
#include "mkvb/config.hpp"
#include "mkvb/engine.hpp"
#include "mkvb/error.hpp"
#include "mkvb/solver.hpp"
#include "mkvb/transport.hpp"
#include "mkvb/version.hpp"

namespace py = pybind11;

namespace {

mkvb::RunConfig config_from(const std::map<std::string, std::string>& overrides) {
  mkvb::RunConfig cfg;
  for (const auto& [k, v] : overrides) cfg.set(k, v);
  return cfg;
}

py::dict simulate_population(const std::map<std::string, std::string>& overrides,
                             const std::vector<double>& times) {
  const auto cfg = config_from(overrides);
  const auto grid = mkvb::make_grid(cfg);
  const auto c = mkvb::make_coefficients(cfg);
  const auto ic = mkvb::make_initial_condition(cfg);
  const mkvb::RandomnessSource rng(cfg.integer("run.seed"));
  const auto env = mkvb::frozen_initial_law(ic, grid.horizon(), rng.derive(0xe1), 256);
  std::vector<mkvb::TreePath> paths;
  {
    py::gil_scoped_release release;
    paths = mkvb::simulate_replicas(ic, *c, env, grid, rng, cfg.integer("simulate.replicas"),
                                    mkvb::make_simulation_options(cfg));
  }
  const auto stats = mkvb::population_statistics(paths, times);
  py::dict out;
  out["t"] = stats.times;
  out["mean"] = stats.mean;
  out["se"] = stats.standard_error;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Branching diffusions with mean-field interaction";
  m.attr("__version__") = mkvb::kVersion;
  m.attr("csv_schema_version") = mkvb::kCsvSchemaVersion;

  py::register_exception<mkvb::ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<mkvb::InvalidArgument>(m, "InvalidArgument", PyExc_ValueError);

  m.def(
      "run",
      [](const std::vector<std::string>& args) {
        py::gil_scoped_release release;
        return mkvb::cli::run(args);
      },
      py::arg("args"), "Runs a CLI command (without the program name) and returns its exit code.");

  m.def(
      "config_schema",
      [] {
        std::vector<std::tuple<std::string, std::string, std::string>> out;
        for (const auto& k : mkvb::config_schema()) out.emplace_back(k.name, k.default_value, k.description);
        return out;
      },
      "Accepted configuration keys as (name, default, description).");

  m.def(
      "w1_counting",
      [](std::vector<double> p, std::vector<double> q) {
        return mkvb::w1_counting(mkvb::CountingDistribution(std::move(p)), mkvb::CountingDistribution(std::move(q)));
      },
      py::arg("p"), py::arg("q"));
  m.def(
      "w1_counting_via_intervals",
      [](std::vector<double> p, std::vector<double> q) {
        return mkvb::w1_counting_via_intervals(mkvb::CountingDistribution(std::move(p)),
                                               mkvb::CountingDistribution(std::move(q)));
      },
      py::arg("p"), py::arg("q"));

  m.def("linear_branching_mean", &mkvb::linear_branching_mean, py::arg("n0"), py::arg("gamma0"),
        py::arg("progeny_mean"), py::arg("t"));

  m.def(
      "contraction_window",
      [](double c_d, double c_w, double mean_initial_count, double gamma_bar, double progeny_mean_cap,
         double horizon, double theta) {
        mkvb::ContractionBudget b;
        b.c_d = c_d;
        b.c_w = c_w;
        b.mean_initial_count = mean_initial_count;
        b.gamma_bar = gamma_bar;
        b.progeny_mean_cap = progeny_mean_cap;
        b.horizon = horizon;
        const auto w = mkvb::contraction_window(b, theta);
        return py::make_tuple(w.window, w.kappa);
      },
      py::arg("c_d"), py::arg("c_w"), py::arg("mean_initial_count"), py::arg("gamma_bar"),
      py::arg("progeny_mean_cap"), py::arg("horizon"), py::arg("theta") = 0.9,
      "Returns (window, kappa).");

  m.def("simulate_population", &simulate_population, py::arg("config") = std::map<std::string, std::string>{},
        py::arg("times"),
        "Mean and standard error of the population size of independent trees under the initial "
        "frozen environment; config maps 'section.key' to values.");
}
