#include <cmath>
#include <memory>

#include "doctest.h"
#include "fixtures.hpp"
#include "mkvb/diagnostics.hpp"
#include "mkvb/error.hpp"
#include "mkvb/solver.hpp"
#include "stats.hpp"

using namespace mkvb;

namespace {

ParticleConfiguration two_atoms() {
  return ParticleConfiguration(1, {{Label{1}, {0.3}}, {Label{2, 1}, {-1.2}}});
}

TestFunctionPair pair_of(const std::string& outer, const std::string& inner) {
  return {ScalarFunction::parse(outer), LabelFunction::parse(inner)};
}

MartingaleSpec spec_of(const std::string& outer, const std::string& inner, const std::string& h,
                       double s, double t) {
  return {pair_of(outer, inner), PathFunctional::parse(h), s, t, 1};
}

}  // namespace

TEST_CASE("outer test functions parse and have consistent derivatives") {
  const std::vector<double> points{-2.0, -0.7, 0.0, 0.4, 1.9};
  for (const char* name : {"x", "sin", "cos@0.5", "tanh@2"}) {
    auto f = ScalarFunction::parse(name);
    CHECK(f.name() == name);
    CHECK(derivatives_consistent(f, points));
  }
  CHECK(ScalarFunction::parse("sin@2").value(0.25) == doctest::Approx(std::sin(0.5)));
  CHECK_THROWS_AS(ScalarFunction::parse("exp"), InvalidArgument);
  CHECK_THROWS_AS(ScalarFunction::parse("sin@"), InvalidArgument);
  CHECK_THROWS_AS(ScalarFunction::parse("sin@0"), InvalidArgument);
}

TEST_CASE("label functions have consistent derivatives") {
  const std::vector<std::vector<double>> points{{0.1, -0.4}, {1.3, 0.8}, {-0.9, 2.0}};
  for (const char* name : {"one", "zero", "x", "sin", "cos@0.5", "tanh", "gauss@0.7"}) {
    CHECK(derivatives_consistent(LabelFunction::parse(name), Label{1, 2}, points));
  }
}

TEST_CASE("pairing and phi_of_config examples") {
  ParticleConfiguration empty(1);
  auto fn = pair_of("cos", "sin");
  CHECK(pairing(empty, fn.inner) == 0.0);
  CHECK(phi_of_config(fn, empty) == 1.0);
  CHECK(pairing(two_atoms(), LabelFunction::parse("one")) == 2.0);
  // base(x) = x weighted by beta^{|k|}: 0.5 * 0.3 + 0.25 * (-1.2).
  CHECK(pairing(two_atoms(), LabelFunction::parse("x@0.5")) == doctest::Approx(0.15 - 0.3));
}

TEST_CASE("generator of the population count is gamma0 N (mean - 1)") {
  ConstantCoefficients c(1, {0.4}, {0.9}, 0.7, {0.2, 0.3, 0.5}, 1.0);
  auto path = frozen_path(two_atoms(), 1.0);
  auto env = testing::dummy_environment(1, 1.0);
  const double g = generator(pair_of("x", "one"), 0.5, path, env, c);
  CHECK(g == doctest::Approx(0.7 * 2.0 * (1.3 - 1.0)).epsilon(1e-14));
  // Linear rescaling of Phi rescales the generator.
  CHECK(generator(pair_of("x@2.5", "one"), 0.5, path, env, c) == doctest::Approx(2.5 * g));
}

TEST_CASE("generator without deaths is the diffusion generator of phi") {
  const double b = 0.4, sigma = 0.9;
  ConstantCoefficients c(1, {b}, {sigma}, 0.0, {1.0}, 1.0);
  auto path = frozen_path(two_atoms(), 1.0);
  auto env = testing::dummy_environment(1, 1.0);
  double expect = 0.0;
  for (double x : {0.3, -1.2}) expect += b * std::cos(x) - 0.5 * sigma * sigma * std::sin(x);
  CHECK(generator(pair_of("x", "sin"), 0.2, path, env, c) == doctest::Approx(expect).epsilon(1e-14));

  // Outer nonlinearity adds 1/2 Phi'' |D phi sigma|^2.
  const double u = std::sin(0.3) + std::sin(-1.2);
  double grad_sq = 0.0;
  for (double x : {0.3, -1.2}) grad_sq += std::pow(std::cos(x) * sigma, 2);
  const double tanh_expect = 0.5 * ScalarFunction::parse("tanh").second(u) * grad_sq +
                             ScalarFunction::parse("tanh").first(u) * expect;
  CHECK(generator(pair_of("tanh", "sin"), 0.2, path, env, c) ==
        doctest::Approx(tanh_expect).epsilon(1e-14));

  ConstantCoefficients still(1, {0.0}, {0.0}, 0.0, {1.0}, 1.0);
  CHECK(generator(pair_of("sin", "gauss"), 0.2, path, env, still) == 0.0);
}

TEST_CASE("jump term replaces the parent by its children") {
  // gamma = 1, always two children: Phi(u - phi^k + phi^{k1} + phi^{k2}) - Phi(u).
  ConstantCoefficients c(1, {0.0}, {0.0}, 1.0, {0.0, 0.0, 1.0}, 1.0);
  ParticleConfiguration e(1, {{Label{1}, {0.5}}});
  auto path = frozen_path(e, 1.0);
  auto env = testing::dummy_environment(1, 1.0);
  auto fn = pair_of("sin", "x@0.5");
  const double u = 0.5 * 0.5;
  const double replaced = 2 * 0.25 * 0.5;
  CHECK(generator(fn, 0.0, path, env, c) ==
        doctest::Approx(std::sin(replaced) - std::sin(u)).epsilon(1e-14));
}

TEST_CASE("martingale statistic vanishes without motion or with h = 0") {
  ConstantCoefficients still(1, {0.0}, {0.0}, 0.0, {1.0}, 1.0);
  SimulationGrid grid(1.0, 1.0 / 8);
  RandomnessSource rng(3);
  auto ic = testing::benchmark_initial_condition();
  auto env = testing::dummy_environment(1, 1.0);
  auto paths = simulate_replicas(ic, still, env, grid, rng, 50);
  std::vector<MartingaleGroup> groups{{paths, env}};
  auto r = martingale_statistic(spec_of("tanh", "gauss", "one", 0.25, 1.0), groups, still, grid);
  CHECK(r.value == 0.0);
  CHECK(r.standard_error == 0.0);
  CHECK(r.z == 0.0);
  CHECK(r.samples == 50);

  auto c = testing::branching_brownian();
  auto moving = simulate_replicas(ic, *c, env, grid, rng, 50);
  std::vector<MartingaleGroup> moving_groups{{moving, env}};
  auto zero = martingale_statistic(spec_of("x", "one", "zero", 0.0, 1.0), moving_groups, *c, grid);
  CHECK(zero.value == 0.0);
  CHECK(zero.standard_error == 0.0);

  std::vector<MartingaleGroup> none;
  CHECK_THROWS_AS(martingale_statistic(spec_of("x", "one", "one", 0.0, 1.0), none, *c, grid),
                  InvalidArgument);
  CHECK_THROWS_AS(martingale_statistic(spec_of("x", "one", "one", 0.5, 0.2), moving_groups, *c, grid),
                  InvalidArgument);
}

TEST_CASE("compensated pure-death count is a martingale") {
  ConstantCoefficients c(1, {0.0}, {0.0}, 0.5, {1.0}, 0.5);
  SimulationGrid grid(1.0, 1.0 / 32);
  RandomnessSource rng(8);
  auto ic = InitialCondition::random(CountingDistribution::dirac(10),
                                     InitialCondition::PositionLaw::point, {0.0}, 0.0);
  auto env = testing::dummy_environment(1, 1.0);
  auto paths = simulate_replicas(ic, c, env, grid, rng, 10000);
  std::vector<MartingaleGroup> groups{{paths, env}};
  auto r = martingale_statistic(spec_of("x", "one", "one", 0.0, 1.0), groups, c, grid);
  CHECK(r.samples == 10000);
  CHECK(r.standard_error > 0.0);
  CHECK(std::abs(r.z) <= 4.0);
}

TEST_CASE("battery holds on the frozen benchmark and refining the quadrature is negligible") {
  auto c = testing::weak_coupling_logistic();
  auto ic = testing::benchmark_initial_condition();
  SimulationGrid grid(1.0, 1.0 / 16);
  RandomnessSource rng(12);
  auto env = frozen_initial_law(ic, 1.0, rng, 64);
  auto paths = simulate_replicas(ic, *c, env, grid, rng, 3000);
  std::vector<MartingaleGroup> groups{{paths, env}};
  const auto battery = default_battery(1.0);
  REQUIRE(battery.size() == 8);
  for (auto spec : battery) {
    auto coarse = martingale_statistic(spec, groups, *c, grid);
    CHECK_MESSAGE(std::abs(coarse.z) <= 4.0, coarse.descriptor);
    spec.substeps = 2;
    auto fine = martingale_statistic(spec, groups, *c, grid);
    CHECK_MESSAGE(std::abs(fine.value - coarse.value) < coarse.standard_error, coarse.descriptor);
  }
}

TEST_CASE("path functionals parse") {
  auto path = frozen_path(two_atoms(), 1.0);
  CHECK(PathFunctional::parse("count_ge@2").evaluate(path, 0.5) == 1.0);
  CHECK(PathFunctional::parse("count_ge@3").evaluate(path, 0.5) == 0.0);
  CHECK(PathFunctional::parse("tanh_sum").evaluate(path, 0.5) == doctest::Approx(std::tanh(-0.9)));
  CHECK_THROWS_AS(PathFunctional::parse("count_ge@x"), InvalidArgument);
  CHECK_THROWS_AS(PathFunctional::parse("two"), InvalidArgument);
}

TEST_CASE("chaos study without interaction measures resampling error only") {
  auto c = testing::branching_brownian();
  auto ic = testing::benchmark_initial_condition();
  SimulationGrid grid(1.0, 1.0 / 16);
  RandomnessSource rng(4);
  auto mu = EnvironmentMeasure(simulate_replicas(ic, *c, testing::dummy_environment(1, 1.0),
                                                 grid, rng.derive(9), 24));
  ChaosOptions o;
  const std::vector<std::size_t> ns{4, 24};
  auto rows = chaos_study(ns, mu, ic, *c, grid, rng, o);
  REQUIRE(rows.size() == 2);
  for (const auto& row : rows) {
    CHECK(row.replicas == 8);
    CHECK(row.values.size() == 8);
    CHECK(row.w1_mean > 0.0);
    CHECK(row.w1_se > 0.0);
  }
  CHECK(rows[1].w1_mean < rows[0].w1_mean);
  // Deterministic given the source.
  auto again = chaos_study(ns, mu, ic, *c, grid, rng, o);
  CHECK(again[0].values == rows[0].values);

  const std::vector<std::size_t> bad{4, 4};
  CHECK_THROWS_AS(chaos_study(bad, mu, ic, *c, grid, rng, o), InvalidArgument);
}

TEST_CASE("stability: identical inputs couple exactly") {
  auto c = testing::weak_coupling_logistic();
  auto ic = testing::benchmark_initial_condition();
  SimulationGrid grid(1.0, 1.0 / 16);
  RandomnessSource rng(6);
  auto env = frozen_initial_law(ic, 1.0, rng, 32);
  StabilityOptions o;
  o.replicas = 200;
  auto r = stability_experiment(*c, *c, ic, ic, env, grid, rng, o);
  CHECK(r.lhs == 0.0);
  CHECK(r.term_init == 0.0);
  CHECK(r.term_b == 0.0);
  CHECK(r.term_sigma == 0.0);
  CHECK(r.term_gamma == 0.0);
  CHECK(r.term_p == 0.0);
}

TEST_CASE("stability: a shifted start translates the whole path") {
  ConstantCoefficients c(1, {0.3}, {0.8}, 0.0, {1.0}, 1.0);
  ParticleConfiguration e(1, {{Label{1}, {0.25}}});
  auto ic = InitialCondition::fixed(e);
  SimulationGrid grid(1.0, 1.0 / 16);
  RandomnessSource rng(10);
  auto env = testing::dummy_environment(1, 1.0);
  StabilityOptions o;
  o.replicas = 100;
  for (double delta : {0.125, 0.5, 2.0}) {
    const std::vector<double> shift{delta};
    auto r = stability_experiment(c, c, ic, ic.shifted(shift), env, grid, rng, o);
    CHECK(r.lhs == doctest::Approx(std::min(delta, 1.0)).epsilon(1e-12));
    CHECK(r.lhs_se < 1e-12);
    CHECK(r.term_init == doctest::Approx(std::min(delta, 1.0)).epsilon(1e-12));
  }
}

TEST_CASE("stability: death-rate perturbations grow at most linearly") {
  auto base = std::make_shared<ConstantCoefficients>(1, std::vector<double>{0.1},
                                                     std::vector<double>{0.5}, 1.0,
                                                     std::vector<double>{0.3, 0.3, 0.4}, 2.0);
  auto ic = testing::benchmark_initial_condition();
  SimulationGrid grid(1.0, 1.0 / 32);
  RandomnessSource rng(14);
  auto env = testing::dummy_environment(1, 1.0);
  StabilityOptions o;
  o.replicas = 2000;
  std::vector<double> slope;
  for (double eps : {0.02, 0.04, 0.08}) {
    ShiftedDeathRate shifted(base, eps);
    auto r = stability_experiment(*base, shifted, ic, ic, env, grid, rng, o);
    CHECK(r.term_gamma == doctest::Approx(eps));
    CHECK(r.term_b == 0.0);
    CHECK(r.term_p == 0.0);
    CHECK(r.lhs > 0.0);
    slope.push_back(r.lhs / eps);
  }
  for (double s : slope) CHECK(s <= 2.0 * slope.front());
}
