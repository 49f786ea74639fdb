#include <cmath>

#include "doctest.h"
#include "fixtures.hpp"
#include "mkvb/error.hpp"
#include "mkvb/solver.hpp"
#include "stats.hpp"

using namespace mkvb;

namespace {

PicardProblem problem_for(const InitialCondition& ic, const CoefficientSet& c, double horizon,
                          double dt, std::size_t replicas, std::uint64_t seed) {
  PicardProblem p{&ic, &c, SimulationGrid(horizon, dt), RandomnessSource(seed), replicas, {}};
  return p;
}

}  // namespace

TEST_CASE("contraction window solves the quadratic example") {
  ContractionBudget b;
  b.c_d = 1.0;
  b.c_w = 1.0;
  b.mean_initial_count = 1.0;
  b.gamma_bar = 0.0;
  b.progeny_mean_cap = 1.0;
  b.horizon = 1.0;
  const double root = (std::sqrt(3.0) - 1.0) / 2.0;
  auto boundary = contraction_window(b, 1.0);
  CHECK(std::abs(boundary.window - root * root) < 1e-9);
  CHECK(std::abs(boundary.window + std::sqrt(boundary.window) - 0.5) < 1e-12);
  CHECK(boundary.kappa == doctest::Approx(1.0).epsilon(1e-12));

  auto safe = contraction_window(b);
  CHECK(safe.kappa > 0.0);
  CHECK(safe.kappa < 1.0);
  CHECK(safe.window < boundary.window);

  ContractionBudget doubled = b;
  doubled.c_w = 2.0;
  CHECK(contraction_window(doubled).window < safe.window);

  CHECK_THROWS_AS(contraction_window(b, 0.0), InvalidArgument);
  CHECK_THROWS_AS(contraction_window(b, 1.5), InvalidArgument);
  ContractionBudget bad = b;
  bad.c_d = 0.0;
  CHECK_THROWS_AS(contraction_window(bad), InvalidArgument);
}

TEST_CASE("default budget yields a contraction for the benchmark") {
  auto c = testing::weak_coupling_logistic();
  auto ic = testing::benchmark_initial_condition();
  auto budget = default_budget(c->bounds(), ic.mean_count(), testing::kBenchmarkHorizon);
  auto w = contraction_window(budget);
  CHECK(w.window > 0.0);
  CHECK(w.kappa < 1.0);
}

TEST_CASE("picard step ignores the environment when coefficients do") {
  auto c = testing::branching_brownian();
  auto ic = testing::benchmark_initial_condition();
  auto p = problem_for(ic, *c, 1.0, 1.0 / 16, 24, 5);
  auto a = picard_step(frozen_initial_law(ic, 1.0, p.rng, 24), p);
  auto b = picard_step(EnvironmentMeasure(testing::simulated_pool(7, 9)), p);
  REQUIRE(a.size() == 24);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(testing::identical(a.raw_path(i), b.raw_path(i)));

  p.replicas = 1;
  CHECK_THROWS_AS(picard_step(a, p), InvalidArgument);
}

TEST_CASE("picard step on pure death matches the exponential mean") {
  ConstantCoefficients c(1, {0.0}, {0.2}, 0.5, {1.0}, 0.5);
  auto ic = InitialCondition::random(CountingDistribution::dirac(10),
                                     InitialCondition::PositionLaw::point, {0.0}, 0.0);
  auto p = problem_for(ic, c, 1.0, 1.0 / 32, 1500, 17);
  auto mu = picard_step(frozen_initial_law(ic, 1.0, p.rng, 2), p);
  std::vector<TreePath> paths;
  for (std::size_t i = 0; i < mu.size(); ++i) paths.push_back(mu.raw_path(i));
  const std::vector<double> times{0.25, 0.5, 1.0};
  auto stats = population_statistics(paths, times);
  for (std::size_t i = 0; i < times.size(); ++i) {
    CHECK(std::abs(stats.mean[i] - 10.0 * std::exp(-0.5 * times[i])) <= 4.0 * stats.standard_error[i]);
  }
}

TEST_CASE("without interaction the solve converges in exactly two steps") {
  auto c = testing::branching_brownian();
  auto ic = testing::benchmark_initial_condition();
  auto p = problem_for(ic, *c, 1.0, 1.0 / 16, 32, 21);
  auto state = solve_fixed_point(frozen_initial_law(ic, 1.0, p.rng, 32), p);
  CHECK(state.converged);
  REQUIRE(state.iterations == 2);
  CHECK(state.history[0].distance > 0.0);
  CHECK(state.history[1].distance == 0.0);
  CHECK(state.window_ends == std::vector<double>{1.0});
}

TEST_CASE("infinite tolerance stops after one step") {
  auto c = testing::weak_coupling_logistic();
  auto ic = testing::benchmark_initial_condition();
  auto p = problem_for(ic, *c, 1.0, 1.0 / 16, 16, 23);
  auto mu0 = frozen_initial_law(ic, 1.0, p.rng, 16);
  SolverOptions o;
  o.tol = kInfinity;
  auto state = solve_fixed_point(mu0, p, o);
  CHECK(state.converged);
  CHECK(state.iterations == 1);
  auto once = picard_step(mu0, p);
  for (std::size_t i = 0; i < once.size(); ++i) {
    CHECK(testing::identical(once.raw_path(i), state.current.raw_path(i)));
  }
  o.tol = 0.0;
  CHECK_THROWS_AS(solve_fixed_point(mu0, p, o), InvalidArgument);
}

TEST_CASE("weak coupling: common-random-number iterates contract") {
  auto c = testing::weak_coupling_logistic();
  auto ic = testing::benchmark_initial_condition();
  const double horizon = testing::kBenchmarkHorizon;
  auto p = problem_for(ic, *c, horizon, 1.0 / 32, 128, 3);
  SolverOptions o;
  o.tol = 1e-9;
  o.max_iter = 12;
  auto state = solve_fixed_point(frozen_initial_law(ic, horizon, p.rng, 128), p, o);
  CHECK(state.converged);
  std::size_t run = 0, best = 0;
  for (std::size_t j = 0; j + 1 < state.history.size(); ++j) {
    const double prev = state.history[j].distance, next = state.history[j + 1].distance;
    if (prev <= 0.0) break;
    run = next < prev ? run + 1 : 0;
    best = std::max(best, run);
  }
  CHECK(best >= 4);
  for (const auto& h : state.history) CHECK(h.distance >= 0.0);

  // Moment bound at the fixed point: E[sup_t <Z_t, 1>] <= E[#K_0] e^{gamma_bar M T}.
  const auto& b = c->bounds();
  double sup_mean = 0.0;
  for (std::size_t i = 0; i < state.current.size(); ++i) {
    sup_mean += static_cast<double>(sup_population(state.current.raw_path(i)));
  }
  sup_mean /= static_cast<double>(state.current.size());
  CHECK(sup_mean <= ic.mean_count() * std::exp(b.gamma_bar * b.progeny_mean_cap * horizon));
}

TEST_CASE("windowed marching agrees with the single-window solve") {
  auto c = testing::weak_coupling_logistic();
  auto ic = testing::benchmark_initial_condition();
  auto p = problem_for(ic, *c, 1.0, 1.0 / 16, 48, 29);
  auto mu0 = frozen_initial_law(ic, 1.0, p.rng, 48);
  SolverOptions o;
  o.tol = 1e-6;
  o.max_iter = 15;
  auto plain = solve_fixed_point(mu0, p, o);
  o.window = 0.3;
  auto windowed = solve_fixed_point(mu0, p, o);
  REQUIRE(plain.converged);
  REQUIRE(windowed.converged);
  // 0.3 rounds down to four base steps.
  CHECK(windowed.window_ends == std::vector<double>{0.25, 0.5, 0.75, 1.0});
  CHECK(windowed.history.front().window == 0);
  CHECK(windowed.history.back().window == 3);
  const double gap = w1_paths(plain.current, windowed.current, W1Mode::exact).value;
  const double noise = independent_residual(plain.current, p, 1, W1Mode::exact);
  CHECK(gap <= 2.0 * (o.tol + noise));
}

TEST_CASE("non-convergence returns the best iterate and a flag") {
  auto c = testing::weak_coupling_logistic();
  auto ic = testing::benchmark_initial_condition();
  auto p = problem_for(ic, *c, 1.0, 1.0 / 16, 32, 31);
  SolverOptions o;
  o.tol = 1e-9;
  o.max_iter = 2;
  auto state = solve_fixed_point(frozen_initial_law(ic, 1.0, p.rng, 32), p, o);
  CHECK_FALSE(state.converged);
  CHECK(state.iterations == 2);
  CHECK(state.history[1].distance > 0.0);
  CHECK(state.history[1].distance < state.history[0].distance);
  CHECK(state.current.size() == 32);
}
