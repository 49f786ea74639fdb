#include "mkvb/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "mkvb/error.hpp"

namespace mkvb {

namespace {

void check_problem(const PicardProblem& problem) {
  if (problem.initial == nullptr || problem.coefficients == nullptr) {
    throw InvalidArgument("Picard problem needs an initial condition and coefficients");
  }
  if (problem.replicas < 2) throw InvalidArgument("Picard step needs at least 2 replicas");
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since)
      .count();
}

}  // namespace

EnvironmentMeasure picard_step(const EnvironmentMeasure& mu, const PicardProblem& problem) {
  check_problem(problem);
  return EnvironmentMeasure(simulate_replicas(*problem.initial, *problem.coefficients, mu,
                                              problem.grid, problem.rng, problem.replicas,
                                              problem.simulation));
}

PicardState solve_fixed_point(const EnvironmentMeasure& initial, const PicardProblem& problem,
                              const SolverOptions& options) {
  check_problem(problem);
  if (!(options.tol > 0.0)) throw InvalidArgument("tolerance must be positive");
  if (options.max_iter == 0) throw InvalidArgument("max_iter must be at least 1");
  const SimulationGrid& grid = problem.grid;
  std::size_t steps_per_window = grid.steps();
  if (options.window) {
    if (!(*options.window > 0.0)) throw InvalidArgument("window length must be positive");
    const double ratio = *options.window / grid.step();
    steps_per_window = std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(ratio + 1e-9)));
  }

  PicardState state{initial, 0, {}, {}, false};
  EnvironmentMeasure mu = initial;
  std::size_t done_steps = 0;
  for (std::size_t w = 0; done_steps < grid.steps(); ++w) {
    done_steps = std::min(grid.steps(), done_steps + steps_per_window);
    const double end = grid.time(done_steps);
    state.window_ends.push_back(end);
    PicardProblem windowed = problem;
    windowed.simulation.until = end;

    bool converged = false;
    EnvironmentMeasure best = mu;
    double best_distance = kInfinity;
    for (std::size_t j = 1; j <= options.max_iter; ++j) {
      const auto start = std::chrono::steady_clock::now();
      EnvironmentMeasure next = picard_step(mu, windowed);
      const double distance =
          w1_paths(pushforward(next, end), pushforward(mu, end), options.mode, options.w1).value;
      ++state.iterations;
      state.history.push_back({w, j, distance, elapsed_ms(start)});
      mu = std::move(next);
      if (distance < best_distance) {
        best_distance = distance;
        best = mu;
      }
      if (distance < options.tol) {
        converged = true;
        break;
      }
    }
    if (!converged) {
      state.current = best;
      state.converged = false;
      return state;
    }
  }
  state.current = mu;
  state.converged = true;
  return state;
}

double independent_residual(const EnvironmentMeasure& mu, const PicardProblem& problem,
                            std::uint64_t salt, W1Mode mode, const W1Options& w1) {
  PicardProblem fresh = problem;
  fresh.rng = problem.rng.derive(salt);
  const EnvironmentMeasure next = picard_step(mu, fresh);
  const double end = std::min(problem.simulation.until, problem.grid.horizon());
  return w1_paths(pushforward(next, end), pushforward(mu, end), mode, w1).value;
}

double ContractionBudget::growth() const {
  return mean_initial_count * std::exp(gamma_bar * progeny_mean_cap * horizon);
}

void ContractionBudget::validate() const {
  for (double v : {c_d, c_w, mean_initial_count, horizon}) {
    if (!(v > 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("c_d, c_w, A and T must be positive and finite");
    }
  }
  for (double v : {gamma_bar, progeny_mean_cap}) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw InvalidArgument("gamma_bar and M must be nonnegative and finite");
    }
  }
  if (!std::isfinite(growth())) throw InvalidArgument("contraction budget growth overflows");
}

ContractionBudget default_budget(const CoefficientBounds& bounds, double mean_initial_count,
                                 double horizon) {
  const double lip = bounds.lipschitz;
  ContractionBudget b;
  b.c_d = 1.0 + lip;
  b.c_w = 1.0 + lip * (1.0 + bounds.gamma_bar * bounds.progeny_mean_cap) +
          bounds.progeny_lipschitz_mean();
  b.mean_initial_count = mean_initial_count;
  b.gamma_bar = bounds.gamma_bar;
  b.progeny_mean_cap = bounds.progeny_mean_cap;
  b.horizon = horizon;
  b.validate();
  return b;
}

ContractionWindow contraction_window(const ContractionBudget& budget, double theta) {
  budget.validate();
  if (!(theta > 0.0 && theta <= 1.0)) throw InvalidArgument("theta must lie in (0, 1]");
  const double g = budget.growth();
  const double rhs = theta / (budget.c_d + budget.c_w * g);
  if (!(rhs > 0.0)) throw InvalidArgument("contraction right-hand side must be positive");
  const double r = 2.0 * rhs / (1.0 + std::sqrt(1.0 + 4.0 * rhs));
  const double window = r * r;
  const double s = window + r;
  const double kappa = budget.c_w * s * g / (1.0 - budget.c_d * s);
  if (!(kappa > 0.0) || (theta < 1.0 && !(kappa < 1.0))) {
    throw InvalidArgument("contraction constant outside (0, 1)");
  }
  return {window, kappa, rhs};
}

}  // namespace mkvb
