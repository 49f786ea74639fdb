#pragma once

// McKean-Vlasov fixed point: the Picard map on environment measures, the
// convergence loop with optional windowed time-marching, and the contraction
// window of the stability constants.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "mkvb/coefficients.hpp"
#include "mkvb/engine.hpp"
#include "mkvb/transport.hpp"

namespace mkvb {

/// Everything a Picard step needs besides the environment.
struct PicardProblem {
  const InitialCondition* initial = nullptr;
  const CoefficientSet* coefficients = nullptr;
  SimulationGrid grid{1.0, 1.0};
  RandomnessSource rng{0};
  /// Replica count R of the empirical law.
  std::size_t replicas = 256;
  SimulationOptions simulation;
};

/// Uniform empirical law of R trees simulated under the frozen environment
/// mu, replica r always driven by stream r (common random numbers). Paths
/// are stopped at simulation.until when it is finite. Requires R >= 2.
EnvironmentMeasure picard_step(const EnvironmentMeasure& mu, const PicardProblem& problem);

struct SolverOptions {
  double tol = 1e-2;
  std::size_t max_iter = 30;
  /// Window length T'. Unset: one window [0, T].
  std::optional<double> window;
  W1Mode mode = W1Mode::exact;
  W1Options w1;
};

struct PicardIterate {
  std::size_t window = 0;
  /// Iterate index within its window, starting at 1.
  std::size_t index = 0;
  double distance = 0.0;
  double wall_ms = 0.0;
};

struct PicardState {
  EnvironmentMeasure current;
  /// Total Picard steps performed.
  std::size_t iterations = 0;
  /// W1 between each iterate and its predecessor, in order.
  std::vector<PicardIterate> history;
  /// Right endpoints of the windows, increasing and ending at T.
  std::vector<double> window_ends;
  bool converged = false;
};

/// Iterates mu <- picard_step(mu) until W1(mu_new, mu_old) < tol or
/// max_iter steps. With a window T', the solve marches over [0, w_1],
/// [0, w_2], ... where w_j = min(T, j T') with T' rounded down to a whole
/// number (at least one) of base steps; each window starts from the law
/// converged on the previous one. On
/// non-convergence the iterate with the smallest step distance is returned
/// and converged is false; marching stops at the failed window.
PicardState solve_fixed_point(const EnvironmentMeasure& initial, const PicardProblem& problem,
                              const SolverOptions& options = {});

/// W1(Psi(mu), mu) where Psi uses a source derived from the problem's with
/// the given salt, so the residual measures Monte Carlo noise only.
double independent_residual(const EnvironmentMeasure& mu, const PicardProblem& problem,
                            std::uint64_t salt, W1Mode mode, const W1Options& w1 = {});

/// Stability constants and growth data entering the contraction estimate.
struct ContractionBudget {
  double c_d = 1.0;
  double c_w = 1.0;
  /// A = E[#K_0].
  double mean_initial_count = 1.0;
  double gamma_bar = 1.0;
  double progeny_mean_cap = 1.0;
  double horizon = 1.0;

  /// A e^{gamma_bar M T}.
  double growth() const;
  /// Throws InvalidArgument unless c_d, c_w, A, T are positive, gamma_bar and
  /// M nonnegative, and all are finite.
  void validate() const;
};

/// Heuristic constants c_d = 1 + L and c_w = 1 + L (1 + gamma_bar M) + M'
/// built from the declared bounds. They are not rigorous.
ContractionBudget default_budget(const CoefficientBounds& bounds, double mean_initial_count,
                                 double horizon);

struct ContractionWindow {
  double window = 0.0;  // T'
  double kappa = 0.0;
  double rhs = 0.0;     // theta / (c_d + c_w A e^{gamma_bar M T})
};

/// T' = r^2 with r the positive root of r^2 + r = theta / (c_d + c_w G),
/// G = A e^{gamma_bar M T}, and kappa = c_w s G / (1 - c_d s) with
/// s = T' + sqrt(T'). theta must lie in (0, 1]; for theta < 1 kappa < 1.
ContractionWindow contraction_window(const ContractionBudget& budget, double theta = 0.9);

}  // namespace mkvb
