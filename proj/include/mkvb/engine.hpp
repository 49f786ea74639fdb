#pragma once

// Simulation of labeled branching diffusions: one tree under a frozen
// environment, and n trees interacting through their empirical measure.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mkvb/coefficients.hpp"
#include "mkvb/genealogy.hpp"
#include "mkvb/paths.hpp"
#include "mkvb/random.hpp"
#include "mkvb/transport.hpp"

namespace mkvb {

/// Uniform base grid 0, dt, ..., T. Simulated paths refine it with their
/// event times.
class SimulationGrid {
 public:
  /// Throws InvalidArgument unless dt > 0 and T / dt is an integer.
  SimulationGrid(double horizon, double step);

  double horizon() const noexcept { return horizon_; }
  double step() const noexcept { return step_; }
  std::size_t steps() const noexcept { return steps_; }
  /// i-th grid time; exactly T for i = steps().
  double time(std::size_t i) const noexcept {
    return i >= steps_ ? horizon_ : static_cast<double>(i) * step_;
  }
  std::vector<double> times() const;

 private:
  double horizon_;
  double step_;
  std::size_t steps_;
};

/// Law of the initial configuration xi: either a fixed configuration or a
/// random count N >= 1 with i.i.d. positions, labeled 1..N.
class InitialCondition {
 public:
  enum class PositionLaw { point, normal, uniform };

  static InitialCondition fixed(ParticleConfiguration e);
  /// count must put no mass on 0. Positions are center + scale * Z with Z
  /// standard normal (normal), uniform on [-1, 1]^d (uniform), or 0 (point).
  static InitialCondition random(CountingDistribution count, PositionLaw law,
                                 std::vector<double> center, double scale);

  std::size_t dim() const noexcept { return dim_; }
  bool is_fixed() const noexcept { return fixed_.has_value(); }
  /// E[#K_0].
  double mean_count() const noexcept;
  /// Draw for replica i from the replica's initial stream.
  ParticleConfiguration sample(const RandomnessSource& rng, std::uint64_t replica) const;
  /// Same law translated by delta in every position.
  InitialCondition shifted(std::span<const double> delta) const;
  std::string describe() const;

 private:
  InitialCondition() = default;

  std::size_t dim_ = 1;
  std::optional<ParticleConfiguration> fixed_;
  std::optional<CountingDistribution> count_;
  PositionLaw law_ = PositionLaw::point;
  std::vector<double> center_;
  double scale_ = 0.0;
};

std::string to_string(InitialCondition::PositionLaw law);
InitialCondition::PositionLaw parse_position_law(const std::string& text);

struct SimulationOptions {
  /// Abort once more particles than this have ever been alive (aggregated
  /// over all trees of an interacting system).
  std::size_t explosion_cap = 1'000'000;
  /// Worker threads (0 = one per hardware thread). Results never depend on it.
  std::size_t workers = 1;
  /// Simulate on [0, until] only and return the path stopped there.
  double until = std::numeric_limits<double>::infinity();
};

/// One tree under the frozen environment env. Drift, diffusion, death rate
/// and progeny inside a base step read env stopped at the step start.
/// Candidate death times are a rate gamma_bar Poisson process with marks
/// z ~ U[0, gamma_bar); a candidate tau fires iff z < gamma(tau, ...). The
/// position at tau comes from a Brownian bridge inside the step, so children
/// start exactly at the parent's death position.
TreePath simulate_tree(const InitialCondition& ic, const CoefficientSet& c,
                       const EnvironmentMeasure& env, const SimulationGrid& grid,
                       const RandomnessSource& rng, std::uint64_t replica,
                       const SimulationOptions& options = {});

/// Same, started from a given configuration instead of a draw from ic.
TreePath simulate_tree_from(const ParticleConfiguration& xi, const CoefficientSet& c,
                            const EnvironmentMeasure& env, const SimulationGrid& grid,
                            const RandomnessSource& rng, std::uint64_t replica,
                            const SimulationOptions& options = {});

/// Replicas 0..R-1 of simulate_tree, in parallel.
std::vector<TreePath> simulate_replicas(const InitialCondition& ic, const CoefficientSet& c,
                                        const EnvironmentMeasure& env, const SimulationGrid& grid,
                                        const RandomnessSource& rng, std::size_t replicas,
                                        const SimulationOptions& options = {});

/// n trees evolved synchronously; within each base step every tree reads the
/// empirical measure of all n trees stopped at the step start. Tree i uses
/// replica index i.
std::vector<TreePath> simulate_interacting(std::size_t n, const InitialCondition& ic,
                                           const CoefficientSet& c, const SimulationGrid& grid,
                                           const RandomnessSource& rng,
                                           const SimulationOptions& options = {});

/// Path with no events and every initial particle frozen at its position.
TreePath frozen_path(const ParticleConfiguration& xi, double horizon);

/// Uniform measure over frozen paths of the replica draws 0..R-1.
EnvironmentMeasure frozen_initial_law(const InitialCondition& ic, double horizon,
                                      const RandomnessSource& rng, std::size_t replicas);

struct PopulationStatistics {
  std::vector<double> times;
  std::vector<double> mean;
  std::vector<double> standard_error;
};

/// Mean and standard error of <Z_t, 1> across paths.
PopulationStatistics population_statistics(std::span<const TreePath> paths,
                                           std::span<const double> times);

/// Mean population N0 e^{(gamma0 (mean progeny - 1)) t} of the constant-rate
/// linear branching process.
double linear_branching_mean(double n0, double gamma0, double progeny_mean, double t);

}  // namespace mkvb
