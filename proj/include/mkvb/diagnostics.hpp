#pragma once

// Martingale-problem statistics, generator evaluation, propagation-of-chaos
// studies and the coupled stability experiment.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mkvb/coefficients.hpp"
#include "mkvb/engine.hpp"
#include "mkvb/paths.hpp"
#include "mkvb/transport.hpp"

namespace mkvb {

/// Outer test function Phi in C^2 with value and first two derivatives.
class ScalarFunction {
 public:
  enum class Kind { identity, sine, cosine, tanh };

  ScalarFunction() = default;
  /// Phi(x) = g(lambda x) for g in {x, sin, cos, tanh}.
  explicit ScalarFunction(Kind kind, double scale = 1.0);
  /// "x", "sin", "cos" or "tanh", optionally suffixed with "@lambda".
  static ScalarFunction parse(const std::string& text);
  std::string name() const;

  Kind kind() const noexcept { return kind_; }
  double scale() const noexcept { return scale_; }
  double value(double x) const noexcept;
  double first(double x) const noexcept;
  double second(double x) const noexcept;

 private:
  Kind kind_ = Kind::identity;
  double scale_ = 1.0;
};

/// Phi together with the per-label family phi^k.
struct TestFunctionPair {
  ScalarFunction outer;
  LabelFunction inner;
};

/// Compares analytic derivatives with central differences at step 1e-5
/// over the given points; true when every relative gap is below 1e-3
/// (absolute below 1e-3 when the derivative is smaller than 1).
bool derivatives_consistent(const ScalarFunction& f, std::span<const double> points);
bool derivatives_consistent(const LabelFunction& f, const Label& k,
                            std::span<const std::vector<double>> points);

/// Phi(<e, phi>).
double phi_of_config(const TestFunctionPair& fn, const ParticleConfiguration& e);

/// Generator of Phi_phi at time t along the path, coefficients read with the
/// environment env (already stopped by the caller):
///   1/2 Phi'' sum_k |D phi^k sigma|^2 + Phi' sum_k L phi^k
///   + sum_k gamma (sum_l p_l Phi_phi(e with k replaced by k1..kl) - Phi_phi(e)).
double generator(const TestFunctionPair& fn, double t, const TreePath& path,
                 const EnvironmentMeasure& env, const CoefficientSet& c);

/// Bounded functional h of the path stopped at s.
struct PathFunctional {
  std::string name;
  std::function<double(const TreePath&, double)> evaluate;

  /// "one", "zero", "count_ge@k" (indicator of <Z_s, 1> >= k) or
  /// "tanh_sum" (tanh of the summed first coordinates at s).
  static PathFunctional parse(const std::string& text);
};

struct MartingaleSpec {
  TestFunctionPair fn;
  PathFunctional h;
  double s = 0.0;
  double t = 1.0;
  /// Each quadrature interval is split into this many equal parts.
  std::size_t substeps = 1;

  std::string describe() const;
};

/// Paths sharing one environment: a frozen-environment sample or the trees
/// of one interacting system together with their empirical measure.
struct MartingaleGroup {
  std::span<const TreePath> paths;
  EnvironmentMeasure env;
};

struct MartingaleReport {
  double value = 0.0;
  double standard_error = 0.0;
  double z = 0.0;
  std::size_t samples = 0;
  std::string descriptor;
};

/// h(Z_s) (M_t - M_s) for every path, in group order. M is Phi_phi(Z)
/// minus the generator integrated by left-endpoint quadrature on the path's
/// knots (base grid and event times). At a knot u the environment is read
/// stopped at the base-grid time at or before u, as the simulator does.
std::vector<double> martingale_increments(const MartingaleSpec& spec,
                                          std::span<const MartingaleGroup> groups,
                                          const CoefficientSet& c, const SimulationGrid& grid,
                                          std::size_t workers = 1);

/// Mean, standard error and z-score of the increments. Throws
/// InvalidArgument on an empty sample.
MartingaleReport martingale_statistic(const MartingaleSpec& spec,
                                      std::span<const MartingaleGroup> groups,
                                      const CoefficientSet& c, const SimulationGrid& grid,
                                      std::size_t workers = 1);
MartingaleReport summarize_increments(std::span<const double> increments, std::string descriptor);

/// Eight (Phi, phi, h, s, t) combinations on [0, horizon].
std::vector<MartingaleSpec> default_battery(double horizon);

struct ChaosOptions {
  std::size_t system_replicas = 8;
  W1Options w1;
  SimulationOptions simulation;
};

struct ChaosRow {
  std::size_t n = 0;
  double w1_mean = 0.0;
  double w1_se = 0.0;
  std::size_t replicas = 0;
  /// W1 of each system replica.
  std::vector<double> values;
};

/// For each n, simulates independent n-interacting systems (sources derived
/// from rng by (n, replica)) and measures approximate W1 between the first
/// min(n, |mu*|) trees of the system and an equally sized random subsample
/// of mu*. n_list must be strictly increasing and positive.
std::vector<ChaosRow> chaos_study(std::span<const std::size_t> n_list,
                                  const EnvironmentMeasure& fixed_point,
                                  const InitialCondition& ic, const CoefficientSet& c,
                                  const SimulationGrid& grid, const RandomnessSource& rng,
                                  const ChaosOptions& options = {});

struct StabilityOptions {
  std::size_t replicas = 1000;
  std::size_t probes = 256;
  SimulationOptions simulation;
};

struct StabilityResult {
  /// Mean and standard error of d(Z, Z~) over coupled replicas.
  double lhs = 0.0;
  double lhs_se = 0.0;
  /// E[d_E(xi, xi~)].
  double term_init = 0.0;
  /// Maxima over the probe set of |b - b~|, |sigma - sigma~| (Frobenius),
  /// |gamma - gamma~| and sum_l |p_l - p~_l|.
  double term_b = 0.0;
  double term_sigma = 0.0;
  double term_gamma = 0.0;
  double term_p = 0.0;
  std::size_t replicas = 0;
};

/// Simulates replica r of (ic, c) and of (ic2, c2) under the same source and
/// frozen environment and averages their path distance. Probe points
/// (t, particle, env stopped at the grid time) are drawn from the first
/// `probes` unperturbed replicas.
StabilityResult stability_experiment(const CoefficientSet& c, const CoefficientSet& c2,
                                     const InitialCondition& ic, const InitialCondition& ic2,
                                     const EnvironmentMeasure& env, const SimulationGrid& grid,
                                     const RandomnessSource& rng,
                                     const StabilityOptions& options = {});

}  // namespace mkvb
