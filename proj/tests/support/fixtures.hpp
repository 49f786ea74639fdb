#pragma once

// Shared generators for the unit and acceptance tests.

#include <cstdint>
#include <memory>
#include <random>
#include <vector>

#include "mkvb/coefficients.hpp"
#include "mkvb/engine.hpp"
#include "mkvb/genealogy.hpp"
#include "mkvb/paths.hpp"
#include "mkvb/transport.hpp"

namespace mkvb::testing {

/// Random antichain configuration: labels drawn from a small tree of depth
/// at most 3, positions N(0, 1) so that both sides of the 1-truncation occur.
inline ParticleConfiguration random_configuration(std::mt19937_64& gen, std::size_t dim,
                                                  std::size_t max_atoms = 6) {
  std::uniform_int_distribution<std::size_t> count(0, max_atoms);
  std::uniform_int_distribution<std::uint32_t> entry(1, 3);
  std::uniform_int_distribution<std::size_t> depth(1, 3);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<ParticleConfiguration::Atom> atoms;
  const std::size_t n = count(gen);
  for (std::size_t tries = 0; atoms.size() < n && tries < 50; ++tries) {
    std::vector<std::uint32_t> word(depth(gen));
    for (auto& w : word) w = entry(gen);
    Label k(word);
    bool ok = true;
    for (const auto& a : atoms) {
      if (a.label == k || is_strict_ancestor(a.label, k) || is_strict_ancestor(k, a.label)) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    std::vector<double> x(dim);
    for (auto& v : x) v = normal(gen);
    atoms.push_back({k, x});
  }
  return ParticleConfiguration(dim, std::move(atoms));
}

/// A dummy environment for coefficient sets that ignore it.
inline EnvironmentMeasure dummy_environment(std::size_t dim, double horizon) {
  ParticleConfiguration e(dim);
  e.push_back_unchecked(Label{1}, std::vector<double>(dim, 0.0));
  return EnvironmentMeasure({frozen_path(e, horizon)});
}

/// Constant-coefficient branching Brownian motion in d = 1 with deaths,
/// splits and moves, used to produce varied tree paths.
inline std::shared_ptr<ConstantCoefficients> branching_brownian(double gamma0 = 1.5,
                                                               double sigma = 0.7) {
  return std::make_shared<ConstantCoefficients>(
      1, std::vector<double>{0.1}, std::vector<double>{sigma}, gamma0,
      std::vector<double>{0.3, 0.2, 0.5}, 2.0);
}

/// Pool of simulated tree paths with shared horizon T = 1.
inline std::vector<TreePath> simulated_pool(std::size_t n, std::uint64_t seed, double dt = 1.0 / 16) {
  auto c = branching_brownian();
  SimulationGrid grid(1.0, dt);
  auto ic = InitialCondition::random(CountingDistribution({0.0, 0.5, 0.5}),
                                     InitialCondition::PositionLaw::normal, {0.0}, 0.5);
  RandomnessSource rng(seed);
  return simulate_replicas(ic, *c, dummy_environment(1, 1.0), grid, rng, n);
}

/// Weak-coupling crowding benchmark: gamma = 1 + 0.75 <m_t, 1> clamped to
/// [0, 4], sigma = 0.5, offspring (0.3, 0.3, 0.4), horizon T = 2.
inline std::shared_ptr<MeanFieldLogistic> weak_coupling_logistic() {
  return std::make_shared<MeanFieldLogistic>(1, std::vector<double>{0.0}, std::vector<double>{0.5},
                                             1.0, 0.75, LabelFunction::parse("one"),
                                             std::vector<double>{0.3, 0.3, 0.4}, 4.0);
}

inline InitialCondition benchmark_initial_condition() {
  return InitialCondition::random(CountingDistribution({0.0, 0.5, 0.5}),
                                  InitialCondition::PositionLaw::normal, {0.0}, 1.0);
}

inline constexpr double kBenchmarkHorizon = 2.0;

}  // namespace mkvb::testing
