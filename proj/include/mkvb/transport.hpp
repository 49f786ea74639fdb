#pragma once

// Wasserstein-1 distances between empirical laws of tree paths and between
// progeny distributions on the integers.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "mkvb/paths.hpp"

namespace mkvb {

/// Finitely supported probability measure on tree paths, possibly stopped.
///
/// Stopping is lazy: pushforward keeps the support and lowers the stop time,
/// and every query reads the support through omega_{t ^ .}. Copies share the
/// support and its memo cache.
class EnvironmentMeasure {
 public:
  /// Uniform weights.
  explicit EnvironmentMeasure(std::vector<TreePath> support);
  EnvironmentMeasure(std::vector<TreePath> support, std::vector<double> weights);

  std::size_t size() const noexcept { return data_->paths.size(); }
  std::size_t dim() const noexcept { return data_->paths.front().dim(); }
  double horizon() const noexcept { return data_->paths.front().horizon(); }
  double stop_time() const noexcept { return stop_; }
  bool uniform() const noexcept { return data_->uniform; }
  double weight(std::size_t i) const { return data_->weights[i]; }
  std::span<const double> weights() const noexcept { return data_->weights; }

  /// Support path i as stored (not stopped).
  const TreePath& raw_path(std::size_t i) const { return data_->paths[i]; }
  /// Support path i stopped at stop_time(), materialised.
  TreePath path(std::size_t i) const;

  /// Z^i_{min(t, stop)}.
  ParticleConfiguration configuration_at(std::size_t i, double t) const;
  std::size_t count_at(std::size_t i, double t) const;

  EnvironmentMeasure stopped(double t) const;

  /// Memoised functional of the stopped measure at time t. Valid only for
  /// functionals that depend on the measure through Z_{min(t, stop)}; the
  /// cache key is (key, min(t, stop)) and is shared by all pushforwards.
  std::vector<double> memo(std::uint64_t key, double t,
                           const std::function<std::vector<double>()>& compute) const;

  bool same_support(const EnvironmentMeasure& other) const noexcept { return data_ == other.data_; }

 private:
  struct Data {
    std::vector<TreePath> paths;
    std::vector<double> weights;
    bool uniform = true;
    mutable std::mutex cache_mutex;
    mutable std::map<std::pair<std::uint64_t, double>, std::vector<double>> cache;
  };
  std::shared_ptr<Data> data_;
  double stop_;
};

/// m_t: every support path stopped at t, weights unchanged.
EnvironmentMeasure pushforward(const EnvironmentMeasure& m, double t);

/// Probability vector (p_0, ..., p_L) on {0, ..., L}.
class CountingDistribution {
 public:
  explicit CountingDistribution(std::vector<double> masses);
  static CountingDistribution dirac(std::size_t l);

  std::size_t support_bound() const noexcept { return masses_.size() - 1; }
  double mass(std::size_t l) const noexcept { return l < masses_.size() ? masses_[l] : 0.0; }
  std::span<const double> masses() const noexcept { return masses_; }
  double mean() const noexcept;

 private:
  std::vector<double> masses_;
};

/// Throws InvalidArgument unless masses are nonnegative and sum to 1 within 1e-12.
void check_probability_vector(std::span<const double> masses, const std::string& what);

/// sum_j |F_P(j) - F_Q(j)|.
double w1_counting(const CountingDistribution& p, const CountingDistribution& q);
/// Integral over u in [0, 1) of |l - l'| over the overlaps of the interval
/// partitions I_l of P and I'_l' of Q (difference of quantile functions).
double w1_counting_via_intervals(const CountingDistribution& p, const CountingDistribution& q);
/// sum_l l |p_l - q_l|, an upper bound on both representations above.
double progeny_mean_deviation(const CountingDistribution& p, const CountingDistribution& q);

enum class W1Mode { exact, approx };

std::string to_string(W1Mode mode);
W1Mode parse_w1_mode(const std::string& text);

struct W1Options {
  /// Exact assignment is refused above this support size.
  std::size_t exact_threshold = 512;
  std::size_t sinkhorn_iterations = 500;
  /// Entropic regularisation = reg_factor * median pairwise cost.
  double reg_factor = 0.01;
  std::size_t workers = 1;
};

struct W1Result {
  /// Exact: optimal assignment cost. Approx: transport cost of the rounded
  /// feasible plan, hence an upper bound on W1.
  double value = 0.0;
  W1Mode mode = W1Mode::exact;
  std::size_t support1 = 0;
  std::size_t support2 = 0;
  /// Approx only: regularisation epsilon and <C, P_eps> of the Sinkhorn plan.
  double reg_eps = 0.0;
  double regularized_cost = 0.0;
};

/// Support paths of a measure preprocessed for repeated distance evaluation.
class SnapshotSet {
 public:
  explicit SnapshotSet(const EnvironmentMeasure& m, std::size_t workers = 1);
  const EnvironmentMeasure& measure() const noexcept { return measure_; }
  const PathSnapshot& operator[](std::size_t i) const { return snaps_[i]; }
  std::size_t size() const noexcept { return snaps_.size(); }

 private:
  EnvironmentMeasure measure_;
  std::vector<PathSnapshot> snaps_;
};

/// Row-major pairwise path-distance matrix, computed in parallel over rows.
std::vector<double> cost_matrix(const SnapshotSet& a, const SnapshotSet& b, std::size_t workers);

W1Result w1_paths(const EnvironmentMeasure& m1, const EnvironmentMeasure& m2, W1Mode mode,
                  const W1Options& options = {});
W1Result w1_paths(const SnapshotSet& m1, const SnapshotSet& m2, W1Mode mode,
                  const W1Options& options = {});

/// Minimum-cost perfect matching of an n x n row-major cost matrix by the
/// shortest augmenting path method, O(n^3). Returns the column of each row.
std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n);

struct SinkhornResult {
  std::vector<double> plan;  // rounded feasible plan, row-major
  double eps = 0.0;
  double regularized_cost = 0.0;
  double rounded_cost = 0.0;
};

/// Log-domain entropic transport between weights a and b followed by
/// rounding onto the transport polytope.
SinkhornResult sinkhorn(std::span<const double> cost, std::span<const double> a,
                        std::span<const double> b, double eps, std::size_t iterations);

}  // namespace mkvb
