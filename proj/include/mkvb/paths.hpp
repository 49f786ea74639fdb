#pragma once

// Tree-valued cadlag paths: per-particle records on a shared time grid, the
// stopping operator and the uniform metric d with its truncations d_t.

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <vector>

#include "mkvb/genealogy.hpp"

namespace mkvb {

inline constexpr std::size_t kNoParent = std::numeric_limits<std::size_t>::max();

/// Lifetime and sampled trajectory of one particle.
///
/// `times` starts at the birth time and is strictly increasing. When the
/// particle died, the last sample is at the death time. A particle alive at
/// the horizon may stop sampling early (stopped paths); its position is then
/// frozen at the last sample.
struct ParticleRecord {
  Label label;
  std::size_t parent_index = kNoParent;   // into the owning record array
  double birth = 0.0;
  std::optional<double> death;            // nullopt: alive at the horizon
  std::optional<std::uint32_t> offspring; // nullopt iff alive at the horizon
  std::vector<double> times;
  std::vector<double> positions;          // times.size() * dim, row-major

  bool is_initial() const noexcept { return parent_index == kNoParent; }
  /// Alive on [birth, death), or on [birth, T] when death is unset.
  bool alive_at(double t) const noexcept {
    return birth <= t && (!death || t < *death);
  }
  /// Alive just before t: birth < t <= death.
  bool alive_before(double t) const noexcept {
    return birth < t && (!death || t <= *death);
  }
};

/// Sorts records by label and remaps parent indices accordingly.
void sort_records(std::vector<ParticleRecord>& records);

/// Writes the position of `record` at time u (clamped to its sampled span)
/// into `out`, interpolating linearly between samples.
void record_position(const ParticleRecord& record, std::size_t dim, double u,
                     std::span<double> out);

/// The stopped trajectory x_{t ^ .} of one particle as seen by coefficient
/// functions. Times before the birth delegate to the ancestors. The current
/// position is supplied by the caller, so a view is valid while a record is
/// still being simulated.
class ParticleView {
 public:
  ParticleView(std::span<const ParticleRecord> records, std::size_t index, std::size_t dim,
               double t, std::span<const double> current)
      : records_(records), index_(index), dim_(dim), t_(t), current_(current) {}

  double time() const noexcept { return t_; }
  std::size_t dim() const noexcept { return dim_; }
  const Label& label() const { return records_[index_].label; }
  /// x_t.
  std::span<const double> current() const noexcept { return current_; }
  /// x_{min(u, t)}.
  void position_at(double u, std::span<double> out) const;

 private:
  std::span<const ParticleRecord> records_;
  std::size_t index_;
  std::size_t dim_;
  double t_;
  std::span<const double> current_;
};

/// A finite labeled branching path over [0, T].
///
/// Records are sorted by label. The grid is strictly increasing from 0 to T
/// and contains every sample, birth and death time. Immutable; copies share
/// storage.
class TreePath {
 public:
  struct Trusted {};

  TreePath(std::size_t dim, double horizon, std::vector<double> grid,
           std::vector<ParticleRecord> records);
  /// Skips validation; for producers that build consistent paths by
  /// construction. Records must already be sorted by label.
  TreePath(Trusted, std::size_t dim, double horizon, std::vector<double> grid,
           std::vector<ParticleRecord> records);

  std::size_t dim() const noexcept { return data_->dim; }
  double horizon() const noexcept { return data_->horizon; }
  const std::vector<double>& grid() const noexcept { return data_->grid; }
  std::span<const ParticleRecord> records() const noexcept { return data_->records; }
  const ParticleRecord& record(std::size_t i) const { return data_->records[i]; }
  std::size_t record_count() const noexcept { return data_->records.size(); }
  std::optional<std::size_t> find(const Label& k) const;
  std::optional<Label> parent_label(std::size_t i) const;

  /// Throws InvalidArgument on any broken genealogy or grid invariant.
  void validate() const;

  /// Z_t with the cadlag convention: at a death time the offspring are
  /// present and the parent is not.
  ParticleConfiguration configuration_at(double t) const;
  /// Z_{t-}; equals configuration_at(0) at t = 0.
  ParticleConfiguration left_limit_at(double t) const;
  /// <Z_t, 1> without materialising positions.
  std::size_t count_at(double t) const;

  /// Builds a view of record `i` stopped at t; `scratch` receives x_t.
  ParticleView view(std::size_t i, double t, std::vector<double>& scratch) const;

  /// Event (birth or death) times strictly inside (0, T], sorted, unique.
  std::vector<double> event_times() const;

  bool same_storage(const TreePath& other) const noexcept { return data_ == other.data_; }

 private:
  struct Data {
    std::size_t dim;
    double horizon;
    std::vector<double> grid;
    std::vector<ParticleRecord> records;
  };
  std::shared_ptr<const Data> data_;
};

/// omega_{t ^ .}: events after t removed, positions frozen at time t, horizon
/// unchanged.
TreePath stop(const TreePath& p, double t);

/// Precomputed per-interval configurations of a path stopped at some time,
/// for repeated exact evaluation of the uniform metric.
class PathSnapshot {
 public:
  PathSnapshot(const TreePath& p, double stop_time);

  double stop_time() const noexcept { return stop_; }
  const std::vector<double>& knots() const noexcept { return knots_; }
  std::size_t dim() const noexcept { return dim_; }
  double horizon() const noexcept { return horizon_; }

  /// Scratch evaluation buffer: labels point into the owning path.
  struct Eval {
    std::vector<const Label*> labels;
    std::vector<double> coords;
  };
  /// Right value of the stopped path at u.
  void right(double u, Eval& out) const;
  /// Left limit of the stopped path at u > 0.
  void left(double u, Eval& out) const;

 private:
  void interpolate(std::size_t interval, double u, Eval& out) const;

  TreePath path_;  // keeps label storage alive
  std::size_t dim_;
  double horizon_;
  double stop_;
  std::vector<double> knots_;  // grid restricted to [0, stop] plus stop
  // Interval j covers [knots_[j], knots_[j+1]) (the last one is the single
  // point knots_.back()).
  std::vector<std::size_t> offset_;        // into ids_/start_/end_
  std::vector<std::uint32_t> ids_;         // record indices, label-sorted
  std::vector<double> start_;
  std::vector<double> end_;
};

/// d_E between two snapshot evaluations.
double eval_distance(const PathSnapshot::Eval& a, const PathSnapshot::Eval& b, std::size_t dim);

/// sup over u in [0, T] of d_E(p1(u ^ s1), p2(u ^ s2)), computed exactly from
/// right values and left limits at every knot of either path.
double snapshot_distance(const PathSnapshot& a, const PathSnapshot& b);

/// d(p1, p2): uniform metric over [0, T].
double path_distance(const TreePath& p1, const TreePath& p2);
/// d_t(p1, p2) = d(p1_{t ^ .}, p2_{t ^ .}).
double path_distance_t(const TreePath& p1, const TreePath& p2, double t);

/// max over event times of the population size.
std::size_t sup_population(const TreePath& p);

/// Number of particles ever alive, i.e. number of records.
std::size_t total_ever_alive(const TreePath& p) noexcept;

/// records.csv: label,parent,birth,death,offspring_count
void write_records_csv(std::ostream& os, const TreePath& p);
/// traj.csv: label,time,x_1..x_d
void write_trajectory_csv(std::ostream& os, const TreePath& p);
/// Inverse of the two writers; grid is rebuilt from all sample times plus T.
TreePath read_tree_csv(std::istream& records, std::istream& trajectory, double horizon);

}  // namespace mkvb
