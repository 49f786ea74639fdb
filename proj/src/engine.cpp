#include "mkvb/engine.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <random>
#include <sstream>

#include "mkvb/error.hpp"
#include "mkvb/parallel.hpp"

namespace mkvb {

namespace {

struct StreamKeys {
  std::uint64_t brownian;
  std::uint64_t event;
  std::uint64_t offspring;
};

// Advances one tree step by step. Shared by the frozen-environment and the
// interacting simulators so both produce identical paths whenever the
// coefficients ignore the environment.
class TreeStepper {
 public:
  TreeStepper(const ParticleConfiguration& xi, const CoefficientSet& c, const SimulationGrid& grid,
              const RandomnessSource& rng, std::uint64_t replica, std::size_t cap)
      : c_(c), grid_(grid), rng_(rng), replica_(replica), cap_(cap), dim_(c.dim()) {
    if (xi.dim() != dim_) throw InvalidArgument("initial configuration dimension differs from d");
    records_.reserve(xi.size());
    for (std::size_t i = 0; i < xi.size(); ++i) {
      ParticleRecord r;
      r.label = xi.label(i);
      r.birth = 0.0;
      r.times.push_back(0.0);
      auto x = xi.position(i);
      r.positions.assign(x.begin(), x.end());
      add_record(std::move(r));
      alive_.push_back(records_.size() - 1);
    }
    b_.resize(dim_);
    sigma_.resize(dim_ * dim_);
    x_s_.resize(dim_);
    x_tau_.resize(dim_);
    w_full_.resize(dim_);
    w_s_.resize(dim_);
    w_prev_.resize(dim_);
    w_tau_.resize(dim_);
  }

  std::size_t total() const noexcept { return records_.size(); }
  double now() const noexcept { return now_; }

  void advance(std::size_t step, const EnvironmentMeasure& env) {
    const double t0 = grid_.time(step);
    const double t1 = grid_.time(step + 1);
    const double h = t1 - t0;
    const double gamma_bar = c_.bounds().gamma_bar;

    std::vector<std::pair<std::size_t, double>> work;
    work.reserve(alive_.size());
    for (auto r : alive_) work.emplace_back(r, t0);
    std::vector<std::size_t> next_alive;
    next_alive.reserve(alive_.size());

    for (std::size_t w = 0; w < work.size(); ++w) {
      const auto [r, s] = work[w];
      {
        const auto& rec = records_[r];
        std::copy_n(rec.positions.end() - static_cast<std::ptrdiff_t>(dim_), dim_, x_s_.begin());
      }
      {
        ParticleView view(records_, r, dim_, s, x_s_);
        checked_drift(c_, s, view, env, b_);
        checked_diffusion(c_, s, view, env, sigma_);
      }
      const bool diffusive = std::any_of(sigma_.begin(), sigma_.end(),
                                         [](double v) { return v != 0.0; });

      // Brownian increment over the whole base step, then bridge points.
      Stream bstream = RandomnessSource::cell(keys_[r].brownian, step);
      std::normal_distribution<double> normal;
      std::fill(w_s_.begin(), w_s_.end(), 0.0);
      if (diffusive) {
        const double sh = std::sqrt(h);
        for (auto& v : w_full_) v = sh * normal(bstream);
        if (s > t0) bridge(t0, std::vector<double>(dim_, 0.0), t1, s, bstream, normal, w_s_);
      } else {
        std::fill(w_full_.begin(), w_full_.end(), 0.0);
      }
      double t_prev = s;
      w_prev_ = w_s_;

      // Candidate death times and marks for this label and step.
      Stream estream = RandomnessSource::cell(keys_[r].event, step);
      std::poisson_distribution<std::uint32_t> poisson(gamma_bar * h);
      const std::uint32_t count = poisson(estream);
      candidates_.clear();
      for (std::uint32_t j = 0; j < count; ++j) {
        const double tau = t0 + h * estream.uniform();
        const double z = gamma_bar * estream.uniform();
        candidates_.emplace_back(tau, z);
      }
      std::sort(candidates_.begin(), candidates_.end());

      bool fired = false;
      for (const auto& [tau, z] : candidates_) {
        if (!(tau > s) || !(tau < t1)) continue;
        if (diffusive) {
          bridge(t_prev, w_prev_, t1, tau, bstream, normal, w_tau_);
          t_prev = tau;
          w_prev_ = w_tau_;
        } else {
          std::fill(w_tau_.begin(), w_tau_.end(), 0.0);
        }
        euler(s, tau, w_tau_, x_tau_);
        double gamma = 0.0;
        {
          ParticleView view(records_, r, dim_, tau, x_tau_);
          gamma = checked_death_rate(c_, tau, view, env);
          if (!(z < gamma)) continue;
          checked_progeny(c_, tau, view, env, progeny_);
        }
        const double u = RandomnessSource::cell(keys_[r].offspring, 0).uniform();
        const auto l = static_cast<std::uint32_t>(offspring_interval_index(u, progeny_));
        append_sample(r, tau, x_tau_);
        records_[r].death = tau;
        records_[r].offspring = l;
        event_times_.push_back(tau);
        for (std::uint32_t i = 1; i <= l; ++i) {
          ParticleRecord child;
          child.label = records_[r].label.child(i);
          child.parent_index = r;
          child.birth = tau;
          child.times.push_back(tau);
          child.positions.assign(x_tau_.begin(), x_tau_.end());
          add_record(std::move(child));
          work.emplace_back(records_.size() - 1, tau);
        }
        fired = true;
        break;
      }
      if (!fired) {
        euler(s, t1, w_full_, x_tau_);
        append_sample(r, t1, x_tau_);
        next_alive.push_back(r);
      }
    }
    alive_ = std::move(next_alive);
    now_ = t1;
    steps_done_ = step + 1;
  }

  // The path simulated so far, stopped at now().
  TreePath snapshot() const {
    std::vector<double> grid;
    grid.reserve(steps_done_ + event_times_.size() + 2);
    for (std::size_t i = 0; i <= steps_done_; ++i) grid.push_back(grid_.time(i));
    grid.insert(grid.end(), event_times_.begin(), event_times_.end());
    grid.push_back(grid_.horizon());
    std::sort(grid.begin(), grid.end());
    grid.erase(std::unique(grid.begin(), grid.end()), grid.end());
    auto records = records_;
    sort_records(records);
    return TreePath(TreePath::Trusted{}, dim_, grid_.horizon(), std::move(grid),
                    std::move(records));
  }

 private:
  void add_record(ParticleRecord r) {
    if (records_.size() >= cap_) {
      throw ExplosionError("population explosion guard: more than " + std::to_string(cap_) +
                           " particles ever alive in replica " + std::to_string(replica_) +
                           " at t=" + format_real(r.birth));
    }
    keys_.push_back({rng_.key(replica_, r.label, StreamPurpose::brownian),
                     rng_.key(replica_, r.label, StreamPurpose::event),
                     rng_.key(replica_, r.label, StreamPurpose::offspring)});
    records_.push_back(std::move(r));
  }

  void append_sample(std::size_t r, double t, const std::vector<double>& x) {
    auto& rec = records_[r];
    if (rec.times.back() == t) {
      std::copy(x.begin(), x.end(), rec.positions.end() - static_cast<std::ptrdiff_t>(dim_));
      return;
    }
    rec.times.push_back(t);
    rec.positions.insert(rec.positions.end(), x.begin(), x.end());
  }

  // W at time `at` given W(from) = w_from and W(t1) = w_full.
  void bridge(double from, const std::vector<double>& w_from, double t1, double at, Stream& s,
              std::normal_distribution<double>& normal, std::vector<double>& out) {
    const double span = t1 - from;
    const double frac = (at - from) / span;
    const double sd = std::sqrt(std::max(0.0, (at - from) * (t1 - at) / span));
    for (std::size_t c = 0; c < dim_; ++c) {
      out[c] = w_from[c] + frac * (w_full_[c] - w_from[c]) + sd * normal(s);
    }
  }

  // x_s + b (t - s) + sigma (W_t - W_s).
  void euler(double s, double t, const std::vector<double>& w_t, std::vector<double>& out) const {
    const double dt = t - s;
    for (std::size_t i = 0; i < dim_; ++i) {
      double v = x_s_[i] + b_[i] * dt;
      for (std::size_t j = 0; j < dim_; ++j) v += sigma_[i * dim_ + j] * (w_t[j] - w_s_[j]);
      out[i] = v;
    }
  }

  const CoefficientSet& c_;
  const SimulationGrid& grid_;
  const RandomnessSource& rng_;
  std::uint64_t replica_;
  std::size_t cap_;
  std::size_t dim_;

  std::vector<ParticleRecord> records_;
  std::vector<StreamKeys> keys_;
  std::vector<std::size_t> alive_;
  std::vector<double> event_times_;
  double now_ = 0.0;
  std::size_t steps_done_ = 0;

  std::vector<double> b_, sigma_, x_s_, x_tau_, w_full_, w_s_, w_prev_, w_tau_, progeny_;
  std::vector<std::pair<double, double>> candidates_;
};

// Number of base steps needed to reach `until`.
std::size_t steps_until(const SimulationGrid& grid, double until) {
  if (!(until > 0.0)) throw InvalidArgument("simulation end time must be positive");
  if (until >= grid.horizon()) return grid.steps();
  std::size_t n = 0;
  while (n < grid.steps() && grid.time(n) < until) ++n;
  return n;
}

TreePath finish(const TreeStepper& stepper, double until) {
  TreePath p = stepper.snapshot();
  if (until < stepper.now()) return stop(p, until);
  return p;
}

}  // namespace

SimulationGrid::SimulationGrid(double horizon, double step) : horizon_(horizon), step_(step) {
  if (!(horizon > 0.0) || !std::isfinite(horizon)) throw InvalidArgument("horizon T must be positive");
  if (!(step > 0.0) || step > horizon) throw InvalidArgument("step dt must lie in (0, T]");
  const double ratio = horizon / step;
  const double rounded = std::round(ratio);
  if (std::abs(ratio - rounded) > 1e-9 * std::max(1.0, ratio)) {
    throw InvalidArgument("T / dt must be an integer");
  }
  steps_ = static_cast<std::size_t>(rounded);
}

std::vector<double> SimulationGrid::times() const {
  std::vector<double> out(steps_ + 1);
  for (std::size_t i = 0; i <= steps_; ++i) out[i] = time(i);
  return out;
}

InitialCondition InitialCondition::fixed(ParticleConfiguration e) {
  InitialCondition ic;
  ic.dim_ = e.dim();
  e.validate();
  ic.fixed_ = std::move(e);
  return ic;
}

InitialCondition InitialCondition::random(CountingDistribution count, PositionLaw law,
                                          std::vector<double> center, double scale) {
  if (count.mass(0) != 0.0) throw InvalidArgument("initial count distribution must live on N+");
  if (center.empty()) throw InvalidArgument("initial position center must have d >= 1 entries");
  if (!(scale >= 0.0) || !std::isfinite(scale)) throw InvalidArgument("position scale must be >= 0");
  InitialCondition ic;
  ic.dim_ = center.size();
  ic.count_ = std::move(count);
  ic.law_ = law;
  ic.center_ = std::move(center);
  ic.scale_ = scale;
  return ic;
}

double InitialCondition::mean_count() const noexcept {
  if (fixed_) return static_cast<double>(fixed_->size());
  return count_->mean();
}

ParticleConfiguration InitialCondition::sample(const RandomnessSource& rng,
                                               std::uint64_t replica) const {
  if (fixed_) return *fixed_;
  Stream s = rng.stream(replica, Label::root(), StreamPurpose::initial, 0);
  const std::size_t n = offspring_interval_index(s.uniform(), *count_);
  std::normal_distribution<double> normal;
  ParticleConfiguration e(dim_);
  std::vector<double> x(dim_);
  for (std::size_t i = 1; i <= n; ++i) {
    for (std::size_t c = 0; c < dim_; ++c) {
      double v = 0.0;
      switch (law_) {
        case PositionLaw::point: v = 0.0; break;
        case PositionLaw::normal: v = normal(s); break;
        case PositionLaw::uniform: v = 2.0 * s.uniform() - 1.0; break;
      }
      x[c] = center_[c] + scale_ * v;
    }
    e.push_back_unchecked(Label{static_cast<std::uint32_t>(i)}, x);
  }
  return e;
}

InitialCondition InitialCondition::shifted(std::span<const double> delta) const {
  if (delta.size() != dim_) throw InvalidArgument("shift must have d entries");
  InitialCondition out = *this;
  if (fixed_) {
    ParticleConfiguration e(dim_);
    std::vector<double> x(dim_);
    for (std::size_t i = 0; i < fixed_->size(); ++i) {
      auto p = fixed_->position(i);
      for (std::size_t c = 0; c < dim_; ++c) x[c] = p[c] + delta[c];
      e.push_back_unchecked(fixed_->label(i), x);
    }
    out.fixed_ = std::move(e);
  } else {
    for (std::size_t c = 0; c < dim_; ++c) out.center_[c] += delta[c];
  }
  return out;
}

std::string InitialCondition::describe() const {
  std::ostringstream os;
  if (fixed_) {
    os << "fixed(" << fixed_->size() << " atoms)";
  } else {
    os << "random(mean_count=" << format_real(count_->mean()) << ", law=" << to_string(law_)
       << ", scale=" << format_real(scale_) << ")";
  }
  return os.str();
}

std::string to_string(InitialCondition::PositionLaw law) {
  switch (law) {
    case InitialCondition::PositionLaw::point: return "point";
    case InitialCondition::PositionLaw::normal: return "normal";
    case InitialCondition::PositionLaw::uniform: return "uniform";
  }
  return "point";
}

InitialCondition::PositionLaw parse_position_law(const std::string& text) {
  if (text == "point") return InitialCondition::PositionLaw::point;
  if (text == "normal") return InitialCondition::PositionLaw::normal;
  if (text == "uniform") return InitialCondition::PositionLaw::uniform;
  throw InvalidArgument("unknown position law '" + text + "' (point, normal, uniform)");
}

TreePath simulate_tree_from(const ParticleConfiguration& xi, const CoefficientSet& c,
                            const EnvironmentMeasure& env, const SimulationGrid& grid,
                            const RandomnessSource& rng, std::uint64_t replica,
                            const SimulationOptions& options) {
  if (env.horizon() + 1e-12 < grid.horizon()) {
    throw InvalidArgument("environment horizon is shorter than the simulation horizon");
  }
  if (env.dim() != c.dim()) throw InvalidArgument("environment dimension differs from d");
  const std::size_t steps = steps_until(grid, options.until);
  TreeStepper stepper(xi, c, grid, rng, replica, options.explosion_cap);
  for (std::size_t i = 0; i < steps; ++i) {
    stepper.advance(i, env.stopped(std::min(grid.time(i), env.stop_time())));
  }
  return finish(stepper, options.until);
}

TreePath simulate_tree(const InitialCondition& ic, const CoefficientSet& c,
                       const EnvironmentMeasure& env, const SimulationGrid& grid,
                       const RandomnessSource& rng, std::uint64_t replica,
                       const SimulationOptions& options) {
  return simulate_tree_from(ic.sample(rng, replica), c, env, grid, rng, replica, options);
}

std::vector<TreePath> simulate_replicas(const InitialCondition& ic, const CoefficientSet& c,
                                        const EnvironmentMeasure& env, const SimulationGrid& grid,
                                        const RandomnessSource& rng, std::size_t replicas,
                                        const SimulationOptions& options) {
  std::vector<std::optional<TreePath>> slots(replicas);
  parallel_for(replicas, options.workers, [&](std::size_t r) {
    slots[r] = simulate_tree(ic, c, env, grid, rng, r, options);
  });
  std::vector<TreePath> out;
  out.reserve(replicas);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

std::vector<TreePath> simulate_interacting(std::size_t n, const InitialCondition& ic,
                                           const CoefficientSet& c, const SimulationGrid& grid,
                                           const RandomnessSource& rng,
                                           const SimulationOptions& options) {
  if (n == 0) throw InvalidArgument("interacting system needs n >= 1");
  if (ic.dim() != c.dim()) throw InvalidArgument("initial condition dimension differs from d");
  const std::size_t steps = steps_until(grid, options.until);
  std::vector<std::unique_ptr<TreeStepper>> trees(n);
  for (std::size_t i = 0; i < n; ++i) {
    trees[i] = std::make_unique<TreeStepper>(ic.sample(rng, i), c, grid, rng, i,
                                             options.explosion_cap);
  }
  auto empirical = [&] {
    std::vector<std::optional<TreePath>> slots(n);
    parallel_for(n, options.workers, [&](std::size_t i) { slots[i] = trees[i]->snapshot(); });
    std::vector<TreePath> support;
    support.reserve(n);
    for (auto& s : slots) support.push_back(std::move(*s));
    return EnvironmentMeasure(std::move(support));
  };
  std::optional<EnvironmentMeasure> fixed_env;
  if (!c.uses_environment()) fixed_env = empirical();
  for (std::size_t step = 0; step < steps; ++step) {
    const double t0 = grid.time(step);
    const EnvironmentMeasure env = fixed_env ? *fixed_env : empirical().stopped(t0);
    parallel_for(n, options.workers, [&](std::size_t i) { trees[i]->advance(step, env); });
    std::size_t total = 0;
    for (const auto& t : trees) total += t->total();
    if (total > options.explosion_cap) {
      throw ExplosionError("population explosion guard: " + std::to_string(total) +
                           " particles ever alive across " + std::to_string(n) +
                           " trees at t=" + format_real(grid.time(step + 1)));
    }
  }
  std::vector<std::optional<TreePath>> slots(n);
  parallel_for(n, options.workers,
               [&](std::size_t i) { slots[i] = finish(*trees[i], options.until); });
  std::vector<TreePath> out;
  out.reserve(n);
  for (auto& s : slots) out.push_back(std::move(*s));
  return out;
}

TreePath frozen_path(const ParticleConfiguration& xi, double horizon) {
  std::vector<ParticleRecord> records;
  records.reserve(xi.size());
  for (std::size_t i = 0; i < xi.size(); ++i) {
    ParticleRecord r;
    r.label = xi.label(i);
    r.times = {0.0, horizon};
    auto x = xi.position(i);
    r.positions.assign(x.begin(), x.end());
    r.positions.insert(r.positions.end(), x.begin(), x.end());
    records.push_back(std::move(r));
  }
  return TreePath(TreePath::Trusted{}, xi.dim(), horizon, {0.0, horizon}, std::move(records));
}

EnvironmentMeasure frozen_initial_law(const InitialCondition& ic, double horizon,
                                      const RandomnessSource& rng, std::size_t replicas) {
  if (replicas == 0) throw InvalidArgument("initial law needs at least one replica");
  std::vector<TreePath> support;
  support.reserve(replicas);
  for (std::size_t r = 0; r < replicas; ++r) support.push_back(frozen_path(ic.sample(rng, r), horizon));
  return EnvironmentMeasure(std::move(support));
}

PopulationStatistics population_statistics(std::span<const TreePath> paths,
                                           std::span<const double> times) {
  if (paths.empty()) throw InvalidArgument("population statistics need at least one path");
  PopulationStatistics out;
  out.times.assign(times.begin(), times.end());
  const double n = static_cast<double>(paths.size());
  for (double t : times) {
    double sum = 0.0, sq = 0.0;
    for (const auto& p : paths) {
      const double c = static_cast<double>(p.count_at(t));
      sum += c;
      sq += c * c;
    }
    const double mean = sum / n;
    const double var = paths.size() > 1 ? std::max(0.0, (sq - n * mean * mean) / (n - 1.0)) : 0.0;
    out.mean.push_back(mean);
    out.standard_error.push_back(std::sqrt(var / n));
  }
  return out;
}

double linear_branching_mean(double n0, double gamma0, double progeny_mean, double t) {
  return n0 * std::exp(gamma0 * (progeny_mean - 1.0) * t);
}

}  // namespace mkvb
