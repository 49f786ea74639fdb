#include "mkvb/diagnostics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <sstream>

#include "mkvb/error.hpp"
#include "mkvb/parallel.hpp"
#include "mkvb/random.hpp"

namespace mkvb {

namespace {

double parse_suffix(const std::string& text, std::string& head) {
  const auto at = text.find('@');
  head = text.substr(0, at);
  if (at == std::string::npos) return 1.0;
  try {
    std::size_t used = 0;
    const double v = std::stod(text.substr(at + 1), &used);
    if (used != text.size() - at - 1) throw InvalidArgument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw InvalidArgument("malformed parameter in '" + text + "'");
  }
}

double relative_gap(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max(1.0, std::abs(analytic));
}

/// Base-grid time at or before u.
double grid_floor(const SimulationGrid& grid, double u) {
  const double ratio = u / grid.step();
  const auto index = static_cast<std::size_t>(std::floor(ratio + 1e-9));
  return grid.time(std::min(index, grid.steps()));
}

double increment(const MartingaleSpec& spec, const TreePath& path, const EnvironmentMeasure& env,
                 const CoefficientSet& c, const SimulationGrid& grid) {
  const double hs = spec.h.evaluate(path, spec.s);
  if (hs == 0.0) return 0.0;
  std::vector<double> knots{spec.s};
  for (double u : path.grid()) {
    if (u > spec.s && u < spec.t) knots.push_back(u);
  }
  knots.push_back(spec.t);
  double integral = 0.0;
  const auto parts = static_cast<double>(spec.substeps);
  for (std::size_t j = 0; j + 1 < knots.size(); ++j) {
    const double width = (knots[j + 1] - knots[j]) / parts;
    if (width <= 0.0) continue;
    for (std::size_t q = 0; q < spec.substeps; ++q) {
      const double u = knots[j] + static_cast<double>(q) * width;
      integral += generator(spec.fn, u, path, env.stopped(grid_floor(grid, u)), c) * width;
    }
  }
  const double change = phi_of_config(spec.fn, path.configuration_at(spec.t)) -
                        phi_of_config(spec.fn, path.configuration_at(spec.s));
  return hs * (change - integral);
}

double mean_of(std::span<const double> xs) {
  double s = 0.0;
  for (double x : xs) s += x;
  return s / static_cast<double>(xs.size());
}

double standard_error_of(std::span<const double> xs, double mean) {
  if (xs.size() < 2) return 0.0;
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
}

}  // namespace

// ---------------------------------------------------------------------------
// Test functions

ScalarFunction::ScalarFunction(Kind kind, double scale) : kind_(kind), scale_(scale) {
  if (!std::isfinite(scale) || scale == 0.0) throw InvalidArgument("scale must be finite and nonzero");
}

ScalarFunction ScalarFunction::parse(const std::string& text) {
  std::string head;
  const double scale = parse_suffix(text, head);
  if (head == "x") return ScalarFunction(Kind::identity, scale);
  if (head == "sin") return ScalarFunction(Kind::sine, scale);
  if (head == "cos") return ScalarFunction(Kind::cosine, scale);
  if (head == "tanh") return ScalarFunction(Kind::tanh, scale);
  throw InvalidArgument("unknown outer test function '" + text + "'");
}

std::string ScalarFunction::name() const {
  std::string base;
  switch (kind_) {
    case Kind::identity: base = "x"; break;
    case Kind::sine: base = "sin"; break;
    case Kind::cosine: base = "cos"; break;
    case Kind::tanh: base = "tanh"; break;
  }
  return scale_ == 1.0 ? base : base + "@" + format_real(scale_);
}

double ScalarFunction::value(double x) const noexcept {
  const double y = scale_ * x;
  switch (kind_) {
    case Kind::identity: return y;
    case Kind::sine: return std::sin(y);
    case Kind::cosine: return std::cos(y);
    case Kind::tanh: return std::tanh(y);
  }
  return 0.0;
}

double ScalarFunction::first(double x) const noexcept {
  const double y = scale_ * x;
  switch (kind_) {
    case Kind::identity: return scale_;
    case Kind::sine: return scale_ * std::cos(y);
    case Kind::cosine: return -scale_ * std::sin(y);
    case Kind::tanh: {
      const double th = std::tanh(y);
      return scale_ * (1.0 - th * th);
    }
  }
  return 0.0;
}

double ScalarFunction::second(double x) const noexcept {
  const double y = scale_ * x;
  const double s2 = scale_ * scale_;
  switch (kind_) {
    case Kind::identity: return 0.0;
    case Kind::sine: return -s2 * std::sin(y);
    case Kind::cosine: return -s2 * std::cos(y);
    case Kind::tanh: {
      const double th = std::tanh(y);
      return -2.0 * s2 * th * (1.0 - th * th);
    }
  }
  return 0.0;
}

bool derivatives_consistent(const ScalarFunction& f, std::span<const double> points) {
  constexpr double h = 1e-5;
  for (double x : points) {
    const double d1 = (f.value(x + h) - f.value(x - h)) / (2 * h);
    const double d2 = (f.first(x + h) - f.first(x - h)) / (2 * h);
    if (relative_gap(f.first(x), d1) > 1e-3 || relative_gap(f.second(x), d2) > 1e-3) return false;
  }
  return true;
}

bool derivatives_consistent(const LabelFunction& f, const Label& k,
                            std::span<const std::vector<double>> points) {
  constexpr double h = 1e-5;
  for (const auto& x : points) {
    const std::size_t d = x.size();
    std::vector<double> grad(d), hess(d * d), gp(d), gm(d), xp = x, xm = x;
    f.gradient(k, x, grad);
    f.hessian(k, x, hess);
    for (std::size_t i = 0; i < d; ++i) {
      xp = x;
      xm = x;
      xp[i] += h;
      xm[i] -= h;
      if (relative_gap(grad[i], (f.value(k, xp) - f.value(k, xm)) / (2 * h)) > 1e-3) return false;
      f.gradient(k, xp, gp);
      f.gradient(k, xm, gm);
      for (std::size_t j = 0; j < d; ++j) {
        if (relative_gap(hess[j * d + i], (gp[j] - gm[j]) / (2 * h)) > 1e-3) return false;
      }
    }
  }
  return true;
}

double phi_of_config(const TestFunctionPair& fn, const ParticleConfiguration& e) {
  return fn.outer.value(pairing(e, fn.inner));
}

// ---------------------------------------------------------------------------
// Generator

double generator(const TestFunctionPair& fn, double t, const TreePath& path,
                 const EnvironmentMeasure& env, const CoefficientSet& c) {
  const std::size_t d = path.dim();
  if (c.dim() != d) throw InvalidArgument("coefficient and path dimensions differ");
  std::vector<std::size_t> alive;
  for (std::size_t i = 0; i < path.record_count(); ++i) {
    if (path.record(i).alive_at(t)) alive.push_back(i);
  }
  std::vector<std::vector<double>> positions(alive.size());
  double u = 0.0;
  for (std::size_t a = 0; a < alive.size(); ++a) {
    positions[a].resize(d);
    record_position(path.record(alive[a]), d, t, positions[a]);
    u += fn.inner.value(path.record(alive[a]).label, positions[a]);
  }
  const double phi_u = fn.outer.value(u);
  const double d1 = fn.outer.first(u);
  const double d2 = fn.outer.second(u);

  std::vector<double> b(d), sigma(d * d), grad(d), hess(d * d), progeny, scratch;
  double diffusion_sq = 0.0, drift_term = 0.0, jump_term = 0.0;
  for (std::size_t a = 0; a < alive.size(); ++a) {
    const ParticleRecord& rec = path.record(alive[a]);
    const std::span<const double> x = positions[a];
    const ParticleView view(path.records(), alive[a], d, t, x);
    const bool needs_motion = d1 != 0.0 || d2 != 0.0;
    if (needs_motion) {
      fn.inner.gradient(rec.label, x, grad);
      fn.inner.hessian(rec.label, x, hess);
      c.drift(t, view, env, b);
      c.diffusion(t, view, env, sigma);
      double second_order = 0.0;
      for (std::size_t j = 0; j < d; ++j) {
        double g_sigma = 0.0;
        for (std::size_t i = 0; i < d; ++i) g_sigma += grad[i] * sigma[i * d + j];
        diffusion_sq += g_sigma * g_sigma;
      }
      for (std::size_t i = 0; i < d; ++i) {
        for (std::size_t j = 0; j < d; ++j) {
          double a_ij = 0.0;
          for (std::size_t k = 0; k < d; ++k) a_ij += sigma[i * d + k] * sigma[j * d + k];
          second_order += a_ij * hess[i * d + j];
        }
        drift_term += b[i] * grad[i];
      }
      drift_term += 0.5 * second_order;
    }
    const double gamma = c.death_rate(t, view, env);
    if (gamma == 0.0) continue;
    c.progeny(t, view, env, progeny);
    const double without = u - fn.inner.value(rec.label, x);
    double expected = 0.0, added = 0.0;
    for (std::size_t l = 0; l < progeny.size(); ++l) {
      if (l > 0) added += fn.inner.value(rec.label.child(static_cast<std::uint32_t>(l)), x);
      if (progeny[l] > 0.0) expected += progeny[l] * fn.outer.value(without + added);
    }
    jump_term += gamma * (expected - phi_u);
  }
  return 0.5 * d2 * diffusion_sq + d1 * drift_term + jump_term;
}

// ---------------------------------------------------------------------------
// Martingale statistics

PathFunctional PathFunctional::parse(const std::string& text) {
  if (text == "one") return {text, [](const TreePath&, double) { return 1.0; }};
  if (text == "zero") return {text, [](const TreePath&, double) { return 0.0; }};
  if (text == "tanh_sum") {
    return {text, [](const TreePath& p, double s) {
              const auto e = p.configuration_at(s);
              double sum = 0.0;
              for (std::size_t i = 0; i < e.size(); ++i) sum += e.position(i)[0];
              return std::tanh(sum);
            }};
  }
  if (text.rfind("count_ge@", 0) == 0) {
    std::size_t k = 0;
    try {
      std::size_t used = 0;
      k = std::stoul(text.substr(9), &used);
      if (used != text.size() - 9) throw InvalidArgument("trailing characters");
    } catch (const std::exception&) {
      throw InvalidArgument("malformed path functional '" + text + "'");
    }
    return {text, [k](const TreePath& p, double s) { return p.count_at(s) >= k ? 1.0 : 0.0; }};
  }
  throw InvalidArgument("unknown path functional '" + text + "'");
}

std::string MartingaleSpec::describe() const {
  std::ostringstream os;
  os << "Phi=" << fn.outer.name() << " phi=" << fn.inner.name() << " h=" << h.name
     << " s=" << format_real(s) << " t=" << format_real(t);
  return os.str();
}

std::vector<double> martingale_increments(const MartingaleSpec& spec,
                                          std::span<const MartingaleGroup> groups,
                                          const CoefficientSet& c, const SimulationGrid& grid,
                                          std::size_t workers) {
  if (!(spec.s >= 0.0 && spec.s <= spec.t && spec.t <= grid.horizon())) {
    throw InvalidArgument("martingale times must satisfy 0 <= s <= t <= T");
  }
  if (spec.substeps == 0) throw InvalidArgument("quadrature substeps must be at least 1");
  std::vector<std::pair<std::size_t, std::size_t>> index;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t i = 0; i < groups[g].paths.size(); ++i) index.emplace_back(g, i);
  }
  std::vector<double> out(index.size());
  parallel_for(index.size(), workers, [&](std::size_t j) {
    const auto& group = groups[index[j].first];
    out[j] = increment(spec, group.paths[index[j].second], group.env, c, grid);
  });
  return out;
}

MartingaleReport summarize_increments(std::span<const double> increments, std::string descriptor) {
  if (increments.empty()) throw InvalidArgument("martingale statistic needs at least one path");
  MartingaleReport r;
  r.samples = increments.size();
  r.value = mean_of(increments);
  r.standard_error = standard_error_of(increments, r.value);
  if (r.standard_error > 0.0) {
    r.z = r.value / r.standard_error;
  } else {
    r.z = r.value == 0.0 ? 0.0 : std::copysign(kInfinity, r.value);
  }
  r.descriptor = std::move(descriptor);
  return r;
}

MartingaleReport martingale_statistic(const MartingaleSpec& spec,
                                      std::span<const MartingaleGroup> groups,
                                      const CoefficientSet& c, const SimulationGrid& grid,
                                      std::size_t workers) {
  const auto inc = martingale_increments(spec, groups, c, grid, workers);
  return summarize_increments(inc, spec.describe());
}

std::vector<MartingaleSpec> default_battery(double horizon) {
  struct Row {
    const char* outer;
    const char* inner;
    const char* h;
    double s, t;
  };
  static const Row rows[] = {
      {"x", "one", "one", 0.0, 1.0},
      {"x", "one", "count_ge@2", 0.25, 0.75},
      {"tanh@0.5", "one@0.5", "one", 0.0, 0.5},
      {"sin", "sin", "one", 0.5, 1.0},
      {"x", "tanh", "tanh_sum", 0.25, 1.0},
      {"cos@0.5", "gauss", "count_ge@1", 0.0, 1.0},
      {"tanh@0.5", "cos@0.5", "one", 0.25, 0.5},
      {"sin@0.3", "one", "tanh_sum", 0.5, 1.0},
  };
  std::vector<MartingaleSpec> out;
  for (const auto& r : rows) {
    out.push_back({{ScalarFunction::parse(r.outer), LabelFunction::parse(r.inner)},
                   PathFunctional::parse(r.h),
                   r.s * horizon,
                   r.t * horizon,
                   1});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Propagation of chaos

std::vector<ChaosRow> chaos_study(std::span<const std::size_t> n_list,
                                  const EnvironmentMeasure& fixed_point,
                                  const InitialCondition& ic, const CoefficientSet& c,
                                  const SimulationGrid& grid, const RandomnessSource& rng,
                                  const ChaosOptions& options) {
  if (options.system_replicas == 0) throw InvalidArgument("chaos study needs replicas");
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    if (n_list[i] == 0 || (i > 0 && n_list[i] <= n_list[i - 1])) {
      throw InvalidArgument("n_list must be positive and strictly increasing");
    }
  }
  const std::size_t pool = fixed_point.size();
  std::vector<ChaosRow> rows;
  for (std::size_t n : n_list) {
    ChaosRow row;
    row.n = n;
    row.replicas = options.system_replicas;
    const std::size_t k = std::min(n, pool);
    for (std::size_t r = 0; r < options.system_replicas; ++r) {
      const RandomnessSource sys_rng = rng.derive(mix64(n) ^ r);
      auto system = simulate_interacting(n, ic, c, grid, sys_rng, options.simulation);
      system.erase(system.begin() + static_cast<std::ptrdiff_t>(k), system.end());

      std::vector<std::size_t> order(pool);
      for (std::size_t i = 0; i < pool; ++i) order[i] = i;
      Stream pick = RandomnessSource::cell(sys_rng.master_seed(), 0x5eedULL);
      for (std::size_t i = 0; i < k; ++i) {
        const auto span = static_cast<double>(pool - i);
        const std::size_t j = i + std::min(pool - i - 1, static_cast<std::size_t>(pick.uniform() * span));
        std::swap(order[i], order[j]);
      }
      std::vector<TreePath> sample;
      sample.reserve(k);
      for (std::size_t i = 0; i < k; ++i) sample.push_back(fixed_point.path(order[i]));

      const auto w = w1_paths(EnvironmentMeasure(std::move(system)),
                              EnvironmentMeasure(std::move(sample)), W1Mode::approx, options.w1);
      row.values.push_back(w.value);
    }
    row.w1_mean = mean_of(row.values);
    row.w1_se = standard_error_of(row.values, row.w1_mean);
    rows.push_back(std::move(row));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Stability

StabilityResult stability_experiment(const CoefficientSet& c, const CoefficientSet& c2,
                                     const InitialCondition& ic, const InitialCondition& ic2,
                                     const EnvironmentMeasure& env, const SimulationGrid& grid,
                                     const RandomnessSource& rng,
                                     const StabilityOptions& options) {
  const std::size_t d = c.dim();
  if (c2.dim() != d || ic.dim() != d || ic2.dim() != d) {
    throw InvalidArgument("stability inputs must share one dimension");
  }
  if (options.replicas == 0) throw InvalidArgument("stability experiment needs replicas");
  struct Slot {
    double distance = 0.0;
    double init = 0.0;
    std::array<double, 4> dev{};  // b, sigma, gamma, p
  };
  std::vector<Slot> slots(options.replicas);
  const RandomnessSource probe_rng = rng.derive(0x57ab1e);
  parallel_for(options.replicas, options.simulation.workers, [&](std::size_t r) {
    SimulationOptions serial = options.simulation;
    serial.workers = 1;
    const auto z = simulate_tree(ic, c, env, grid, rng, r, serial);
    const auto z2 = simulate_tree(ic2, c2, env, grid, rng, r, serial);
    Slot& slot = slots[r];
    slot.distance = path_distance(z, z2);
    slot.init = config_distance(ic.sample(rng, r), ic2.sample(rng, r));
    if (r >= options.probes) return;

    Stream pick = RandomnessSource::cell(probe_rng.master_seed(), r);
    double u = pick.uniform() * grid.horizon();
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < z.record_count(); ++i) {
      if (z.record(i).alive_at(u)) alive.push_back(i);
    }
    if (alive.empty()) {
      u = 0.0;
      for (std::size_t i = 0; i < z.record_count(); ++i) {
        if (z.record(i).alive_at(u)) alive.push_back(i);
      }
    }
    const std::size_t idx =
        alive[std::min(alive.size() - 1, static_cast<std::size_t>(pick.uniform() * alive.size()))];
    std::vector<double> x(d);
    record_position(z.record(idx), d, u, x);
    const ParticleView view(z.records(), idx, d, u, x);
    const EnvironmentMeasure m = env.stopped(grid_floor(grid, u));
    const auto v1 = eval_all(c, u, view, m);
    const auto v2 = eval_all(c2, u, view, m);
    double db = 0.0, ds = 0.0, dp = 0.0;
    for (std::size_t i = 0; i < d; ++i) db += (v1.drift[i] - v2.drift[i]) * (v1.drift[i] - v2.drift[i]);
    for (std::size_t i = 0; i < d * d; ++i) {
      ds += (v1.diffusion[i] - v2.diffusion[i]) * (v1.diffusion[i] - v2.diffusion[i]);
    }
    const std::size_t len = std::max(v1.progeny.size(), v2.progeny.size());
    for (std::size_t l = 0; l < len; ++l) {
      const double a = l < v1.progeny.size() ? v1.progeny[l] : 0.0;
      const double b = l < v2.progeny.size() ? v2.progeny[l] : 0.0;
      dp += std::abs(a - b);
    }
    slot.dev = {std::sqrt(db), std::sqrt(ds), std::abs(v1.death_rate - v2.death_rate), dp};
  });

  StabilityResult out;
  out.replicas = options.replicas;
  std::vector<double> distances(slots.size());
  double init = 0.0;
  for (std::size_t r = 0; r < slots.size(); ++r) {
    distances[r] = slots[r].distance;
    init += slots[r].init;
    out.term_b = std::max(out.term_b, slots[r].dev[0]);
    out.term_sigma = std::max(out.term_sigma, slots[r].dev[1]);
    out.term_gamma = std::max(out.term_gamma, slots[r].dev[2]);
    out.term_p = std::max(out.term_p, slots[r].dev[3]);
  }
  out.lhs = mean_of(distances);
  out.lhs_se = standard_error_of(distances, out.lhs);
  out.term_init = init / static_cast<double>(slots.size());
  return out;
}

}  // namespace mkvb
