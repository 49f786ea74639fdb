#include "mkvb/transport.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "mkvb/error.hpp"
#include "mkvb/parallel.hpp"

namespace mkvb {

namespace {

constexpr double kMassTol = 1e-12;
constexpr double kInf = std::numeric_limits<double>::infinity();

void check_compatible(const EnvironmentMeasure& a, const EnvironmentMeasure& b) {
  if (a.dim() != b.dim()) throw InvalidArgument("environment dimension mismatch");
  if (std::abs(a.horizon() - b.horizon()) > 1e-12) throw InvalidArgument("environment horizon mismatch");
}

double logsumexp(const double* values, std::size_t n) {
  double hi = -kInf;
  for (std::size_t i = 0; i < n; ++i) hi = std::max(hi, values[i]);
  if (hi == -kInf) return -kInf;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += std::exp(values[i] - hi);
  return hi + std::log(s);
}

}  // namespace

void check_probability_vector(std::span<const double> masses, const std::string& what) {
  if (masses.empty()) throw InvalidArgument(what + ": empty probability vector");
  double total = 0.0;
  for (double m : masses) {
    if (!(m >= 0.0)) throw InvalidArgument(what + ": negative or NaN mass");
    total += m;
  }
  if (std::abs(total - 1.0) > kMassTol) {
    throw InvalidArgument(what + ": masses sum to " + format_real(total) + ", not 1");
  }
}

EnvironmentMeasure::EnvironmentMeasure(std::vector<TreePath> support)
    : EnvironmentMeasure(std::move(support), {}) {}

EnvironmentMeasure::EnvironmentMeasure(std::vector<TreePath> support, std::vector<double> weights)
    : data_(std::make_shared<Data>()) {
  if (support.empty()) throw InvalidArgument("environment measure needs a nonempty support");
  const std::size_t n = support.size();
  if (weights.empty()) {
    weights.assign(n, 1.0 / static_cast<double>(n));
    data_->uniform = true;
  } else {
    if (weights.size() != n) throw InvalidArgument("weights and support sizes differ");
    check_probability_vector(weights, "environment weights");
    data_->uniform = std::all_of(weights.begin(), weights.end(),
                                 [&](double w) { return w == weights.front(); });
  }
  for (const auto& p : support) {
    if (p.dim() != support.front().dim() || p.horizon() != support.front().horizon()) {
      throw InvalidArgument("environment support paths must share horizon and dimension");
    }
  }
  data_->paths = std::move(support);
  data_->weights = std::move(weights);
  stop_ = data_->paths.front().horizon();
}

TreePath EnvironmentMeasure::path(std::size_t i) const { return stop(data_->paths.at(i), stop_); }

ParticleConfiguration EnvironmentMeasure::configuration_at(std::size_t i, double t) const {
  return data_->paths.at(i).configuration_at(std::min(t, stop_));
}

std::size_t EnvironmentMeasure::count_at(std::size_t i, double t) const {
  return data_->paths[i].count_at(std::min(t, stop_));
}

EnvironmentMeasure EnvironmentMeasure::stopped(double t) const {
  if (!(t >= 0.0 && t <= horizon())) throw InvalidArgument("stop time outside [0, T]");
  EnvironmentMeasure out = *this;
  out.stop_ = std::min(stop_, t);
  return out;
}

std::vector<double> EnvironmentMeasure::memo(std::uint64_t key, double t,
                                             const std::function<std::vector<double>()>& compute) const {
  const auto cache_key = std::make_pair(key, std::min(t, stop_));
  {
    std::lock_guard lock(data_->cache_mutex);
    auto it = data_->cache.find(cache_key);
    if (it != data_->cache.end()) return it->second;
  }
  auto value = compute();
  std::lock_guard lock(data_->cache_mutex);
  data_->cache.emplace(cache_key, value);
  return value;
}

EnvironmentMeasure pushforward(const EnvironmentMeasure& m, double t) { return m.stopped(t); }

CountingDistribution::CountingDistribution(std::vector<double> masses) : masses_(std::move(masses)) {
  check_probability_vector(masses_, "counting distribution");
}

CountingDistribution CountingDistribution::dirac(std::size_t l) {
  std::vector<double> m(l + 1, 0.0);
  m[l] = 1.0;
  return CountingDistribution(std::move(m));
}

double CountingDistribution::mean() const noexcept {
  double s = 0.0;
  for (std::size_t l = 0; l < masses_.size(); ++l) s += static_cast<double>(l) * masses_[l];
  return s;
}

double w1_counting(const CountingDistribution& p, const CountingDistribution& q) {
  const std::size_t top = std::max(p.support_bound(), q.support_bound());
  double fp = 0.0;
  double fq = 0.0;
  double total = 0.0;
  // Both cdfs equal 1 from the larger support bound on.
  for (std::size_t j = 0; j < top; ++j) {
    fp += p.mass(j);
    fq += q.mass(j);
    total += std::abs(fp - fq);
  }
  return total;
}

double w1_counting_via_intervals(const CountingDistribution& p, const CountingDistribution& q) {
  // Walk the two partitions of [0, 1) in parallel; on each overlap
  // I_l cap I'_m the quantile functions equal l and m.
  std::size_t l = 0;
  std::size_t m = 0;
  const std::size_t lp = p.support_bound();
  const std::size_t lq = q.support_bound();
  double end_p = p.mass(0);
  double end_q = q.mass(0);
  double lo = 0.0;
  double total = 0.0;
  while (l <= lp && m <= lq) {
    const double hi = std::min(end_p, end_q);
    if (hi > lo) {
      total += std::abs(static_cast<double>(l) - static_cast<double>(m)) * (hi - lo);
      lo = hi;
    }
    if (end_p <= end_q) {
      if (++l <= lp) end_p += p.mass(l);
    } else {
      if (++m <= lq) end_q += q.mass(m);
    }
  }
  // Rounding can leave the partition ends slightly below 1; the remaining
  // sliver belongs to the top intervals.
  if (lo < 1.0) {
    const double a = static_cast<double>(std::min(l, lp));
    const double b = static_cast<double>(std::min(m, lq));
    total += std::abs(a - b) * (1.0 - lo);
  }
  return total;
}

double progeny_mean_deviation(const CountingDistribution& p, const CountingDistribution& q) {
  const std::size_t top = std::max(p.support_bound(), q.support_bound());
  double s = 0.0;
  for (std::size_t l = 0; l <= top; ++l) s += static_cast<double>(l) * std::abs(p.mass(l) - q.mass(l));
  return s;
}

std::string to_string(W1Mode mode) { return mode == W1Mode::exact ? "exact" : "approx"; }

W1Mode parse_w1_mode(const std::string& text) {
  if (text == "exact") return W1Mode::exact;
  if (text == "approx") return W1Mode::approx;
  throw InvalidArgument("unknown W1 mode '" + text + "'");
}

SnapshotSet::SnapshotSet(const EnvironmentMeasure& m, std::size_t workers) : measure_(m) {
  std::vector<std::unique_ptr<PathSnapshot>> tmp(m.size());
  parallel_for(m.size(), workers, [&](std::size_t i) {
    tmp[i] = std::make_unique<PathSnapshot>(m.raw_path(i), m.stop_time());
  });
  snaps_.reserve(m.size());
  for (auto& s : tmp) snaps_.push_back(std::move(*s));
}

std::vector<double> cost_matrix(const SnapshotSet& a, const SnapshotSet& b, std::size_t workers) {
  check_compatible(a.measure(), b.measure());
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  std::vector<double> cost(n * m);
  parallel_for(n, workers, [&](std::size_t i) {
    for (std::size_t j = 0; j < m; ++j) cost[i * m + j] = snapshot_distance(a[i], b[j]);
  });
  return cost;
}

std::vector<std::size_t> solve_assignment(std::span<const double> cost, std::size_t n) {
  if (cost.size() != n * n) throw InvalidArgument("assignment cost matrix must be n x n");
  // 1-based potentials u (rows) and v (columns); way[] stores the
  // augmenting tree, p[j] the row matched to column j.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::fill(minv.begin(), minv.end(), kInf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      double delta = kInf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<std::size_t> col_of_row(n);
  for (std::size_t j = 1; j <= n; ++j) col_of_row[p[j] - 1] = j - 1;
  return col_of_row;
}

SinkhornResult sinkhorn(std::span<const double> cost, std::span<const double> a,
                        std::span<const double> b, double eps, std::size_t iterations) {
  const std::size_t n = a.size();
  const std::size_t m = b.size();
  if (cost.size() != n * m) throw InvalidArgument("sinkhorn cost matrix shape mismatch");
  if (!(eps > 0.0)) throw InvalidArgument("sinkhorn regularisation must be positive");
  std::vector<double> log_a(n), log_b(m);
  for (std::size_t i = 0; i < n; ++i) log_a[i] = a[i] > 0.0 ? std::log(a[i]) : -kInf;
  for (std::size_t j = 0; j < m; ++j) log_b[j] = b[j] > 0.0 ? std::log(b[j]) : -kInf;
  std::vector<double> f(n, 0.0), g(m, 0.0), buf(std::max(n, m));
  for (std::size_t it = 0; it < iterations; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < m; ++j) buf[j] = (g[j] - cost[i * m + j]) / eps;
      f[i] = log_a[i] == -kInf ? -kInf : eps * (log_a[i] - logsumexp(buf.data(), m));
    }
    for (std::size_t j = 0; j < m; ++j) {
      for (std::size_t i = 0; i < n; ++i) buf[i] = (f[i] - cost[i * m + j]) / eps;
      g[j] = log_b[j] == -kInf ? -kInf : eps * (log_b[j] - logsumexp(buf.data(), n));
    }
  }
  SinkhornResult out;
  out.eps = eps;
  out.plan.assign(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < m; ++j) {
      if (f[i] == -kInf || g[j] == -kInf) continue;
      out.plan[i * m + j] = std::exp((f[i] + g[j] - cost[i * m + j]) / eps);
      out.regularized_cost += out.plan[i * m + j] * cost[i * m + j];
    }
  }
  // Round onto the polytope of couplings with marginals (a, b).
  auto& P = out.plan;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += P[i * m + j];
    const double x = r > 0.0 ? std::min(a[i] / r, 1.0) : 1.0;
    for (std::size_t j = 0; j < m; ++j) P[i * m + j] *= x;
  }
  std::vector<double> col(m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) col[j] += P[i * m + j];
  for (std::size_t j = 0; j < m; ++j) {
    const double y = col[j] > 0.0 ? std::min(b[j] / col[j], 1.0) : 1.0;
    for (std::size_t i = 0; i < n; ++i) P[i * m + j] *= y;
  }
  std::vector<double> err_r(n), err_c(m);
  double err_norm = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double r = 0.0;
    for (std::size_t j = 0; j < m; ++j) r += P[i * m + j];
    err_r[i] = std::max(a[i] - r, 0.0);
    err_norm += err_r[i];
  }
  for (std::size_t j = 0; j < m; ++j) {
    double c = 0.0;
    for (std::size_t i = 0; i < n; ++i) c += P[i * m + j];
    err_c[j] = std::max(b[j] - c, 0.0);
  }
  if (err_norm > 0.0) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < m; ++j) P[i * m + j] += err_r[i] * err_c[j] / err_norm;
  }
  for (std::size_t k = 0; k < n * m; ++k) out.rounded_cost += P[k] * cost[k];
  return out;
}

W1Result w1_paths(const EnvironmentMeasure& m1, const EnvironmentMeasure& m2, W1Mode mode,
                  const W1Options& options) {
  return w1_paths(SnapshotSet(m1, options.workers), SnapshotSet(m2, options.workers), mode, options);
}

W1Result w1_paths(const SnapshotSet& s1, const SnapshotSet& s2, W1Mode mode, const W1Options& options) {
  const auto& m1 = s1.measure();
  const auto& m2 = s2.measure();
  check_compatible(m1, m2);
  W1Result out;
  out.mode = mode;
  out.support1 = m1.size();
  out.support2 = m2.size();
  if (mode == W1Mode::exact) {
    if (m1.size() != m2.size() || !m1.uniform() || !m2.uniform()) {
      throw InvalidArgument("exact W1 needs equal support sizes with uniform weights");
    }
    if (m1.size() > options.exact_threshold) {
      throw InvalidArgument("exact W1 support size " + std::to_string(m1.size()) +
                            " exceeds the threshold " + std::to_string(options.exact_threshold));
    }
  }
  const auto cost = cost_matrix(s1, s2, options.workers);
  if (mode == W1Mode::exact) {
    const std::size_t n = m1.size();
    const auto match = solve_assignment(cost, n);
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) total += cost[i * n + match[i]];
    out.value = total / static_cast<double>(n);
    return out;
  }
  std::vector<double> sorted(cost);
  auto mid = sorted.begin() + static_cast<std::ptrdiff_t>(sorted.size() / 2);
  std::nth_element(sorted.begin(), mid, sorted.end());
  double scale = *mid;
  if (!(scale > 0.0)) {
    double sum = 0.0;
    std::size_t pos = 0;
    for (double c : cost) {
      if (c > 0.0) {
        sum += c;
        ++pos;
      }
    }
    if (pos == 0) return out;  // all costs vanish
    scale = sum / static_cast<double>(pos);
  }
  const auto result = sinkhorn(cost, m1.weights(), m2.weights(), options.reg_factor * scale,
                               options.sinkhorn_iterations);
  out.value = result.rounded_cost;
  out.reg_eps = result.eps;
  out.regularized_cost = result.regularized_cost;
  return out;
}

}  // namespace mkvb
