#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "fixtures.hpp"
#include "mkvb/error.hpp"
#include "mkvb/transport.hpp"

using namespace mkvb;

namespace {

CountingDistribution random_distribution(std::mt19937_64& gen) {
  std::uniform_int_distribution<std::size_t> len(1, 9);
  std::exponential_distribution<double> expo(1.0);
  std::bernoulli_distribution sparse(0.3);
  std::vector<double> m(len(gen));
  double total = 0.0;
  for (auto& v : m) {
    v = sparse(gen) ? 0.0 : expo(gen);
    total += v;
  }
  if (total == 0.0) {
    m.back() = 1.0;
    total = 1.0;
  }
  for (auto& v : m) v /= total;
  // Absorb the rounding residue so the vector passes the 1e-12 check.
  double s = std::accumulate(m.begin(), m.end() - 1, 0.0);
  m.back() = std::max(0.0, 1.0 - s);
  return CountingDistribution(m);
}

// Independent oracle: minimum over all permutations of the mean cost.
double brute_force_assignment(const std::vector<double>& cost, std::size_t n) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  double best = 1e300;
  do {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += cost[i * n + perm[i]];
    best = std::min(best, s / static_cast<double>(n));
  } while (std::next_permutation(perm.begin(), perm.end()));
  return best;
}

EnvironmentMeasure measure_of(const std::vector<TreePath>& pool, std::size_t from, std::size_t n) {
  return EnvironmentMeasure(std::vector<TreePath>(pool.begin() + from, pool.begin() + from + n));
}

}  // namespace

TEST_CASE("w1_counting examples") {
  CountingDistribution p({0.5, 0.5});
  CountingDistribution q({0.0, 0.5, 0.5});
  CHECK(w1_counting(p, p) == 0.0);
  CHECK(w1_counting(CountingDistribution::dirac(0), CountingDistribution::dirac(3)) == 3.0);
  CHECK(w1_counting(p, q) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(w1_counting_via_intervals(p, p) == 0.0);
  CHECK(w1_counting_via_intervals(p, q) == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("counting distributions validate their masses") {
  CHECK_THROWS_AS(CountingDistribution({0.5, 0.6}), InvalidArgument);
  CHECK_THROWS_AS(CountingDistribution({-0.1, 1.1}), InvalidArgument);
  CHECK_THROWS_AS(CountingDistribution(std::vector<double>{}), InvalidArgument);
  CHECK(CountingDistribution({0.2, 0.3, 0.5}).mean() == doctest::Approx(1.3));
}

TEST_CASE("cdf and interval-overlap forms agree and obey the progeny-mean bound") {
  std::mt19937_64 gen(31);
  int mismatches = 0, bound_violations = 0;
  for (int i = 0; i < 1000; ++i) {
    auto p = random_distribution(gen);
    auto q = random_distribution(gen);
    const double a = w1_counting(p, q);
    const double b = w1_counting_via_intervals(p, q);
    const double bound = progeny_mean_deviation(p, q);
    if (std::abs(a - b) > 1e-10) ++mismatches;
    if (a > bound + 1e-12 || b > bound + 1e-12) ++bound_violations;
  }
  CHECK(mismatches == 0);
  CHECK(bound_violations == 0);
}

TEST_CASE("assignment solver matches brute force on small matrices") {
  std::mt19937_64 gen(41);
  std::uniform_real_distribution<double> unif(0.0, 3.0);
  for (std::size_t n = 1; n <= 6; ++n) {
    for (int rep = 0; rep < 20; ++rep) {
      std::vector<double> cost(n * n);
      for (auto& c : cost) c = unif(gen);
      auto cols = solve_assignment(cost, n);
      double s = 0.0;
      for (std::size_t i = 0; i < n; ++i) s += cost[i * n + cols[i]];
      CHECK(s / static_cast<double>(n) == doctest::Approx(brute_force_assignment(cost, n)));
      auto sorted = cols;
      std::sort(sorted.begin(), sorted.end());
      for (std::size_t i = 0; i < n; ++i) CHECK(sorted[i] == i);
    }
  }
}

TEST_CASE("exact w1_paths equals brute force over permutations of path costs") {
  auto pool = testing::simulated_pool(48, 43);
  std::size_t cursor = 0;
  for (std::size_t n = 1; n <= 6; ++n) {
    auto m1 = measure_of(pool, cursor, n);
    auto m2 = measure_of(pool, cursor + n, n);
    cursor += 2 * n;
    std::vector<double> cost(n * n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) cost[i * n + j] = path_distance(m1.raw_path(i), m2.raw_path(j));
    }
    auto r = w1_paths(m1, m2, W1Mode::exact);
    CHECK(r.value == doctest::Approx(brute_force_assignment(cost, n)).epsilon(1e-12));
    CHECK(w1_paths(m1, m1, W1Mode::exact).value == 0.0);
  }
  auto single = w1_paths(measure_of(pool, 0, 1), measure_of(pool, 1, 1), W1Mode::exact);
  CHECK(single.value == path_distance(pool[0], pool[1]));
}

TEST_CASE("exact mode refuses unequal or weighted supports") {
  auto pool = testing::simulated_pool(5, 47);
  CHECK_THROWS_AS(w1_paths(measure_of(pool, 0, 2), measure_of(pool, 2, 3), W1Mode::exact),
                  InvalidArgument);
  EnvironmentMeasure weighted({pool[0], pool[1]}, {0.25, 0.75});
  CHECK_THROWS_AS(w1_paths(weighted, measure_of(pool, 2, 2), W1Mode::exact), InvalidArgument);
  CHECK_THROWS_AS(EnvironmentMeasure({pool[0], pool[1]}, {0.5, 0.6}), InvalidArgument);
  CHECK_NOTHROW(w1_paths(weighted, measure_of(pool, 2, 3), W1Mode::approx));
}

TEST_CASE("approximate mode is a certified upper bound close to the exact value") {
  auto pool = testing::simulated_pool(64, 53);
  auto m1 = measure_of(pool, 0, 32);
  auto m2 = measure_of(pool, 32, 32);
  auto exact = w1_paths(m1, m2, W1Mode::exact);
  auto approx = w1_paths(m1, m2, W1Mode::approx);
  CHECK(approx.mode == W1Mode::approx);
  CHECK(approx.reg_eps > 0.0);
  CHECK(approx.value >= exact.value - 1e-12);
  CHECK(approx.value <= exact.value * 1.1 + 1e-9);
}

TEST_CASE("sinkhorn plan is feasible") {
  std::vector<double> cost{0.0, 1.0, 2.0, 1.0, 0.0, 1.0};
  std::vector<double> a{0.5, 0.5};
  std::vector<double> b{0.2, 0.3, 0.5};
  auto r = sinkhorn(cost, a, b, 0.05, 500);
  for (std::size_t i = 0; i < 2; ++i) {
    double row = 0.0;
    for (std::size_t j = 0; j < 3; ++j) row += r.plan[i * 3 + j];
    CHECK(row == doctest::Approx(a[i]).epsilon(1e-12));
  }
  for (std::size_t j = 0; j < 3; ++j) {
    CHECK(r.plan[j] + r.plan[3 + j] == doctest::Approx(b[j]).epsilon(1e-12));
  }
}

TEST_CASE("pushforward stops lazily and composes") {
  auto pool = testing::simulated_pool(6, 59);
  EnvironmentMeasure m(pool);
  CHECK(pushforward(m, 1.0).stop_time() == 1.0);
  auto ms = pushforward(pushforward(m, 0.7), 0.4);
  CHECK(ms.stop_time() == 0.4);
  CHECK(ms.size() == m.size());
  CHECK(ms.same_support(m));
  for (std::size_t i = 0; i < m.size(); ++i) {
    CHECK(ms.configuration_at(i, 0.9) == pool[i].configuration_at(0.4));
    CHECK(path_distance(ms.path(i), stop(pool[i], 0.4)) == 0.0);
  }
}

TEST_CASE("w1 between pushforwards is nondecreasing in the stop time") {
  auto pool = testing::simulated_pool(16, 61);
  auto m1 = measure_of(pool, 0, 8);
  auto m2 = measure_of(pool, 8, 8);
  double prev = 0.0;
  for (double s : {0.0, 0.125, 0.3, 0.5, 0.75, 1.0}) {
    const double w = w1_paths(pushforward(m1, s), pushforward(m2, s), W1Mode::exact).value;
    CHECK(w >= prev - 1e-12);
    prev = w;
  }
}

TEST_CASE("exact w1_paths satisfies the triangle inequality") {
  auto pool = testing::simulated_pool(60, 67);
  int violations = 0;
  for (std::size_t i = 0; i + 15 <= pool.size(); i += 15) {
    auto a = measure_of(pool, i, 5);
    auto b = measure_of(pool, i + 5, 5);
    auto c = measure_of(pool, i + 10, 5);
    const double ab = w1_paths(a, b, W1Mode::exact).value;
    const double ac = w1_paths(a, c, W1Mode::exact).value;
    const double cb = w1_paths(c, b, W1Mode::exact).value;
    if (ab > ac + cb + 1e-12) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("cost matrices do not depend on the worker count") {
  auto pool = testing::simulated_pool(20, 71);
  EnvironmentMeasure m1(std::vector<TreePath>(pool.begin(), pool.begin() + 10));
  EnvironmentMeasure m2(std::vector<TreePath>(pool.begin() + 10, pool.end()));
  SnapshotSet s1(m1), s2(m2);
  CHECK(cost_matrix(s1, s2, 1) == cost_matrix(s1, s2, 4));
}
