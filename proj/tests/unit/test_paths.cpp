#include <algorithm>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fixtures.hpp"
#include "mkvb/error.hpp"
#include "mkvb/paths.hpp"

using namespace mkvb;

namespace {

ParticleRecord record(Label k, std::size_t parent, std::vector<double> times,
                      std::vector<double> xs, std::optional<double> death = std::nullopt,
                      std::optional<std::uint32_t> offspring = std::nullopt) {
  ParticleRecord r;
  r.label = std::move(k);
  r.parent_index = parent;
  r.birth = times.front();
  r.times = std::move(times);
  r.positions = std::move(xs);
  r.death = death;
  r.offspring = offspring;
  return r;
}

TreePath immortal(double x) {
  return TreePath(1, 1.0, {0.0, 1.0}, {record(Label{1}, kNoParent, {0.0, 1.0}, {x, x})});
}

// Particle 1 moves 0 -> 1 on [0, 0.5] and splits into 1.1, 1.2 at 0.5.
TreePath one_split() {
  return TreePath(1, 1.0, {0.0, 0.5, 1.0},
                  {record(Label{1}, kNoParent, {0.0, 0.5}, {0.0, 1.0}, 0.5, 2u),
                   record(Label{1, 1}, 0, {0.5, 1.0}, {1.0, 2.0}),
                   record(Label{1, 2}, 0, {0.5, 1.0}, {1.0, 0.0})});
}

}  // namespace

TEST_CASE("configuration_at interpolates and follows the cadlag convention") {
  auto p = one_split();
  auto z0 = p.configuration_at(0.0);
  REQUIRE(z0.size() == 1);
  CHECK(z0.label(0) == Label{1});
  CHECK(z0.position(0)[0] == 0.0);
  auto z = p.configuration_at(0.25);
  CHECK(z.position(0)[0] == doctest::Approx(0.5));
  auto at_split = p.configuration_at(0.5);
  REQUIRE(at_split.size() == 2);
  CHECK(at_split.label(0) == Label{1, 1});
  CHECK(at_split.label(1) == Label{1, 2});
  auto before = p.left_limit_at(0.5);
  REQUIRE(before.size() == 1);
  CHECK(before.position(0)[0] == doctest::Approx(1.0));
  CHECK(p.configuration_at(0.75).position(0)[0] == doctest::Approx(1.5));
  CHECK_THROWS_AS(p.configuration_at(1.5), InvalidArgument);
  auto im = immortal(0.3);
  CHECK(im.configuration_at(0.77).position(0)[0] == 0.3);
}

TEST_CASE("validation catches broken genealogies") {
  CHECK_THROWS_AS(TreePath(1, 1.0, {0.0, 0.5, 1.0},
                           {record(Label{1}, kNoParent, {0.0, 0.5}, {0.0, 1.0}, 0.5, 1u),
                            record(Label{1, 2}, 0, {0.5, 1.0}, {1.0, 2.0})}),
                  InvalidArgument);
  // Child not starting at the parent's death position.
  CHECK_THROWS_AS(TreePath(1, 1.0, {0.0, 0.5, 1.0},
                           {record(Label{1}, kNoParent, {0.0, 0.5}, {0.0, 1.0}, 0.5, 1u),
                            record(Label{1, 1}, 0, {0.5, 1.0}, {1.5, 2.0})}),
                  InvalidArgument);
  // Event time missing from the grid.
  CHECK_THROWS_AS(TreePath(1, 1.0, {0.0, 1.0},
                           {record(Label{1}, kNoParent, {0.0, 0.5}, {0.0, 1.0}, 0.5, 0u)}),
                  InvalidArgument);
}

TEST_CASE("stop freezes the path and composes") {
  auto p = one_split();
  CHECK(stop(p, 1.0).same_storage(p));
  for (double s : {0.0, 0.3, 0.5, 0.8}) {
    auto ps = stop(p, s);
    CHECK(ps.horizon() == 1.0);
    for (double u : {0.0, 0.2, 0.5, 0.6, 0.9, 1.0}) {
      CHECK(ps.configuration_at(u) == p.configuration_at(std::min(s, u)));
    }
    for (double t : {0.1, 0.5, 0.7}) {
      CHECK(path_distance(stop(ps, t), stop(p, std::min(s, t))) == 0.0);
    }
  }
}

TEST_CASE("path_distance examples") {
  CHECK(path_distance(immortal(0.0), immortal(0.4)) == doctest::Approx(0.4).epsilon(1e-15));
  auto p = one_split();
  CHECK(path_distance(p, p) == 0.0);
  auto dying = TreePath(1, 1.0, {0.0, 0.5, 1.0},
                        {record(Label{1}, kNoParent, {0.0, 0.5}, {0.3, 0.3}, 0.5, 0u)});
  CHECK(path_distance(immortal(0.3), dying) == 1.0);
  CHECK(path_distance_t(immortal(0.3), dying, 0.4) == 0.0);
  CHECK_THROWS_AS(path_distance(immortal(0.0), TreePath(1, 2.0, {0.0, 2.0},
                                                        {record(Label{1}, kNoParent, {0.0, 2.0},
                                                                {0.0, 0.0})})),
                  InvalidArgument);
}

TEST_CASE("path_distance sees the supremum inside a segment only at knots") {
  // Crossing linear trajectories: gap 1 at both ends, 0 in the middle.
  auto a = TreePath(1, 1.0, {0.0, 1.0}, {record(Label{1}, kNoParent, {0.0, 1.0}, {0.0, 0.5})});
  auto b = TreePath(1, 1.0, {0.0, 1.0}, {record(Label{1}, kNoParent, {0.0, 1.0}, {0.5, 0.0})});
  CHECK(path_distance(a, b) == doctest::Approx(0.5));
  CHECK(path_distance_t(a, b, 0.5) == doctest::Approx(0.5));
}

TEST_CASE("population counts") {
  CHECK(sup_population(immortal(0.0)) == 1);
  CHECK(sup_population(one_split()) == 2);
  CHECK(total_ever_alive(one_split()) == 3);
}

TEST_CASE("simulated paths keep genealogy and antichain at random times") {
  auto pool = testing::simulated_pool(30, 11);
  std::mt19937_64 gen(5);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (const auto& p : pool) {
    CHECK_NOTHROW(p.validate());
    for (int i = 0; i < 64; ++i) CHECK_NOTHROW(p.configuration_at(unif(gen)).validate());
    CHECK(total_ever_alive(p) >= sup_population(p));
  }
}

TEST_CASE("path_distance is a metric on simulated pools") {
  auto pool = testing::simulated_pool(24, 17);
  std::mt19937_64 gen(9);
  std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
  int violations = 0;
  for (int t = 0; t < 1000; ++t) {
    const auto& a = pool[pick(gen)];
    const auto& b = pool[pick(gen)];
    const auto& c = pool[pick(gen)];
    const double ab = path_distance(a, b);
    if (ab != path_distance(b, a)) ++violations;
    if (path_distance(a, a) != 0.0) ++violations;
    if (ab > path_distance(a, c) + path_distance(c, b) + 1e-12) ++violations;
    if (&a != &b && !a.same_storage(b) && !(ab > 0.0)) ++violations;
  }
  CHECK(violations == 0);
}

TEST_CASE("truncated distance is monotone and compatible with stop") {
  auto pool = testing::simulated_pool(8, 23);
  for (std::size_t i = 0; i + 1 < pool.size(); ++i) {
    double prev = 0.0;
    for (double t : {0.0, 0.1, 0.25, 0.4, 0.5, 0.77, 1.0}) {
      const double d = path_distance_t(pool[i], pool[i + 1], t);
      CHECK(d >= prev);
      CHECK(d == path_distance(stop(pool[i], t), stop(pool[i + 1], t)));
      prev = d;
    }
    CHECK(path_distance_t(pool[i], pool[i + 1], 1.0) == path_distance(pool[i], pool[i + 1]));
  }
}

TEST_CASE("tree paths round-trip through the two-table CSV") {
  auto pool = testing::simulated_pool(5, 29);
  for (const auto& p : pool) {
    std::stringstream rec, traj;
    write_records_csv(rec, p);
    write_trajectory_csv(traj, p);
    auto q = read_tree_csv(rec, traj, p.horizon());
    CHECK(path_distance(p, q) == 0.0);
    CHECK(q.record_count() == p.record_count());
  }
}

TEST_CASE("ParticleView delegates to ancestors before the birth") {
  auto p = one_split();
  std::vector<double> scratch;
  auto idx = p.find(Label{1, 1});
  REQUIRE(idx.has_value());
  auto view = p.view(*idx, 0.75, scratch);
  std::vector<double> out(1);
  view.position_at(0.25, out);
  CHECK(out[0] == doctest::Approx(0.5));
  view.position_at(0.9, out);
  CHECK(out[0] == doctest::Approx(1.5));
  CHECK(view.current()[0] == doctest::Approx(1.5));
}
