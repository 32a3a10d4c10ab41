#include <doctest.h>

#include <cmath>
#include <random>
#include <set>

#include "derand/applications.hpp"
#include "derand/baselines.hpp"
#include "test_util.hpp"

using namespace derand;

namespace {

EngineConfig practical() { return EngineConfig::for_profile(Profile::kPractical); }

std::vector<int32_t> range(int32_t lo, int32_t hi) {
  std::vector<int32_t> v(static_cast<size_t>(hi - lo));
  std::iota(v.begin(), v.end(), lo);
  return v;
}

}  // namespace

TEST_CASE("set system and graph validation") {
  SetSystem s(5, {{3, 1, 0}, {}});
  CHECK(s.set(0) == std::vector<int32_t>{0, 1, 3});
  CHECK_THROWS_AS(SetSystem(3, {{0, 3}}), std::invalid_argument);
  CHECK_THROWS_AS(SetSystem(3, {{1, 1}}), std::invalid_argument);
  Graph g(4, {{0, 1}, {2, 1}});
  CHECK(g.neighbors(1) == std::vector<int32_t>{0, 2});
  CHECK(g.degree(3) == 0);
  CHECK(g.edge_count() == 2);
  CHECK_THROWS_AS(Graph(3, {{1, 1}}), std::invalid_argument);
  CHECK_THROWS_AS(Graph(3, {{0, 1}, {1, 0}}), std::invalid_argument);
  CHECK_THROWS_AS(Graph(3, {{0, 5}}), std::invalid_argument);
}

TEST_CASE("sample_sets: p = 1 keeps everything, window algebra") {
  std::mt19937_64 g(1);
  SetSystem s(300, testing::random_sets(g, 300, 10, 20, 60));
  SetSample all = sample_sets(s, 1.0, 0.5, 16, practical());
  CHECK(all.members == range(0, 300));
  for (int64_t i = 0; i < s.size(); ++i) {
    CHECK(all.report.hits[i] == static_cast<int64_t>(s.set(i).size()));
  }
  SetSample wide = sample_sets(s, 0.25, 1.0, 16, practical());
  for (int64_t i = 0; i < s.size(); ++i) {
    CHECK(wide.report.lower[i] == 0.0);
    CHECK(wide.report.upper[i] == doctest::Approx(0.5 * s.set(i).size()));
  }
  CHECK_THROWS_AS(sample_sets(s, 0.0, 0.5, 16, practical()), std::invalid_argument);
  CHECK_THROWS_AS(sample_sets(s, 0.5, 1.5, 16, practical()), std::invalid_argument);
  SetSystem with_empty(4, {{0, 1}, {}});
  CHECK_THROWS_AS(sample_sets(with_empty, 0.5, 0.5, 16, practical()), std::invalid_argument);
}

TEST_CASE("sample_sets: window counted from T, deterministic") {
  std::mt19937_64 g(2);
  SetSystem s(2048, testing::random_sets(g, 2048, 128, 256, 256));
  // eps = 1/2 puts size-256 sets above ln(n) / (p eps^2), about 244.
  SetSample a = sample_sets(s, 0.125, 0.5, 32, practical());
  REQUIRE(a.report.below_regime == 0);
  EngineConfig many = practical();
  many.threads = 3;
  SetSample b = sample_sets(s, 0.125, 0.5, 32, many);
  CHECK(a.members == b.members);
  std::set<int32_t> t(a.members.begin(), a.members.end());
  CHECK(t.size() == a.members.size());
  CHECK(std::is_sorted(a.members.begin(), a.members.end()));
  CHECK(a.members.back() < 2048);
  int64_t outside = 0;
  for (int64_t i = 0; i < s.size(); ++i) {
    int64_t h = 0;
    for (int32_t j : s.set(i)) h += t.count(j);
    CHECK(a.report.hits[i] == h);
    bool in = h >= 0.5 * 32 && h <= 1.5 * 32;
    CHECK(static_cast<bool>(a.report.inside[i]) == in);
    outside += !in;
  }
  CHECK(a.report.outside == outside);
  CHECK(outside == 0);
}

TEST_CASE("sample_graph_neighbors: star, empty graph") {
  const int n = 1025;
  std::vector<std::pair<int32_t, int32_t>> star;
  for (int v = 1; v < n; ++v) star.emplace_back(0, v);
  GraphSample s = sample_graph_neighbors(Graph(n, star), 0.5, 0.25, 16, practical());
  REQUIRE(s.report.constrained == std::vector<int32_t>{0});
  int64_t hit = 0;
  for (int32_t v : s.members) hit += v != 0;
  CHECK(hit >= 0.75 * (n - 1) / 2.0);
  CHECK(hit <= 1.25 * (n - 1) / 2.0);
  CHECK(s.report.sets.hits[0] == hit);

  GraphSample e = sample_graph_neighbors(Graph(50, {}), 0.5, 0.25, 16, practical());
  CHECK(e.report.constrained.empty());
  CHECK(e.report.threshold == 8);
  for (int32_t v : e.members) CHECK((v >= 0 && v < 50));
}

TEST_CASE("partition_yes_no") {
  const int n = 4096;
  SetSystem one(n, {range(0, n)});
  Partition p = partition_yes_no(one, 64, practical());
  CHECK(p.report.yes[0] >= n / 5);
  CHECK(p.report.no[0] >= n / 5);
  CHECK(p.report.failing == 0);
  int64_t yes = 0;
  for (Label l : p.labels) yes += l == Label::kYes;
  CHECK(yes == p.report.yes[0]);

  SetSystem two(n, {range(0, n / 2), range(n / 2, n)});
  Partition q = partition_yes_no(two, 64, practical());
  for (int i = 0; i < 2; ++i) {
    CHECK(q.report.meets_fifth[i]);
    CHECK(q.report.yes[i] + q.report.no[i] + q.report.maybe[i] == n / 2);
  }
  SetSystem tiny(n, {range(0, 3)});
  CHECK_THROWS_AS(partition_yes_no(tiny, 64, practical()), std::invalid_argument);
}

TEST_CASE("randomized walk") {
  ConstraintMatrix a = ConstraintMatrix::from_sets(6, {{0, 1, 2}, {3, 4, 5}});
  Eigen::VectorXd p(6);
  p << 0, 1, 0, 1, 1, 0;
  RandomWalkResult r = randomized_walk(a, p, 8, 3);
  CHECK(r.q == p);
  CHECK(r.steps == 6400);
  CHECK_THROWS_AS(randomized_walk(a, p, 7, 3), std::invalid_argument);

  Eigen::VectorXd h = Eigen::VectorXd::Constant(6, 0.5);
  RandomWalkResult w1 = randomized_walk(a, h, 8, 11, -1, 100), w2 = randomized_walk(a, h, 8, 11, -1, 100);
  CHECK(w1.num == w2.num);
  CHECK(w1.diag.phi == w2.diag.phi);
  CHECK(w1.diag.steps.front() == 0);
  CHECK(w1.diag.steps.back() == 6400);
  CHECK(w1.diag.phi[0][0] == doctest::Approx(1.5));
  CHECK(w1.diag.psi[0][0] == 0.0);

  // One variable, k = 2: P(ends at 1) = p.
  ConstraintMatrix single = ConstraintMatrix::from_sets(1, {{0}});
  Eigen::VectorXd ph(1);
  ph << 0.5;
  int ones = 0;
  const int runs = 10000;
  for (int s = 0; s < runs; ++s) {
    RandomWalkResult x = randomized_walk(single, ph, 2, static_cast<uint64_t>(s));
    REQUIRE((x.q[0] == 0.0 || x.q[0] == 1.0));
    ones += x.q[0] == 1.0;
  }
  CHECK(std::abs(ones - runs / 2.0) <= 3.0 * std::sqrt(runs * 0.25));
}

TEST_CASE("randomized walk on the partition instance") {
  const int n = 2048;
  std::mt19937_64 g(9);
  auto sets = testing::random_sets(g, n, 8, 400, 800);
  sets.push_back(range(0, n));
  ConstraintMatrix a = ConstraintMatrix::from_sets(n, sets);
  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 0.5);
  int good = 0;
  const int runs = 100;
  for (int s = 0; s < runs; ++s) {
    RandomWalkResult r = randomized_walk(a, p, 8, 1000 + s);
    bool ok = true;
    for (const auto& set : sets) {
      int64_t yes = 0, no = 0;
      for (int32_t j : set) {
        yes += r.q[j] == 1.0;
        no += r.q[j] == 0.0;
      }
      ok = ok && 5 * yes >= static_cast<int64_t>(set.size()) && 5 * no >= static_cast<int64_t>(set.size());
    }
    good += ok;
  }
  CHECK(good >= 99);
}

TEST_CASE("monte carlo rounding") {
  CHECK(monte_carlo_round(Eigen::VectorXd::Zero(50), 1) == Eigen::VectorXd::Zero(50));
  CHECK(monte_carlo_round(Eigen::VectorXd::Ones(50), 1) == Eigen::VectorXd::Ones(50));
  const int n = 10000;
  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 0.5);
  int ok = 0;
  for (uint64_t s = 0; s < 1000; ++s) ok += std::abs(monte_carlo_round(p, s).sum() - n / 2.0) <= 4 * std::sqrt(n);
  CHECK(ok >= 990);
  CHECK(monte_carlo_round(p, 5) == monte_carlo_round(p, 5));
}

TEST_CASE("sequential conditional fixing") {
  const int n = 600;
  SetSystem one(n, {range(0, n)});
  SequentialResult r = sequential_conditional_fix(one);
  CHECK(r.plus[0] >= n / 3);
  CHECK(r.plus[0] <= 2 * n / 3);
  REQUIRE(r.pot_trace.size() == n + 1);
  CHECK(r.pot_trace[0] == 1.0);
  for (size_t t = 1; t < r.pot_trace.size(); ++t) CHECK(r.pot_trace[t] <= r.pot_trace[t - 1] * (1 + 1e-12));

  std::mt19937_64 g(3);
  SetSystem many(n, testing::random_sets(g, n, 20, 50, 200));
  SequentialResult m = sequential_conditional_fix(many);
  for (int64_t i = 0; i < many.size(); ++i) {
    const int64_t s = static_cast<int64_t>(many.set(i).size());
    CHECK(3 * m.plus[i] >= s);
    CHECK(3 * m.minus[i] >= s);
  }

  // Two disjoint sets: interleaving the other set's elements does not change
  // a set's counts.
  SetSystem two(200, {range(0, 100), range(100, 200)});
  std::vector<int32_t> order;
  for (int j = 0; j < 100; ++j) {
    order.push_back(100 + j);
    order.push_back(j);
  }
  SequentialResult a = sequential_conditional_fix(two), b = sequential_conditional_fix(two, order);
  CHECK(a.plus == b.plus);
  CHECK(a.minus == b.minus);
  SetSystem tiny(1000, {range(0, 3)});
  CHECK_THROWS_AS(sequential_conditional_fix(tiny), std::invalid_argument);
}
