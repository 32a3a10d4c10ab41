#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "derand/pairwise_space.hpp"
#include "derand/quadratic_objective.hpp"
#include "test_util.hpp"

using namespace derand;

TEST_CASE("space size and codes") {
  CHECK(PairwiseSpace(1).L() == 1);
  CHECK(PairwiseSpace(2).L() == 2);
  CHECK(PairwiseSpace(3).L() == 3);
  CHECK(PairwiseSpace(4).L() == 3);
  CHECK(PairwiseSpace(5).L() == 4);
  CHECK(PairwiseSpace(1024).L() == 11);
  PairwiseSpace s(6);
  CHECK(s.code(0) == 1);
  CHECK(s.code(5) == 11);
  CHECK(s.seed_count() == 16);
}

TEST_CASE("seed positions: bits are read most significant first") {
  PairwiseSpace s(4);  // L = 3
  std::vector<uint8_t> bits = {1, 0, 1};
  auto x = evaluate_assignment(s, bits);
  CHECK(x == s.evaluate(0b101));
  CHECK_THROWS_AS(evaluate_assignment(s, std::vector<uint8_t>{1, 0}), std::invalid_argument);
}

TEST_CASE("pairwise independence, exhaustive, small n") {
  for (int64_t n : {1, 2, 3, 7, 8, 9, 33, 64}) {
    PairwiseSpace s(n);
    std::vector<int64_t> first(n, 0), second(n * n, 0);
    for (uint64_t z = 0; z < s.seed_count(); ++z) {
      auto x = s.evaluate(z);
      for (int64_t i = 0; i < n; ++i) {
        first[i] += x[i];
        for (int64_t j = 0; j < n; ++j) second[i * n + j] += x[i] * x[j];
      }
    }
    for (int64_t i = 0; i < n; ++i) {
      CHECK(first[i] == 0);
      for (int64_t j = 0; j < n; ++j) {
        if (i != j) CHECK(second[i * n + j] == 0);
      }
    }
  }
}

TEST_CASE("conditional expectation at the ends of the prefix range") {
  std::mt19937_64 g(11);
  for (int trial = 0; trial < 20; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(g() % 40);
    QuadraticObjective f = testing::random_objective(g, n, 1 + g() % 6, true);
    PairwiseSpace s(n);
    CHECK(conditional_expectation(s, f, {}) ==
          doctest::Approx(enumerate_expectation(s, f)).epsilon(1e-12));
    uint64_t z = g() % s.seed_count();
    SeedPrefix full;
    for (int r = 0; r < s.L(); ++r) full.bits.push_back((z >> (s.L() - 1 - r)) & 1);
    CHECK(conditional_expectation(s, f, full) ==
          doctest::Approx(f.evaluate(s.evaluate(z))).epsilon(1e-12));
  }
}

TEST_CASE("conditional expectation matches suffix enumeration") {
  std::mt19937_64 g(5);
  for (int trial = 0; trial < 40; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(g() % 60);
    QuadraticObjective f = testing::random_objective(g, n, 1 + g() % 8, trial % 2 == 0);
    PairwiseSpace s(n);
    SeedPrefix pre;
    int r = static_cast<int>(g() % (s.L() + 1));
    for (int i = 0; i < r; ++i) pre.bits.push_back(g() & 1);
    double ref = testing::suffix_average(s, f, pre.bits);
    CHECK(conditional_expectation(s, f, pre) ==
          doctest::Approx(ref).epsilon(1e-10).scale(1.0));
  }
}

namespace {

// Prefix values of the search against the oracle, and the contract.
void check_search(const QuadraticObjective& f, int threads) {
  PairwiseSpace s(f.num_vars());
  SearchOptions opts;
  opts.threads = threads;
  DerandomizeResult r = derandomize(s, f, opts);
  REQUIRE(static_cast<int>(r.prefix_values.size()) == s.L() + 1);
  double scale = std::max(1.0, std::abs(r.expectation));
  CHECK(r.expectation == doctest::Approx(conditional_expectation(s, f, {})).epsilon(1e-9).scale(scale));
  SeedPrefix pre;
  for (int q = 0; q <= s.L(); ++q) {
    if (q > 0) pre.bits.push_back((r.seed >> (s.L() - q)) & 1);
    double ce = conditional_expectation(s, f, pre);
    CHECK(r.prefix_values[q] == doctest::Approx(ce).epsilon(1e-9).scale(scale));
    if (q > 0) CHECK(r.prefix_values[q] <= r.prefix_values[q - 1] + 1e-9 * scale);
  }
  CHECK(r.x == s.evaluate(r.seed));
  CHECK(f.evaluate(r.x) <= r.expectation + 1e-9 * scale);
  CHECK(r.value == doctest::Approx(f.evaluate(r.x)).epsilon(1e-9).scale(scale));
}

}  // namespace

TEST_CASE("derandomize: bilinear terms") {
  std::mt19937_64 g(7);
  for (int trial = 0; trial < 30; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(g() % 200);
    check_search(testing::random_objective(g, n, 1 + g() % 10, false), 1);
  }
}

TEST_CASE("derandomize: square terms") {
  std::mt19937_64 g(8);
  for (int trial = 0; trial < 30; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(g() % 300);
    check_search(testing::random_objective(g, n, 1 + g() % 10, true), 1);
  }
}

TEST_CASE("derandomize: dense matrix path (few variables, many terms)") {
  std::mt19937_64 g(9);
  for (int trial = 0; trial < 10; ++trial) {
    int64_t n = 2 + static_cast<int64_t>(g() % 30);
    check_search(testing::random_objective(g, n, 400, trial % 2 == 0, n), 1);
  }
}

TEST_CASE("derandomize: sparse path with wide square terms (dense folding)") {
  std::mt19937_64 g(10);
  // More than the dense-matrix limit of variables; per-term arrays fold.
  check_search(testing::random_objective(g, 3000, 6, true, 900), 1);
  check_search(testing::random_objective(g, 2048, 12, true, 100), 1);
}

TEST_CASE("derandomize: consecutive squares over one index list") {
  std::mt19937_64 g(12);
  for (int64_t n : {1500, 3000}) {
    QuadraticObjective f(n);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (int t = 0; t < 40; ++t) {
      std::vector<int32_t> idx(static_cast<size_t>(n));
      std::iota(idx.begin(), idx.end(), 0);
      std::shuffle(idx.begin(), idx.end(), g);
      idx.resize(1 + g() % (t % 4 == 0 ? 900 : 40));
      std::vector<double> b1(idx.size()), b2(idx.size()), ga(idx.size());
      for (size_t i = 0; i < idx.size(); ++i) b1[i] = u(g), b2[i] = u(g), ga[i] = u(g);
      f.add_square_term(idx, b1, 0.5 + u(g), idx, ga, u(g));
      f.add_square_term(idx, b2, 0.5 + u(g), {}, {}, 0.0);
      if (t % 7 == 0) f.add_square_term(idx, b2, 1.0, {}, {}, 0.0);  // a third in a row
    }
    check_search(f, 1);
    check_search(f, 3);
  }
}

TEST_CASE("derandomize: thread count does not change the result") {
  std::mt19937_64 g(12);
  QuadraticObjective f = testing::random_objective(g, 2500, 400, true, 60);
  PairwiseSpace s(f.num_vars());
  SearchOptions one, many;
  many.threads = 4;
  DerandomizeResult a = derandomize(s, f, one), b = derandomize(s, f, many);
  CHECK(a.seed == b.seed);
  CHECK(a.x == b.x);
  CHECK(a.value == b.value);
  CHECK(a.prefix_values == b.prefix_values);
}

TEST_CASE("derandomize: a constant objective keeps seed 0") {
  QuadraticObjective f(5);
  f.add_constant(3.0);
  DerandomizeResult r = derandomize(PairwiseSpace(5), f);
  CHECK(r.seed == 0);
  CHECK(r.value == 3.0);
}

TEST_CASE("work counter grows with the objective") {
  std::mt19937_64 g(13);
  QuadraticObjective small = testing::random_objective(g, 2000, 10, true, 40);
  QuadraticObjective big = testing::random_objective(g, 2000, 80, true, 40);
  WorkCounter ws, wb;
  SearchOptions os, ob;
  os.counter = &ws;
  ob.counter = &wb;
  derandomize(PairwiseSpace(2000), small, os);
  derandomize(PairwiseSpace(2000), big, ob);
  CHECK(ws.ops > 0);
  CHECK(wb.ops > 4 * ws.ops);
}
