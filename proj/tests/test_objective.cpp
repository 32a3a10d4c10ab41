#include <doctest.h>

#include <cmath>
#include <random>

#include "derand/pairwise_space.hpp"
#include "derand/quadratic_objective.hpp"
#include "test_util.hpp"

using namespace derand;

TEST_CASE("nice term evaluation by hand") {
  // (2 x0 - x1)(x1 + 3 x2) + 0.5 x0 + 1
  NiceQuadraticTerm t({0, 1}, {2, -1}, {1, 2}, {1, 3}, {0}, {0.5}, 1.0);
  std::vector<int8_t> x = {1, -1, 1};
  CHECK(t.evaluate(x) == doctest::Approx((2 + 1) * (-1 + 3) + 0.5 + 1));
  CHECK(t.complexity() == 6);
  CHECK(NiceQuadraticTerm::constant(4.0).evaluate(x) == 4.0);
}

TEST_CASE("term validation") {
  QuadraticObjective f(3);
  std::vector<int32_t> bad = {0, 3};
  std::vector<double> two = {1.0, 1.0};
  CHECK_THROWS_AS(f.add_term(bad, two, {}, {}, {}, {}, 0.0), std::invalid_argument);
  std::vector<int32_t> ok = {0, 1};
  std::vector<double> one = {1.0};
  CHECK_THROWS_AS(f.add_term(ok, one, {}, {}, {}, {}, 0.0), std::invalid_argument);
  std::vector<double> nan = {NAN, 1.0};
  CHECK_THROWS_AS(f.add_square_term(ok, nan, 1.0, {}, {}, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(f.add_square_term(ok, two, INFINITY, {}, {}, 0.0), std::invalid_argument);
  CHECK(f.num_terms() == 0);
}

TEST_CASE("square term equals its bilinear expansion") {
  std::mt19937_64 g(3);
  for (int trial = 0; trial < 50; ++trial) {
    int64_t n = 1 + static_cast<int64_t>(g() % 30);
    auto b = testing::random_subset(g, n, 1 + g() % n);
    auto c = testing::random_subset(g, n, g() % n);
    std::vector<double> beta(b.size()), alpha(b.size()), gamma(c.size());
    double kappa = std::abs(testing::coef(g));
    for (size_t i = 0; i < b.size(); ++i) {
      beta[i] = testing::coef(g);
      alpha[i] = kappa * beta[i];
    }
    for (double& v : gamma) v = testing::coef(g);
    QuadraticObjective sq(n), bi(n);
    sq.add_square_term(b, beta, kappa, c, gamma, 1.5);
    bi.add_term(b, alpha, b, beta, c, gamma, 1.5);
    CHECK(sq.total_complexity() == bi.total_complexity());
    PairwiseSpace s(n);
    for (int z = 0; z < 8; ++z) {
      auto x = s.evaluate(g() % s.seed_count());
      CHECK(sq.evaluate(x) == doctest::Approx(bi.evaluate(x)).epsilon(1e-12));
    }
    CHECK(enumerate_expectation(s, sq) ==
          doctest::Approx(enumerate_expectation(s, bi)).epsilon(1e-12));
    CHECK(conditional_expectation(s, sq, {}) ==
          doctest::Approx(conditional_expectation(s, bi, {})).epsilon(1e-10).scale(1.0));
  }
}

TEST_CASE("square term may reuse its B list as C") {
  QuadraticObjective f(4);
  std::vector<int32_t> idx = {0, 2, 3};
  std::vector<double> beta = {1, 2, 3}, gamma = {0.5, -1, 2};
  f.add_square_term(idx, beta, 2.0, idx, gamma, 0.0);
  std::vector<int8_t> x = {1, -1, -1, 1};
  double s = 1 - 2 + 3;
  CHECK(f.evaluate(x) == doctest::Approx(2.0 * s * s + 0.5 + 1 + 2));
}

TEST_CASE("objective sums terms; relabel renames variables") {
  QuadraticObjective f(3);
  std::vector<int32_t> a = {0}, b = {1}, c = {2};
  std::vector<double> one = {1.0};
  f.add_term(a, one, b, one, c, one, 0.25);
  f.add_constant(1.0);
  CHECK(f.num_terms() == 2);
  CHECK(f.total_complexity() == 5);
  std::vector<int8_t> x = {-1, 1, 1};
  CHECK(f.evaluate(x) == doctest::Approx(-1 + 1 + 0.25 + 1.0));
  std::vector<int32_t> map = {2, 0, 1};
  f.relabel(map, 3);
  std::vector<int8_t> y = {1, 1, -1};  // y[map[v]] = x[v]
  CHECK(f.evaluate(y) == doctest::Approx(-1 + 1 + 0.25 + 1.0));
  auto act = f.active_mask();
  CHECK(act == std::vector<uint8_t>{1, 1, 1});
  f.reset(2);
  CHECK(f.num_terms() == 0);
  CHECK(f.num_vars() == 2);
  CHECK(f.total_complexity() == 0);
}

TEST_CASE("expectation of x^T M x + g x + c over the space is trace-like") {
  // For pairwise independent +-1 variables, E[(sum b x)^2] = sum_j (sum over
  // entries with variable j of b)^2.
  QuadraticObjective f(5);
  std::vector<int32_t> idx = {0, 1, 1, 4};
  std::vector<double> beta = {1.0, 2.0, -0.5, 3.0};
  f.add_square_term(idx, beta, 1.0, {}, {}, 0.0);
  PairwiseSpace s(5);
  CHECK(enumerate_expectation(s, f) == doctest::Approx(1.0 + 1.5 * 1.5 + 9.0));
  CHECK(conditional_expectation(s, f, {}) == doctest::Approx(1.0 + 2.25 + 9.0));
}
