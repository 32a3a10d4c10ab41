#include <doctest.h>

#include <cmath>
#include <random>

#include "derand/concentration.hpp"
#include "derand/integral_rounding.hpp"
#include "test_util.hpp"

using namespace derand;

namespace {

bool all_integral(const Eigen::VectorXd& q) {
  for (double v : q) {
    if (v != 0.0 && v != 1.0) return false;
  }
  return true;
}

EngineConfig practical() { return EngineConfig::for_profile(Profile::kPractical); }

ConstraintMatrix single_row(const std::vector<double>& w) {
  std::vector<ConstraintMatrix::Entry> e;
  for (size_t j = 0; j < w.size(); ++j) e.emplace_back(0, static_cast<int32_t>(j), w[j]);
  return ConstraintMatrix::from_entries(1, static_cast<int64_t>(w.size()), e);
}

}  // namespace

TEST_CASE("grid rounding") {
  Eigen::VectorXd p(4);
  p << 0.5, 0.26, 0.25, 0.05;
  Eigen::VectorXd r = round_probabilities_to_grid(p, 10);
  CHECK(r[0] == 0.5);
  CHECK(r[1] == doctest::Approx(0.3));
  CHECK(r[2] == doctest::Approx(0.3));  // tie rounds up
  CHECK(r[3] == doctest::Approx(0.1));
  std::mt19937_64 g(1);
  Eigen::VectorXd u(1000);
  for (double& v : u) v = std::uniform_real_distribution<double>(0, 1)(g);
  Eigen::VectorXd ru = round_probabilities_to_grid(u, 16);
  CHECK((ru - u).cwiseAbs().maxCoeff() <= 1.0 / 32 + 1e-15);
  p[0] = 1.5;
  CHECK_THROWS_AS(round_probabilities_to_grid(p, 10), std::invalid_argument);
}

TEST_CASE("fix_integral: base case and integral input") {
  ConstraintMatrix a = single_row({1.0});
  Eigen::VectorXd p(1), d(1);
  p << 0.5;
  d << 1.0;
  FixResult r = fix_integral(a, p, d, 8, practical());
  CHECK(r.q[0] == 0.0);
  CHECK(r.deviation[0] == 0.5);
  CHECK(r.bad.empty());

  std::mt19937_64 g(2);
  ConstraintMatrix b = testing::random_matrix(g, 8, 40, 5, 20, 0.5, 2.0);
  Eigen::VectorXd pi(40);
  for (int j = 0; j < 40; ++j) pi[j] = j % 2;
  FixResult ri = fix_integral(b, pi, Eigen::VectorXd::Constant(8, 0.1), 8, practical());
  CHECK(ri.q == pi);
  CHECK(ri.bad.empty());
  CHECK(ri.deviation.maxCoeff() == 0.0);
}

TEST_CASE("fix_integral: 64 rows of 512 unit weights") {
  std::mt19937_64 g(3);
  ConstraintMatrix a = ConstraintMatrix::from_sets(2048, testing::random_sets(g, 2048, 64, 512, 512));
  Eigen::VectorXd p = Eigen::VectorXd::Constant(2048, 0.5);
  Eigen::VectorXd d = Eigen::VectorXd::Constant(64, 0.15 * 256);
  FixResult r = fix_integral(a, p, d, 64, practical());
  CHECK(all_integral(r.q));
  CHECK(r.bad.empty());
  for (int i = 0; i < 64; ++i) CHECK(r.deviation[i] <= d[i]);
  // Deviations are measured against the caller's p.
  CHECK((r.deviation - a.deviations(p, r.q)).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("fix_integral: offsets count toward the budget") {
  const int n = 400;
  ConstraintMatrix a = single_row(std::vector<double>(n, 1.0));
  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 0.5), d(1), off(1);
  d << 30.0;
  off << 20.0;
  FixResult plain = fix_integral(a, p, d, 64, practical());
  FixResult zero = fix_integral(a, p, d, 64, practical(), Eigen::VectorXd::Zero(1));
  CHECK(plain.q == zero.q);

  FixResult r = fix_integral(a, p, d, 64, practical(), off);
  CHECK(all_integral(r.q));
  const double s = r.q.sum() - 0.5 * n;
  CHECK(std::abs(off[0] + s) <= d[0]);
  CHECK(s < 0.0);  // pulled back toward the target
  CHECK(r.deviation[0] == std::abs(s));
  CHECK(r.bad.empty());
  CHECK_THROWS_AS(fix_integral(a, p, d, 64, practical(), Eigen::VectorXd::Zero(2)),
                  std::invalid_argument);

  // finalize_bad_rows measures offset + A(q - p).
  FixResult f;
  f.q = p;
  for (int j = 0; j < 12; ++j) f.q[j] = 1.0;
  finalize_bad_rows(a, p, d, f, off);
  CHECK(f.deviation[0] == 6.0);
  CHECK(f.bad == std::vector<int32_t>{});
  off << 25.0;
  finalize_bad_rows(a, p, d, f, off);
  CHECK(f.bad == std::vector<int32_t>{0});
}

TEST_CASE("schedules") {
  CHECK(schedule_epsilon(0, 16) == 1.0 / 16);
  CHECK(schedule_epsilon(100, 16) == doctest::Approx(1.0 / 256));
  CHECK(schedule_alpha(0, 16) == 0.0);
  CHECK(schedule_alpha(1, 10) == doctest::Approx(0.5 * (0.2 + 0.1)));
  CHECK(subsampling_level(1.0) == 0);
  CHECK(subsampling_level(0.5) == 1);
  CHECK(subsampling_level(0.26) == 2);
  CHECK(subsampling_level(0.25) == 2);
  CHECK(subsampling_level(0.125) == 3);
  CHECK(subsampling_level(std::ldexp(1.0, -40)) == 40);
  CHECK_THROWS_AS(subsampling_level(0.0), std::invalid_argument);
  double total = 0;
  for (int l = 2; l <= 12; ++l) CHECK(practical_level_share(l) < 1.0);
  for (int l = 2; l <= 12; ++l) total += practical_level_share(l);
  CHECK(total > 0.0);
}

TEST_CASE("failure exponents by hand") {
  // Hoeffding: 64 unit weights at p = 1/4 -> sum a^2 = 64, sum p a = 16.
  ConstraintMatrix h = single_row(std::vector<double>(64, 1.0));
  Eigen::VectorXd ph = Eigen::VectorXd::Constant(64, 0.25), d(1);
  d << 8.0;
  ExponentReport eh = compute_failure_bounds(h, ph, d, 4, BoundMode::kHoeffding, 1.0);
  CHECK(eh.exponent[0] == doctest::Approx(1.0));
  CHECK(eh.prob_bad[0] == doctest::Approx(std::exp(-1.0)));

  // Chernoff: sum p a = 100, max a = 1, D = 20, k = 10 -> min(4, 20, 2).
  ConstraintMatrix c = single_row(std::vector<double>(200, 1.0));
  Eigen::VectorXd pc = Eigen::VectorXd::Constant(200, 0.5);
  d << 20.0;
  CHECK(compute_failure_bounds(c, pc, d, 10, BoundMode::kChernoff, 1.0).exponent[0] ==
        doctest::Approx(2.0));

  // One heavy weight: D / max a = 0.5 is the smallest term.
  std::vector<double> w(11, 1.0);
  w[0] = 100.0;
  ConstraintMatrix big = single_row(w);
  Eigen::VectorXd pb = Eigen::VectorXd::Constant(11, 0.5);
  pb[0] = 0.1;
  d << 50.0;
  ExponentReport eb = compute_failure_bounds(big, pb, d, 8, BoundMode::kChernoff, 4.0);
  CHECK(eb.exponent[0] == doctest::Approx(0.5));
  CHECK(eb.prob_bad[0] == 1.0);  // capped

  // Uniform unit weights with D = eps mu: min(eps^2 mu, eps mu, eps k).
  const double eps = 0.2, mu = 100.0;
  d << eps * mu;
  for (int k : {4, 64, 1024}) {
    double want = std::min({eps * eps * mu, eps * mu, eps * k});
    CHECK(compute_failure_bounds(c, pc, d, k, BoundMode::kChernoff, 4.0).exponent[0] ==
          doctest::Approx(want));
  }

  // Empty rows: infinite exponent, probability 0.
  ConstraintMatrix empty(2, 3);
  ExponentReport ee = compute_failure_bounds(empty, Eigen::VectorXd::Constant(3, 0.5),
                                             Eigen::VectorXd::Ones(2), 8, BoundMode::kBernstein, 4.0);
  CHECK(std::isinf(ee.exponent[0]));
  CHECK(ee.prob_bad[1] == 0.0);
  CHECK(ee.sum_prob_bad == 0.0);

  // Larger budgets never raise the bound.
  double prev = 2.0;
  for (double dd : {1.0, 5.0, 20.0, 80.0, 320.0}) {
    d << dd;
    double pr = compute_failure_bounds(c, pc, d, 16, BoundMode::kHoeffding, 4.0).prob_bad[0];
    CHECK(pr <= prev);
    prev = pr;
  }
}

TEST_CASE("Bernstein plan") {
  // Weights in (2, 4]: one bucket.
  ConstraintMatrix one = single_row({2.5, 3.0, 4.0, 3.9});
  Eigen::VectorXd p = Eigen::VectorXd::Constant(4, 0.5), d(1);
  d << 3.0;
  BernsteinPlan pl = build_bernstein_plan(one, p, d, 4.0);
  REQUIRE(pl.buckets.size() == 1);
  CHECK(pl.buckets[0].exponent == 2);
  CHECK(pl.buckets[0].cols.size() == 4);
  CHECK(pl.share_sum[0] <= d[0]);
  CHECK(pl.buckets[0].eps2 == 1.0);
  CHECK(pl.buckets[0].eps3 == doctest::Approx(1.0));

  // alpha at D = mu is 1 / (c log 3).
  d << pl.mu[0];
  BernsteinPlan pm = build_bernstein_plan(one, p, d, 4.0);
  CHECK(pm.alpha[0] == doctest::Approx(1.0 / (4.0 * std::log(3.0))));

  // Random rows: buckets partition the support and shares sum to <= D.
  std::mt19937_64 g(4);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<ConstraintMatrix::Entry> e;
    const int64_t m = 30, n = 200;
    for (int64_t i = 0; i < m; ++i) {
      for (int32_t j : testing::random_subset(g, n, 1 + g() % 100)) {
        e.emplace_back(static_cast<int32_t>(i), j,
                       std::exp2(std::uniform_real_distribution<double>(-8, 8)(g)));
      }
    }
    ConstraintMatrix a = ConstraintMatrix::from_entries(m, n, e);
    Eigen::VectorXd pr = testing::random_grid_p(g, n, 16);
    Eigen::VectorXd dr = (0.01 + 0.3 * (trial / 20.0)) * a.apply(pr);
    BernsteinPlan bp = build_bernstein_plan(a, pr, dr, 4.0);
    for (int64_t i = 0; i < m; ++i) {
      CHECK(bp.share_sum[i] <= dr[i]);
      size_t members = 0;
      for (int64_t b = bp.row_begin[i]; b < bp.row_begin[i + 1]; ++b) {
        const auto& bk = bp.buckets[b];
        members += bk.cols.size();
        for (int32_t j : bk.cols) {
          double w = a.storage().coeff(i, j);
          CHECK(w > std::ldexp(1.0, bk.exponent - 1));
          CHECK(w <= std::ldexp(1.0, bk.exponent));
        }
      }
      CHECK(members == a.row(i).size());
    }
    ConstraintMatrix x = expand_bernstein(a, bp);
    CHECK(x.rows() == static_cast<int64_t>(bp.buckets.size()));
    CHECK(x.nnz() == a.nnz());
  }
}

TEST_CASE("subsampling: base case, one doubling, precondition") {
  ConstraintMatrix a = single_row({1.0});
  Eigen::VectorXd p(1), d(1);
  p << 0.25;
  d << 1.0;
  ConcentrationResult r = fix_with_subsampling(a, p, d, 8, practical());
  CHECK(all_integral(r.q));
  CHECK(r.stages.size() == 1);

  p << 0.5;
  ConcentrationResult b = fix_with_subsampling(a, p, d, 8, practical());
  CHECK(b.stages.empty());

  p << std::ldexp(1.0, -9);
  CHECK_THROWS_AS(fix_with_subsampling(a, p, d, 8, practical()), std::invalid_argument);
}

TEST_CASE("subsampling instance at p = 1/8") {
  std::mt19937_64 g(5);
  ConstraintMatrix a = ConstraintMatrix::from_sets(4096, testing::random_sets(g, 4096, 64, 1024, 1024));
  Eigen::VectorXd p = Eigen::VectorXd::Constant(4096, 0.125);
  Eigen::VectorXd d = Eigen::VectorXd::Constant(64, 0.3 * 128);
  ConcentrationResult r = fix_with_subsampling(a, p, d, 64, practical());
  CHECK(all_integral(r.q));
  CHECK(r.bad.empty());
  for (int i = 0; i < 64; ++i) CHECK(r.deviation[i] <= d[i]);
}

TEST_CASE("theorem wrappers") {
  ConstraintMatrix a = single_row({1.0});
  Eigen::VectorXd p(1), d(1);
  p << 1.0;
  d << 0.5;
  ConcentrationResult r = fix_hoeffding(a, p, d, 8, practical());
  CHECK(r.q[0] == 1.0);
  CHECK(r.deviation[0] == 0.0);

  std::mt19937_64 g(6);
  ConstraintMatrix m = testing::random_matrix(g, 40, 600, 60, 200, 0.2, 3.0);
  Eigen::VectorXd pm(600);
  for (double& v : pm) v = std::uniform_real_distribution<double>(0.0, 1.0)(g);
  Eigen::VectorXd dm = 0.4 * m.apply(pm) + 3.0 * m.row_max();
  ConcentrationResult h = fix_hoeffding(m, pm, dm, 16, practical());
  ConcentrationResult c = fix_chernoff(m, pm, dm, 16, practical());
  CHECK(h.q == c.q);
  CHECK(h.bounds.mode == BoundMode::kHoeffding);
  CHECK(c.bounds.mode == BoundMode::kChernoff);
  for (const ConcentrationResult* x : {&h, &c}) {
    CHECK(all_integral(x->q));
    CHECK(x->k_effective >= x->k);
    for (int64_t i = 0; i < m.rows(); ++i) {
      if (!x->is_bad[i]) CHECK(x->deviation[i] <= dm[i]);
    }
  }
  ConcentrationResult b = fix_bernstein(m, pm, dm, 16, practical());
  CHECK(all_integral(b.q));
  for (int64_t i = 0; i < m.rows(); ++i) {
    if (!b.is_bad[i]) CHECK(b.deviation[i] <= dm[i]);
  }
}
