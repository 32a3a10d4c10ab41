#include "derand/concentration.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <bit>
#include <numeric>
#include <span>
#include <stdexcept>

namespace derand {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

double ratio_or_inf(double x, double y) { return y > 0.0 ? x / y : kInf; }

bool fractional(double v) { return v > 0.0 && v < 1.0; }

void check_shapes(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                  const Eigen::VectorXd& delta) {
  if (p.size() != a.cols()) throw std::invalid_argument("p length != n");
  if (delta.size() != a.rows()) throw std::invalid_argument("delta length != m");
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p[j] >= 0.0 && p[j] <= 1.0)) {
      throw std::invalid_argument("p[" + std::to_string(j) + "] outside [0, 1]");
    }
  }
  for (Eigen::Index i = 0; i < delta.size(); ++i) {
    if (!(delta[i] > 0.0)) {
      throw std::invalid_argument("delta[" + std::to_string(i) + "] must be positive");
    }
  }
}

int round_up_even(int64_t k) {
  if (k < 2) k = 2;
  if (k % 2) ++k;
  if (k > std::numeric_limits<int>::max() / 2) throw std::overflow_error("granularity too large");
  return static_cast<int>(k);
}

// Folds a rounding report from a call on a row subset into the total.
void merge_report(RoundingReport& into, const RoundingReport& from,
                  std::span<const int32_t> row_ids) {
  into.levels.insert(into.levels.end(), from.levels.begin(), from.levels.end());
  for (int32_t r : from.low_budget_rows) into.low_budget_rows.push_back(row_ids[r]);
  into.sum_prob_bad += from.sum_prob_bad;
  into.steps += from.steps;
  into.total_complexity += from.total_complexity;
  into.max_step_complexity = std::max(into.max_step_complexity, from.max_step_complexity);
  into.search_ops += from.search_ops;
  into.forced_columns += from.forced_columns;
}

void finish(const ConstraintMatrix& a, const Eigen::VectorXd& p,
            const Eigen::VectorXd& delta, ConcentrationResult& r) {
  r.deviation = a.deviations(p, r.q);
  r.bad.clear();
  for (int64_t i = 0; i < a.rows(); ++i) {
    if (r.deviation[i] > delta[i]) r.is_bad[i] = 1;
    if (r.is_bad[i]) r.bad.push_back(static_cast<int32_t>(i));
  }
  std::sort(r.rounding.low_budget_rows.begin(), r.rounding.low_budget_rows.end());
  r.rounding.low_budget_rows.erase(
      std::unique(r.rounding.low_budget_rows.begin(), r.rounding.low_budget_rows.end()),
      r.rounding.low_budget_rows.end());
}

}  // namespace

std::string to_string(BoundMode m) {
  switch (m) {
    case BoundMode::kPartial: return "partial";
    case BoundMode::kHoeffding: return "hoeffding";
    case BoundMode::kChernoff: return "chernoff";
    case BoundMode::kBernstein: return "bernstein";
  }
  return "?";
}

BoundMode parse_bound_mode(const std::string& s) {
  if (s == "partial") return BoundMode::kPartial;
  if (s == "hoeffding") return BoundMode::kHoeffding;
  if (s == "chernoff") return BoundMode::kChernoff;
  if (s == "bernstein") return BoundMode::kBernstein;
  throw std::invalid_argument("unknown bound mode '" + s + "'");
}

double schedule_epsilon(int level, int k) {
  return std::max(std::pow(0.8, level), 1.0 / k) / 16.0;
}

double schedule_alpha(int level, int k) {
  return 0.5 * (1.0 - std::pow(0.8, level) + double(level) / k);
}

double practical_level_share(int level) {
  if (level <= 1) return 1.0;
  const double r = std::sqrt(2.0);
  return (r - 1.0) / (std::pow(r, level) - 1.0);
}

int subsampling_level(double p) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("level needs p in (0, 1]");
  int e = 0;
  std::frexp(p, &e);  // p = f 2^e, f in [1/2, 1)
  return 1 - e;
}

ExponentReport compute_failure_bounds(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                      const Eigen::VectorXd& delta, int k,
                                      BoundMode mode, double c) {
  if (p.size() != a.cols()) throw std::invalid_argument("p length != n");
  if (delta.size() != a.rows()) throw std::invalid_argument("delta length != m");
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
  ExponentReport r;
  r.mode = mode;
  r.c = c;
  r.k = k;
  const int64_t m = a.rows();
  r.exponent.assign(static_cast<size_t>(m), kInf);
  r.prob_bad.assign(static_cast<size_t>(m), 0.0);
  for (int64_t i = 0; i < m; ++i) {
    RowView row = a.row(i);
    if (row.size() == 0) continue;
    double s1 = 0, s2 = 0, mu = 0, var = 0, mx = 0;
    for (size_t t = 0; t < row.size(); ++t) {
      double w = row.weights[t], pj = p[row.cols[t]];
      s1 += w;
      s2 += w * w;
      mu += pj * w;
      var += pj * w * w;
      mx = std::max(mx, w);
    }
    const double d = delta[i];
    double e = 0.0, prob = 0.0;
    switch (mode) {
      case BoundMode::kPartial:
        e = std::min(d * d / s2, d * k / s1);
        prob = c * std::exp(-e / c);
        break;
      case BoundMode::kHoeffding:
        e = std::min(d * d / s2, ratio_or_inf(d * k, mu));
        prob = c * std::exp(-e / c);
        break;
      case BoundMode::kChernoff:
        e = std::min({ratio_or_inf(d * d, mu * mx), d / mx, ratio_or_inf(d * k, mu)});
        prob = c * std::exp(-e / c);
        break;
      case BoundMode::kBernstein: {
        double alpha = 1.0 / (c * std::log(mu / d + 2.0));
        e = std::min({ratio_or_inf(d * d, var), d / mx, ratio_or_inf(d * k, mu)});
        prob = std::exp(-alpha * e) / alpha;
        break;
      }
    }
    r.exponent[i] = e;
    r.prob_bad[i] = std::min(prob, 1.0);
    r.sum_prob_bad += r.prob_bad[i];
  }
  return r;
}

ConcentrationResult fix_with_subsampling(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                         const Eigen::VectorXd& delta, int k,
                                         const EngineConfig& config) {
  check_shapes(a, p, delta);
  if (k < 2 || k % 2 != 0) throw std::invalid_argument("k must be even and >= 2");
  const int64_t n = a.cols(), m = a.rows();
  const bool literal = config.constants.literal_budgets;
  ConcentrationResult res;
  res.k = k;
  res.k_effective = k;
  res.is_bad.assign(static_cast<size_t>(m), 0);

  Eigen::VectorXd cur = p;
  auto min_fractional = [&] {
    double mn = 1.0;
    for (int64_t j = 0; j < n; ++j) {
      if (fractional(cur[j])) mn = std::min(mn, cur[j]);
    }
    return mn;
  };
  int level = subsampling_level(min_fractional());
  if (level > k) {
    throw std::invalid_argument("min p below 2^-k; use a theorem wrapper");
  }
  const int k_small = config.constants.literal_granularity
                          ? round_up_even(int64_t{k} * k * k)
                          : k;

  // Budget left for row i, measured from the deviation spent so far.
  auto spent = [&](int64_t i) {
    RowView r = a.row(i);
    double e = 0.0;
    for (size_t t = 0; t < r.size(); ++t) e += r.weights[t] * (cur[r.cols[t]] - p[r.cols[t]]);
    return e;
  };
  auto remaining = [&](int64_t i) { return delta[i] - std::abs(spent(i)); };
  double growth = 1.0;  // product of (1 + eps) over finished levels

  while (level > 1) {
    const double thresh = std::ldexp(1.0, 1 - level);
    std::vector<int32_t> col_map(static_cast<size_t>(n), -1), small;
    for (int64_t j = 0; j < n; ++j) {
      if (fractional(cur[j]) && cur[j] < thresh) {
        col_map[j] = static_cast<int32_t>(small.size());
        small.push_back(static_cast<int32_t>(j));
      }
    }
    SubsamplingStage st;
    st.level = level;
    st.small_cols = static_cast<int64_t>(small.size());

    std::vector<int32_t> row_ids;
    std::vector<double> budgets, offsets;
    std::vector<ConstraintMatrix::Entry> entries;
    for (int64_t i = 0; i < m; ++i) {
      if (res.is_bad[i]) continue;
      double rem = literal ? 0.0 : remaining(i);
      if (!literal && !(rem > 0.0)) {
        res.is_bad[i] = 1;
        ++st.bad;
        continue;
      }
      RowView r = a.row(i);
      bool any = false;
      double sq = 0.0;
      for (size_t t = 0; t < r.size(); ++t) {
        int32_t lc = col_map[r.cols[t]];
        if (lc < 0) continue;
        double w = 2.0 * cur[r.cols[t]] * r.weights[t];
        entries.emplace_back(static_cast<int32_t>(row_ids.size()), lc, w);
        sq += w * w;
        any = true;
      }
      if (!any) continue;
      double d;
      if (literal) {
        d = schedule_epsilon(level, k) * growth * delta[i];
      } else {
        // Below sqrt(sum a^2) the walk gives the row up, so the share is
        // raised to that floor while budget remains.
        d = practical_level_share(level) * rem;
        d = std::max(d, std::min(rem, 1.01 * std::sqrt(sq)));
        // The stage starts from what earlier stages spent and may use its
        // share on top of that.
        const double e = spent(i);
        offsets.push_back(e);
        d += std::abs(e);
      }
      row_ids.push_back(static_cast<int32_t>(i));
      budgets.push_back(d);
    }
    st.rows = static_cast<int64_t>(row_ids.size());
    ConstraintMatrix sub = ConstraintMatrix::from_entries(
        st.rows, static_cast<int64_t>(small.size()), std::move(entries));
    Eigen::VectorXd half = Eigen::VectorXd::Constant(static_cast<Eigen::Index>(small.size()), 0.5);
    Eigen::VectorXd dsub = Eigen::Map<const Eigen::VectorXd>(budgets.data(),
                                                            static_cast<Eigen::Index>(budgets.size()));
    Eigen::VectorXd osub = Eigen::Map<const Eigen::VectorXd>(offsets.data(),
                                                            static_cast<Eigen::Index>(offsets.size()));
    FixResult fr = fix_integral(sub, half, dsub, k_small, config, osub);
    merge_report(res.rounding, fr.report, row_ids);
    {
      Eigen::VectorXd moved = sub.apply(fr.q) - sub.apply(half);
      if (osub.size() != 0) moved += osub;
      for (Eigen::Index r = 0; r < dsub.size(); ++r) {
        st.max_use = std::max(st.max_use, std::abs(moved[r]) / dsub[r]);
      }
    }
    if (literal) {
      for (int32_t r : fr.bad) {
        res.is_bad[row_ids[r]] = 1;
        ++st.bad;
      }
    }
    for (size_t c = 0; c < small.size(); ++c) {
      int32_t j = small[c];
      if (fr.q[static_cast<Eigen::Index>(c)] == 1.0) {
        cur[j] *= 2.0;
        ++st.kept_cols;
      } else {
        cur[j] = 0.0;
      }
    }
    res.stages.push_back(st);
    growth *= 1.0 + schedule_epsilon(level, k);
    level = subsampling_level(min_fractional());
  }

  // Base case: every fractional value is at least 1/2.
  std::vector<int32_t> row_ids;
  std::vector<double> budgets, offsets;
  for (int64_t i = 0; i < m; ++i) {
    if (res.is_bad[i]) continue;
    double d = literal ? schedule_alpha(std::max(level, 1), k) * growth * delta[i] : remaining(i);
    if (!(d > 0.0)) {
      res.is_bad[i] = 1;
      continue;
    }
    if (!literal) {
      // Everything left, steered from the deviation already spent.
      offsets.push_back(spent(i));
      d = delta[i];
    }
    row_ids.push_back(static_cast<int32_t>(i));
    budgets.push_back(d);
  }
  std::vector<int32_t> identity(static_cast<size_t>(n));
  std::iota(identity.begin(), identity.end(), 0);
  ConstraintMatrix sub = a.submatrix(row_ids, identity, n);
  Eigen::VectorXd dsub = Eigen::Map<const Eigen::VectorXd>(budgets.data(),
                                                          static_cast<Eigen::Index>(budgets.size()));
  Eigen::VectorXd osub = Eigen::Map<const Eigen::VectorXd>(offsets.data(),
                                                          static_cast<Eigen::Index>(offsets.size()));
  FixResult fr = fix_integral(sub, cur, dsub, k, config, osub);
  merge_report(res.rounding, fr.report, row_ids);
  for (int32_t r : fr.bad) res.is_bad[row_ids[r]] = 1;
  res.q = fr.q;
  finish(a, p, delta, res);
  return res;
}

namespace {

ConcentrationResult run_theorem(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                const Eigen::VectorXd& delta, int k,
                                const EngineConfig& config, BoundMode mode) {
  check_shapes(a, p, delta);
  if (k < 1) throw std::invalid_argument("k must be positive");
  const int64_t n = a.cols(), m = a.rows();
  const Constants& cs = config.constants;

  // Lift tiny probabilities to 1/n; exact zeros are already integral.
  Eigen::VectorXd lifted = p;
  const double floor_p = n > 0 ? 1.0 / double(n) : 1.0;
  for (int64_t j = 0; j < n; ++j) {
    if (p[j] > 0.0 && p[j] < floor_p) lifted[j] = floor_p;
  }
  Eigen::VectorXd shift = a.apply(lifted - p);
  Eigen::VectorXd inner_delta(m);
  for (int64_t i = 0; i < m; ++i) {
    if (cs.literal_budgets || shift[i] > delta[i] / 2) {
      inner_delta[i] = delta[i] / 2;
    } else {
      inner_delta[i] = delta[i] - shift[i];
    }
  }

  int64_t kk = k;
  if (cs.literal_granularity) {
    double lg = std::log(2.0 * double(std::max<int64_t>(n, 1)) * double(std::max<int64_t>(m, 1)));
    kk = static_cast<int64_t>(std::ceil(cs.c * cs.c * lg)) * k;
  }
  // The lifted minimum 1/n must be reachable by at most kk halvings.
  int64_t need = n > 1 ? std::bit_width(static_cast<uint64_t>(n - 1)) : 1;
  kk = std::max(kk, need);
  const int k_eff = round_up_even(kk);

  ConcentrationResult res = fix_with_subsampling(a, lifted, inner_delta, k_eff, config);
  res.k = k;
  res.k_effective = k_eff;
  finish(a, p, delta, res);
  res.bounds = compute_failure_bounds(a, p, delta, k, mode, cs.c);
  return res;
}

}  // namespace

ConcentrationResult fix_hoeffding(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& delta, int k,
                                  const EngineConfig& config) {
  return run_theorem(a, p, delta, k, config, BoundMode::kHoeffding);
}

ConcentrationResult fix_chernoff(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& delta, int k,
                                 const EngineConfig& config) {
  return run_theorem(a, p, delta, k, config, BoundMode::kChernoff);
}

namespace {

// Smallest integer e with a <= 2^e.
int ceil_log2(double a) {
  int e = 0;
  double f = std::frexp(a, &e);
  return f == 0.5 ? e - 1 : e;
}

}  // namespace

BernsteinPlan build_bernstein_plan(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& delta, double c) {
  check_shapes(a, p, delta);
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
  const int64_t m = a.rows();
  BernsteinPlan plan;
  plan.row_begin.assign(static_cast<size_t>(m) + 1, 0);
  plan.mu = Eigen::VectorXd::Zero(m);
  plan.var = Eigen::VectorXd::Zero(m);
  plan.gamma = Eigen::VectorXd::Zero(m);
  plan.alpha = Eigen::VectorXd::Zero(m);
  plan.share_sum = Eigen::VectorXd::Zero(m);
  plan.max_exponent.assign(static_cast<size_t>(m), 0);

  std::vector<std::pair<int, int32_t>> keyed;
  for (int64_t i = 0; i < m; ++i) {
    plan.row_begin[i] = static_cast<int64_t>(plan.buckets.size());
    RowView r = a.row(i);
    if (r.size() == 0) continue;
    keyed.clear();
    for (size_t t = 0; t < r.size(); ++t) {
      keyed.emplace_back(ceil_log2(r.weights[t]), static_cast<int32_t>(t));
    }
    std::stable_sort(keyed.begin(), keyed.end(),
                     [](const auto& x, const auto& y) { return x.first < y.first; });
    const size_t first = plan.buckets.size();
    for (const auto& [e, t] : keyed) {
      if (plan.buckets.size() == first || plan.buckets.back().exponent != e) {
        BernsteinBucket b;
        b.row = static_cast<int32_t>(i);
        b.exponent = e;
        plan.buckets.push_back(std::move(b));
      }
      BernsteinBucket& b = plan.buckets.back();
      const double w = r.weights[t], pj = p[r.cols[t]];
      b.cols.push_back(r.cols[t]);
      b.mu += pj * w;
      b.var += pj * w * w;
    }
    double mu = 0, var = 0;
    for (size_t b = first; b < plan.buckets.size(); ++b) {
      std::sort(plan.buckets[b].cols.begin(), plan.buckets[b].cols.end());
      mu += plan.buckets[b].mu;
      var += plan.buckets[b].var;
    }
    const int emax = plan.buckets.back().exponent;
    const double d = delta[i];
    plan.mu[i] = mu;
    plan.var[i] = var;
    plan.max_exponent[i] = emax;
    plan.gamma[i] = var / (d * std::ldexp(1.0, emax));
    plan.alpha[i] = 1.0 / (c * std::log(mu / d + 2.0));
    const double g = std::min(1.0, std::sqrt(plan.gamma[i]));
    for (size_t b = first; b < plan.buckets.size(); ++b) {
      BernsteinBucket& bk = plan.buckets[b];
      bk.eps1 = var > 0.0 ? std::sqrt(c * plan.alpha[i] * g * bk.var / var) : 0.0;
      bk.eps2 = std::pow(0.9, emax - bk.exponent);
      bk.eps3 = mu > 0.0 ? bk.mu / mu : 0.0;
      bk.delta = std::max({bk.eps1, bk.eps2, bk.eps3}) * d / 100.0;
      plan.share_sum[i] += bk.delta;
    }
  }
  plan.row_begin[m] = static_cast<int64_t>(plan.buckets.size());
  return plan;
}

ConstraintMatrix expand_bernstein(const ConstraintMatrix& a, const BernsteinPlan& plan) {
  std::vector<ConstraintMatrix::Entry> entries;
  entries.reserve(static_cast<size_t>(a.nnz()));
  for (size_t b = 0; b < plan.buckets.size(); ++b) {
    const BernsteinBucket& bk = plan.buckets[b];
    RowView r = a.row(bk.row);
    size_t t = 0;
    for (int32_t j : bk.cols) {
      while (r.cols[t] != j) ++t;
      entries.emplace_back(static_cast<int32_t>(b), j, r.weights[t]);
    }
  }
  return ConstraintMatrix::from_entries(static_cast<int64_t>(plan.buckets.size()), a.cols(),
                                        std::move(entries));
}

ConcentrationResult fix_bernstein(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& delta, int k,
                                  const EngineConfig& config) {
  const Constants& cs = config.constants;
  BernsteinPlan plan = build_bernstein_plan(a, p, delta, cs.c);
  ConstraintMatrix ex = expand_bernstein(a, plan);
  Eigen::VectorXd ex_delta(static_cast<Eigen::Index>(plan.buckets.size()));
  for (size_t b = 0; b < plan.buckets.size(); ++b) {
    const BernsteinBucket& bk = plan.buckets[b];
    // The practical profile spreads the whole row budget in the plan's proportions.
    double scale = cs.literal_budgets ? 1.0 : delta[bk.row] / plan.share_sum[bk.row];
    ex_delta[static_cast<Eigen::Index>(b)] = bk.delta * scale;
  }
  int64_t kk = k;
  if (cs.literal_granularity) {
    double lg = std::log(double(std::max<int64_t>(a.cols(), 1)) * double(std::max<int64_t>(a.rows(), 1)));
    kk = std::max<int64_t>(1, static_cast<int64_t>(std::ceil(cs.c * lg))) * k;
  }
  ConcentrationResult inner = fix_chernoff(ex, p, ex_delta, static_cast<int>(kk), config);

  ConcentrationResult res;
  res.q = inner.q;
  res.k = k;
  res.k_effective = inner.k_effective;
  res.stages = std::move(inner.stages);
  res.rounding = std::move(inner.rounding);
  res.rounding.low_budget_rows.clear();  // bucket ids, not rows
  res.is_bad.assign(static_cast<size_t>(a.rows()), 0);
  for (int32_t b : inner.bad) res.is_bad[plan.buckets[b].row] = 1;
  finish(a, p, delta, res);
  res.bounds = compute_failure_bounds(a, p, delta, k, BoundMode::kBernstein, cs.c);
  return res;
}

}  // namespace derand
