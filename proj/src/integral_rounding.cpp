#include "derand/integral_rounding.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "derand/partial_fixing.hpp"

namespace derand {

Eigen::VectorXd round_probabilities_to_grid(const Eigen::VectorXd& p, int k) {
  if (k < 1) throw std::invalid_argument("k must be positive");
  Eigen::VectorXd out(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p[j] >= 0.0 && p[j] <= 1.0)) {
      throw std::invalid_argument("p[" + std::to_string(j) + "] outside [0, 1]");
    }
    out[j] = std::floor(p[j] * k + 0.5) / k;
  }
  return out;
}

void finalize_bad_rows(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& delta, FixResult& r,
                       const Eigen::VectorXd& offset) {
  r.deviation = a.deviations(p, r.q);
  r.is_bad.resize(static_cast<size_t>(a.rows()), 0);
  r.bad.clear();
  Eigen::VectorXd total;
  if (offset.size() != 0) total = (offset + a.apply(r.q) - a.apply(p)).cwiseAbs();
  for (int64_t i = 0; i < a.rows(); ++i) {
    if ((offset.size() != 0 ? total[i] : r.deviation[i]) > delta[i]) r.is_bad[i] = 1;
    if (r.is_bad[i]) r.bad.push_back(static_cast<int32_t>(i));
  }
}

namespace {

void check_inputs(const ConstraintMatrix& a, const Eigen::VectorXd& p,
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

bool integral(double v) { return v == 0.0 || v == 1.0; }

}  // namespace

FixResult fix_integral(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& delta, int k,
                       const EngineConfig& config, const Eigen::VectorXd& offset) {
  check_inputs(a, p, delta);
  if (offset.size() != 0 && offset.size() != a.rows()) {
    throw std::invalid_argument("offset length != m");
  }
  if (k < 2 || k % 2 != 0) throw std::invalid_argument("k must be even and >= 2");
  const int64_t n = a.cols(), m = a.rows();
  const bool literal = config.constants.literal_budgets;
  FixResult res;
  res.q = Eigen::VectorXd::Zero(n);
  res.is_bad.assign(static_cast<size_t>(m), 0);

  Eigen::VectorXd cur = p;
  Eigen::VectorXd s1 = a.row_sums();
  for (int64_t i = 0; i < m; ++i) {
    if (delta[i] < 1000.0 * s1[i] / k) {
      res.report.low_budget_rows.push_back(static_cast<int32_t>(i));
    }
  }

  std::vector<int32_t> rows;  // active original rows
  for (int64_t i = 0; i < m; ++i) {
    if (a.row(i).size() > 0) rows.push_back(static_cast<int32_t>(i));
  }
  std::vector<uint8_t> frac(static_cast<size_t>(n), 0);
  int64_t frac_count = 0;
  for (int64_t j = 0; j < n; ++j) {
    frac[j] = !integral(p[j]);
    frac_count += frac[j];
  }
  Eigen::VectorXd lit_delta = delta;
  // Columns a row no longer constrains (its ignore sets).
  std::vector<std::vector<int32_t>> masked(static_cast<size_t>(m));
  std::vector<uint8_t> mark(static_cast<size_t>(n), 0);

  // Signed deviation spent so far, as A(cur - p) plus the offset.
  auto spent = [&](int32_t i) {
    RowView r = a.row(i);
    double e = offset.size() != 0 ? offset[i] : 0.0;
    for (size_t t = 0; t < r.size(); ++t) e += r.weights[t] * (cur[r.cols[t]] - p[r.cols[t]]);
    return e;
  };
  // What masked fractional columns may still move the row.
  auto reserve_of = [&](int32_t i) {
    RowView r = a.row(i);
    double reserve = 0.0;
    for (int32_t j : masked[i]) {
      if (frac[j]) {
        double w = 0.0;
        for (size_t t = 0; t < r.size(); ++t) {
          if (r.cols[t] == j) w = r.weights[t];
        }
        reserve += w * std::max(cur[j], 1.0 - cur[j]);
      }
    }
    return reserve;
  };
  auto remaining_budget = [&](int32_t i) {
    return delta[i] - std::abs(spent(i)) - reserve_of(i);
  };

  const int max_depth =
      static_cast<int>(std::ceil(std::log(double(k)) / -std::log(0.999))) + 1;
  for (int depth = 0; frac_count > 0; ++depth) {
    // Level budgets.
    std::vector<int32_t> live;
    std::vector<double> lvl_delta;
    for (int32_t i : rows) {
      double d = literal ? lit_delta[i] : remaining_budget(i);
      if (!(d > 0.0)) {
        res.is_bad[i] = 1;
        continue;
      }
      live.push_back(i);
      lvl_delta.push_back(d);
    }
    rows = live;

    // Current matrix over fractional columns, ignoring masked entries.
    std::vector<int32_t> col_map(static_cast<size_t>(n), -1), cols;
    for (int64_t j = 0; j < n; ++j) {
      if (frac[j]) {
        col_map[j] = static_cast<int32_t>(cols.size());
        cols.push_back(static_cast<int32_t>(j));
      }
    }
    std::vector<ConstraintMatrix::Entry> entries;
    std::vector<double> row_sum(rows.size(), 0.0);
    for (size_t r = 0; r < rows.size(); ++r) {
      for (int32_t j : masked[rows[r]]) mark[j] = 1;
      RowView v = a.row(rows[r]);
      for (size_t t = 0; t < v.size(); ++t) {
        int32_t j = v.cols[t];
        if (col_map[j] < 0 || mark[j]) continue;
        entries.emplace_back(static_cast<int32_t>(r), col_map[j], v.weights[t]);
        row_sum[r] += v.weights[t];
      }
      for (int32_t j : masked[rows[r]]) mark[j] = 0;
    }
    double ratio = 0.0;
    for (size_t r = 0; r < rows.size(); ++r) ratio = std::max(ratio, row_sum[r] / lvl_delta[r]);

    RoundingLevel lvl;
    lvl.depth = depth;
    lvl.rows = static_cast<int64_t>(rows.size());
    lvl.cols = static_cast<int64_t>(cols.size());
    lvl.ratio = ratio;
    if (ratio <= 1.0) {
      // Every remaining row tolerates its whole weight.
      for (int32_t j : cols) {
        cur[j] = 0.0;
        frac[j] = 0;
      }
      frac_count = 0;
      res.report.levels.push_back(lvl);
      break;
    }
    if (depth >= max_depth) {
      for (int32_t j : cols) {
        cur[j] = cur[j] >= 0.5 ? 1.0 : 0.0;
        frac[j] = 0;
      }
      res.report.forced_columns += static_cast<int64_t>(cols.size());
      frac_count = 0;
      res.report.levels.push_back(lvl);
      break;
    }

    ConstraintMatrix sub = ConstraintMatrix::from_entries(
        static_cast<int64_t>(rows.size()), static_cast<int64_t>(cols.size()),
        std::move(entries));
    Eigen::VectorXd pl(static_cast<Eigen::Index>(cols.size()));
    for (size_t c = 0; c < cols.size(); ++c) pl[c] = cur[cols[c]];
    Eigen::VectorXd pg = round_probabilities_to_grid(pl, k);
    for (size_t c = 0; c < cols.size(); ++c) cur[cols[c]] = pg[c];

    Eigen::VectorXd dl(static_cast<Eigen::Index>(rows.size()));
    Eigen::VectorXd off;
    if (literal) {
      for (size_t r = 0; r < rows.size(); ++r) dl[r] = lvl_delta[r] / 1000.0;
    } else {
      // Full budget around the target, with the walk starting from the
      // deviation already spent (grid rounding included).
      off.resize(static_cast<Eigen::Index>(rows.size()));
      for (size_t r = 0; r < rows.size(); ++r) {
        const double e = spent(rows[r]), b = delta[rows[r]] - reserve_of(rows[r]);
        off[r] = e;
        dl[r] = b > std::abs(e) ? b : std::abs(e) + lvl_delta[r] * 1e-12;
      }
    }

    PartialFixResult pr = partial_fix(sub, pg, dl, k, config, off);
    lvl.steps = pr.steps;
    lvl.complexity = pr.total_complexity;
    res.report.steps += pr.steps;
    res.report.total_complexity += pr.total_complexity;
    res.report.search_ops += pr.search_ops;
    res.report.max_step_complexity =
        std::max(res.report.max_step_complexity, pr.max_step_complexity);
    for (double v : pr.prob_bad) lvl.sum_prob_bad += std::min(v, 1.0);
    res.report.sum_prob_bad += lvl.sum_prob_bad;

    int64_t before = frac_count;
    for (size_t c = 0; c < cols.size(); ++c) {
      int32_t j = cols[c];
      cur[j] = pr.q[c];
      if (integral(cur[j])) {
        frac[j] = 0;
        --frac_count;
      }
    }
    lvl.nonintegral_after = frac_count;

    std::vector<int32_t> next;
    for (size_t r = 0; r < rows.size(); ++r) {
      int32_t i = rows[r];
      if (literal && pr.is_bad[r]) {
        res.is_bad[i] = 1;
        ++lvl.bad;
        continue;
      }
      if (pr.ignore_all[r]) continue;  // whole row tolerated
      for (int32_t lc : pr.ignore[r]) {
        int32_t j = cols[lc];
        if (frac[j]) masked[i].push_back(j);
      }
      bool any = false;
      for (int32_t j : masked[i]) mark[j] = 1;
      RowView v = a.row(i);
      for (size_t t = 0; t < v.size() && !any; ++t) any = frac[v.cols[t]] && !mark[v.cols[t]];
      for (int32_t j : masked[i]) mark[j] = 0;
      if (any) next.push_back(i);
    }
    rows = std::move(next);
    if (literal) lit_delta *= 0.997;
    res.report.levels.push_back(lvl);
    if (frac_count == before && depth + 1 < max_depth) {
      // A level that freezes nothing would repeat itself; the next level's
      // inputs differ only through the budgets, so force termination.
      for (int64_t j = 0; j < n; ++j) {
        if (!frac[j]) continue;
        cur[j] = cur[j] >= 0.5 ? 1.0 : 0.0;
        frac[j] = 0;
        ++res.report.forced_columns;
      }
      frac_count = 0;
    }
  }

  res.q = cur;
  finalize_bad_rows(a, p, delta, res, offset);
  return res;
}

}  // namespace derand
