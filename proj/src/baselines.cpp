#include "derand/baselines.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

#include "derand/rng.hpp"

namespace derand {

namespace {

void snapshot(const ConstraintMatrix& a, const std::vector<int32_t>& num, int k, int64_t t,
              WalkDiagnostics& d) {
  const int64_t m = a.rows();
  std::vector<double> phi(static_cast<size_t>(m)), psi(static_cast<size_t>(m));
  for (int64_t i = 0; i < m; ++i) {
    RowView r = a.row(i);
    double s = 0.0, s1 = 0.0, s2 = 0.0;
    for (size_t u = 0; u < r.size(); ++u) {
      double v = static_cast<double>(num[r.cols[u]]) / k;
      s += r.weights[u] * v;
      s1 += v;
      s2 += v * v;
    }
    phi[i] = s;
    // sum_{j1, j2} (v1 - v2)^2 = 2 |S| sum v^2 - 2 (sum v)^2
    psi[i] = std::max(0.0, 2.0 * static_cast<double>(r.size()) * s2 - 2.0 * s1 * s1);
  }
  d.steps.push_back(t);
  d.phi.push_back(std::move(phi));
  d.psi.push_back(std::move(psi));
}

}  // namespace

RandomWalkResult randomized_walk(const ConstraintMatrix& a, const Eigen::VectorXd& p, int k,
                                 uint64_t seed, int64_t steps, int64_t trace_stride) {
  if (k < 2 || k % 2 != 0) throw std::invalid_argument("k must be even and >= 2");
  if (p.size() != a.cols()) throw std::invalid_argument("p length != n");
  WalkState st = init_state(p, k, steps >= 0 ? std::optional<int64_t>(steps) : std::nullopt, 100.0);
  RandomWalkResult res;
  res.k = k;
  res.steps = st.T;
  SplitMix64 rng(seed);
  snapshot(a, st.num, k, 0, res.diag);
  const int64_t n = a.cols();
  for (int64_t t = 1; t <= st.T; ++t) {
    uint64_t bits = 0;
    int left = 0;
    for (int64_t j = 0; j < n; ++j) {
      if (!st.moving[j]) continue;
      if (left == 0) {
        bits = rng.next();
        left = 64;
      }
      st.num[j] += (bits & 1) ? 1 : -1;
      bits >>= 1;
      --left;
      if (st.num[j] == 0 || st.num[j] == k) st.moving[j] = 0;
    }
    if (trace_stride > 0 && t % trace_stride == 0 && t != st.T) {
      snapshot(a, st.num, k, t, res.diag);
    }
  }
  if (st.T > 0) snapshot(a, st.num, k, st.T, res.diag);
  res.num = st.num;
  res.q.resize(n);
  for (int64_t j = 0; j < n; ++j) res.q[j] = static_cast<double>(st.num[j]) / k;
  return res;
}

Eigen::VectorXd monte_carlo_round(const Eigen::VectorXd& p, uint64_t seed) {
  SplitMix64 rng(seed);
  Eigen::VectorXd q(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    if (!(p[j] >= 0.0 && p[j] <= 1.0)) {
      throw std::invalid_argument("p[" + std::to_string(j) + "] outside [0, 1]");
    }
    q[j] = rng.uniform() < p[j] ? 1.0 : 0.0;
  }
  return q;
}

SequentialResult sequential_conditional_fix(const SetSystem& system,
                                            std::span<const int32_t> order,
                                            int64_t min_size) {
  const int64_t n = system.ground_size(), m = system.size();
  const int64_t floor_size =
      min_size >= 0 ? min_size
                    : static_cast<int64_t>(std::ceil(std::log(std::max<double>(2.0, n))));
  for (int64_t i = 0; i < m; ++i) {
    if (static_cast<int64_t>(system.set(i).size()) < floor_size) {
      throw std::invalid_argument("set " + std::to_string(i) + " is below the minimum size " +
                                  std::to_string(floor_size));
    }
  }
  std::vector<int32_t> ord;
  if (order.empty()) {
    ord.resize(static_cast<size_t>(n));
    for (int64_t j = 0; j < n; ++j) ord[j] = static_cast<int32_t>(j);
  } else {
    ord.assign(order.begin(), order.end());
    std::vector<uint8_t> seen(static_cast<size_t>(n), 0);
    if (static_cast<int64_t>(ord.size()) != n) throw std::invalid_argument("order length != n");
    for (int32_t j : ord) {
      if (j < 0 || j >= n || seen[j]) throw std::invalid_argument("order is not a permutation");
      seen[j] = 1;
    }
  }
  // Sets containing each element.
  std::vector<std::vector<int32_t>> member_of(static_cast<size_t>(n));
  for (int64_t i = 0; i < m; ++i) {
    for (int32_t j : system.set(i)) member_of[j].push_back(static_cast<int32_t>(i));
  }

  SequentialResult res;
  SequentialPotential& s = res.state;
  const double lam = s.lambda;
  // A fixed element multiplies its sets' ratios by (1 +- lam x + lam^2) / (1 + lam^2).
  const double up = (1.0 + lam + lam * lam) / (1.0 + lam * lam);
  const double down = (1.0 - lam + lam * lam) / (1.0 + lam * lam);
  s.ratio_plus.assign(static_cast<size_t>(m), 1.0);
  s.ratio_minus.assign(static_cast<size_t>(m), 1.0);
  s.pot = m > 0 ? 1.0 : 0.0;
  const double norm = m > 0 ? 1.0 / (2.0 * static_cast<double>(m)) : 0.0;
  res.labels.assign(static_cast<size_t>(n), 1);
  res.pot_trace.push_back(s.pot);
  for (int32_t j : ord) {
    // Change of Pot for x = +1 and x = -1.
    double dp = 0.0, dm = 0.0;
    for (int32_t i : member_of[j]) {
      double rp = s.ratio_plus[i], rm = s.ratio_minus[i];
      dp += rp * (up - 1.0) + rm * (down - 1.0);
      dm += rp * (down - 1.0) + rm * (up - 1.0);
    }
    int8_t x = dm < dp ? -1 : 1;
    for (int32_t i : member_of[j]) {
      s.ratio_plus[i] *= x > 0 ? up : down;
      s.ratio_minus[i] *= x > 0 ? down : up;
    }
    res.labels[j] = x;
    s.pot += norm * (x > 0 ? dp : dm);
    res.pot_trace.push_back(s.pot);
  }
  for (int64_t i = 0; i < m; ++i) {
    int64_t pl = 0;
    for (int32_t j : system.set(i)) pl += res.labels[j] > 0;
    res.plus.push_back(pl);
    res.minus.push_back(static_cast<int64_t>(system.set(i).size()) - pl);
  }
  return res;
}

}  // namespace derand
