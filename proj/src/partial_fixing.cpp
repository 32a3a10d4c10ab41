#include "derand/partial_fixing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>

#include "derand/rng.hpp"

namespace derand {

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

int weight_exponent(double w) {
  int e = 0;
  std::frexp(w, &e);  // w = f * 2^e, f in [0.5, 1)
  return e - 1;
}

double log_sum_exp(std::span<const double> v) {
  double mx = kNegInf;
  for (double x : v) mx = std::max(mx, x);
  if (mx == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - mx);
  return mx + std::log(s);
}

double row_log_weight(double delta, double s1, double s2, int k, double c) {
  double e = std::min(delta * delta / s2, delta * k / s1);
  return std::log(c) - e / c;
}

}  // namespace

BucketDecomposition classify_rows(const ConstraintMatrix& a,
                                  const Eigen::VectorXd& delta, int k) {
  if (delta.size() != a.rows()) throw std::invalid_argument("delta length != m");
  if (k < 1) throw std::invalid_argument("k must be positive");
  BucketDecomposition d;
  d.rows.resize(static_cast<size_t>(a.rows()));
  for (int64_t i = 0; i < a.rows(); ++i) {
    if (!(delta[i] > 0.0) || !std::isfinite(delta[i])) {
      throw std::invalid_argument("row " + std::to_string(i) +
                                  ": deviation budget must be positive");
    }
    RowView r = a.row(i);
    RowBuckets& rb = d.rows[i];
    double s1 = 0.0, s2 = 0.0;
    std::map<int, std::vector<int32_t>> by_exp;
    for (size_t t = 0; t < r.size(); ++t) {
      s1 += r.weights[t];
      s2 += r.weights[t] * r.weights[t];
      by_exp[weight_exponent(r.weights[t])].push_back(r.cols[t]);
    }
    double small_cut = delta[i] * delta[i] / s2;
    for (auto& [e, cols] : by_exp) {
      Bucket b;
      b.exponent = e;
      b.cols = std::move(cols);
      if (b.cols.size() == 1) {
        b.kind = BucketKind::kSizeOne;
      } else if (static_cast<double>(b.cols.size()) < small_cut) {
        b.kind = BucketKind::kSmall;
      } else {
        b.kind = BucketKind::kLarge;
      }
      rb.buckets.push_back(std::move(b));
    }
    if (delta[i] >= s1) {
      rb.cls = RowClass::kBoringLarge;
      rb.ignore_all = true;
      rb.ignore.assign(r.cols.begin(), r.cols.end());
      rb.ignore_mass = s1;
      continue;
    }
    if (delta[i] * delta[i] < s2) {
      rb.cls = RowClass::kBoringSmall;
      continue;
    }
    // Representatives: largest exponent among large buckets of equal size.
    std::map<size_t, size_t> rep_of_size;
    for (size_t bi = 0; bi < rb.buckets.size(); ++bi) {
      const Bucket& b = rb.buckets[bi];
      if (b.kind != BucketKind::kLarge) continue;
      rep_of_size[b.cols.size()] = bi;  // exponents increase with bi
    }
    for (auto& [sz, bi] : rep_of_size) rb.buckets[bi].representative = true;
    std::map<int32_t, double> weight_of;
    for (size_t t = 0; t < r.size(); ++t) weight_of[r.cols[t]] = r.weights[t];
    for (const Bucket& b : rb.buckets) {
      if (b.kind == BucketKind::kLarge) continue;
      for (int32_t j : b.cols) {
        rb.ignore.push_back(j);
        rb.ignore_mass += weight_of[j];
      }
    }
    std::sort(rb.ignore.begin(), rb.ignore.end());
  }
  return d;
}

Eigen::VectorXd WalkState::values() const {
  Eigen::VectorXd v(static_cast<Eigen::Index>(num.size()));
  for (size_t j = 0; j < num.size(); ++j) v[j] = static_cast<double>(num[j]) / k;
  return v;
}

WalkState init_state(const Eigen::VectorXd& p, int k,
                     std::optional<int64_t> steps, double steps_per_k2) {
  if (k < 2 || k % 2 != 0) throw std::invalid_argument("k must be even and >= 2");
  WalkState s;
  s.k = k;
  s.T = steps ? *steps
              : static_cast<int64_t>(std::ceil(steps_per_k2 * double(k) * k));
  if (s.T < 0) throw std::invalid_argument("negative step budget");
  s.num.resize(static_cast<size_t>(p.size()));
  s.moving.resize(static_cast<size_t>(p.size()));
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    double scaled = p[j] * k;
    long long nj = std::llround(scaled);
    if (!(std::abs(scaled - static_cast<double>(nj)) <= 1e-9 * k) || nj < 0 ||
        nj > k) {
      throw std::invalid_argument("p[" + std::to_string(j) +
                                  "] is not on the 1/k grid in [0, 1]");
    }
    s.num[j] = static_cast<int32_t>(nj);
    s.moving[j] = nj != 0 && nj != k;
    s.moving_count += s.moving[j];
  }
  return s;
}

std::vector<double> compute_prob_bad_partial(const ConstraintMatrix& a,
                                             const Eigen::VectorXd& delta,
                                             int k, double c) {
  if (!(c > 0.0)) throw std::invalid_argument("c must be positive");
  Eigen::VectorXd s1 = a.row_sums(), s2 = a.row_square_sums();
  std::vector<double> out(static_cast<size_t>(a.rows()));
  for (int64_t i = 0; i < a.rows(); ++i) {
    out[i] = s1[i] > 0.0 ? std::exp(row_log_weight(delta[i], s1[i], s2[i], k, c))
                         : 0.0;
  }
  return out;
}

WalkEngine::WalkEngine(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& delta, int k,
                       const EngineConfig& config, const Eigen::VectorXd& offset)
    : a_(a), delta_(delta), config_(config) {
  if (p.size() != a.cols()) throw std::invalid_argument("p length != n");
  if (delta.size() != a.rows()) throw std::invalid_argument("delta length != m");
  if (offset.size() != 0 && offset.size() != a.rows()) {
    throw std::invalid_argument("offset length != m");
  }
  state_ = init_state(p, k, config.steps, config.constants.steps_per_k2);
  decomp_ = classify_rows(a, delta, k);
  const Constants& cs = config.constants;
  const double kd = k;
  const int64_t n = a.cols();

  std::vector<std::vector<int32_t>> col_phi(static_cast<size_t>(n));
  std::vector<std::vector<int32_t>> col_psi(static_cast<size_t>(n));
  std::vector<double> log_terms;
  for (int64_t i = 0; i < a.rows(); ++i) {
    const RowBuckets& rb = decomp_.rows[i];
    if (rb.cls != RowClass::kActive) continue;
    RowView r = a.row(i);
    double s1 = 0.0, s2 = 0.0;
    for (double w : r.weights) {
      s1 += w;
      s2 += w * w;
    }
    PhiEntry e;
    e.row = static_cast<int32_t>(i);
    e.lambda = std::min(delta[i] / s2, kd / s1) / cs.lambda_scale;
    e.log_weight = row_log_weight(delta[i], s1, s2, k, cs.c);
    e.log_comp = std::log1p(e.lambda * e.lambda * s2 / (kd * kd));
    if (offset.size() != 0) {
      // exp(+-lambda offset): the two sides start unbalanced.
      e.log_ratio1 = e.lambda * offset[i];
      e.log_ratio2 = -e.lambda * offset[i];
    }
    MovingList ml;
    for (size_t t = 0; t < r.size(); ++t) {
      if (!state_.moving[r.cols[t]]) continue;
      ml.cols.push_back(r.cols[t]);
      ml.weights.push_back(r.weights[t]);
      col_phi[r.cols[t]].push_back(static_cast<int32_t>(ledger_.phi.size()));
    }
    ml.alive = static_cast<int32_t>(ml.cols.size());
    bool uniform = true;
    for (double w : r.weights) uniform = uniform && w == r.weights[0];
    phi_uniform_.push_back(uniform && r.size() > 0 && r.weights[0] > 0.0);
    phi_psi_begin_.push_back(static_cast<int32_t>(ledger_.psi.size()));
    phi_moving_.push_back(std::move(ml));
    log_terms.push_back(e.log_weight + e.log_ratio1);
    log_terms.push_back(e.log_weight + e.log_ratio2);
    ledger_.phi.push_back(e);

    for (const Bucket& b : rb.buckets) {
      if (!b.representative) continue;
      PsiEntry g;
      g.row = static_cast<int32_t>(i);
      g.size = static_cast<int32_t>(b.cols.size());
      const double bs = g.size;
      g.lambda = kd / (cs.psi_lambda_scale * bs * (bs + kd));
      g.log_weight = e.log_weight - std::min(bs, kd) / cs.psi_weight_scale;
      g.log_comp = std::log(1.0 - g.lambda * bs * bs / (100.0 * kd * kd) +
                            g.lambda * g.lambda * 100.0 * bs * bs * bs /
                                (kd * kd) * (1.0 + bs / kd));
      MovingList gl;
      for (int32_t j : b.cols) {
        int64_t nj = state_.num[j];
        g.num_sum += nj;
        g.num_sq_sum += nj * nj;
        if (state_.moving[j]) {
          gl.cols.push_back(j);
          col_psi[j].push_back(static_cast<int32_t>(ledger_.psi.size()));
        }
      }
      gl.alive = static_cast<int32_t>(gl.cols.size());
      g.moving = gl.alive;
      g.y = static_cast<double>(2 * g.size * g.num_sq_sum - 2 * g.num_sum * g.num_sum) /
            (kd * kd);
      psi_moving_.push_back(std::move(gl));
      log_terms.push_back(g.log_weight);
      ledger_.psi.push_back(g);
    }
  }
  phi_psi_begin_.push_back(static_cast<int32_t>(ledger_.psi.size()));
  log_pot0_ = log_sum_exp(log_terms);

  col_begin_.assign(static_cast<size_t>(n) + 1, 0);
  for (int64_t j = 0; j < n; ++j) {
    col_begin_[j + 1] = col_begin_[j] + static_cast<int64_t>(col_phi[j].size());
  }
  col_phi_.reserve(static_cast<size_t>(col_begin_[n]));
  for (auto& v : col_phi) col_phi_.insert(col_phi_.end(), v.begin(), v.end());
  // Psi incidence uses its own offsets packed after the phi ones.
  std::vector<int64_t> psi_begin(static_cast<size_t>(n) + 1, 0);
  for (int64_t j = 0; j < n; ++j) {
    psi_begin[j + 1] = psi_begin[j] + static_cast<int64_t>(col_psi[j].size());
  }
  for (auto& v : col_psi) col_psi_.insert(col_psi_.end(), v.begin(), v.end());
  col_begin_.insert(col_begin_.end(), psi_begin.begin(), psi_begin.end());

  col_to_local_.assign(static_cast<size_t>(n), -1);
  phi_frozen_at_.assign(ledger_.phi.size(), -1);
  psi_frozen_at_.assign(ledger_.psi.size(), -1);
  for (size_t pi = 0; pi < ledger_.phi.size(); ++pi) {
    if (phi_moving_[pi].alive > 0) {
      live_phi_.push_back(static_cast<int32_t>(pi));
    } else {
      phi_frozen_at_[pi] = 0;
    }
  }
  for (size_t gi = 0; gi < ledger_.psi.size(); ++gi) {
    if (ledger_.psi[gi].moving > 0) {
      live_psi_.push_back(static_cast<int32_t>(gi));
    } else {
      psi_frozen_at_[gi] = 0;
    }
  }
  if (config_.keep_history) history_.push_back(state_.num);
  if (config_.keep_pot_trace) log_pot_trace_.push_back(log_pot0_);
}

double WalkEngine::log_potential() const {
  sync_frozen();
  std::vector<double> v;
  v.reserve(2 * ledger_.phi.size() + ledger_.psi.size());
  for (const PhiEntry& e : ledger_.phi) {
    v.push_back(e.log_weight + e.log_ratio1);
    v.push_back(e.log_weight + e.log_ratio2);
  }
  for (const PsiEntry& g : ledger_.psi) v.push_back(g.log_weight + g.log_ratio);
  return log_sum_exp(v);
}

void WalkEngine::compact_if_sparse(MovingList& l) {
  if (2 * static_cast<size_t>(l.alive) >= l.cols.size()) return;
  size_t w = 0;
  for (size_t t = 0; t < l.cols.size(); ++t) {
    if (!state_.moving[l.cols[t]]) continue;
    l.cols[w] = l.cols[t];
    if (!l.weights.empty()) l.weights[w] = l.weights[t];
    ++w;
  }
  l.cols.resize(w);
  if (!l.weights.empty()) l.weights.resize(w);
}

namespace {

bool psi_additive_this_step(const PsiEntry& g) {
  return g.additive || 10 * static_cast<int64_t>(g.moving) <= g.size;
}

// Constant part of the bucket factor (everything not depending on x).
double psi_constant(const PsiEntry& g, bool additive, double kd) {
  const double bs = g.size, lam = g.lambda;
  const double tail = lam * lam * 100.0 * bs * bs * bs * bs / (kd * kd * kd);
  if (additive) return 1.0 - lam * bs * bs / (100.0 * kd * kd) + tail;
  return 1.0 - lam * 2.0 * bs * g.moving / (kd * kd) + tail;
}

}  // namespace

void WalkEngine::sync_frozen() const {
  const double kd = state_.k;
  const int64_t t = state_.t;
  for (size_t pi = 0; pi < ledger_.phi.size(); ++pi) {
    int64_t& at = phi_frozen_at_[pi];
    if (at < 0 || at == t) continue;
    PhiEntry& e = ledger_.phi[pi];
    const double s = static_cast<double>(t - at);
    e.log_ratio1 -= s * e.log_comp;
    e.log_ratio2 -= s * e.log_comp;
    at = t;
  }
  for (size_t gi = 0; gi < ledger_.psi.size(); ++gi) {
    int64_t& at = psi_frozen_at_[gi];
    if (at < 0 || at == t) continue;
    PsiEntry& g = ledger_.psi[gi];
    const double s = static_cast<double>(t - at), bs = g.size;
    g.additive = true;
    g.log_ratio += s * (std::log(psi_constant(g, true, kd)) - g.log_comp);
    g.y += s * bs * bs / (100.0 * kd * kd);
    at = t;
  }
}

void WalkEngine::assemble(StepObjective& out, std::span<const int32_t> label) const {
  sync_frozen();
  assemble_impl(out, label, true);
}

// Without frozen_constants, entries with nothing moving are left out: they
// only add a constant, which no seed choice can change.
void WalkEngine::assemble_impl(StepObjective& out, std::span<const int32_t> label,
                               bool frozen_constants) const {
  const double kd = state_.k;
  // Local numbering of moving columns, increasing column order.
  out.local_to_col.clear();
  for (size_t j = 0; j < state_.moving.size(); ++j) {
    if (state_.moving[j]) {
      col_to_local_[j] = static_cast<int32_t>(out.local_to_col.size());
      out.local_to_col.push_back(static_cast<int32_t>(j));
    } else {
      col_to_local_[j] = -1;
    }
  }
  const int64_t mv = static_cast<int64_t>(out.local_to_col.size());
  if (!label.empty() && static_cast<int64_t>(label.size()) != mv) {
    throw std::invalid_argument("label length != moving count");
  }
  out.objective.reset(mv);
  auto var = [&](int32_t j) { return label.empty() ? col_to_local_[j] : label[col_to_local_[j]]; };

  double wmax = kNegInf;
  auto phi_max = [&](const PhiEntry& e) {
    wmax = std::max(wmax, e.log_weight + std::max(e.log_ratio1, e.log_ratio2) - e.log_comp);
  };
  auto psi_max = [&](const PsiEntry& g) {
    wmax = std::max(wmax, g.log_weight + g.log_ratio - g.log_comp);
  };
  if (frozen_constants) {
    for (const PhiEntry& e : ledger_.phi) phi_max(e);
    for (const PsiEntry& g : ledger_.psi) psi_max(g);
  } else {
    for (int32_t pi : live_phi_) phi_max(ledger_.phi[pi]);
    for (int32_t gi : live_psi_) psi_max(ledger_.psi[gi]);
  }
  out.log_scale = wmax == kNegInf ? 0.0 : wmax;

  std::vector<double>& be = asm_be_;
  std::vector<double>& ga = asm_ga_;
  std::vector<int32_t>& pidx = asm_pidx_;
  std::vector<double>& pc = asm_pc_;
  auto psi_columns = [&](const PsiEntry& g, const MovingList& gl) {
    pidx.clear(), pc.clear();
    for (int32_t j : gl.cols) {
      if (col_to_local_[j] < 0) continue;
      pidx.push_back(var(j));
      // c_j = |B| p_j - sum_B p
      pc.push_back(static_cast<double>(int64_t{g.size} * state_.num[j] - g.num_sum) / kd);
    }
  };
  double spare = 0.0;  // terms with no moving column left
  const size_t rows = frozen_constants ? ledger_.phi.size() : live_phi_.size();
  for (size_t q = 0; q < rows; ++q) {
    const size_t pi = frozen_constants ? q : static_cast<size_t>(live_phi_[q]);
    const PhiEntry& e = ledger_.phi[pi];
    const MovingList& ml = phi_moving_[pi];
    double w1 = std::exp(e.log_weight + e.log_ratio1 - e.log_comp - out.log_scale);
    double w2 = std::exp(e.log_weight + e.log_ratio2 - e.log_comp - out.log_scale);
    double kappa = (w1 + w2) * e.lambda * e.lambda;
    double cst = w1 + w2;
    const int32_t pb = phi_psi_begin_[pi], pe = phi_psi_begin_[pi + 1];
    int32_t first_psi = pb;
    const size_t alive = static_cast<size_t>(ml.alive);
    if (alive == 0) {
      spare += cst;
    } else if (phi_uniform_[pi] && pe - pb == 1 && psi_moving_[pb].alive == ml.alive) {
      // One bucket holding every moving column of an equal-weight row: its
      // (sum x)^2 part and linear part share the row's form and merge in.
      first_psi = pe;
      const PsiEntry& g = ledger_.psi[pb];
      const double w = std::exp(g.log_weight + g.log_ratio - g.log_comp - out.log_scale);
      const bool additive = psi_additive_this_step(g);
      const double lam = g.lambda, u0 = ml.weights[0] / kd;
      cst += w * psi_constant(g, additive, kd);
      const double glin = (w1 - w2) * e.lambda * u0;
      const double gpsi = additive ? 0.0 : -w * 4.0 * lam / kd;
      if (!additive) kappa += w * 2.0 * lam / (kd * kd * u0 * u0);
      QuadraticObjective::SquareSlots s1 = out.objective.append_square_slots(alive, alive, kappa, cst);
      pidx.resize(alive), pc.resize(alive);
      const int64_t bs = g.size, nsum = g.num_sum;
      size_t o = 0;
      for (int32_t j : ml.cols) {
        if (col_to_local_[j] < 0) continue;
        const int32_t v = var(j);
        // c_j = |B| p_j - sum_B p
        const double c = static_cast<double>(bs * state_.num[j] - nsum) / kd;
        s1.b_idx[o] = v, s1.beta[o] = u0;
        s1.c_idx[o] = v, s1.gamma[o] = glin + gpsi * c;
        pidx[o] = v, pc[o] = c;
        ++o;
      }
      QuadraticObjective::SquareSlots s2 =
          out.objective.append_square_slots(alive, 0, w * 16.0 * lam * lam / (kd * kd), 0.0);
      std::copy(pidx.begin(), pidx.end(), s2.b_idx);
      std::copy(pc.begin(), pc.end(), s2.beta);
    } else {
      QuadraticObjective::SquareSlots s1 = out.objective.append_square_slots(alive, alive, kappa, cst);
      const double gl = (w1 - w2) * e.lambda;
      size_t o = 0;
      for (size_t t = 0; t < ml.cols.size(); ++t) {
        int32_t j = ml.cols[t];
        if (col_to_local_[j] < 0) continue;
        const double u = ml.weights[t] / kd;
        const int32_t v = var(j);
        s1.b_idx[o] = v, s1.beta[o] = u;
        s1.c_idx[o] = v, s1.gamma[o] = gl * u;
        ++o;
      }
    }
    for (int32_t gi = first_psi; gi < pe; ++gi) {
      const PsiEntry& g = ledger_.psi[gi];
      if (g.moving == 0 && !frozen_constants) continue;
      double w = std::exp(g.log_weight + g.log_ratio - g.log_comp - out.log_scale);
      bool additive = psi_additive_this_step(g);
      double gcst = w * psi_constant(g, additive, kd);
      psi_columns(g, psi_moving_[gi]);
      if (pidx.empty()) {
        spare += gcst;
        continue;
      }
      const double lam = g.lambda;
      // 16 lam^2 (sum_j c_j x_j / k)^2
      const double sq = w * 16.0 * lam * lam / (kd * kd);
      if (additive) {
        out.objective.add_square_term(pidx, pc, sq, {}, {}, gcst);
        continue;
      }
      out.objective.add_square_term(pidx, pc, sq, {}, {}, 0.0);
      // 2 lam (sum x)^2 / k^2 - 4 lam sum_j c_j x_j / k
      ga.resize(pidx.size());
      for (size_t t = 0; t < pidx.size(); ++t) ga[t] = -w * 4.0 * lam * pc[t] / kd;
      be.assign(pidx.size(), 1.0);
      out.objective.add_square_term(pidx, be, w * 2.0 * lam / (kd * kd), pidx, ga, gcst);
    }
  }
  if (spare != 0.0) out.objective.add_constant(spare);
}

StepObjective assemble_step_objective(const WalkEngine& engine) {
  StepObjective out;
  engine.assemble(out);
  return out;
}

void WalkEngine::apply(std::span<const int8_t> x) {
  if (state_.t >= state_.T) throw std::logic_error("walk already finished");
  const double kd = state_.k;
  // Rebuild the local numbering; callers may pass x without assembling.
  int32_t m_loc = 0;
  for (size_t j = 0; j < state_.moving.size(); ++j) {
    col_to_local_[j] = state_.moving[j] ? m_loc++ : -1;
  }
  if (static_cast<int64_t>(x.size()) != m_loc) {
    throw std::invalid_argument("step assignment length != moving count");
  }
  auto xs = [&](int32_t j) -> int {
    int32_t l = col_to_local_[j];
    return l < 0 ? 0 : x[l];
  };

  for (int32_t pi : live_phi_) {
    PhiEntry& e = ledger_.phi[pi];
    const MovingList& ml = phi_moving_[pi];
    double s = 0.0;
    for (size_t t = 0; t < ml.cols.size(); ++t) s += ml.weights[t] * xs(ml.cols[t]);
    double ls = e.lambda * s / kd;
    e.log_ratio1 += std::log1p(ls + ls * ls) - e.log_comp;
    e.log_ratio2 += std::log1p(-ls + ls * ls) - e.log_comp;
  }
  for (int32_t gi : live_psi_) {
    PsiEntry& g = ledger_.psi[gi];
    const MovingList& gl = psi_moving_[gi];
    bool additive = psi_additive_this_step(g);
    g.additive = additive;
    int64_t sx = 0, sq_delta = 0;
    double scx = 0.0;
    for (int32_t j : gl.cols) {
      int xj = xs(j);
      if (xj == 0) continue;
      sx += xj;
      sq_delta += 2 * int64_t{state_.num[j]} * xj + 1;
      scx += static_cast<double>(int64_t{g.size} * state_.num[j] - g.num_sum) * xj;
    }
    // scx = k * sum_j c_j x_j
    const double lam = g.lambda, bs = g.size;
    double cterm = scx / (kd * kd);  // sum_j c_j X_j
    double f = psi_constant(g, additive, kd) + lam * lam * 16.0 * cterm * cterm;
    if (!additive) {
      f += lam * 2.0 * double(sx) * double(sx) / (kd * kd) - lam * 4.0 * cterm;
    }
    g.log_ratio += std::log(f) - g.log_comp;
    g.num_sum += sx;
    g.num_sq_sum += sq_delta;
    if (additive) {
      g.y += bs * bs / (100.0 * kd * kd);
    } else {
      g.y = static_cast<double>(2 * int64_t{g.size} * g.num_sq_sum -
                                2 * g.num_sum * g.num_sum) /
            (kd * kd);
    }
  }

  const int64_t n = static_cast<int64_t>(state_.num.size());
  const int64_t* psi_begin = col_begin_.data() + n + 1;
  bool any_frozen = false;
  for (int64_t j = 0; j < n; ++j) {
    int32_t l = col_to_local_[j];
    if (l < 0) continue;
    state_.num[j] += x[l];
    if (state_.num[j] == 0 || state_.num[j] == state_.k) {
      state_.moving[j] = 0;
      --state_.moving_count;
      for (int64_t t = col_begin_[j]; t < col_begin_[j + 1]; ++t) {
        MovingList& l = phi_moving_[col_phi_[t]];
        --l.alive;
        compact_if_sparse(l);
      }
      for (int64_t t = psi_begin[j]; t < psi_begin[j + 1]; ++t) {
        --ledger_.psi[col_psi_[t]].moving;
        MovingList& l = psi_moving_[col_psi_[t]];
        --l.alive;
        compact_if_sparse(l);
      }
      any_frozen = true;
    }
  }
  ++state_.t;
  if (any_frozen) {
    // Newly frozen entries are current as of the new t.
    auto drop = [&](std::vector<int32_t>& live, std::vector<int64_t>& at, auto is_live) {
      size_t w = 0;
      for (int32_t e : live) {
        if (is_live(e)) {
          live[w++] = e;
        } else {
          at[e] = state_.t;
        }
      }
      live.resize(w);
    };
    drop(live_phi_, phi_frozen_at_, [&](int32_t e) { return phi_moving_[e].alive > 0; });
    drop(live_psi_, psi_frozen_at_, [&](int32_t e) { return ledger_.psi[e].moving > 0; });
  }
  if (config_.keep_history) history_.push_back(state_.num);
}

void WalkEngine::step() {
  uint64_t complexity = 0;
  if (state_.moving_count > 0) {
    const int64_t mv = state_.moving_count;
    const bool relabel = config_.constants.relabel_steps;
    if (relabel) {
      // Fisher-Yates from a step-keyed generator.
      SplitMix64 g(0x5eed0000ULL ^ static_cast<uint64_t>(state_.t));
      label_.resize(static_cast<size_t>(mv));
      for (int64_t l = 0; l < mv; ++l) label_[l] = static_cast<int32_t>(l);
      for (int64_t l = mv - 1; l > 0; --l) {
        std::swap(label_[l], label_[g.below(static_cast<uint64_t>(l) + 1)]);
      }
    }
    assemble_impl(scratch_, relabel ? std::span<const int32_t>(label_) : std::span<const int32_t>(),
                  false);
    complexity = scratch_.objective.total_complexity();
    PairwiseSpace space(mv);
    SearchOptions opts;
    opts.threads = config_.threads;
    opts.counter = &work_;
    DerandomizeResult r = derandomize(space, scratch_.objective, opts);
    if (relabel) {
      step_x_.resize(static_cast<size_t>(mv));
      for (int64_t l = 0; l < mv; ++l) step_x_[l] = r.x[label_[l]];
      apply(step_x_);
    } else {
      apply(r.x);
    }
  } else {
    apply({});
  }
  total_complexity_ += complexity;
  max_step_complexity_ = std::max(max_step_complexity_, complexity);
  bool need_pot = config_.keep_pot_trace || static_cast<bool>(config_.trace);
  if (need_pot) {
    double lp = log_potential();
    if (config_.keep_pot_trace) log_pot_trace_.push_back(lp);
    if (config_.trace) {
      config_.trace(StepRecord{state_.t, lp, state_.moving_count, complexity});
    }
  }
}

void step(WalkEngine& engine) { engine.step(); }

void WalkEngine::skip_frozen_steps() {
  if (state_.moving_count != 0) throw std::logic_error("columns still moving");
  if (state_.t >= state_.T) return;
  // Every entry is frozen, so bringing them up to date at T folds the rest.
  state_.t = state_.T;
  sync_frozen();
}

PartialFixResult partial_fix(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                             const Eigen::VectorXd& delta, int k,
                             const EngineConfig& config, const Eigen::VectorXd& offset) {
  WalkEngine engine(a, p, delta, k, config, offset);
  bool per_step = config.keep_pot_trace || config.keep_history ||
                  static_cast<bool>(config.trace);
  // An explicit step count is run in full.
  const int64_t window =
      config.steps ? 0 : std::llround(config.constants.stall_per_k2 * double(k) * double(k));
  int64_t mark_t = 0, mark_moving = engine.state().moving_count;
  while (!engine.done()) {
    if (engine.state().moving_count == 0) {
      if (config.early_exit) break;
      if (!per_step) {
        engine.skip_frozen_steps();
        break;
      }
    }
    engine.step();
    const WalkState& st = engine.state();
    if (window > 0 && st.moving_count > 0 && st.t - mark_t >= window) {
      if (2 * st.moving_count > mark_moving) break;
      mark_t = st.t;
      mark_moving = st.moving_count;
    }
  }

  PartialFixResult res;
  const WalkState& st = engine.state();
  res.k = k;
  res.num = st.num;
  res.q = st.values();
  res.steps = st.t;
  res.total_complexity = engine.total_complexity();
  res.max_step_complexity = engine.max_step_complexity();
  res.search_ops = engine.search_ops();
  res.log_pot0 = engine.log_potential_initial();
  res.log_pot_final = engine.log_potential();
  res.log_pot_trace = engine.log_pot_trace();
  res.deviation = a.deviations(p, res.q);
  res.prob_bad = compute_prob_bad_partial(a, delta, k, config.constants.c);
  for (int32_t v : st.num) res.nonintegral += (v != 0 && v != k);

  const auto& rows = engine.decomposition().rows;
  res.ignore.resize(rows.size());
  res.ignore_all.resize(rows.size());
  res.row_class.resize(rows.size());
  res.is_bad.assign(rows.size(), 0);
  for (size_t i = 0; i < rows.size(); ++i) {
    const RowBuckets& rb = rows[i];
    res.ignore[i] = rb.ignore;
    res.ignore_all[i] = rb.ignore_all;
    res.row_class[i] = rb.cls;
    bool ok = res.deviation[i] <= delta[i];
    if (offset.size() != 0) {
      RowView r = a.row(static_cast<int64_t>(i));
      double e = offset[static_cast<Eigen::Index>(i)];
      for (size_t t = 0; t < r.size(); ++t) e += r.weights[t] * (res.q[r.cols[t]] - p[r.cols[t]]);
      ok = std::abs(e) <= delta[i];
    }
    if (!rb.ignore_all) {
      RowView r = a.row(static_cast<int64_t>(i));
      double s1 = 0.0, s2 = 0.0, n1 = 0.0, n2 = 0.0;
      size_t ig = 0;
      for (size_t t = 0; t < r.size(); ++t) {
        int32_t j = r.cols[t];
        double w = r.weights[t];
        s1 += w;
        s2 += w * w;
        while (ig < rb.ignore.size() && rb.ignore[ig] < j) ++ig;
        bool ignored = ig < rb.ignore.size() && rb.ignore[ig] == j;
        if (!ignored && st.num[j] != 0 && st.num[j] != k) {
          n1 += w;
          n2 += w * w;
        }
      }
      ok = ok && n1 <= 0.99 * s1 && n2 <= 0.99 * s2;
    }
    if (!ok) {
      res.is_bad[i] = 1;
      res.bad.push_back(static_cast<int32_t>(i));
    }
  }
  return res;
}

double log_potential_from_history(const ConstraintMatrix& a, const Eigen::VectorXd& delta,
                                  int k, const EngineConfig& config,
                                  const std::vector<std::vector<int32_t>>& history,
                                  int64_t t) {
  if (t < 0 || t >= static_cast<int64_t>(history.size())) {
    throw std::invalid_argument("checkpoint outside the recorded history");
  }
  const Constants& cs = config.constants;
  const double kd = k;
  BucketDecomposition dec = classify_rows(a, delta, k);
  auto moving = [&](int32_t v) { return v != 0 && v != k; };
  std::vector<double> terms;
  for (int64_t i = 0; i < a.rows(); ++i) {
    const RowBuckets& rb = dec.rows[i];
    if (rb.cls != RowClass::kActive) continue;
    RowView r = a.row(i);
    double s1 = 0.0, s2 = 0.0;
    for (double w : r.weights) s1 += w, s2 += w * w;
    const double lam = std::min(delta[i] / s2, kd / s1) / cs.lambda_scale;
    const double lw = std::log(cs.c) - std::min(delta[i] * delta[i] / s2, delta[i] * kd / s1) / cs.c;
    // Phi ratio: prod_t (1 +- z_t + z_t^2) / (1 + lam^2 sum a^2 / k^2)^t
    double r1 = 0.0, r2 = 0.0;
    const double comp = std::log(1.0 + lam * lam * s2 / (kd * kd));
    for (int64_t u = 1; u <= t; ++u) {
      double z = 0.0;
      for (size_t e = 0; e < r.size(); ++e) {
        int32_t j = r.cols[e];
        z += r.weights[e] * (history[u][j] - history[u - 1][j]) / kd;
      }
      z *= lam;
      r1 += std::log(1.0 + z + z * z) - comp;
      r2 += std::log(1.0 - z + z * z) - comp;
    }
    terms.push_back(lw + r1);
    terms.push_back(lw + r2);
    for (const Bucket& b : rb.buckets) {
      if (!b.representative) continue;
      const double bs = static_cast<double>(b.cols.size());
      const double lp = kd / (cs.psi_lambda_scale * bs * (bs + kd));
      const double tail = lp * lp * 100.0 * std::pow(bs, 4) / std::pow(kd, 3);
      const double bcomp = std::log(1.0 - lp * bs * bs / (100.0 * kd * kd) +
                                    lp * lp * 100.0 * std::pow(bs, 3) / (kd * kd) +
                                    tail);
      double rr = 0.0;
      bool additive = false;
      for (int64_t u = 1; u <= t; ++u) {
        const auto& prev = history[u - 1];
        const auto& now = history[u];
        double total = 0.0;
        int64_t mv = 0;
        for (int32_t j : b.cols) total += prev[j], mv += moving(prev[j]);
        additive = additive || 10 * mv <= static_cast<int64_t>(b.cols.size());
        // Increments X_j = +-1/k and centred values c_j = |B| p_j - sum p.
        double sum_x = 0.0, sum_cx = 0.0;
        for (int32_t j : b.cols) {
          double x = (now[j] - prev[j]) / kd;
          sum_x += x;
          sum_cx += (bs * prev[j] - total) / kd * x;
        }
        double f = additive ? 1.0 - lp * bs * bs / (100.0 * kd * kd)
                            : 1.0 - 2.0 * lp * bs * static_cast<double>(mv) / (kd * kd);
        f += tail + 16.0 * lp * lp * sum_cx * sum_cx;
        if (!additive) f += 2.0 * lp * sum_x * sum_x - 4.0 * lp * sum_cx;
        rr += std::log(f) - bcomp;
      }
      terms.push_back(lw - std::min(bs, kd) / cs.psi_weight_scale + rr);
    }
  }
  return log_sum_exp(terms);
}

}  // namespace derand
