#include "derand/pairwise_space.hpp"

#include <bit>
#include <stdexcept>

#include "parallel.hpp"

namespace derand {

PairwiseSpace::PairwiseSpace(int64_t n) : n_(n), L_(0) {
  if (n < 1) throw std::invalid_argument("pairwise space needs n >= 1");
  // L = ceil(log2 n) + 1
  L_ = static_cast<int>(std::bit_width(static_cast<uint64_t>(n - 1))) + 1;
}

int8_t PairwiseSpace::value(int64_t j, uint64_t seed) const {
  return static_cast<int8_t>(-1 + 2 * (std::popcount(code(j) & seed) & 1));
}

std::vector<int8_t> PairwiseSpace::evaluate(uint64_t seed) const {
  std::vector<int8_t> x(static_cast<size_t>(n_));
  for (int64_t j = 0; j < n_; ++j) x[j] = value(j, seed);
  return x;
}

PairwiseSpace build_space(int64_t n) { return PairwiseSpace(n); }

std::vector<int8_t> evaluate_assignment(const PairwiseSpace& space,
                                        std::span<const uint8_t> seed_bits) {
  if (static_cast<int>(seed_bits.size()) != space.L()) {
    throw std::invalid_argument("seed length differs from L");
  }
  uint64_t seed = 0;
  for (int r = 0; r < space.L(); ++r) {
    if (seed_bits[r] > 1) throw std::invalid_argument("seed bits must be 0/1");
    if (seed_bits[r]) seed |= uint64_t{1} << (space.L() - 1 - r);
  }
  return space.evaluate(seed);
}

namespace {

// Conditional expectation given the fixed prefix encoded by `sign`, where
// sign[j] = (-1)^(prefix part of code_j . z) and x_j = -sign[j] once all bits
// are fixed. Variables sharing the free code suffix (j & mask) are perfectly
// correlated up to sign; distinct suffixes are independent with mean zero, so
// a bilinear term reduces to sum over groups of (sum_A alpha s)(sum_B beta s).
// Linear parts vanish until the whole seed is fixed.
class Kernel {
 public:
  Kernel(const QuadraticObjective& f, int threads) : f_(f), threads_(threads) {
    constexpr uint64_t kChunkWork = 1 << 14;
    chunk_begin_.push_back(0);
    uint64_t acc = 0;
    for (size_t t = 0; t < f.num_terms(); ++t) {
      acc += f.term(t).complexity();
      if (acc >= kChunkWork) {
        chunk_begin_.push_back(t + 1);
        acc = 0;
      }
    }
    if (chunk_begin_.back() != f.num_terms()) chunk_begin_.push_back(f.num_terms());
    partial_.assign(chunk_begin_.size() - 1, 0.0);
    ops_.assign(chunk_begin_.size() - 1, 0);
    int workers = threads_ > 1 ? std::max(threads_, detail::max_threads()) : 1;
    scratch_.resize(static_cast<size_t>(workers));
  }

  double run(std::span<const double> sign, uint64_t mask, bool full,
             WorkCounter* counter) {
    int64_t chunks = static_cast<int64_t>(partial_.size());
    detail::for_each_chunk(chunks, threads_, [&](int64_t c, int worker) {
      std::vector<double>& acc = scratch_[static_cast<size_t>(worker)];
      if (acc.size() < mask + 1) acc.assign(mask + 1, 0.0);
      double s = 0.0;
      uint64_t ops = 0;
      for (size_t t = chunk_begin_[c]; t < chunk_begin_[c + 1]; ++t) {
        TermView v = f_.term(t);
        double val = v.delta;
        if (v.square) {
          if (full) {
            double sb = 0.0;
            for (size_t i = 0; i < v.b_idx.size(); ++i) sb += v.beta[i] * sign[v.b_idx[i]];
            val += v.kappa * sb * sb;
            ops += v.b_idx.size();
          } else {
            for (size_t i = 0; i < v.b_idx.size(); ++i) {
              int32_t j = v.b_idx[i];
              acc[j & mask] += v.beta[i] * sign[j];
            }
            // Reading a group clears it, so later members add nothing.
            double sq = 0.0;
            for (int32_t j : v.b_idx) {
              double g = acc[j & mask];
              sq += g * g;
              acc[j & mask] = 0.0;
            }
            val += v.kappa * sq;
            ops += 2 * v.b_idx.size();
          }
        } else if (!v.a_idx.empty() && !v.b_idx.empty()) {
          if (full) {
            double sa = 0.0, sb = 0.0;
            for (size_t i = 0; i < v.a_idx.size(); ++i) sa += v.alpha[i] * sign[v.a_idx[i]];
            for (size_t i = 0; i < v.b_idx.size(); ++i) sb += v.beta[i] * sign[v.b_idx[i]];
            val += sa * sb;
            ops += v.a_idx.size() + v.b_idx.size();
          } else {
            for (size_t i = 0; i < v.a_idx.size(); ++i) {
              int32_t j = v.a_idx[i];
              acc[j & mask] += v.alpha[i] * sign[j];
            }
            double sb = 0.0;
            for (size_t i = 0; i < v.b_idx.size(); ++i) {
              int32_t j = v.b_idx[i];
              sb += v.beta[i] * sign[j] * acc[j & mask];
            }
            for (int32_t j : v.a_idx) acc[j & mask] = 0.0;
            val += sb;
            ops += 2 * v.a_idx.size() + v.b_idx.size();
          }
        }
        if (full) {
          double sc = 0.0;
          for (size_t i = 0; i < v.c_idx.size(); ++i) sc -= v.gamma[i] * sign[v.c_idx[i]];
          val += sc;
          ops += v.c_idx.size();
        }
        s += val;
        ops += 1;
      }
      partial_[c] = s;
      ops_[c] = ops;
    });
    if (counter) {
      for (uint64_t o : ops_) counter->ops += o;
    }
    return detail::pairwise_sum(partial_);
  }

 private:
  const QuadraticObjective& f_;
  int threads_;
  std::vector<size_t> chunk_begin_;
  std::vector<double> partial_;
  std::vector<uint64_t> ops_;
  std::vector<std::vector<double>> scratch_;
};

uint64_t free_mask(int L, int r) {
  return r < L ? (uint64_t{1} << (L - r - 1)) - 1 : 0;
}

void check_domain(const PairwiseSpace& space, const QuadraticObjective& f) {
  if (f.num_vars() > space.n()) {
    throw std::invalid_argument("objective has more variables than the space");
  }
}

}  // namespace

double conditional_expectation(const PairwiseSpace& space,
                               const QuadraticObjective& objective,
                               const SeedPrefix& prefix,
                               const SearchOptions& options) {
  check_domain(space, objective);
  const int L = space.L();
  const int r = prefix.r();
  if (r > L) throw std::invalid_argument("prefix longer than seed");
  std::vector<double> sign(static_cast<size_t>(space.n()), 1.0);
  for (int pos = 0; pos < r; ++pos) {
    if (!prefix.bits[pos]) continue;
    int q = L - 1 - pos;
    for (int64_t j = 0; j < space.n(); ++j) {
      if ((space.code(j) >> q) & 1) sign[j] = -sign[j];
    }
  }
  Kernel kernel(objective, options.threads);
  return kernel.run(sign, free_mask(L, r), r == L, options.counter);
}

namespace {

// Seed search. Square terms switch to dense group sums once the number of
// free-bit groups fits a small per-term array; each later bit then folds the
// array in half instead of rescanning the term.
class Search {
 public:
  static constexpr int64_t kDenseCap = 4096;

  Search(const QuadraticObjective& f, const std::vector<double>& sign, int threads)
      : f_(f), sign_(sign), threads_(threads) {
    constexpr uint64_t kChunkWork = 1 << 14;
    chunk_begin_.push_back(0);
    uint64_t acc = 0;
    plan_.resize(f.num_terms());
    int64_t dense = 0;
    for (size_t t = 0; t < f.num_terms(); ++t) {
      TermView v = f.term(t);
      if (v.square && !v.b_idx.empty()) {
        plan_[t].cap = std::min<int64_t>(
            kDenseCap, static_cast<int64_t>(std::bit_ceil(v.b_idx.size())));
        plan_[t].offset = dense;
        dense += plan_[t].cap;
        if (t > 0 && plan_[t - 1].cap > 0 && (t < 2 || !plan_[t - 2].twin)) {
          TermView w = f.term(t - 1);
          plan_[t - 1].twin = w.b_idx.size() == v.b_idx.size() &&
                              std::equal(w.b_idx.begin(), w.b_idx.end(), v.b_idx.begin());
        }
      }
    }
    for (size_t t = 0; t < f.num_terms(); ++t) {
      acc += f.term(t).complexity();
      // A chunk never ends between twins.
      if (acc >= kChunkWork && !plan_[t].twin) {
        chunk_begin_.push_back(t + 1);
        acc = 0;
      }
    }
    if (chunk_begin_.back() != f.num_terms()) chunk_begin_.push_back(f.num_terms());
    // Arrays are written in full when built, so the buffer is reused as is.
    static thread_local std::vector<double> buffer;
    if (buffer.size() < static_cast<size_t>(dense)) buffer.resize(static_cast<size_t>(dense));
    dense_ = buffer.data();
    partial_.assign(chunk_begin_.size() - 1, 0.0);
    prior_.assign(chunk_begin_.size() - 1, 0.0);
    ops_.assign(chunk_begin_.size() - 1, 0);
    int workers = threads_ > 1 ? std::max(threads_, detail::max_threads()) : 1;
    scratch_.resize(static_cast<size_t>(workers));
  }

  // Expectation with `groups` = 2^(free bits) before fixing the next bit to
  // 0; groups == 1 means only the final bit is left. fold_sign folds dense
  // arrays built in earlier calls under the previous decision. With `prior`
  // set (first call only, groups >= 2) the same pass also returns the
  // expectation before the bit, read off the unpaired group sums.
  double run(int64_t groups, double fold_sign, WorkCounter* counter, double* prior = nullptr) {
    const bool full = groups == 1;
    const int64_t half = groups / 2;
    const bool wide = prior != nullptr;
    if (wide && groups < 2) throw std::logic_error("prior needs two or more groups");
    int64_t chunks = static_cast<int64_t>(partial_.size());
    detail::for_each_chunk(chunks, threads_, [&](int64_t c, int worker) {
      std::vector<double>& acc = scratch_[static_cast<size_t>(worker)];
      double s = 0.0, sp = 0.0;
      uint64_t ops = 0;
      for (size_t t = chunk_begin_[c]; t < chunk_begin_[c + 1]; ++t) {
        if (plan_[t].twin) {
          run_twin(t, groups, fold_sign, wide, acc, s, sp, ops);
          ++t;
          continue;
        }
        TermView v = f_.term(t);
        double val = v.delta;
        Plan& pl = plan_[t];
        if (pl.cap > 0) {
          double* a = dense_ + pl.offset;
          if (pl.size == 2 * groups) {
            for (int64_t g = 0; g < groups; ++g) a[g] += fold_sign * a[g + groups];
            pl.size = groups;
            ops += static_cast<uint64_t>(groups);
          } else if (pl.size == 0 && groups <= pl.cap) {
            std::fill(a, a + groups, 0.0);
            for (size_t i = 0; i < v.b_idx.size(); ++i) {
              a[v.b_idx[i] & (groups - 1)] += v.beta[i] * sign_[v.b_idx[i]];
            }
            pl.size = groups;
            ops += v.b_idx.size();
          }
        }
        if (pl.size > 0) {
          const double* a = dense_ + pl.offset;
          double sq = 0.0;
          if (full) {
            sq = a[0] * a[0];
          } else {
            for (int64_t g = 0; g < half; ++g) sq += (a[g] + a[g + half]) * (a[g] + a[g + half]);
          }
          val += v.kappa * sq;
          ops += static_cast<uint64_t>(half) + 1;
          if (wide) {
            double sq_p = 0.0;
            for (int64_t g = 0; g < groups; ++g) sq_p += a[g] * a[g];
            sp += v.kappa * sq_p;
          }
        } else if (v.square && wide) {
          const uint64_t mask = static_cast<uint64_t>(groups) - 1;
          if (acc.size() < static_cast<size_t>(groups)) acc.assign(static_cast<size_t>(groups), 0.0);
          for (size_t i = 0; i < v.b_idx.size(); ++i) {
            int32_t j = v.b_idx[i];
            acc[j & mask] += v.beta[i] * sign_[j];
          }
          // Each group is read with its partner under the next bit, then both cleared.
          double sq = 0.0, sq_p = 0.0;
          for (int32_t j : v.b_idx) {
            const uint64_t g = j & mask, h = g ^ static_cast<uint64_t>(half);
            const double x = acc[g], y = acc[h];
            sq += (x + y) * (x + y);
            sq_p += x * x + y * y;
            acc[g] = acc[h] = 0.0;
          }
          val += v.kappa * sq;
          sp += v.kappa * sq_p;
          ops += 2 * v.b_idx.size();
        } else if (v.square) {
          const uint64_t mask = static_cast<uint64_t>(half) - 1;
          if (acc.size() < static_cast<size_t>(half)) acc.assign(static_cast<size_t>(half), 0.0);
          for (size_t i = 0; i < v.b_idx.size(); ++i) {
            int32_t j = v.b_idx[i];
            acc[j & mask] += v.beta[i] * sign_[j];
          }
          // Reading a group clears it, so later members add nothing.
          double sq = 0.0;
          for (int32_t j : v.b_idx) {
            double g = acc[j & mask];
            sq += g * g;
            acc[j & mask] = 0.0;
          }
          val += v.kappa * sq;
          ops += 2 * v.b_idx.size();
        } else if (!v.a_idx.empty() && !v.b_idx.empty()) {
          if (full) {
            double sa = 0.0, sb = 0.0;
            for (size_t i = 0; i < v.a_idx.size(); ++i) sa += v.alpha[i] * sign_[v.a_idx[i]];
            for (size_t i = 0; i < v.b_idx.size(); ++i) sb += v.beta[i] * sign_[v.b_idx[i]];
            val += sa * sb;
          } else if (wide) {
            const uint64_t mask = static_cast<uint64_t>(groups) - 1;
            if (acc.size() < static_cast<size_t>(groups)) acc.assign(static_cast<size_t>(groups), 0.0);
            for (size_t i = 0; i < v.a_idx.size(); ++i) {
              int32_t j = v.a_idx[i];
              acc[j & mask] += v.alpha[i] * sign_[j];
            }
            double sb = 0.0, sb_p = 0.0;
            for (size_t i = 0; i < v.b_idx.size(); ++i) {
              int32_t j = v.b_idx[i];
              const uint64_t g = j & mask;
              const double bs = v.beta[i] * sign_[j];
              sb += bs * (acc[g] + acc[g ^ static_cast<uint64_t>(half)]);
              sb_p += bs * acc[g];
            }
            for (int32_t j : v.a_idx) acc[j & mask] = 0.0;
            val += sb;
            sp += sb_p;
          } else {
            const uint64_t mask = static_cast<uint64_t>(half) - 1;
            if (acc.size() < static_cast<size_t>(half)) acc.assign(static_cast<size_t>(half), 0.0);
            for (size_t i = 0; i < v.a_idx.size(); ++i) {
              int32_t j = v.a_idx[i];
              acc[j & mask] += v.alpha[i] * sign_[j];
            }
            double sb = 0.0;
            for (size_t i = 0; i < v.b_idx.size(); ++i) {
              int32_t j = v.b_idx[i];
              sb += v.beta[i] * sign_[j] * acc[j & mask];
            }
            for (int32_t j : v.a_idx) acc[j & mask] = 0.0;
            val += sb;
          }
          ops += 2 * v.a_idx.size() + v.b_idx.size();
        }
        if (full) {
          // All bits but the last are fixed; x_j = -sign_j with it at 0.
          double sc = 0.0;
          for (size_t i = 0; i < v.c_idx.size(); ++i) sc -= v.gamma[i] * sign_[v.c_idx[i]];
          val += sc;
          ops += v.c_idx.size();
        }
        s += val;
        sp += v.delta;
        ops += 1;
      }
      partial_[c] = s;
      if (wide) prior_[c] = sp;
      ops_[c] = ops;
    });
    if (counter) {
      for (uint64_t o : ops_) counter->ops += o;
    }
    if (wide) {
      *prior = detail::pairwise_sum(prior_);
    }
    return detail::pairwise_sum(partial_);
  }

 private:
  struct Plan {
    int64_t cap = 0;
    int64_t offset = 0;
    int64_t size = 0;  // 0 while sparse
    bool twin = false;  // next term is a square over the same index list
  };

  // Terms t and t+1 share b_idx: one pass over the indices and signs serves
  // both, with their group sums interleaved in acc.
  void run_twin(size_t t, int64_t groups, double fold_sign, bool wide, std::vector<double>& acc,
                double& s, double& sp, uint64_t& ops) {
    const bool full = groups == 1;
    const int64_t half = groups / 2;
    const TermView v = f_.term(t), u = f_.term(t + 1);
    Plan& pl = plan_[t];
    Plan& pu = plan_[t + 1];
    const size_t nb = v.b_idx.size();
    double* a = dense_ + pl.offset;
    double* b = dense_ + pu.offset;
    if (pl.size == 2 * groups) {
      for (int64_t g = 0; g < groups; ++g) a[g] += fold_sign * a[g + groups];
      for (int64_t g = 0; g < groups; ++g) b[g] += fold_sign * b[g + groups];
      pl.size = pu.size = groups;
      ops += 2 * static_cast<uint64_t>(groups);
    } else if (pl.size == 0 && groups <= pl.cap) {
      std::fill(a, a + groups, 0.0);
      std::fill(b, b + groups, 0.0);
      const uint64_t mask = static_cast<uint64_t>(groups) - 1;
      for (size_t i = 0; i < nb; ++i) {
        const int32_t j = v.b_idx[i];
        const double sg = sign_[j];
        a[j & mask] += v.beta[i] * sg;
        b[j & mask] += u.beta[i] * sg;
      }
      pl.size = pu.size = groups;
      ops += 2 * nb;
    }
    double sq1 = 0.0, sq2 = 0.0, p1 = 0.0, p2 = 0.0;
    if (pl.size > 0) {
      if (full) {
        sq1 = a[0] * a[0];
        sq2 = b[0] * b[0];
      } else {
        for (int64_t g = 0; g < half; ++g) sq1 += (a[g] + a[g + half]) * (a[g] + a[g + half]);
        for (int64_t g = 0; g < half; ++g) sq2 += (b[g] + b[g + half]) * (b[g] + b[g + half]);
      }
      if (wide) {
        for (int64_t g = 0; g < groups; ++g) p1 += a[g] * a[g];
        for (int64_t g = 0; g < groups; ++g) p2 += b[g] * b[g];
      }
      ops += 2 * (static_cast<uint64_t>(half) + 1);
    } else {
      const int64_t width = wide ? groups : half;
      const uint64_t mask = static_cast<uint64_t>(width) - 1;
      if (acc.size() < 2 * static_cast<size_t>(width)) acc.assign(2 * static_cast<size_t>(width), 0.0);
      for (size_t i = 0; i < nb; ++i) {
        const int32_t j = v.b_idx[i];
        const double sg = sign_[j];
        const uint64_t g = 2 * (j & mask);
        acc[g] += v.beta[i] * sg;
        acc[g + 1] += u.beta[i] * sg;
      }
      if (wide) {
        const uint64_t hb = 2 * static_cast<uint64_t>(half);
        for (int32_t j : v.b_idx) {
          const uint64_t g = 2 * (j & mask), h = g ^ hb;
          const double x1 = acc[g], y1 = acc[h], x2 = acc[g + 1], y2 = acc[h + 1];
          sq1 += (x1 + y1) * (x1 + y1);
          sq2 += (x2 + y2) * (x2 + y2);
          p1 += x1 * x1 + y1 * y1;
          p2 += x2 * x2 + y2 * y2;
          acc[g] = acc[h] = acc[g + 1] = acc[h + 1] = 0.0;
        }
      } else {
        for (int32_t j : v.b_idx) {
          const uint64_t g = 2 * (j & mask);
          sq1 += acc[g] * acc[g];
          sq2 += acc[g + 1] * acc[g + 1];
          acc[g] = acc[g + 1] = 0.0;
        }
      }
      ops += 4 * nb;
    }
    double val = v.delta + u.delta + v.kappa * sq1 + u.kappa * sq2;
    if (wide) sp += v.delta + u.delta + v.kappa * p1 + u.kappa * p2;
    if (full) {
      double sc = 0.0;
      for (size_t i = 0; i < v.c_idx.size(); ++i) sc -= v.gamma[i] * sign_[v.c_idx[i]];
      for (size_t i = 0; i < u.c_idx.size(); ++i) sc -= u.gamma[i] * sign_[u.c_idx[i]];
      val += sc;
      ops += v.c_idx.size() + u.c_idx.size();
    }
    s += val;
    ops += 2;
  }

  const QuadraticObjective& f_;
  const std::vector<double>& sign_;
  int threads_;
  std::vector<Plan> plan_;
  double* dense_ = nullptr;
  std::vector<size_t> chunk_begin_;
  std::vector<double> partial_, prior_;
  std::vector<uint64_t> ops_;
  std::vector<std::vector<double>> scratch_;
};

// Few variables under many terms: fold everything into one matrix Q with
// f = x^T Q x + g^T x + const. The pairs (i, j) first joined by fixing a seed
// position are those whose lowest differing bit is the one that position
// controls, so the whole search touches each entry of Q once.
bool prefer_dense(const QuadraticObjective& f, int L) {
  constexpr int64_t kMaxVars = 1024;
  const int64_t n = f.num_vars();
  if (n > kMaxVars) return false;
  double dense = double(n) * double(n), sparse = 0.0;
  for (size_t t = 0; t < f.num_terms(); ++t) {
    TermView v = f.term(t);
    const double a = static_cast<double>(v.square ? v.b_idx.size() : v.a_idx.size());
    const double b = static_cast<double>(v.b_idx.size());
    dense += a * b;
    sparse += (L + 1) * (a + b + 8.0);
  }
  return dense < sparse;
}

DerandomizeResult derandomize_dense(const PairwiseSpace& space,
                                    const QuadraticObjective& f,
                                    WorkCounter* counter) {
  const int L = space.L();
  const int64_t n = f.num_vars();
  std::vector<double> q(static_cast<size_t>(n * n), 0.0), g(static_cast<size_t>(n), 0.0);
  double constant = 0.0;
  uint64_t ops = 0;
  for (size_t t = 0; t < f.num_terms(); ++t) {
    TermView v = f.term(t);
    constant += v.delta;
    const std::span<const int32_t> ai = v.square ? v.b_idx : v.a_idx;
    for (size_t i = 0; i < ai.size(); ++i) {
      const double ca = v.square ? v.kappa * v.beta[i] : v.alpha[i];
      double* row = q.data() + static_cast<size_t>(ai[i]) * n;
      for (size_t j = 0; j < v.b_idx.size(); ++j) row[v.b_idx[j]] += ca * v.beta[j];
    }
    for (size_t i = 0; i < v.c_idx.size(); ++i) g[v.c_idx[i]] += v.gamma[i];
    ops += ai.size() * v.b_idx.size() + v.c_idx.size() + 1;
  }
  DerandomizeResult res;
  double e = constant;
  for (int64_t i = 0; i < n; ++i) e += q[static_cast<size_t>(i * n + i)];
  res.expectation = e;
  res.prefix_values.push_back(e);
  std::vector<double> sign(static_cast<size_t>(n), 1.0);
  uint64_t seed = 0;
  for (int r = 0; r + 1 < L; ++r) {
    // Position r decides variable bit b.
    const int b = L - 2 - r;
    const int64_t bit = int64_t{1} << b, low = bit - 1;
    double d = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      if (i & bit) continue;
      const double* qi = q.data() + static_cast<size_t>(i) * n;
      // Partners: same low bits, bit b set, any higher bits.
      for (int64_t j = (i & low) | bit; j < n; j += 2 * bit) {
        d += (qi[j] + q[static_cast<size_t>(j * n + i)]) * sign[i] * sign[j];
        ++ops;
      }
    }
    const double e0 = e + d, e1 = e - d;
    if (e1 < e0) {
      seed |= uint64_t{1} << (L - 1 - r);
      for (int64_t j = 0; j < n; ++j) {
        if (j & bit) sign[j] = -sign[j];
      }
      e = e1;
    } else {
      e = e0;
    }
    res.prefix_values.push_back(e);
  }
  // Last position flips every variable; x_j = -sign_j when it is 0.
  double lin = 0.0;
  for (int64_t j = 0; j < n; ++j) lin += g[j] * sign[j];
  ops += static_cast<uint64_t>(n);
  const double e0 = e - lin, e1 = e + lin;
  if (e1 < e0) seed |= 1;
  res.prefix_values.push_back((seed & 1) ? e1 : e0);
  if (counter) counter->ops += ops;
  res.seed = seed;
  res.x = space.evaluate(seed);
  res.value = res.prefix_values.back();
  return res;
}

}  // namespace

DerandomizeResult derandomize(const PairwiseSpace& space,
                              const QuadraticObjective& objective,
                              const SearchOptions& options) {
  check_domain(space, objective);
  const int L = space.L();
  if (prefer_dense(objective, L)) return derandomize_dense(space, objective, options.counter);
  std::vector<double> sign(static_cast<size_t>(space.n()), 1.0);
  DerandomizeResult res;
  Search search(objective, sign, options.threads);
  double e = 0.0, first_e0 = 0.0;
  if (L >= 2) {
    first_e0 = search.run(int64_t{1} << (L - 1), 1.0, options.counter, &e);
  } else {
    e = Kernel(objective, options.threads).run(sign, free_mask(L, 0), L == 0, options.counter);
  }
  res.expectation = e;
  res.prefix_values.push_back(e);
  uint64_t seed = 0;
  double fold_sign = 1.0;
  for (int r = 0; r < L; ++r) {
    // Before fixing position r there are 2^(L-1-r) groups.
    double e0 = r == 0 && L >= 2 ? first_e0
                                 : search.run(int64_t{1} << (L - 1 - r), fold_sign, options.counter);
    // The two extensions average to the current value.
    double e1 = 2.0 * e - e0;
    if (e1 < e0) {
      int q = L - 1 - r;
      seed |= uint64_t{1} << q;
      for (int64_t j = 0; j < space.n(); ++j) {
        if ((space.code(j) >> q) & 1) sign[j] = -sign[j];
      }
      e = e1;
      fold_sign = -1.0;
    } else {
      e = e0;
      fold_sign = 1.0;
    }
    res.prefix_values.push_back(e);
  }
  res.seed = seed;
  res.x = space.evaluate(seed);
  res.value = e;
  return res;
}

double enumerate_expectation(const PairwiseSpace& space,
                             const QuadraticObjective& objective) {
  check_domain(space, objective);
  double s = 0.0;
  for (uint64_t z = 0; z < space.seed_count(); ++z) {
    s += objective.evaluate(space.evaluate(z));
  }
  return s / static_cast<double>(space.seed_count());
}

}  // namespace derand
