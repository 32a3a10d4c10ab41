#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cstdint>
#include <numeric>
#include <random>
#include <vector>

#include "derand/constraint_matrix.hpp"
#include "derand/pairwise_space.hpp"
#include "derand/quadratic_objective.hpp"

namespace derand::testing {

inline std::vector<int32_t> random_subset(std::mt19937_64& g, int64_t n, int64_t size) {
  std::vector<int32_t> all(static_cast<size_t>(n));
  std::iota(all.begin(), all.end(), 0);
  size = std::min(size, n);
  for (int64_t i = 0; i < size; ++i) {
    std::uniform_int_distribution<int64_t> d(i, n - 1);
    std::swap(all[i], all[d(g)]);
  }
  all.resize(static_cast<size_t>(size));
  std::sort(all.begin(), all.end());
  return all;
}

inline double coef(std::mt19937_64& g) {
  return std::uniform_real_distribution<double>(-3.0, 3.0)(g);
}

// Random terms over n variables with parts of up to max_part members. Square
// terms when `square`, else bilinear (with occasional overlap of A and B).
inline QuadraticObjective random_objective(std::mt19937_64& g, int64_t n, size_t terms,
                                           bool square, int64_t max_part = 20) {
  QuadraticObjective f(n);
  max_part = std::max<int64_t>(1, std::min(max_part, n));
  std::uniform_int_distribution<int64_t> sz(1, max_part);
  for (size_t t = 0; t < terms; ++t) {
    auto b = random_subset(g, n, sz(g));
    auto c = random_subset(g, n, sz(g) / 2);
    std::vector<double> beta(b.size()), gamma(c.size());
    for (double& v : beta) v = coef(g);
    for (double& v : gamma) v = coef(g);
    double delta = coef(g);
    if (square) {
      f.add_square_term(b, beta, std::abs(coef(g)) + 0.1, c, gamma, delta);
    } else {
      auto a = g() % 3 == 0 ? b : random_subset(g, n, sz(g));
      std::vector<double> alpha(a.size());
      for (double& v : alpha) v = coef(g);
      f.add_term(a, alpha, b, beta, c, gamma, delta);
    }
  }
  return f;
}

// Average of f over every seed extending `prefix`.
inline double suffix_average(const PairwiseSpace& s, const QuadraticObjective& f,
                             const std::vector<uint8_t>& prefix) {
  const int L = s.L(), r = static_cast<int>(prefix.size());
  uint64_t base = 0;
  for (int i = 0; i < r; ++i) base |= uint64_t{prefix[i]} << (L - 1 - i);
  const uint64_t free = uint64_t{1} << (L - r);
  double sum = 0.0;
  for (uint64_t z = 0; z < free; ++z) sum += f.evaluate(s.evaluate(base | z));
  return sum / static_cast<double>(free);
}

inline std::vector<std::vector<int32_t>> random_sets(std::mt19937_64& g, int64_t n, int64_t m,
                                                     int64_t lo, int64_t hi) {
  std::uniform_int_distribution<int64_t> sz(lo, hi);
  std::vector<std::vector<int32_t>> sets;
  for (int64_t i = 0; i < m; ++i) sets.push_back(random_subset(g, n, sz(g)));
  return sets;
}

// Rows of `lo..hi` random columns with weights in [wlo, whi].
inline ConstraintMatrix random_matrix(std::mt19937_64& g, int64_t m, int64_t n, int64_t lo,
                                      int64_t hi, double wlo, double whi) {
  std::vector<ConstraintMatrix::Entry> e;
  std::uniform_real_distribution<double> w(wlo, whi);
  std::uniform_int_distribution<int64_t> sz(lo, hi);
  for (int64_t i = 0; i < m; ++i) {
    for (int32_t j : random_subset(g, n, sz(g))) e.emplace_back(static_cast<int32_t>(i), j, w(g));
  }
  return ConstraintMatrix::from_entries(m, n, std::move(e));
}

// p_j uniform on the 1/k grid strictly inside (0, 1).
inline Eigen::VectorXd random_grid_p(std::mt19937_64& g, int64_t n, int k) {
  std::uniform_int_distribution<int> d(1, k - 1);
  Eigen::VectorXd p(n);
  for (int64_t j = 0; j < n; ++j) p[j] = static_cast<double>(d(g)) / k;
  return p;
}

}  // namespace derand::testing
