#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <span>
#include <vector>

#include "derand/applications.hpp"
#include "derand/constraint_matrix.hpp"

namespace derand {

struct WalkDiagnostics {
  std::vector<int64_t> steps;  // step index of each snapshot, 0 first
  // Per snapshot and row: sum_j a_ij p_j and sum over ordered pairs of the
  // row's support of (p_j1 - p_j2)^2.
  std::vector<std::vector<double>> phi;
  std::vector<std::vector<double>> psi;
};

struct RandomWalkResult {
  int k = 0;
  int64_t steps = 0;
  std::vector<int32_t> num;
  Eigen::VectorXd q;
  WalkDiagnostics diag;
};

// The walk with fully independent +-1/k moves drawn from SplitMix64(seed).
// steps < 0 means 100 k^2; snapshots every `trace_stride` steps (0 keeps the
// first and last only).
RandomWalkResult randomized_walk(const ConstraintMatrix& a, const Eigen::VectorXd& p, int k,
                                 uint64_t seed, int64_t steps = -1, int64_t trace_stride = 0);

// Independent Bernoulli(p_j) rounding.
Eigen::VectorXd monte_carlo_round(const Eigen::VectorXd& p, uint64_t seed);

struct SequentialPotential {
  double lambda = 0.1;
  // Phi1 / Phi1_0 and Phi2 / Phi2_0 per set.
  std::vector<double> ratio_plus, ratio_minus;
  double pot = 1.0;
};

struct SequentialResult {
  std::vector<int8_t> labels;  // +1 YES, -1 NO
  std::vector<double> pot_trace;  // Pot_0 = 1, then after each element
  std::vector<int64_t> plus, minus;  // per set
  SequentialPotential state;
};

// Greedy fixing in `order` (default 0..n-1) that never raises the potential;
// ties go to +1. min_size < 0 means ceil(ln n).
SequentialResult sequential_conditional_fix(const SetSystem& system,
                                            std::span<const int32_t> order = {},
                                            int64_t min_size = -1);

}  // namespace derand
