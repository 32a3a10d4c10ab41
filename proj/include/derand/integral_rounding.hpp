#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <vector>

#include "derand/config.hpp"
#include "derand/constraint_matrix.hpp"

namespace derand {

// Nearest multiple of 1/k, ties rounded up.
Eigen::VectorXd round_probabilities_to_grid(const Eigen::VectorXd& p, int k);

struct RoundingLevel {
  int depth = 0;
  int64_t rows = 0;
  int64_t cols = 0;
  double ratio = 0.0;  // max_i sum_j a_ij / D_i over the level's rows
  int64_t steps = 0;
  int64_t nonintegral_after = 0;
  int64_t bad = 0;
  double sum_prob_bad = 0.0;
  uint64_t complexity = 0;
};

struct RoundingReport {
  std::vector<RoundingLevel> levels;
  // Rows with D_i < 1000 sum_j a_ij / k, outside the regime of the analysis.
  std::vector<int32_t> low_budget_rows;
  double sum_prob_bad = 0.0;
  int64_t steps = 0;
  uint64_t total_complexity = 0;
  uint64_t max_step_complexity = 0;
  uint64_t search_ops = 0;
  // Columns left fractional after the depth limit and rounded to nearest.
  int64_t forced_columns = 0;
};

struct FixResult {
  Eigen::VectorXd q;
  std::vector<int32_t> bad;
  std::vector<uint8_t> is_bad;
  Eigen::VectorXd deviation;
  RoundingReport report;
};

// Recomputes deviations of q against p, marks rows over budget as bad in
// addition to those already flagged. With an offset, row i is over budget
// when |offset_i + (A(q - p))_i| > delta_i.
void finalize_bad_rows(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& delta, FixResult& r,
                       const Eigen::VectorXd& offset = Eigen::VectorXd());

// offset: deviation each row has already spent, signed as A(q - p). The
// practical profile steers rows back toward zero; deviation still reports
// |A(q - p)|.
FixResult fix_integral(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                       const Eigen::VectorXd& delta, int k,
                       const EngineConfig& config,
                       const Eigen::VectorXd& offset = Eigen::VectorXd());

}  // namespace derand
