#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <string>
#include <vector>

#include "derand/config.hpp"
#include "derand/constraint_matrix.hpp"
#include "derand/integral_rounding.hpp"

namespace derand {

enum class BoundMode { kPartial, kHoeffding, kChernoff, kBernstein };

std::string to_string(BoundMode m);
BoundMode parse_bound_mode(const std::string& s);

// Subsampling schedules. level is the number of halvings still needed.
double schedule_epsilon(int level, int k);        // (1/16) max(0.8^l, 1/k)
double schedule_alpha(int level, int k);          // (1/2)(1 - 0.8^l + l/k)
double practical_level_share(int level);          // (r-1)/(r^l-1), r = sqrt 2
// ceil(-log2 p) for p in (0, 1], computed exactly from the binary exponent.
int subsampling_level(double p);

struct SubsamplingStage {
  int level = 0;
  int64_t small_cols = 0;   // columns in the halving set
  int64_t kept_cols = 0;    // of those, doubled rather than dropped
  int64_t rows = 0;         // rows handed to the rounding call
  int64_t bad = 0;          // rows newly marked bad
  double max_use = 0.0;     // max over rows of |spent after the stage| / stage budget
};

struct ExponentReport {
  BoundMode mode = BoundMode::kChernoff;
  double c = 0.0;
  int k = 0;
  std::vector<double> exponent;  // +inf for rows with empty sums
  std::vector<double> prob_bad;  // capped at 1
  double sum_prob_bad = 0.0;
};

ExponentReport compute_failure_bounds(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                      const Eigen::VectorXd& delta, int k,
                                      BoundMode mode, double c);

struct ConcentrationResult {
  Eigen::VectorXd q;
  std::vector<int32_t> bad;
  std::vector<uint8_t> is_bad;
  Eigen::VectorXd deviation;  // |A(p - q)| against the caller's p
  int k = 0;
  int k_effective = 0;        // granularity actually run
  std::vector<SubsamplingStage> stages;
  RoundingReport rounding;    // totals over every rounding call
  ExponentReport bounds;
};

// Requires min p_j >= 2^-k over fractional p_j.
ConcentrationResult fix_with_subsampling(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                         const Eigen::VectorXd& delta, int k,
                                         const EngineConfig& config);
ConcentrationResult fix_hoeffding(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& delta, int k,
                                  const EngineConfig& config);
ConcentrationResult fix_chernoff(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                 const Eigen::VectorXd& delta, int k,
                                 const EngineConfig& config);

struct BernsteinBucket {
  int32_t row = 0;
  int exponent = 0;  // members have 2^(exponent-1) < a_ij <= 2^exponent
  std::vector<int32_t> cols;
  double mu = 0.0;
  double var = 0.0;
  double eps1 = 0.0, eps2 = 0.0, eps3 = 0.0;
  double delta = 0.0;
};

struct BernsteinPlan {
  std::vector<BernsteinBucket> buckets;  // grouped by row, increasing exponent
  std::vector<int64_t> row_begin;        // buckets of row i: [row_begin[i], row_begin[i+1])
  Eigen::VectorXd mu, var, gamma, alpha;
  std::vector<int> max_exponent;
  Eigen::VectorXd share_sum;             // sum of bucket deltas per row
};

BernsteinPlan build_bernstein_plan(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                   const Eigen::VectorXd& delta, double c);
// One row per bucket, weights copied.
ConstraintMatrix expand_bernstein(const ConstraintMatrix& a, const BernsteinPlan& plan);

ConcentrationResult fix_bernstein(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                                  const Eigen::VectorXd& delta, int k,
                                  const EngineConfig& config);

}  // namespace derand
