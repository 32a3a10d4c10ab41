#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>

namespace derand {

enum class Profile { kPaper, kPractical };

std::string to_string(Profile p);
Profile parse_profile(const std::string& s);

struct Constants {
  // lambda_i = min(D_i / sum a^2, k / sum a) / lambda_scale
  double lambda_scale;
  // lambda'_b = k / (psi_lambda_scale * b * (b + k))
  double psi_lambda_scale;
  // bucket weight exp(-min(b, k) / psi_weight_scale)
  double psi_weight_scale;
  // T = steps_per_k2 * k^2
  double steps_per_k2;
  // constant of the failure-probability formulas
  double c;
  // Granularity inflation of the wrappers (k' from ceil(c^2 log 2nm), k^3 for
  // subsampled levels). Off means the caller's k is used throughout.
  bool literal_granularity;
  // Fixed budget shares (0.997 recursion, D/1000 partial share, D/2 for the
  // small-probability shift). Off means every level is handed the budget
  // that is actually left after measuring the deviation spent so far.
  bool literal_budgets;
  // Fresh variable-to-code assignment in every walk step (a different
  // pairwise space per step). Off uses the fixed index order.
  bool relabel_steps;
  // Every stall_per_k2 * k^2 steps the walk ends unless the moving count
  // at least halved since the last check. 0, or an explicit
  // EngineConfig::steps, runs the full horizon.
  double stall_per_k2;

  static Constants paper();
  static Constants practical();
  static Constants for_profile(Profile p);
};

struct StepRecord {
  int64_t t = 0;
  double log_pot = 0.0;
  int64_t moving = 0;
  uint64_t complexity = 0;
};

struct EngineConfig {
  Profile profile = Profile::kPaper;
  Constants constants = Constants::paper();
  int threads = 1;
  // Stop the walk as soon as no column is moving.
  bool early_exit = false;
  std::optional<int64_t> steps;
  bool keep_pot_trace = false;
  // Numerators after every step; memory n*T, meant for tests.
  bool keep_history = false;
  std::function<void(const StepRecord&)> trace;

  static EngineConfig for_profile(Profile p);
};

}  // namespace derand
