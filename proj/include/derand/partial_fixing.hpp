#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "derand/config.hpp"
#include "derand/constraint_matrix.hpp"
#include "derand/pairwise_space.hpp"
#include "derand/quadratic_objective.hpp"

namespace derand {

enum class BucketKind { kSizeOne, kSmall, kLarge };
enum class RowClass { kActive, kBoringLarge, kBoringSmall };

struct Bucket {
  int exponent = 0;  // members have 2^exponent <= a_ij < 2^(exponent+1)
  std::vector<int32_t> cols;
  BucketKind kind = BucketKind::kLarge;
  bool representative = false;
};

struct RowBuckets {
  RowClass cls = RowClass::kActive;
  std::vector<Bucket> buckets;  // increasing exponent
  // Ignored columns; for boringly large rows this is the whole support and
  // ignore_all is set (the ignore set is then all of [n]).
  std::vector<int32_t> ignore;
  bool ignore_all = false;
  double ignore_mass = 0.0;
};

struct BucketDecomposition {
  std::vector<RowBuckets> rows;
};

BucketDecomposition classify_rows(const ConstraintMatrix& a,
                                  const Eigen::VectorXd& delta, int k);

struct WalkState {
  int k = 0;
  int64_t T = 0;
  int64_t t = 0;
  std::vector<int32_t> num;  // p_j = num[j] / k
  std::vector<uint8_t> moving;
  int64_t moving_count = 0;

  Eigen::VectorXd values() const;
};

// Throws if some p_j is not a multiple of 1/k in [0, 1] or k is odd.
WalkState init_state(const Eigen::VectorXd& p, int k,
                     std::optional<int64_t> steps, double steps_per_k2 = 100);

struct PhiEntry {
  int32_t row = 0;
  double lambda = 0.0;
  double log_weight = 0.0;  // log of the row's failure weight
  double log_comp = 0.0;    // log(1 + lambda^2 sum a^2 / k^2)
  double log_ratio1 = 0.0;  // accumulated log of factor / compensator
  double log_ratio2 = 0.0;
};

struct PsiEntry {
  int32_t row = 0;
  int32_t size = 0;
  double lambda = 0.0;
  double log_weight = 0.0;  // row weight times the bucket weight, in logs
  double log_comp = 0.0;
  double log_ratio = 0.0;
  double y = 0.0;
  bool additive = false;
  int64_t num_sum = 0;     // sum of numerators over all members
  int64_t num_sq_sum = 0;  // sum of squared numerators
  int32_t moving = 0;
};

struct PotentialLedger {
  std::vector<PhiEntry> phi;
  std::vector<PsiEntry> psi;
};

std::vector<double> compute_prob_bad_partial(const ConstraintMatrix& a,
                                             const Eigen::VectorXd& delta,
                                             int k, double c);

class WalkEngine;

struct StepObjective {
  QuadraticObjective objective;
  // Pot_t as a function of the step variables equals exp(log_scale) * f.
  double log_scale = 0.0;
  std::vector<int32_t> local_to_col;
};

// All walk state for one partial fixing run. Owns copies of its inputs.
class WalkEngine {
 public:
  // offset (empty, or one value per row) is deviation already spent: row i
  // then aims at |offset_i + (A(x - p))_i| <= delta_i.
  WalkEngine(const ConstraintMatrix& a, const Eigen::VectorXd& p,
             const Eigen::VectorXd& delta, int k, const EngineConfig& config,
             const Eigen::VectorXd& offset = Eigen::VectorXd());

  const ConstraintMatrix& matrix() const { return a_; }
  const Eigen::VectorXd& delta() const { return delta_; }
  const EngineConfig& config() const { return config_; }
  const WalkState& state() const { return state_; }
  const BucketDecomposition& decomposition() const { return decomp_; }
  const PotentialLedger& ledger() const {
    sync_frozen();
    return ledger_;
  }
  const std::vector<std::vector<int32_t>>& history() const { return history_; }
  const std::vector<double>& log_pot_trace() const { return log_pot_trace_; }
  uint64_t total_complexity() const { return total_complexity_; }
  uint64_t max_step_complexity() const { return max_step_complexity_; }
  uint64_t search_ops() const { return work_.ops; }

  double log_potential() const;
  double log_potential_initial() const { return log_pot0_; }

  // With a label, local variable l is renamed label[l] in the objective.
  void assemble(StepObjective& out, std::span<const int32_t> label = {}) const;
  // Applies x (one +-1 per moving column, ordered by column) to the walk and
  // the ledger.
  void apply(std::span<const int8_t> x);
  void step();
  // With nothing moving, every remaining step multiplies the same factors;
  // folds them in at once (no per-step trace).
  void skip_frozen_steps();
  bool done() const { return state_.t >= state_.T; }

 private:
  struct MovingList {
    std::vector<int32_t> cols;
    std::vector<double> weights;
    int32_t alive = 0;
  };
  void compact_if_sparse(MovingList& l);
  // Entries with nothing moving follow a fixed per-step update; they are
  // skipped while stepping and brought up to date here.
  void sync_frozen() const;
  void assemble_impl(StepObjective& out, std::span<const int32_t> label,
                     bool frozen_constants) const;

  ConstraintMatrix a_;
  Eigen::VectorXd delta_;
  EngineConfig config_;
  WalkState state_;
  BucketDecomposition decomp_;
  mutable PotentialLedger ledger_;
  // Step at which a frozen entry's ledger values are current; -1 while live.
  mutable std::vector<int64_t> phi_frozen_at_, psi_frozen_at_;
  std::vector<int32_t> live_phi_, live_psi_;

  std::vector<MovingList> phi_moving_;
  std::vector<MovingList> psi_moving_;
  // Column incidence: phi entries of column j are col_phi_[col_begin_[j] ..
  // col_begin_[j+1]); psi offsets follow the n+1 phi offsets in col_begin_.
  std::vector<int64_t> col_begin_;
  std::vector<int32_t> col_phi_;
  std::vector<int32_t> col_psi_;

  mutable std::vector<int32_t> col_to_local_;
  std::vector<std::vector<int32_t>> history_;
  std::vector<double> log_pot_trace_;
  double log_pot0_ = 0.0;
  uint64_t total_complexity_ = 0;
  uint64_t max_step_complexity_ = 0;
  WorkCounter work_;
  StepObjective scratch_;
  std::vector<int32_t> label_;
  std::vector<int8_t> step_x_;
  std::vector<uint8_t> phi_uniform_;     // row weights all equal
  std::vector<int32_t> phi_psi_begin_;   // psi entries of phi entry e: [b[e], b[e+1])
  mutable std::vector<int32_t> asm_idx_, asm_pidx_;
  mutable std::vector<double> asm_be_, asm_ga_, asm_pc_;
};

StepObjective assemble_step_objective(const WalkEngine& engine);

// log Pot_t recomputed from the numerators history[0..t] alone (no ledger):
// every factor, compensator and bucket mode is re-derived per step.
double log_potential_from_history(const ConstraintMatrix& a, const Eigen::VectorXd& delta,
                                  int k, const EngineConfig& config,
                                  const std::vector<std::vector<int32_t>>& history,
                                  int64_t t);
void step(WalkEngine& engine);

struct PartialFixResult {
  int k = 0;
  Eigen::VectorXd q;
  std::vector<int32_t> num;
  std::vector<std::vector<int32_t>> ignore;
  std::vector<uint8_t> ignore_all;
  std::vector<int32_t> bad;
  std::vector<uint8_t> is_bad;
  Eigen::VectorXd deviation;
  std::vector<RowClass> row_class;
  std::vector<double> prob_bad;
  int64_t steps = 0;
  uint64_t total_complexity = 0;
  uint64_t max_step_complexity = 0;
  uint64_t search_ops = 0;
  double log_pot0 = 0.0;
  double log_pot_final = 0.0;
  std::vector<double> log_pot_trace;
  int64_t nonintegral = 0;
};

// See WalkEngine for offset; deviation still reports |A(q - p)|.
PartialFixResult partial_fix(const ConstraintMatrix& a, const Eigen::VectorXd& p,
                             const Eigen::VectorXd& delta, int k,
                             const EngineConfig& config,
                             const Eigen::VectorXd& offset = Eigen::VectorXd());

}  // namespace derand
