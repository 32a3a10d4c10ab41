#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace derand {

// (sum_A alpha_i x_i) * (sum_B beta_j x_j) + sum_C gamma_i x_i + delta over
// +-1 variables.
class NiceQuadraticTerm {
 public:
  NiceQuadraticTerm(std::vector<int32_t> a_idx, std::vector<double> alpha,
                    std::vector<int32_t> b_idx, std::vector<double> beta,
                    std::vector<int32_t> c_idx, std::vector<double> gamma,
                    double delta);
  static NiceQuadraticTerm constant(double delta);

  const std::vector<int32_t>& a_idx() const { return a_idx_; }
  const std::vector<double>& alpha() const { return alpha_; }
  const std::vector<int32_t>& b_idx() const { return b_idx_; }
  const std::vector<double>& beta() const { return beta_; }
  const std::vector<int32_t>& c_idx() const { return c_idx_; }
  const std::vector<double>& gamma() const { return gamma_; }
  double delta() const { return delta_; }

  uint64_t complexity() const {
    return a_idx_.size() + b_idx_.size() + c_idx_.size() + 1;
  }
  double evaluate(std::span<const int8_t> x) const;

 private:
  std::vector<int32_t> a_idx_;
  std::vector<double> alpha_;
  std::vector<int32_t> b_idx_;
  std::vector<double> beta_;
  std::vector<int32_t> c_idx_;
  std::vector<double> gamma_;
  double delta_;
};

// Read-only view of one stored term. Square terms leave A empty and stand
// for kappa (sum_B beta_j x_j)^2 + sum_C gamma_i x_i + delta.
struct TermView {
  std::span<const int32_t> a_idx;
  std::span<const double> alpha;
  std::span<const int32_t> b_idx;
  std::span<const double> beta;
  std::span<const int32_t> c_idx;
  std::span<const double> gamma;
  double delta;
  bool square = false;
  double kappa = 0.0;

  // A square term counts as its bilinear form with A = B.
  uint64_t complexity() const {
    return (square ? 2 * b_idx.size() : a_idx.size() + b_idx.size()) + c_idx.size() + 1;
  }
};

// Sum of nice quadratic terms over variables [0, num_vars). Terms are stored
// back to back in flat index/coefficient arrays.
class QuadraticObjective {
 public:
  explicit QuadraticObjective(int64_t num_vars = 0) : num_vars_(num_vars) {}

  int64_t num_vars() const { return num_vars_; }
  size_t num_terms() const { return deltas_.size(); }
  uint64_t total_complexity() const { return complexity_; }

  void add(const NiceQuadraticTerm& term);
  void add_term(std::span<const int32_t> a_idx, std::span<const double> alpha,
                std::span<const int32_t> b_idx, std::span<const double> beta,
                std::span<const int32_t> c_idx, std::span<const double> gamma,
                double delta);
  void add_square_term(std::span<const int32_t> idx, std::span<const double> beta,
                       double kappa, std::span<const int32_t> c_idx,
                       std::span<const double> gamma, double delta);
  void add_constant(double delta) { add_term({}, {}, {}, {}, {}, {}, delta); }

  // Unchecked append for builders that produce valid indices and finite
  // coefficients themselves: a square term with nb B entries and nc C
  // entries left for the caller to fill. The pointers stay valid until the
  // next append.
  struct SquareSlots {
    int32_t* b_idx;
    double* beta;
    int32_t* c_idx;
    double* gamma;
  };
  SquareSlots append_square_slots(size_t nb, size_t nc, double kappa, double delta);
  void reserve(size_t terms, size_t entries);
  void clear();
  // clear() keeping capacity, with a new variable count.
  void reset(int64_t num_vars) {
    clear();
    num_vars_ = num_vars;
  }

  TermView term(size_t t) const;
  double evaluate(std::span<const int8_t> x) const;
  std::vector<uint8_t> active_mask() const;
  // Renames variable v to map[v] in every term; map must be injective into
  // [0, new_num_vars).
  void relabel(std::span<const int32_t> map, int64_t new_num_vars);

 private:
  void append_raw(std::span<const int32_t> a_idx, std::span<const double> alpha,
                  std::span<const int32_t> b_idx, std::span<const double> beta,
                  std::span<const int32_t> c_idx, std::span<const double> gamma, double delta);

  int64_t num_vars_;
  uint64_t complexity_ = 0;
  std::vector<int32_t> idx_;
  std::vector<double> coef_;
  // Term t owns [offsets_[4t], offsets_[4t+3]); the inner offsets split it
  // into A, B and C.
  std::vector<int64_t> offsets_;
  std::vector<double> deltas_;
  std::vector<double> kappas_;  // NaN for bilinear terms
};

}  // namespace derand
