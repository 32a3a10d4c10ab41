#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

namespace derand {

struct RowView {
  std::span<const int32_t> cols;
  std::span<const double> weights;
  size_t size() const { return cols.size(); }
};

// Sparse nonnegative m x n matrix; only strictly positive entries are stored,
// columns increasing within each row.
class ConstraintMatrix {
 public:
  using Storage = Eigen::SparseMatrix<double, Eigen::RowMajor, int32_t>;
  using Entry = Eigen::Triplet<double, int32_t>;

  ConstraintMatrix() : ConstraintMatrix(0, 0) {}
  ConstraintMatrix(int64_t m, int64_t n);

  // Throws std::invalid_argument on out-of-range indices, non-finite or
  // negative weights and duplicate (i, j). Zero weights are dropped.
  static ConstraintMatrix from_entries(int64_t m, int64_t n,
                                       std::vector<Entry> entries);
  // One list of column indices per row, all weights 1.
  static ConstraintMatrix from_sets(int64_t n,
                                    const std::vector<std::vector<int32_t>>& sets);

  int64_t rows() const { return storage_.rows(); }
  int64_t cols() const { return storage_.cols(); }
  int64_t nnz() const { return storage_.nonZeros(); }
  const Storage& storage() const { return storage_; }

  RowView row(int64_t i) const {
    const int32_t* outer = storage_.outerIndexPtr();
    auto b = outer[i], e = outer[i + 1];
    return {{storage_.innerIndexPtr() + b, static_cast<size_t>(e - b)},
            {storage_.valuePtr() + b, static_cast<size_t>(e - b)}};
  }

  Eigen::VectorXd row_sums() const;
  Eigen::VectorXd row_square_sums() const;
  Eigen::VectorXd row_max() const;
  // A v
  Eigen::VectorXd apply(const Eigen::VectorXd& v) const;
  // |A (p - q)| per row.
  Eigen::VectorXd deviations(const Eigen::VectorXd& p,
                             const Eigen::VectorXd& q) const;

  // Keeps rows listed in `row_ids` (in that order) and columns with
  // col_map[j] >= 0, renumbered to col_map[j]; new column count `new_n`.
  ConstraintMatrix submatrix(std::span<const int32_t> row_ids,
                             std::span<const int32_t> col_map,
                             int64_t new_n) const;

 private:
  Storage storage_;
};

}  // namespace derand
