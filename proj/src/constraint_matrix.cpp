#include "derand/constraint_matrix.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace derand {

ConstraintMatrix::ConstraintMatrix(int64_t m, int64_t n) : storage_(m, n) {
  if (m < 0 || n < 0) throw std::invalid_argument("negative matrix shape");
  storage_.makeCompressed();
}

ConstraintMatrix ConstraintMatrix::from_entries(int64_t m, int64_t n,
                                                std::vector<Entry> entries) {
  ConstraintMatrix a(m, n);
  std::erase_if(entries, [](const Entry& e) { return e.value() == 0.0; });
  for (const Entry& e : entries) {
    if (e.row() < 0 || e.row() >= m || e.col() < 0 || e.col() >= n) {
      throw std::invalid_argument("entry (" + std::to_string(e.row()) + ", " +
                                  std::to_string(e.col()) + ") out of range");
    }
    if (!std::isfinite(e.value()) || e.value() < 0.0) {
      throw std::invalid_argument("entry (" + std::to_string(e.row()) + ", " +
                                  std::to_string(e.col()) +
                                  ") has a negative or non-finite weight");
    }
  }
  std::sort(entries.begin(), entries.end(), [](const Entry& x, const Entry& y) {
    return std::pair(x.row(), x.col()) < std::pair(y.row(), y.col());
  });
  for (size_t t = 1; t < entries.size(); ++t) {
    if (entries[t].row() == entries[t - 1].row() &&
        entries[t].col() == entries[t - 1].col()) {
      throw std::invalid_argument("duplicate entry (" +
                                  std::to_string(entries[t].row()) + ", " +
                                  std::to_string(entries[t].col()) + ")");
    }
  }
  a.storage_.setFromTriplets(entries.begin(), entries.end());
  a.storage_.makeCompressed();
  return a;
}

ConstraintMatrix ConstraintMatrix::from_sets(
    int64_t n, const std::vector<std::vector<int32_t>>& sets) {
  std::vector<Entry> entries;
  for (size_t i = 0; i < sets.size(); ++i) {
    for (int32_t j : sets[i]) entries.emplace_back(static_cast<int32_t>(i), j, 1.0);
  }
  return from_entries(static_cast<int64_t>(sets.size()), n, std::move(entries));
}

Eigen::VectorXd ConstraintMatrix::row_sums() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(rows());
  for (int64_t i = 0; i < rows(); ++i) {
    for (double w : row(i).weights) s[i] += w;
  }
  return s;
}

Eigen::VectorXd ConstraintMatrix::row_square_sums() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(rows());
  for (int64_t i = 0; i < rows(); ++i) {
    for (double w : row(i).weights) s[i] += w * w;
  }
  return s;
}

Eigen::VectorXd ConstraintMatrix::row_max() const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(rows());
  for (int64_t i = 0; i < rows(); ++i) {
    for (double w : row(i).weights) s[i] = std::max(s[i], w);
  }
  return s;
}

Eigen::VectorXd ConstraintMatrix::apply(const Eigen::VectorXd& v) const {
  if (v.size() != cols()) throw std::invalid_argument("vector length != n");
  Eigen::VectorXd out = Eigen::VectorXd::Zero(rows());
  for (int64_t i = 0; i < rows(); ++i) {
    RowView r = row(i);
    double s = 0.0;
    for (size_t t = 0; t < r.size(); ++t) s += r.weights[t] * v[r.cols[t]];
    out[i] = s;
  }
  return out;
}

Eigen::VectorXd ConstraintMatrix::deviations(const Eigen::VectorXd& p,
                                             const Eigen::VectorXd& q) const {
  if (p.size() != cols() || q.size() != cols()) {
    throw std::invalid_argument("vector length != n");
  }
  Eigen::VectorXd out(rows());
  for (int64_t i = 0; i < rows(); ++i) {
    RowView r = row(i);
    double s = 0.0;
    for (size_t t = 0; t < r.size(); ++t) {
      s += r.weights[t] * (p[r.cols[t]] - q[r.cols[t]]);
    }
    out[i] = std::abs(s);
  }
  return out;
}

ConstraintMatrix ConstraintMatrix::submatrix(std::span<const int32_t> row_ids,
                                             std::span<const int32_t> col_map,
                                             int64_t new_n) const {
  if (static_cast<int64_t>(col_map.size()) != cols()) {
    throw std::invalid_argument("column map length != n");
  }
  std::vector<Entry> entries;
  for (size_t r = 0; r < row_ids.size(); ++r) {
    RowView v = row(row_ids[r]);
    for (size_t t = 0; t < v.size(); ++t) {
      int32_t c = col_map[v.cols[t]];
      if (c >= 0) entries.emplace_back(static_cast<int32_t>(r), c, v.weights[t]);
    }
  }
  ConstraintMatrix a(static_cast<int64_t>(row_ids.size()), new_n);
  a.storage_.setFromTriplets(entries.begin(), entries.end());
  a.storage_.makeCompressed();
  return a;
}

}  // namespace derand
