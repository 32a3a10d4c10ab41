#include "derand/quadratic_objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace derand {

namespace {

void check_part(std::span<const int32_t> idx, std::span<const double> coef,
                int64_t num_vars, const char* part) {
  if (idx.size() != coef.size()) {
    throw std::invalid_argument(std::string("term part ") + part +
                                ": index/coefficient size mismatch");
  }
  for (size_t i = 0; i < idx.size(); ++i) {
    if (idx[i] < 0 || (num_vars >= 0 && idx[i] >= num_vars)) {
      throw std::invalid_argument(std::string("term part ") + part +
                                  ": variable index out of range");
    }
    if (!std::isfinite(coef[i])) {
      throw std::invalid_argument(std::string("term part ") + part +
                                  ": non-finite coefficient");
    }
  }
}

double dot(std::span<const int32_t> idx, std::span<const double> coef,
           std::span<const int8_t> x) {
  double s = 0.0;
  for (size_t i = 0; i < idx.size(); ++i) s += coef[i] * x[idx[i]];
  return s;
}

double evaluate_view(const TermView& t, std::span<const int8_t> x) {
  double b = dot(t.b_idx, t.beta, x);
  double quad = t.square ? t.kappa * b * b : dot(t.a_idx, t.alpha, x) * b;
  return quad + dot(t.c_idx, t.gamma, x) + t.delta;
}

}  // namespace

NiceQuadraticTerm::NiceQuadraticTerm(std::vector<int32_t> a_idx,
                                     std::vector<double> alpha,
                                     std::vector<int32_t> b_idx,
                                     std::vector<double> beta,
                                     std::vector<int32_t> c_idx,
                                     std::vector<double> gamma, double delta)
    : a_idx_(std::move(a_idx)),
      alpha_(std::move(alpha)),
      b_idx_(std::move(b_idx)),
      beta_(std::move(beta)),
      c_idx_(std::move(c_idx)),
      gamma_(std::move(gamma)),
      delta_(delta) {
  check_part(a_idx_, alpha_, -1, "A");
  check_part(b_idx_, beta_, -1, "B");
  check_part(c_idx_, gamma_, -1, "C");
  if (!std::isfinite(delta_)) throw std::invalid_argument("non-finite constant");
}

NiceQuadraticTerm NiceQuadraticTerm::constant(double delta) {
  return NiceQuadraticTerm({}, {}, {}, {}, {}, {}, delta);
}

double NiceQuadraticTerm::evaluate(std::span<const int8_t> x) const {
  TermView v{a_idx_, alpha_, b_idx_, beta_, c_idx_, gamma_, delta_};
  return evaluate_view(v, x);
}

void QuadraticObjective::add(const NiceQuadraticTerm& term) {
  add_term(term.a_idx(), term.alpha(), term.b_idx(), term.beta(), term.c_idx(),
           term.gamma(), term.delta());
}

void QuadraticObjective::add_term(std::span<const int32_t> a_idx,
                                  std::span<const double> alpha,
                                  std::span<const int32_t> b_idx,
                                  std::span<const double> beta,
                                  std::span<const int32_t> c_idx,
                                  std::span<const double> gamma, double delta) {
  check_part(a_idx, alpha, num_vars_, "A");
  check_part(b_idx, beta, num_vars_, "B");
  check_part(c_idx, gamma, num_vars_, "C");
  if (!std::isfinite(delta)) throw std::invalid_argument("non-finite constant");
  append_raw(a_idx, alpha, b_idx, beta, c_idx, gamma, delta);
}

void QuadraticObjective::append_raw(std::span<const int32_t> a_idx, std::span<const double> alpha,
                                    std::span<const int32_t> b_idx, std::span<const double> beta,
                                    std::span<const int32_t> c_idx, std::span<const double> gamma,
                                    double delta) {
  offsets_.push_back(static_cast<int64_t>(idx_.size()));
  idx_.insert(idx_.end(), a_idx.begin(), a_idx.end());
  coef_.insert(coef_.end(), alpha.begin(), alpha.end());
  offsets_.push_back(static_cast<int64_t>(idx_.size()));
  idx_.insert(idx_.end(), b_idx.begin(), b_idx.end());
  coef_.insert(coef_.end(), beta.begin(), beta.end());
  offsets_.push_back(static_cast<int64_t>(idx_.size()));
  idx_.insert(idx_.end(), c_idx.begin(), c_idx.end());
  coef_.insert(coef_.end(), gamma.begin(), gamma.end());
  offsets_.push_back(static_cast<int64_t>(idx_.size()));
  deltas_.push_back(delta);
  kappas_.push_back(std::numeric_limits<double>::quiet_NaN());
  complexity_ += a_idx.size() + b_idx.size() + c_idx.size() + 1;
}

void QuadraticObjective::add_square_term(std::span<const int32_t> idx,
                                         std::span<const double> beta, double kappa,
                                         std::span<const int32_t> c_idx,
                                         std::span<const double> gamma, double delta) {
  if (!std::isfinite(kappa)) throw std::invalid_argument("non-finite square weight");
  check_part(idx, beta, num_vars_, "B");
  // C often reuses the B indices; then only its coefficients need checking.
  if (c_idx.data() == idx.data() && c_idx.size() == idx.size()) {
    if (gamma.size() != c_idx.size()) {
      throw std::invalid_argument("term part C: index/coefficient size mismatch");
    }
    for (double g : gamma) {
      if (!std::isfinite(g)) throw std::invalid_argument("term part C: non-finite coefficient");
    }
  } else {
    check_part(c_idx, gamma, num_vars_, "C");
  }
  if (!std::isfinite(delta)) throw std::invalid_argument("non-finite constant");
  append_raw({}, {}, idx, beta, c_idx, gamma, delta);
  kappas_.back() = kappa;
  complexity_ += idx.size();
}

QuadraticObjective::SquareSlots QuadraticObjective::append_square_slots(size_t nb, size_t nc,
                                                                       double kappa,
                                                                       double delta) {
  const int64_t b = static_cast<int64_t>(idx_.size());
  offsets_.push_back(b);
  offsets_.push_back(b);
  offsets_.push_back(b + static_cast<int64_t>(nb));
  offsets_.push_back(b + static_cast<int64_t>(nb + nc));
  idx_.resize(idx_.size() + nb + nc);
  coef_.resize(coef_.size() + nb + nc);
  deltas_.push_back(delta);
  kappas_.push_back(kappa);
  complexity_ += 2 * nb + nc + 1;
  return {idx_.data() + b, coef_.data() + b, idx_.data() + b + nb, coef_.data() + b + nb};
}

void QuadraticObjective::reserve(size_t terms, size_t entries) {
  offsets_.reserve(4 * terms);
  deltas_.reserve(terms);
  kappas_.reserve(terms);
  idx_.reserve(entries);
  coef_.reserve(entries);
}

void QuadraticObjective::clear() {
  complexity_ = 0;
  idx_.clear();
  coef_.clear();
  offsets_.clear();
  deltas_.clear();
  kappas_.clear();
}

TermView QuadraticObjective::term(size_t t) const {
  const int64_t* o = &offsets_[4 * t];
  auto idx = [&](int64_t b, int64_t e) {
    return std::span<const int32_t>(idx_.data() + b, static_cast<size_t>(e - b));
  };
  auto coef = [&](int64_t b, int64_t e) {
    return std::span<const double>(coef_.data() + b, static_cast<size_t>(e - b));
  };
  return TermView{idx(o[0], o[1]), coef(o[0], o[1]), idx(o[1], o[2]),
                  coef(o[1], o[2]), idx(o[2], o[3]), coef(o[2], o[3]),
                  deltas_[t], !std::isnan(kappas_[t]), kappas_[t]};
}

double QuadraticObjective::evaluate(std::span<const int8_t> x) const {
  if (static_cast<int64_t>(x.size()) < num_vars_) {
    throw std::invalid_argument("assignment shorter than variable count");
  }
  double s = 0.0;
  for (size_t t = 0; t < num_terms(); ++t) s += evaluate_view(term(t), x);
  return s;
}

std::vector<uint8_t> QuadraticObjective::active_mask() const {
  std::vector<uint8_t> mask(static_cast<size_t>(num_vars_), 0);
  for (int32_t j : idx_) mask[j] = 1;
  return mask;
}

void QuadraticObjective::relabel(std::span<const int32_t> map, int64_t new_num_vars) {
  if (static_cast<int64_t>(map.size()) != num_vars_) {
    throw std::invalid_argument("relabel map length != num_vars");
  }
  for (int32_t& j : idx_) j = map[j];
  num_vars_ = new_num_vars;
}

}  // namespace derand
