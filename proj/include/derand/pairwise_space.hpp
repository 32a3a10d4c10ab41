#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "derand/quadratic_objective.hpp"

namespace derand {

// Pairwise independent +-1 variables from an L-bit seed z: variable j has
// code 2j+1 (binary of j with a 1 appended) and x_j = -1 + 2 * (code . z mod 2).
//
// Seeds are stored as L-bit integers. Seed position 0 is the most significant
// bit, so fixing a prefix of length r leaves the low L-r code bits free.
class PairwiseSpace {
 public:
  explicit PairwiseSpace(int64_t n);

  int64_t n() const { return n_; }
  int L() const { return L_; }
  uint64_t seed_count() const { return uint64_t{1} << L_; }
  uint64_t code(int64_t j) const { return (static_cast<uint64_t>(j) << 1) | 1; }

  int8_t value(int64_t j, uint64_t seed) const;
  std::vector<int8_t> evaluate(uint64_t seed) const;

 private:
  int64_t n_;
  int L_;
};

PairwiseSpace build_space(int64_t n);

// seed_bits[0] is seed position 0. Throws on length != L.
std::vector<int8_t> evaluate_assignment(const PairwiseSpace& space,
                                        std::span<const uint8_t> seed_bits);

struct SeedPrefix {
  std::vector<uint8_t> bits;
  int r() const { return static_cast<int>(bits.size()); }
};

// Counts coefficient visits; used for the work-bound checks.
struct WorkCounter {
  uint64_t ops = 0;
};

struct SearchOptions {
  int threads = 1;
  WorkCounter* counter = nullptr;
};

double conditional_expectation(const PairwiseSpace& space,
                               const QuadraticObjective& objective,
                               const SeedPrefix& prefix,
                               const SearchOptions& options = {});

struct DerandomizeResult {
  std::vector<int8_t> x;
  uint64_t seed = 0;
  double value = 0.0;        // f(x) as tracked by the search
  double expectation = 0.0;  // E[f] over the whole space
  // Conditional expectation after each fixed prefix, r = 0..L.
  std::vector<double> prefix_values;
};

DerandomizeResult derandomize(const PairwiseSpace& space,
                              const QuadraticObjective& objective,
                              const SearchOptions& options = {});

// Average of f over all 2^L seeds.
double enumerate_expectation(const PairwiseSpace& space,
                             const QuadraticObjective& objective);

}  // namespace derand
