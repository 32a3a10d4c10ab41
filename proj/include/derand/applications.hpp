#pragma once

#include <cstdint>
#include <vector>

#include "derand/concentration.hpp"
#include "derand/config.hpp"
#include "derand/constraint_matrix.hpp"
#include "derand/partial_fixing.hpp"

namespace derand {

// Ground set [0, n) with sorted, duplicate-free member lists.
class SetSystem {
 public:
  SetSystem() = default;
  // Sorts each set; throws std::invalid_argument on out-of-range or repeated
  // members.
  SetSystem(int64_t n, std::vector<std::vector<int32_t>> sets);

  int64_t ground_size() const { return n_; }
  int64_t size() const { return static_cast<int64_t>(sets_.size()); }
  const std::vector<int32_t>& set(int64_t i) const { return sets_[i]; }
  const std::vector<std::vector<int32_t>>& sets() const { return sets_; }
  ConstraintMatrix incidence() const { return ConstraintMatrix::from_sets(n_, sets_); }

 private:
  int64_t n_ = 0;
  std::vector<std::vector<int32_t>> sets_;
};

// Undirected simple graph; adjacency lists sorted.
class Graph {
 public:
  Graph() = default;
  // Symmetrizes; throws on self-loops, out-of-range ends and repeated edges.
  Graph(int64_t n, const std::vector<std::pair<int32_t, int32_t>>& edges);

  int64_t vertex_count() const { return static_cast<int64_t>(adj_.size()); }
  int64_t edge_count() const { return edges_; }
  const std::vector<int32_t>& neighbors(int64_t v) const { return adj_[v]; }
  int64_t degree(int64_t v) const { return static_cast<int64_t>(adj_[v].size()); }

 private:
  std::vector<std::vector<int32_t>> adj_;
  int64_t edges_ = 0;
};

struct SetSampleReport {
  double p = 0.0, epsilon = 0.0;
  std::vector<int64_t> hits;      // |S_i cap T|, counted from T
  std::vector<double> lower, upper;
  std::vector<uint8_t> inside;
  int64_t outside = 0;
  std::vector<int32_t> bad;       // rows flagged by the rounding
  // Sets smaller than ln(n) / (p eps^2), where the guarantee is not claimed.
  int64_t below_regime = 0;
  double regime_size = 0.0;
};

struct SetSample {
  std::vector<int32_t> members;  // increasing
  SetSampleReport report;
  ConcentrationResult engine;
};

// Independent rounding at rate p with every |S_i cap T| kept in
// [(1 - eps) p |S_i|, (1 + eps) p |S_i|] where the analysis applies.
SetSample sample_sets(const SetSystem& system, double p, double epsilon, int k,
                      const EngineConfig& config);

struct GraphSampleReport {
  int64_t threshold = 0;
  std::vector<int32_t> constrained;  // vertices used as sets
  SetSampleReport sets;              // indexed like `constrained`
};

struct GraphSample {
  std::vector<int32_t> members;
  GraphSampleReport report;
};

// min_degree < 0 picks ceil(1 / (p eps)), the smallest degree whose window
// is at least one element wide on each side.
GraphSample sample_graph_neighbors(const Graph& graph, double p, double epsilon, int k,
                                   const EngineConfig& config, int64_t min_degree = -1);

enum class Label : int8_t { kNo = 0, kYes = 1, kMaybe = 2 };

struct PartitionReport {
  std::vector<int64_t> yes, no, maybe;  // per set
  std::vector<uint8_t> meets_fifth;     // yes and no both >= |S_i| / 5
  int64_t failing = 0;
  std::vector<int32_t> bad;
};

struct Partition {
  std::vector<Label> labels;
  PartitionReport report;
  PartialFixResult engine;
};

// One walk from p = 1/2 with D_i = |S_i| / 6. Sets smaller than min_size are
// rejected; min_size < 0 means ceil(ln n).
Partition partition_yes_no(const SetSystem& system, int k, const EngineConfig& config,
                           int64_t min_size = -1);

}  // namespace derand
