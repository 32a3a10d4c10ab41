#include "derand/applications.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace derand {

SetSystem::SetSystem(int64_t n, std::vector<std::vector<int32_t>> sets)
    : n_(n), sets_(std::move(sets)) {
  if (n < 0) throw std::invalid_argument("negative ground size");
  for (size_t i = 0; i < sets_.size(); ++i) {
    auto& s = sets_[i];
    std::sort(s.begin(), s.end());
    for (size_t t = 0; t < s.size(); ++t) {
      if (s[t] < 0 || s[t] >= n) {
        throw std::invalid_argument("set " + std::to_string(i) + ": element " +
                                    std::to_string(s[t]) + " outside [0, n)");
      }
      if (t > 0 && s[t] == s[t - 1]) {
        throw std::invalid_argument("set " + std::to_string(i) + ": repeated element " +
                                    std::to_string(s[t]));
      }
    }
  }
}

Graph::Graph(int64_t n, const std::vector<std::pair<int32_t, int32_t>>& edges) {
  if (n < 0) throw std::invalid_argument("negative vertex count");
  adj_.resize(static_cast<size_t>(n));
  for (auto [u, v] : edges) {
    if (u < 0 || v < 0 || u >= n || v >= n) {
      throw std::invalid_argument("edge (" + std::to_string(u) + ", " + std::to_string(v) +
                                  ") outside [0, n)");
    }
    if (u == v) throw std::invalid_argument("self-loop at " + std::to_string(u));
    adj_[u].push_back(v);
    adj_[v].push_back(u);
  }
  for (size_t v = 0; v < adj_.size(); ++v) {
    auto& a = adj_[v];
    std::sort(a.begin(), a.end());
    if (std::adjacent_find(a.begin(), a.end()) != a.end()) {
      throw std::invalid_argument("repeated edge at vertex " + std::to_string(v));
    }
  }
  edges_ = static_cast<int64_t>(edges.size());
}

namespace {

SetSampleReport check_window(const SetSystem& system, const std::vector<int32_t>& members,
                             double p, double epsilon) {
  SetSampleReport rep;
  rep.p = p;
  rep.epsilon = epsilon;
  std::vector<uint8_t> in(static_cast<size_t>(system.ground_size()), 0);
  for (int32_t j : members) in[j] = 1;
  const double n = static_cast<double>(system.ground_size());
  rep.regime_size = n > 1 ? std::log(n) / (p * epsilon * epsilon) : 0.0;
  for (int64_t i = 0; i < system.size(); ++i) {
    const auto& s = system.set(i);
    int64_t h = 0;
    for (int32_t j : s) h += in[j];
    double mid = p * static_cast<double>(s.size());
    double lo = (1.0 - epsilon) * mid, hi = (1.0 + epsilon) * mid;
    bool ok = static_cast<double>(h) >= lo && static_cast<double>(h) <= hi;
    rep.hits.push_back(h);
    rep.lower.push_back(lo);
    rep.upper.push_back(hi);
    rep.inside.push_back(ok);
    rep.outside += !ok;
    rep.below_regime += static_cast<double>(s.size()) < rep.regime_size;
  }
  return rep;
}

}  // namespace

SetSample sample_sets(const SetSystem& system, double p, double epsilon, int k,
                      const EngineConfig& config) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in (0, 1]");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon must lie in (0, 1]");
  }
  for (int64_t i = 0; i < system.size(); ++i) {
    if (system.set(i).empty()) {
      throw std::invalid_argument("set " + std::to_string(i) + " is empty");
    }
  }
  const int64_t n = system.ground_size();
  ConstraintMatrix a = system.incidence();
  Eigen::VectorXd pv = Eigen::VectorXd::Constant(n, p);
  Eigen::VectorXd delta(system.size());
  for (int64_t i = 0; i < system.size(); ++i) {
    delta[i] = epsilon * p * static_cast<double>(system.set(i).size());
  }

  SetSample out;
  out.engine = fix_chernoff(a, pv, delta, k, config);
  for (int64_t j = 0; j < n; ++j) {
    if (out.engine.q[j] == 1.0) out.members.push_back(static_cast<int32_t>(j));
  }
  out.report = check_window(system, out.members, p, epsilon);
  out.report.bad = out.engine.bad;
  return out;
}

GraphSample sample_graph_neighbors(const Graph& graph, double p, double epsilon, int k,
                                   const EngineConfig& config, int64_t min_degree) {
  if (!(p > 0.0 && p <= 1.0)) throw std::invalid_argument("p must lie in (0, 1]");
  if (!(epsilon > 0.0 && epsilon <= 1.0)) {
    throw std::invalid_argument("epsilon must lie in (0, 1]");
  }
  GraphSample out;
  int64_t thr = min_degree >= 0 ? min_degree
                                : static_cast<int64_t>(std::ceil(1.0 / (p * epsilon)));
  out.report.threshold = std::max<int64_t>(thr, 1);
  std::vector<std::vector<int32_t>> sets;
  for (int64_t v = 0; v < graph.vertex_count(); ++v) {
    if (graph.degree(v) >= out.report.threshold) {
      out.report.constrained.push_back(static_cast<int32_t>(v));
      sets.push_back(graph.neighbors(v));
    }
  }
  SetSample s = sample_sets(SetSystem(graph.vertex_count(), std::move(sets)), p, epsilon, k,
                            config);
  out.members = std::move(s.members);
  out.report.sets = std::move(s.report);
  return out;
}

Partition partition_yes_no(const SetSystem& system, int k, const EngineConfig& config,
                           int64_t min_size) {
  const int64_t n = system.ground_size();
  const int64_t floor_size =
      min_size >= 0 ? min_size
                    : static_cast<int64_t>(std::ceil(std::log(std::max<double>(2.0, n))));
  for (int64_t i = 0; i < system.size(); ++i) {
    int64_t s = static_cast<int64_t>(system.set(i).size());
    if (s < floor_size || s == 0) {
      throw std::invalid_argument("set " + std::to_string(i) + " has " + std::to_string(s) +
                                  " elements, below the minimum " +
                                  std::to_string(floor_size) +
                                  " where the three-way split is claimed");
    }
  }
  ConstraintMatrix a = system.incidence();
  Eigen::VectorXd p = Eigen::VectorXd::Constant(n, 0.5);
  Eigen::VectorXd delta(system.size());
  for (int64_t i = 0; i < system.size(); ++i) {
    delta[i] = static_cast<double>(system.set(i).size()) / 6.0;
  }

  Partition out;
  out.engine = partial_fix(a, p, delta, k, config);
  out.labels.resize(static_cast<size_t>(n));
  for (int64_t j = 0; j < n; ++j) {
    double q = out.engine.q[j];
    out.labels[j] = q == 1.0 ? Label::kYes : q == 0.0 ? Label::kNo : Label::kMaybe;
  }
  PartitionReport& rep = out.report;
  for (int64_t i = 0; i < system.size(); ++i) {
    int64_t y = 0, no = 0, mb = 0;
    for (int32_t j : system.set(i)) {
      Label l = out.labels[j];
      y += l == Label::kYes;
      no += l == Label::kNo;
      mb += l == Label::kMaybe;
    }
    rep.yes.push_back(y);
    rep.no.push_back(no);
    rep.maybe.push_back(mb);
    double fifth = static_cast<double>(system.set(i).size()) / 5.0;
    bool ok = static_cast<double>(y) >= fifth && static_cast<double>(no) >= fifth;
    rep.meets_fifth.push_back(ok);
    rep.failing += !ok;
  }
  rep.bad = out.engine.bad;
  return out;
}

}  // namespace derand
