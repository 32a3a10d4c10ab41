#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "derand/applications.hpp"
#include "derand/constraint_matrix.hpp"

namespace derand {

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& source, int64_t line, int64_t column, const std::string& what);
  int64_t line() const { return line_; }
  int64_t column() const { return column_; }

 private:
  int64_t line_, column_;
};

enum class InstanceKind { kMatrix, kSets, kGraph };

struct Instance {
  InstanceKind kind = InstanceKind::kMatrix;
  ConstraintMatrix matrix;  // always filled; sets and graphs become 0/1 rows
  SetSystem sets;           // kSets, and neighborhoods for kGraph
  Graph graph;              // kGraph
  std::vector<std::pair<int32_t, int32_t>> edges;  // kGraph, file order
};

// Formats:
//   matrix m n nnz   then nnz lines "i j w"   (w > 0, decimal)
//   sets n m         then m lines of member indices (a blank line is an empty set)
//   graph n edges    then edge lines "u v"
// Indices are zero-based. Blank lines and '#' comments are skipped except
// inside a sets body.
Instance parse_instance(std::istream& in, const std::string& source = "<input>");
Instance read_instance(const std::string& path);
void write_instance(std::ostream& out, const Instance& inst);

// Shortest decimal that reads back to the same double.
std::string format_double(double v);

// One value per line.
Eigen::VectorXd parse_vector(std::istream& in, const std::string& source = "<input>");
Eigen::VectorXd read_vector(const std::string& path);
void write_vector(std::ostream& out, const Eigen::VectorXd& v);

struct RowReport {
  double deviation = 0.0;
  double delta = 0.0;
  std::optional<double> prob_bad;
  bool bad = false;
};

struct RunReport {
  std::string command;
  std::string mode;
  int k = 0;
  int k_effective = 0;
  std::string profile;
  int64_t n = 0;
  std::vector<RowReport> rows;
  int64_t bad_count = 0;
  double sum_prob_bad = 0.0;
  uint64_t work = 0;       // sum of step objective complexities
  int64_t steps = 0;
  std::optional<double> wall_seconds;
  // Command specific fields, serialized under "extra" as given.
  std::string extra_json = "{}";
};

// Canonical JSON: sorted keys, shortest round-trip numbers, trailing newline.
std::string report_json(const RunReport& r);
void write_report(const RunReport& r, const std::string& path);
RunReport parse_report(const std::string& json);

}  // namespace derand
