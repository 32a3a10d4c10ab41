#include "derand/io.hpp"

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace derand {

ParseError::ParseError(const std::string& source, int64_t line, int64_t column,
                       const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ":" + std::to_string(column) +
                         ": " + what),
      line_(line),
      column_(column) {}

namespace {

struct Token {
  std::string text;
  int64_t column = 0;  // 1-based
};

std::vector<Token> split(const std::string& line) {
  std::vector<Token> out;
  size_t i = 0;
  while (i < line.size()) {
    while (i < line.size() && (line[i] == ' ' || line[i] == '\t' || line[i] == '\r')) ++i;
    if (i >= line.size() || line[i] == '#') break;
    size_t b = i;
    while (i < line.size() && line[i] != ' ' && line[i] != '\t' && line[i] != '\r' &&
           line[i] != '#') {
      ++i;
    }
    out.push_back({line.substr(b, i - b), static_cast<int64_t>(b) + 1});
  }
  return out;
}

class Reader {
 public:
  Reader(std::istream& in, std::string source) : in_(in), source_(std::move(source)) {}

  // Next line with at least one token; false at end of input.
  bool next(std::vector<Token>& toks) {
    std::string line;
    while (std::getline(in_, line)) {
      ++line_no_;
      toks = split(line);
      if (!toks.empty()) return true;
    }
    return false;
  }
  // Next raw line, tokens possibly empty.
  bool next_raw(std::vector<Token>& toks) {
    std::string line;
    if (!std::getline(in_, line)) return false;
    ++line_no_;
    toks = split(line);
    return true;
  }
  [[noreturn]] void fail(int64_t column, const std::string& what) const {
    throw ParseError(source_, line_no_, column, what);
  }
  int64_t line() const { return line_no_; }

  int64_t integer(const Token& t, int64_t lo, int64_t hi, const char* what) const {
    int64_t v = 0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v);
    if (ec != std::errc() || p != t.text.data() + t.text.size()) {
      fail(t.column, std::string("expected integer ") + what + ", got '" + t.text + "'");
    }
    if (v < lo || v > hi) {
      fail(t.column, std::string(what) + " " + t.text + " outside [" + std::to_string(lo) +
                         ", " + std::to_string(hi) + "]");
    }
    return v;
  }
  double decimal(const Token& t, const char* what) const {
    double v = 0.0;
    auto [p, ec] = std::from_chars(t.text.data(), t.text.data() + t.text.size(), v,
                                   std::chars_format::general);
    if (ec != std::errc() || p != t.text.data() + t.text.size() || !std::isfinite(v)) {
      fail(t.column, std::string("expected decimal ") + what + ", got '" + t.text + "'");
    }
    return v;
  }

 private:
  std::istream& in_;
  std::string source_;
  int64_t line_no_ = 0;
};

constexpr int64_t kMaxIndex = int64_t{1} << 31;

void expect_count(const Reader& r, const std::vector<Token>& toks, size_t count,
                  const char* shape) {
  if (toks.size() != count) {
    int64_t col = toks.size() > count ? toks[count].column : toks.back().column;
    r.fail(col, std::string("expected ") + shape);
  }
}

}  // namespace

Instance parse_instance(std::istream& in, const std::string& source) {
  Reader r(in, source);
  std::vector<Token> toks;
  if (!r.next(toks)) throw ParseError(source, r.line() + 1, 1, "missing header");
  Instance inst;
  const std::string& kind = toks[0].text;
  if (kind == "matrix") {
    expect_count(r, toks, 4, "header 'matrix m n nnz'");
    int64_t m = r.integer(toks[1], 0, kMaxIndex - 1, "m");
    int64_t n = r.integer(toks[2], 0, kMaxIndex - 1, "n");
    int64_t nnz = r.integer(toks[3], 0, INT64_MAX, "nnz");
    std::vector<ConstraintMatrix::Entry> entries;
    std::set<std::pair<int64_t, int64_t>> seen;
    for (int64_t e = 0; e < nnz; ++e) {
      if (!r.next(toks)) {
        throw ParseError(source, r.line() + 1, 1,
                         "expected " + std::to_string(nnz) + " entries, found " +
                             std::to_string(e));
      }
      expect_count(r, toks, 3, "entry 'i j w'");
      int64_t i = r.integer(toks[0], 0, m - 1, "row");
      int64_t j = r.integer(toks[1], 0, n - 1, "column");
      double w = r.decimal(toks[2], "weight");
      if (!(w > 0.0)) r.fail(toks[2].column, "weight must be positive");
      if (!seen.insert({i, j}).second) {
        r.fail(toks[0].column, "duplicate entry (" + std::to_string(i) + ", " +
                                   std::to_string(j) + ")");
      }
      entries.emplace_back(static_cast<int32_t>(i), static_cast<int32_t>(j), w);
    }
    inst.kind = InstanceKind::kMatrix;
    inst.matrix = ConstraintMatrix::from_entries(m, n, std::move(entries));
  } else if (kind == "sets") {
    expect_count(r, toks, 3, "header 'sets n m'");
    int64_t n = r.integer(toks[1], 0, kMaxIndex - 1, "n");
    int64_t m = r.integer(toks[2], 0, kMaxIndex - 1, "m");
    std::vector<std::vector<int32_t>> sets(static_cast<size_t>(m));
    for (int64_t i = 0; i < m; ++i) {
      if (!r.next_raw(toks)) {
        throw ParseError(source, r.line() + 1, 1,
                         "expected " + std::to_string(m) + " sets, found " + std::to_string(i));
      }
      std::set<int64_t> seen;
      for (const Token& t : toks) {
        int64_t j = r.integer(t, 0, n - 1, "element");
        if (!seen.insert(j).second) r.fail(t.column, "repeated element " + t.text);
        sets[i].push_back(static_cast<int32_t>(j));
      }
    }
    inst.kind = InstanceKind::kSets;
    inst.sets = SetSystem(n, std::move(sets));
    inst.matrix = inst.sets.incidence();
  } else if (kind == "graph") {
    expect_count(r, toks, 3, "header 'graph n edges'");
    int64_t n = r.integer(toks[1], 0, kMaxIndex - 1, "n");
    int64_t ecount = r.integer(toks[2], 0, INT64_MAX, "edges");
    std::set<std::pair<int64_t, int64_t>> seen;
    for (int64_t e = 0; e < ecount; ++e) {
      if (!r.next(toks)) {
        throw ParseError(source, r.line() + 1, 1,
                         "expected " + std::to_string(ecount) + " edges, found " +
                             std::to_string(e));
      }
      expect_count(r, toks, 2, "edge 'u v'");
      int64_t u = r.integer(toks[0], 0, n - 1, "vertex");
      int64_t v = r.integer(toks[1], 0, n - 1, "vertex");
      if (u == v) r.fail(toks[1].column, "self-loop at " + std::to_string(u));
      if (!seen.insert({std::min(u, v), std::max(u, v)}).second) {
        r.fail(toks[0].column, "repeated edge");
      }
      inst.edges.emplace_back(static_cast<int32_t>(u), static_cast<int32_t>(v));
    }
    inst.kind = InstanceKind::kGraph;
    inst.graph = Graph(n, inst.edges);
    std::vector<std::vector<int32_t>> nb(static_cast<size_t>(n));
    for (int64_t v = 0; v < n; ++v) nb[v] = inst.graph.neighbors(v);
    inst.sets = SetSystem(n, std::move(nb));
    inst.matrix = inst.sets.incidence();
  } else {
    r.fail(toks[0].column, "unknown instance kind '" + kind + "'");
  }
  if (r.next(toks)) r.fail(toks[0].column, "trailing data after the declared count");
  return inst;
}

Instance read_instance(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_instance(in, path);
}

std::string format_double(double v) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, v);
  if (ec != std::errc()) throw std::runtime_error("cannot format number");
  return std::string(buf, p);
}

void write_instance(std::ostream& out, const Instance& inst) {
  switch (inst.kind) {
    case InstanceKind::kMatrix: {
      const ConstraintMatrix& a = inst.matrix;
      out << "matrix " << a.rows() << ' ' << a.cols() << ' ' << a.nnz() << '\n';
      for (int64_t i = 0; i < a.rows(); ++i) {
        RowView r = a.row(i);
        for (size_t t = 0; t < r.size(); ++t) {
          out << i << ' ' << r.cols[t] << ' ' << format_double(r.weights[t]) << '\n';
        }
      }
      break;
    }
    case InstanceKind::kSets: {
      out << "sets " << inst.sets.ground_size() << ' ' << inst.sets.size() << '\n';
      for (const auto& s : inst.sets.sets()) {
        for (size_t t = 0; t < s.size(); ++t) out << (t ? " " : "") << s[t];
        out << '\n';
      }
      break;
    }
    case InstanceKind::kGraph: {
      out << "graph " << inst.graph.vertex_count() << ' ' << inst.edges.size() << '\n';
      for (auto [u, v] : inst.edges) out << u << ' ' << v << '\n';
      break;
    }
  }
}

Eigen::VectorXd parse_vector(std::istream& in, const std::string& source) {
  Reader r(in, source);
  std::vector<Token> toks;
  std::vector<double> vals;
  while (r.next(toks)) {
    expect_count(r, toks, 1, "one value per line");
    vals.push_back(r.decimal(toks[0], "value"));
  }
  return Eigen::Map<Eigen::VectorXd>(vals.data(), static_cast<Eigen::Index>(vals.size()));
}

Eigen::VectorXd read_vector(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path);
  return parse_vector(in, path);
}

void write_vector(std::ostream& out, const Eigen::VectorXd& v) {
  for (Eigen::Index j = 0; j < v.size(); ++j) out << format_double(v[j]) << '\n';
}

namespace {

using Json = nlohmann::json;

// nlohmann prints doubles through its own shortest round-trip routine; keep
// integers that happen to be stored as doubles as doubles.
Json num(double v) { return Json(v); }

}  // namespace

std::string report_json(const RunReport& r) {
  Json j;
  j["command"] = r.command;
  j["mode"] = r.mode;
  j["k"] = r.k;
  j["k_effective"] = r.k_effective;
  j["profile"] = r.profile;
  j["n"] = r.n;
  j["m"] = static_cast<int64_t>(r.rows.size());
  Json rows = Json::array();
  for (const RowReport& row : r.rows) {
    Json o;
    o["deviation"] = num(row.deviation);
    o["delta"] = num(row.delta);
    o["prob_bad"] = row.prob_bad ? num(*row.prob_bad) : Json(nullptr);
    o["bad"] = row.bad;
    rows.push_back(std::move(o));
  }
  j["rows"] = std::move(rows);
  j["bad_count"] = r.bad_count;
  j["sum_prob_bad"] = num(r.sum_prob_bad);
  j["work"] = r.work;
  j["steps"] = r.steps;
  if (r.wall_seconds) j["wall_seconds"] = num(*r.wall_seconds);
  j["extra"] = Json::parse(r.extra_json);
  return j.dump(1) + "\n";
}

void write_report(const RunReport& r, const std::string& path) {
  std::string s = report_json(r);
  if (path == "-") {
    std::fwrite(s.data(), 1, s.size(), stdout);
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << s;
  if (!out) throw std::runtime_error("write failed: " + path);
}

RunReport parse_report(const std::string& text) {
  Json j = Json::parse(text);
  RunReport r;
  r.command = j.at("command").get<std::string>();
  r.mode = j.at("mode").get<std::string>();
  r.k = j.at("k").get<int>();
  r.k_effective = j.at("k_effective").get<int>();
  r.profile = j.at("profile").get<std::string>();
  r.n = j.at("n").get<int64_t>();
  for (const Json& o : j.at("rows")) {
    RowReport row;
    row.deviation = o.at("deviation").get<double>();
    row.delta = o.at("delta").get<double>();
    if (!o.at("prob_bad").is_null()) row.prob_bad = o.at("prob_bad").get<double>();
    row.bad = o.at("bad").get<bool>();
    r.rows.push_back(row);
  }
  r.bad_count = j.at("bad_count").get<int64_t>();
  r.sum_prob_bad = j.at("sum_prob_bad").get<double>();
  r.work = j.at("work").get<uint64_t>();
  r.steps = j.at("steps").get<int64_t>();
  if (j.contains("wall_seconds")) r.wall_seconds = j.at("wall_seconds").get<double>();
  r.extra_json = j.at("extra").dump();
  return r;
}

}  // namespace derand
