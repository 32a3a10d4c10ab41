#include "derand/cli.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "derand/applications.hpp"
#include "derand/baselines.hpp"
#include "derand/concentration.hpp"
#include "derand/integral_rounding.hpp"
#include "derand/io.hpp"
#include "derand/partial_fixing.hpp"

namespace derand {

namespace {

using Json = nlohmann::json;

struct Common {
  std::string input;
  std::string output;   // q file; report goes to <output>.json
  std::string report;   // explicit report path, "-" for stdout
  std::string profile = "practical";
  int k = 64;
  int threads = 1;
  std::string trace;
  bool strict = false;
  bool timing = false;
};

void add_common(CLI::App* sub, Common& c, bool with_k = true) {
  sub->add_option("-i,--input", c.input, "instance file")->required();
  sub->add_option("-o,--output", c.output, "q file (report written next to it as .json)");
  sub->add_option("--report", c.report, "report path, '-' for stdout");
  sub->add_option("--profile", c.profile, "constant profile")
      ->check(CLI::IsMember({"paper", "practical"}));
  if (with_k) sub->add_option("-k,--k", c.k, "walk granularity (even)");
  sub->add_option("--threads", c.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_option("--trace", c.trace, "line-delimited per-step records");
  sub->add_flag("--strict", c.strict, "exit 2 when any row is bad");
  sub->add_flag("--timing", c.timing, "include wall time in the report");
}

struct Probabilities {
  std::optional<double> p;
  std::string p_file;
  std::string delta_file;
  std::optional<double> delta_scale;
};

void add_probabilities(CLI::App* sub, Probabilities& pr, bool with_delta = true) {
  auto* po = sub->add_option("--p", pr.p, "same probability for every column");
  sub->add_option("--p-file", pr.p_file, "one probability per line")->excludes(po);
  if (with_delta) {
    auto* df = sub->add_option("--delta-file", pr.delta_file, "one budget per row");
    sub->add_option("--delta-scale", pr.delta_scale, "budgets eps * (A p)_i")->excludes(df);
  }
}

Eigen::VectorXd load_p(const Probabilities& pr, int64_t n) {
  if (pr.p) return Eigen::VectorXd::Constant(n, *pr.p);
  if (pr.p_file.empty()) throw std::invalid_argument("one of --p or --p-file is required");
  Eigen::VectorXd p = read_vector(pr.p_file);
  if (p.size() != n) {
    throw std::invalid_argument("--p-file has " + std::to_string(p.size()) +
                                " values, instance has " + std::to_string(n) + " columns");
  }
  return p;
}

Eigen::VectorXd load_delta(const Probabilities& pr, const ConstraintMatrix& a,
                           const Eigen::VectorXd& p) {
  if (pr.delta_scale) return *pr.delta_scale * a.apply(p);
  if (pr.delta_file.empty()) {
    throw std::invalid_argument("one of --delta-file or --delta-scale is required");
  }
  Eigen::VectorXd d = read_vector(pr.delta_file);
  if (d.size() != a.rows()) {
    throw std::invalid_argument("--delta-file has " + std::to_string(d.size()) +
                                " values, instance has " + std::to_string(a.rows()) + " rows");
  }
  return d;
}

class TraceSink {
 public:
  explicit TraceSink(const std::string& path) {
    if (path.empty()) return;
    file_ = std::make_unique<std::ofstream>(path);
    if (!*file_) throw std::runtime_error("cannot write " + path);
  }
  void attach(EngineConfig& cfg) {
    if (!file_) return;
    std::ofstream* f = file_.get();
    int64_t* run = &run_;
    cfg.trace = [f, run](const StepRecord& r) {
      if (r.t == 1) ++*run;
      Json j;
      j["run"] = *run;
      j["t"] = r.t;
      j["log_pot"] = r.log_pot;
      j["moving"] = r.moving;
      j["complexity"] = r.complexity;
      *f << j.dump() << '\n';
    };
  }

 private:
  std::unique_ptr<std::ofstream> file_;
  int64_t run_ = 0;
};

EngineConfig make_config(const Common& c) {
  EngineConfig cfg = EngineConfig::for_profile(parse_profile(c.profile));
  cfg.threads = c.threads;
  return cfg;
}

void fill_rows(RunReport& r, const Eigen::VectorXd& dev, const Eigen::VectorXd& delta,
               const std::vector<uint8_t>& is_bad, const std::vector<double>* prob) {
  r.rows.clear();
  r.bad_count = 0;
  for (Eigen::Index i = 0; i < dev.size(); ++i) {
    RowReport row;
    row.deviation = dev[i];
    row.delta = delta[i];
    if (prob) row.prob_bad = (*prob)[i];
    row.bad = is_bad[i] != 0;
    r.bad_count += row.bad;
    r.rows.push_back(row);
  }
}

int finish(const Common& c, RunReport& rep, const Eigen::VectorXd& q, double secs,
           std::ostream& out) {
  if (c.timing) rep.wall_seconds = secs;
  if (!c.output.empty()) {
    std::ofstream f(c.output);
    if (!f) throw std::runtime_error("cannot write " + c.output);
    write_vector(f, q);
  }
  std::string rp = !c.report.empty() ? c.report : !c.output.empty() ? c.output + ".json" : "-";
  if (rp == "-") {
    out << report_json(rep);
  } else {
    write_report(rep, rp);
  }
  return c.strict && rep.bad_count > 0 ? 2 : 0;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

Eigen::VectorXd indicator(int64_t n, const std::vector<int32_t>& members) {
  Eigen::VectorXd q = Eigen::VectorXd::Zero(n);
  for (int32_t j : members) q[j] = 1.0;
  return q;
}

void window_rows(RunReport& rep, const SetSystem& sys, const SetSampleReport& w) {
  rep.rows.clear();
  rep.bad_count = 0;
  for (int64_t i = 0; i < sys.size(); ++i) {
    RowReport row;
    double mid = w.p * static_cast<double>(sys.set(i).size());
    row.deviation = std::abs(static_cast<double>(w.hits[i]) - mid);
    row.delta = w.epsilon * mid;
    row.bad = !w.inside[i];
    rep.bad_count += row.bad;
    rep.rows.push_back(row);
  }
}

Json window_extra(const SetSampleReport& w, const std::vector<int32_t>& engine_bad) {
  Json e;
  e["p"] = w.p;
  e["epsilon"] = w.epsilon;
  e["outside"] = w.outside;
  e["below_regime"] = w.below_regime;
  e["regime_size"] = w.regime_size;
  e["engine_bad"] = engine_bad;
  return e;
}

}  // namespace

int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deterministic rounding and sampling under linear constraints", "derand"};
  app.require_subcommand(1);

  Common fix_c;
  Probabilities fix_p;
  std::string mode = "chernoff";
  auto* fix = app.add_subcommand("fix", "round fractional p under row budgets");
  add_common(fix, fix_c);
  add_probabilities(fix, fix_p);
  fix->add_option("--mode", mode, "rounding mode")
      ->check(CLI::IsMember({"partial", "integral", "hoeffding", "chernoff", "bernstein"}));

  Common ss_c;
  double ss_p = 0.0, ss_eps = 0.0;
  auto* ss = app.add_subcommand("sample-sets", "sample T with every |S cap T| near p|S|");
  add_common(ss, ss_c);
  ss->add_option("--p", ss_p, "sampling rate")->required();
  ss->add_option("--epsilon", ss_eps, "relative window")->required();

  Common sg_c;
  double sg_p = 0.0, sg_eps = 0.0;
  int64_t min_degree = -1;
  auto* sg = app.add_subcommand("sample-graph", "sample vertices preserving neighbor counts");
  add_common(sg, sg_c);
  sg->add_option("--p", sg_p, "sampling rate")->required();
  sg->add_option("--epsilon", sg_eps, "relative window")->required();
  sg->add_option("--min-degree", min_degree, "degree threshold (default ceil(1/(p eps)))");

  Common pt_c;
  int64_t min_size = -1;
  auto* pt = app.add_subcommand("partition", "YES / NO / MAYBE labels with balanced sets");
  add_common(pt, pt_c);
  pt->add_option("--min-size", min_size, "smallest accepted set (default ceil(ln n))");

  Common bl_c;
  Probabilities bl_p;
  std::string method = "monte-carlo";
  uint64_t seed = 0;
  int64_t samples = 1;
  auto* bl = app.add_subcommand("baseline", "randomized and sequential references");
  add_common(bl, bl_c);
  add_probabilities(bl, bl_p);
  bl->add_option("--method", method, "baseline")
      ->check(CLI::IsMember({"walk", "monte-carlo", "sequential"}));
  bl->add_option("--seed", seed, "generator seed");
  bl->add_option("--samples", samples, "monte-carlo: seeds seed..seed+samples-1, best kept")
      ->check(CLI::PositiveNumber);

  std::string v_input, v_q, v_report;
  Probabilities v_p;
  double v_tol = 1e-9;
  auto* vf = app.add_subcommand("verify", "recompute deviations and cross-check a report");
  vf->add_option("-i,--input", v_input, "instance file")->required();
  vf->add_option("--q", v_q, "q file")->required();
  vf->add_option("--report", v_report, "report to cross-check")->required();
  add_probabilities(vf, v_p);
  vf->add_option("--tolerance", v_tol, "relative tolerance on deviations");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    std::ostringstream o, eo;
    int code = app.exit(e, o, eo);
    out << o.str();
    err << eo.str();
    return code == 0 ? 0 : 1;
  }

  try {
    const auto t0 = std::chrono::steady_clock::now();
    if (fix->parsed()) {
      Instance inst = read_instance(fix_c.input);
      const ConstraintMatrix& a = inst.matrix;
      Eigen::VectorXd p = load_p(fix_p, a.cols());
      Eigen::VectorXd delta = load_delta(fix_p, a, p);
      EngineConfig cfg = make_config(fix_c);
      TraceSink sink(fix_c.trace);
      sink.attach(cfg);
      RunReport rep;
      rep.command = "fix";
      rep.mode = mode;
      rep.k = fix_c.k;
      rep.k_effective = fix_c.k;
      rep.profile = fix_c.profile;
      rep.n = a.cols();
      Eigen::VectorXd q;
      Json extra;
      if (mode == "partial") {
        PartialFixResult r = partial_fix(a, p, delta, fix_c.k, cfg);
        q = r.q;
        fill_rows(rep, r.deviation, delta, r.is_bad, &r.prob_bad);
        for (double v : r.prob_bad) rep.sum_prob_bad += v;
        rep.work = r.total_complexity;
        rep.steps = r.steps;
        extra["nonintegral"] = r.nonintegral;
        extra["log_pot0"] = r.log_pot0;
        extra["log_pot_final"] = r.log_pot_final;
      } else if (mode == "integral") {
        FixResult r = fix_integral(a, p, delta, fix_c.k, cfg);
        q = r.q;
        fill_rows(rep, r.deviation, delta, r.is_bad, nullptr);
        rep.sum_prob_bad = r.report.sum_prob_bad;
        rep.work = r.report.total_complexity;
        rep.steps = r.report.steps;
        extra["levels"] = r.report.levels.size();
        extra["forced_columns"] = r.report.forced_columns;
        extra["low_budget_rows"] = r.report.low_budget_rows.size();
      } else {
        BoundMode bm = parse_bound_mode(mode);
        ConcentrationResult r = bm == BoundMode::kHoeffding   ? fix_hoeffding(a, p, delta, fix_c.k, cfg)
                                : bm == BoundMode::kChernoff ? fix_chernoff(a, p, delta, fix_c.k, cfg)
                                                             : fix_bernstein(a, p, delta, fix_c.k, cfg);
        q = r.q;
        fill_rows(rep, r.deviation, delta, r.is_bad, &r.bounds.prob_bad);
        rep.sum_prob_bad = r.bounds.sum_prob_bad;
        rep.k_effective = r.k_effective;
        rep.work = r.rounding.total_complexity;
        rep.steps = r.rounding.steps;
        extra["stages"] = r.stages.size();
        extra["forced_columns"] = r.rounding.forced_columns;
      }
      rep.extra_json = extra.is_null() ? "{}" : extra.dump();
      return finish(fix_c, rep, q, seconds_since(t0), out);
    }
    if (ss->parsed() || sg->parsed()) {
      const Common& c = ss->parsed() ? ss_c : sg_c;
      Instance inst = read_instance(c.input);
      EngineConfig cfg = make_config(c);
      TraceSink sink(c.trace);
      sink.attach(cfg);
      RunReport rep;
      rep.mode = "chernoff";
      rep.k = rep.k_effective = c.k;
      rep.profile = c.profile;
      rep.n = inst.matrix.cols();
      Eigen::VectorXd q;
      Json extra;
      if (ss->parsed()) {
        if (inst.kind != InstanceKind::kSets) throw std::invalid_argument("sample-sets needs a sets file");
        SetSample s = sample_sets(inst.sets, ss_p, ss_eps, c.k, cfg);
        rep.command = "sample-sets";
        window_rows(rep, inst.sets, s.report);
        rep.k_effective = s.engine.k_effective;
        rep.work = s.engine.rounding.total_complexity;
        rep.steps = s.engine.rounding.steps;
        rep.sum_prob_bad = s.engine.bounds.sum_prob_bad;
        q = indicator(rep.n, s.members);
        extra = window_extra(s.report, s.report.bad);
        extra["size"] = s.members.size();
      } else {
        if (inst.kind != InstanceKind::kGraph) throw std::invalid_argument("sample-graph needs a graph file");
        GraphSample s = sample_graph_neighbors(inst.graph, sg_p, sg_eps, c.k, cfg, min_degree);
        rep.command = "sample-graph";
        std::vector<std::vector<int32_t>> sets;
        for (int32_t v : s.report.constrained) sets.push_back(inst.graph.neighbors(v));
        window_rows(rep, SetSystem(rep.n, std::move(sets)), s.report.sets);
        q = indicator(rep.n, s.members);
        extra = window_extra(s.report.sets, s.report.sets.bad);
        extra["threshold"] = s.report.threshold;
        extra["constrained"] = s.report.constrained;
        extra["size"] = s.members.size();
      }
      rep.extra_json = extra.dump();
      return finish(c, rep, q, seconds_since(t0), out);
    }
    if (pt->parsed()) {
      Instance inst = read_instance(pt_c.input);
      if (inst.kind != InstanceKind::kSets) throw std::invalid_argument("partition needs a sets file");
      EngineConfig cfg = make_config(pt_c);
      TraceSink sink(pt_c.trace);
      sink.attach(cfg);
      Partition part = partition_yes_no(inst.sets, pt_c.k, cfg, min_size);
      RunReport rep;
      rep.command = "partition";
      rep.mode = "partial";
      rep.k = rep.k_effective = pt_c.k;
      rep.profile = pt_c.profile;
      rep.n = inst.matrix.cols();
      Eigen::VectorXd delta(inst.sets.size());
      for (int64_t i = 0; i < inst.sets.size(); ++i) {
        delta[i] = static_cast<double>(inst.sets.set(i).size()) / 6.0;
      }
      fill_rows(rep, part.engine.deviation, delta, part.engine.is_bad, &part.engine.prob_bad);
      for (double v : part.engine.prob_bad) rep.sum_prob_bad += v;
      rep.work = part.engine.total_complexity;
      rep.steps = part.engine.steps;
      Json extra;
      extra["yes"] = part.report.yes;
      extra["no"] = part.report.no;
      extra["maybe"] = part.report.maybe;
      extra["failing_fifth"] = part.report.failing;
      rep.extra_json = extra.dump();
      return finish(pt_c, rep, part.engine.q, seconds_since(t0), out);
    }
    if (bl->parsed()) {
      Instance inst = read_instance(bl_c.input);
      const ConstraintMatrix& a = inst.matrix;
      RunReport rep;
      rep.command = "baseline";
      rep.mode = method;
      rep.k = rep.k_effective = bl_c.k;
      rep.profile = bl_c.profile;
      rep.n = a.cols();
      Eigen::VectorXd q, p, delta;
      Json extra;
      extra["seed"] = seed;
      if (method == "sequential") {
        if (inst.kind == InstanceKind::kMatrix) throw std::invalid_argument("sequential needs sets");
        SequentialResult r = sequential_conditional_fix(inst.sets);
        q.resize(rep.n);
        for (int64_t j = 0; j < rep.n; ++j) q[j] = r.labels[j] > 0 ? 1.0 : 0.0;
        p = Eigen::VectorXd::Constant(rep.n, 0.5);
        delta = a.row_sums() / 6.0;
        extra["pot_final"] = r.pot_trace.back();
        rep.steps = static_cast<int64_t>(r.labels.size());
      } else {
        p = load_p(bl_p, a.cols());
        delta = load_delta(bl_p, a, p);
        if (method == "walk") {
          RandomWalkResult r = randomized_walk(a, p, bl_c.k, seed);
          q = r.q;
          rep.steps = r.steps;
        } else {
          // Keep the seed with the smallest worst-row excess over budget.
          double best = INFINITY;
          for (int64_t s = 0; s < samples; ++s) {
            Eigen::VectorXd qs = monte_carlo_round(p, seed + static_cast<uint64_t>(s));
            Eigen::VectorXd dv = a.deviations(p, qs);
            double worst = 0.0;
            for (Eigen::Index i = 0; i < dv.size(); ++i) worst = std::max(worst, dv[i] - delta[i]);
            if (worst < best) {
              best = worst;
              q = qs;
              extra["best_seed"] = seed + static_cast<uint64_t>(s);
            }
          }
        }
      }
      Eigen::VectorXd dev = a.deviations(p, q);
      std::vector<uint8_t> bad(static_cast<size_t>(a.rows()));
      for (int64_t i = 0; i < a.rows(); ++i) bad[i] = dev[i] > delta[i];
      fill_rows(rep, dev, delta, bad, nullptr);
      rep.extra_json = extra.dump();
      return finish(bl_c, rep, q, seconds_since(t0), out);
    }
    if (vf->parsed()) {
      Instance inst = read_instance(v_input);
      const ConstraintMatrix& a = inst.matrix;
      Eigen::VectorXd q = read_vector(v_q);
      if (q.size() != a.cols()) throw std::invalid_argument("q length != instance columns");
      std::ifstream rf(v_report);
      if (!rf) throw std::runtime_error("cannot open " + v_report);
      std::stringstream buf;
      buf << rf.rdbuf();
      RunReport rep = parse_report(buf.str());
      if (static_cast<int64_t>(rep.rows.size()) != a.rows() && rep.command != "sample-graph") {
        throw std::invalid_argument("report rows != instance rows");
      }
      Eigen::VectorXd dev;
      if (rep.command == "sample-sets" || rep.command == "sample-graph") {
        // Windows around p |S| for the constrained sets.
        Json extra = Json::parse(rep.extra_json);
        std::vector<int32_t> rows;
        if (rep.command == "sample-graph") {
          rows = extra.at("constrained").get<std::vector<int32_t>>();
        } else {
          for (int64_t i = 0; i < a.rows(); ++i) rows.push_back(static_cast<int32_t>(i));
        }
        if (rows.size() != rep.rows.size()) throw std::invalid_argument("report rows mismatch");
        const Eigen::VectorXd hits = a.apply(q), sizes = a.row_sums();
        const double p = extra.at("p").get<double>();
        dev.resize(static_cast<Eigen::Index>(rows.size()));
        for (size_t r = 0; r < rows.size(); ++r) dev[r] = std::abs(hits[rows[r]] - p * sizes[rows[r]]);
      } else {
        Eigen::VectorXd p = rep.command == "baseline" && rep.mode == "sequential"
                                ? Eigen::VectorXd::Constant(a.cols(), 0.5)
                            : rep.command == "partition" ? Eigen::VectorXd::Constant(a.cols(), 0.5)
                                                         : load_p(v_p, a.cols());
        dev = a.deviations(p, q);
      }
      int64_t mismatches = 0;
      bool integral_mode = rep.command == "fix" && rep.mode != "partial";
      for (Eigen::Index i = 0; i < dev.size(); ++i) {
        const RowReport& row = rep.rows[i];
        double scale = std::max({1.0, std::abs(dev[i]), std::abs(row.deviation)});
        bool dev_ok = std::abs(dev[i] - row.deviation) <= v_tol * scale;
        // An over-budget row must be flagged; flags on rows within budget
        // are the engine's own forfeits and are allowed.
        bool flag_ok = !(dev[i] > row.delta) || row.bad;
        if (!dev_ok || !flag_ok) {
          ++mismatches;
          err << "row " << i << ": recomputed deviation " << format_double(dev[i])
              << ", reported " << format_double(row.deviation) << ", budget "
              << format_double(row.delta) << (row.bad ? " (flagged)" : "") << '\n';
        }
      }
      int64_t nonint = 0;
      if (integral_mode) {
        for (Eigen::Index j = 0; j < q.size(); ++j) nonint += !(q[j] == 0.0 || q[j] == 1.0);
      }
      int64_t flagged = 0;
      for (const RowReport& row : rep.rows) flagged += row.bad;
      bool count_ok = flagged == rep.bad_count;
      Json res;
      res["rows"] = dev.size();
      res["mismatches"] = mismatches;
      res["nonintegral"] = nonint;
      res["bad_count_consistent"] = count_ok;
      res["ok"] = mismatches == 0 && nonint == 0 && count_ok;
      out << res.dump(1) << '\n';
      return res["ok"].get<bool>() ? 0 : 2;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace derand
