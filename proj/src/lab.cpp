#include "mplab/lab.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "mplab/eft.hpp"

namespace mplab::lab {

namespace {

const std::set<std::string>& known_sections() {
  static const std::set<std::string> s(solver::all_sections().begin(), solver::all_sections().end());
  return s;
}

void check_keys(const json& j, std::initializer_list<const char*> allowed, const char* where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (const auto& [k, v] : j.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* a) { return k == a; }) == allowed.end())
      throw ConfigError(std::string(where) + ": unknown key '" + k + "'");
  }
}

template <class T>
T get(const json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
  }
}

solver::PrecisionPolicy parse_policy(const json& j) {
  if (j.is_string()) return named_policy(j.get<std::string>());
  check_keys(j, {"preset", "solver_ops", "precond_ops", "sqrt_mode", "local_dot", "global_reduce", "gs_precision"},
             "policy");
  auto p = named_policy(get<std::string>(j, "preset", "fp64"));
  if (j.contains("solver_ops")) p.solver_ops = parse_precision(get<std::string>(j, "solver_ops", ""));
  if (j.contains("precond_ops")) p.precond_ops = parse_precision(get<std::string>(j, "precond_ops", ""));
  if (j.contains("sqrt_mode")) p.sqrt_mode = solver::parse_sqrt_mode(get<std::string>(j, "sqrt_mode", ""));
  if (j.contains("local_dot")) p.local_dot = sem::parse_dot_mode(get<std::string>(j, "local_dot", ""));
  if (j.contains("global_reduce"))
    p.global_reduce = gs::parse_reduce_precision(get<std::string>(j, "global_reduce", ""));
  if (j.contains("gs_precision")) p.gs_precision = parse_precision(get<std::string>(j, "gs_precision", ""));
  return p;
}

json policy_json(const solver::PrecisionPolicy& p) {
  return {{"solver_ops", to_string(p.solver_ops)},
          {"precond_ops", to_string(p.precond_ops)},
          {"sqrt_mode", solver::to_string(p.sqrt_mode)},
          {"local_dot", sem::to_string(p.local_dot)},
          {"global_reduce", gs::to_string(p.global_reduce)},
          {"gs_precision", to_string(p.gs_precision)}};
}

ExperimentConfig parse_config_impl(const json& j) {
  check_keys(j, {"schema", "mesh", "ranks", "gs_mode", "preconditioner", "load", "policy", "cg", "backends",
                 "perturb_sqrt", "seed", "samples"},
             "config");
  if (j.contains("schema") && j.at("schema") != kConfigSchema)
    throw ConfigError("config: unsupported schema " + j.at("schema").dump());
  ExperimentConfig c;
  if (j.contains("mesh")) {
    const auto& m = j.at("mesh");
    check_keys(m, {"elements", "degree", "extent"}, "mesh");
    if (m.contains("elements")) {
      const auto e = get<std::vector<int>>(m, "elements", {});
      if (e.size() != 3) throw ConfigError("mesh.elements: expected [Ex, Ey, Ez]");
      c.mesh.ex = e[0];
      c.mesh.ey = e[1];
      c.mesh.ez = e[2];
    }
    c.mesh.degree = get<int>(m, "degree", c.mesh.degree);
    if (m.contains("extent")) {
      const auto l = get<std::vector<double>>(m, "extent", {});
      if (l.size() != 3) throw ConfigError("mesh.extent: expected [Lx, Ly, Lz]");
      c.mesh.lx = l[0];
      c.mesh.ly = l[1];
      c.mesh.lz = l[2];
    }
  }
  if (c.mesh.ex < 1 || c.mesh.ey < 1 || c.mesh.ez < 1) throw ConfigError("mesh.elements must be >= 1");
  if (c.mesh.degree < 1 || c.mesh.degree > 16) throw ConfigError("mesh.degree must be in 1..16");
  c.ranks = get<int>(j, "ranks", c.ranks);
  if (c.ranks < 1 || c.ranks > c.mesh.ex * c.mesh.ey * c.mesh.ez)
    throw ConfigError("ranks must be in 1..element count");
  if (j.contains("gs_mode")) c.gs_mode = gs::parse_mode(get<std::string>(j, "gs_mode", ""));
  if (j.contains("preconditioner"))
    c.preconditioner = solver::parse_preconditioner(get<std::string>(j, "preconditioner", ""));
  if (j.contains("load")) c.load = sem::parse_load(get<std::string>(j, "load", ""));
  if (j.contains("policy")) c.policy = parse_policy(j.at("policy"));
  c.policy.validate();
  if (j.contains("cg")) {
    const auto& g = j.at("cg");
    check_keys(g, {"tol", "max_iter", "stagnation_window", "stagnation_factor"}, "cg");
    c.cg.tol = get<double>(g, "tol", c.cg.tol);
    c.cg.max_iter = get<int>(g, "max_iter", c.cg.max_iter);
    c.cg.stagnation_window = get<int>(g, "stagnation_window", c.cg.stagnation_window);
    c.cg.stagnation_factor = get<double>(g, "stagnation_factor", c.cg.stagnation_factor);
  }
  c.cg.validate();
  if (j.contains("backends")) {
    const auto& b = j.at("backends");
    check_keys(b, {"default", "sections"}, "backends");
    arith::SectionMap map(arith::Backend::parse(get<std::string>(b, "default", "ieee")));
    if (b.contains("sections")) {
      if (!b.at("sections").is_object()) throw ConfigError("backends.sections: expected an object");
      for (const auto& [k, v] : b.at("sections").items()) {
        if (!known_sections().count(k)) throw ConfigError("backends.sections: unknown section '" + k + "'");
        if (!v.is_string()) throw ConfigError("backends.sections." + k + ": expected a backend string");
        map.set(k, arith::Backend::parse(v.get<std::string>()));
      }
    }
    c.backends = map;
  }
  c.perturb_sqrt = get<bool>(j, "perturb_sqrt", c.perturb_sqrt);
  c.seed = get<std::uint64_t>(j, "seed", c.seed);
  c.samples = get<int>(j, "samples", c.samples);
  if (c.samples < 1) throw ConfigError("samples must be >= 1");
  return c;
}

template <class T>
double median(std::vector<T> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::string outcome_of(const solver::RunReport& r) {
  if (r.converged) return "converges";
  if (r.stagnated) return "stagnates";
  if (r.breakdown) return "breakdown";
  return "iteration_limit";
}

ExperimentConfig with_backends(ExperimentConfig c, arith::SectionMap map) {
  c.backends = std::move(map);
  return c;
}

arith::SectionMap scoped_map(arith::Backend b, const std::vector<std::string>& sections) {
  arith::SectionMap m;
  for (const auto& s : sections) m.set(s, b);
  return m;
}

double relative_difference(const sem::Field<double>& a, const sem::Field<double>& b) {
  double num = 0, den = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return den == 0 ? std::sqrt(num) : std::sqrt(num / den);
}

template <class T>
Dot2Row dot2_row(double cond, int n, int trials, std::uint64_t seed) {
  Dot2Row row;
  row.cond = cond;
  if (cond > eft::max_reachable_cond<T>()) {
    row.note = "unreachable";
    row.achieved_cond = row.relerr_plain = row.relerr_dot2 = row.relerr_wide =
        std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  std::vector<double> plain, d2, wide, achieved;
  for (int k = 0; k < trials; ++k) {
    try {
      const auto p = eft::gen_dot<T>(n, cond, seed + 0x9e3779b97f4a7c15ull * static_cast<std::uint64_t>(k + 1));
      const std::span<const T> x(p.x), y(p.y);
      plain.push_back(eft::relative_error(p, static_cast<double>(eft::dot_plain(x, y))));
      d2.push_back(eft::relative_error(p, static_cast<double>(eft::dot2(x, y))));
      wide.push_back(eft::relative_error(p, eft::dot_wide(x, y)));
      achieved.push_back(p.achieved_cond);
    } catch (const eft::RangeError&) {
    }
  }
  if (plain.empty()) {
    row.note = "generation failed";
    row.achieved_cond = row.relerr_plain = row.relerr_dot2 = row.relerr_wide =
        std::numeric_limits<double>::quiet_NaN();
    return row;
  }
  if (static_cast<int>(plain.size()) < trials) row.note = std::to_string(plain.size()) + " trials";
  row.achieved_cond = median(achieved);
  row.relerr_plain = median(plain);
  row.relerr_dot2 = median(d2);
  row.relerr_wide = median(wide);
  return row;
}

std::string csv_text(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char ch : s) {
    if (ch == '"') out += '"';
    out += ch;
  }
  return out + "\"";
}

}  // namespace

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

solver::PrecisionPolicy named_policy(std::string_view name) {
  using solver::PrecisionPolicy;
  if (name == "fp64") return PrecisionPolicy::all_fp64();
  if (name == "fp32") return PrecisionPolicy::all_fp32();
  if (name == "mixed") {
    auto p = PrecisionPolicy::all_fp32();
    p.gs_precision = Precision::fp64;
    p.global_reduce = gs::ReducePrecision::fp64;
    p.local_dot = sem::DotMode::wide;
    return p;
  }
  if (name == "dot2") {
    auto p = PrecisionPolicy::all_fp32();
    p.local_dot = sem::DotMode::dot2;
    return p;
  }
  if (name == "dot2_compensated") {
    auto p = PrecisionPolicy::all_fp32();
    p.local_dot = sem::DotMode::dot2;
    p.global_reduce = gs::ReducePrecision::compensated;
    return p;
  }
  throw ConfigError("unknown policy preset '" + std::string(name) + "'");
}

ExperimentConfig parse_config(const json& j) {
  try {
    return parse_config_impl(j);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(e.what());
  }
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json sections = json::object();
  for (const auto& [k, b] : c.backends.entries()) sections[k] = b.to_string();
  return {{"schema", kConfigSchema},
          {"mesh",
           {{"elements", {c.mesh.ex, c.mesh.ey, c.mesh.ez}},
            {"degree", c.mesh.degree},
            {"extent", {c.mesh.lx, c.mesh.ly, c.mesh.lz}}}},
          {"ranks", c.ranks},
          {"gs_mode", gs::to_string(c.gs_mode)},
          {"preconditioner", solver::to_string(c.preconditioner)},
          {"load", sem::to_string(c.load)},
          {"policy", policy_json(c.policy)},
          {"cg",
           {{"tol", c.cg.tol},
            {"max_iter", c.cg.max_iter},
            {"stagnation_window", c.cg.stagnation_window},
            {"stagnation_factor", c.cg.stagnation_factor}}},
          {"backends", {{"default", c.backends.fallback().to_string()}, {"sections", sections}}},
          {"perturb_sqrt", c.perturb_sqrt},
          {"seed", c.seed},
          {"samples", c.samples}};
}

int exit_code(const solver::RunReport& r) {
  if (r.converged) return 0;
  if (r.breakdown) return 3;
  return 2;
}

solver::RunReport run_solve(const ExperimentConfig& c, std::uint64_t sample_index) {
  const sem::BoxMesh mesh(c.mesh);
  const auto plan = gs::build_plan(mesh, c.ranks, c.gs_mode, Precision::fp64);
  arith::ContextSet cs(c.backends, c.seed, sample_index, c.perturb_sqrt);
  const auto prob = sem::build_problem(mesh, cs[solver::sections::init], c.load);
  return solver::pcg_solve(mesh, prob.rhs, c.preconditioner, c.policy, plan, c.cg, cs);
}

json report_to_json(const solver::RunReport& r, const ExperimentConfig& c) {
  json flops = json::object();
  for (const auto& [k, v] : r.flops) flops[k] = v;
  return {{"schema", kReportSchema},
          {"converged", r.converged},
          {"stagnated", r.stagnated},
          {"breakdown", r.breakdown},
          {"iterations", r.iterations},
          {"message", r.message},
          {"initial_rtr", r.initial_rtr},
          {"final_residual", r.final_residual()},
          {"residual_history", r.residual_history},
          {"beta_history", r.beta_history},
          {"pap_history", r.pap_history},
          {"flops", flops},
          {"policy", policy_json(r.policy)},
          {"preconditioner", solver::to_string(r.preconditioner)},
          {"seed", r.seed},
          {"sample_index", r.sample_index},
          {"config", to_json(c)}};
}

std::string history_csv(const solver::RunReport& r) {
  std::ostringstream os;
  os << "iter,rtr,beta,pap\n";
  for (std::size_t i = 0; i < r.residual_history.size(); ++i)
    os << i + 1 << ',' << fmt(r.residual_history[i]) << ',' << fmt(r.beta_history[i]) << ','
       << fmt(r.pap_history[i]) << '\n';
  return os.str();
}

Scope parse_scope(std::string_view s) {
  if (s == "whole") return Scope::whole;
  if (s == "cg_only") return Scope::cg_only;
  throw ConfigError("unknown scope '" + std::string(s) + "'");
}

std::string_view to_string(Scope s) { return s == Scope::whole ? "whole" : "cg_only"; }

std::vector<std::string> scope_sections(Scope s) {
  return s == Scope::whole ? solver::all_sections() : solver::cg_only_sections();
}

std::vector<SweepRow> vprec_sweep(const ExperimentConfig& c, const std::vector<int>& ts, Scope scope) {
  std::vector<SweepRow> rows;
  for (int t : ts) {
    SweepRow row;
    row.t = t;
    try {
      const auto cfg = with_backends(c, scoped_map(arith::Backend::vprec({t, 11}), scope_sections(scope)));
      const auto r = run_solve(cfg);
      row.final_residual = r.final_residual();
      row.iterations = r.iterations;
      row.converged = r.converged;
      row.stagnated = r.stagnated;
      row.error = r.breakdown ? r.message : "";
    } catch (const std::exception& e) {
      row.final_residual = std::numeric_limits<double>::quiet_NaN();
      row.error = e.what();
    }
    rows.push_back(row);
  }
  return rows;
}

std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::ostringstream os;
  os << "t,final_residual,iterations,converged,stagnated,error\n";
  for (const auto& r : rows)
    os << r.t << ',' << fmt(r.final_residual) << ',' << r.iterations << ',' << r.converged << ',' << r.stagnated
       << ',' << csv_text(r.error) << '\n';
  return os.str();
}

McaMode parse_mca_mode(std::string_view s) {
  if (s == "rr") return McaMode::rr;
  if (s == "mca" || s == "full") return McaMode::mca;
  throw ConfigError("unknown MCA mode '" + std::string(s) + "'");
}

double SampleSet::width_at(int k) const {
  if (k < 1 || static_cast<std::size_t>(k) > max.size()) return 0.0;
  return max[k - 1] - min[k - 1];
}

double SampleSet::convergence_ratio() const {
  double lo = std::numeric_limits<double>::infinity(), hi = 0;
  for (const auto& r : runs) {
    if (!r.converged) continue;
    lo = std::min(lo, r.final_residual());
    hi = std::max(hi, r.final_residual());
  }
  return hi == 0 ? std::numeric_limits<double>::quiet_NaN() : hi / lo;
}

bool SampleSet::all_converged() const {
  return !runs.empty() && std::all_of(runs.begin(), runs.end(), [](const auto& r) { return r.converged; });
}

SampleSet mca_sample(const ExperimentConfig& c, const SampleOptions& o) {
  if (o.samples < 2) throw ConfigError("mca-sample needs at least 2 samples");
  const auto backend = o.mode == McaMode::rr ? arith::Backend::mca_rr(o.t) : arith::Backend::mca_full(o.t);
  backend.validate();
  const auto cfg = with_backends(c, scoped_map(backend, o.sections));
  SampleSet s;
  for (int k = 0; k < o.samples; ++k) {
    const std::uint64_t idx = o.forced_index ? *o.forced_index : static_cast<std::uint64_t>(k);
    try {
      s.runs.push_back(run_solve(cfg, idx));
    } catch (const solver::OperatorNotSpd& e) {
      solver::RunReport r;
      r.breakdown = true;
      r.message = e.what();
      r.seed = c.seed;
      r.sample_index = idx;
      s.runs.push_back(std::move(r));
    }
  }
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto& r : s.runs) len = std::min(len, r.residual_history.size());
  for (std::size_t i = 0; i < len; ++i) {
    double sum = 0, lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (const auto& r : s.runs) {
      const double v = std::sqrt(r.residual_history[i]);
      sum += v;
      lo = std::min(lo, v);
      hi = std::max(hi, v);
    }
    s.mean.push_back(sum / static_cast<double>(s.runs.size()));
    s.min.push_back(lo);
    s.max.push_back(hi);
  }
  return s;
}

std::string envelope_csv(const SampleSet& s) {
  std::ostringstream os;
  os << "iter,mean,min,max\n";
  for (std::size_t i = 0; i < s.mean.size(); ++i)
    os << i + 1 << ',' << fmt(s.mean[i]) << ',' << fmt(s.min[i]) << ',' << fmt(s.max[i]) << '\n';
  return os.str();
}

std::string samples_csv(const SampleSet& s) {
  std::ostringstream os;
  os << "sample,iter,residual\n";
  for (const auto& r : s.runs) {
    for (std::size_t i = 0; i < r.residual_history.size(); ++i)
      os << r.sample_index << ',' << i + 1 << ',' << fmt(std::sqrt(r.residual_history[i])) << '\n';
  }
  return os.str();
}

std::vector<StrategyRow> default_strategy_rows(int ranks) {
  return {{"fp64", named_policy("fp64"), gs::Mode::sequential, ranks, solver::Preconditioner::jacobi},
          {"fp32_ops_fp64_gs", named_policy("mixed"), gs::Mode::sequential, ranks, solver::Preconditioner::jacobi},
          {"fp32_all", named_policy("fp32"), gs::Mode::sequential, ranks, solver::Preconditioner::jacobi},
          {"fp32_dot2", named_policy("dot2"), gs::Mode::sequential, ranks, solver::Preconditioner::jacobi}};
}

std::vector<StrategyResult> strategy_matrix(const ExperimentConfig& base, const std::vector<StrategyRow>& rows) {
  std::vector<StrategyResult> out;
  for (const auto& row : rows) {
    StrategyResult res;
    res.row = row;
    try {
      auto cfg = base;
      cfg.policy = row.policy;
      cfg.gs_mode = row.gs_mode;
      cfg.ranks = row.ranks;
      cfg.preconditioner = row.preconditioner;
      const auto r = run_solve(cfg);
      res.outcome = outcome_of(r);
      res.iterations = r.iterations;
      res.final_residual = r.final_residual();
    } catch (const solver::OperatorNotSpd&) {
      res.outcome = "not_spd";
      res.final_residual = std::numeric_limits<double>::quiet_NaN();
    } catch (const std::exception&) {
      res.outcome = "error";
      res.final_residual = std::numeric_limits<double>::quiet_NaN();
    }
    out.push_back(res);
  }
  return out;
}

std::string strategy_csv(const std::vector<StrategyResult>& rows) {
  std::ostringstream os;
  os << "name,ops,gso_precision,gso_mode,dot,reduce,ranks,preconditioner,outcome,iterations,final_residual\n";
  for (const auto& r : rows) {
    const auto& p = r.row.policy;
    os << csv_text(r.row.name) << ',' << to_string(p.solver_ops) << ',' << to_string(p.gs_precision) << ','
       << gs::to_string(r.row.gs_mode) << ',' << sem::to_string(p.local_dot) << ',' << gs::to_string(p.global_reduce)
       << ',' << r.row.ranks << ',' << solver::to_string(r.row.preconditioner) << ',' << r.outcome << ','
       << r.iterations << ',' << fmt(r.final_residual) << '\n';
  }
  return os.str();
}

std::vector<double> log_grid(int lo, int hi, int per_decade) {
  require(per_decade >= 1 && hi >= lo, "log_grid: bad range");
  std::vector<double> g;
  for (int k = lo * per_decade; k <= hi * per_decade; ++k)
    g.push_back(std::pow(10.0, static_cast<double>(k) / per_decade));
  return g;
}

std::vector<Dot2Row> dot2_bench(Precision precision, const std::vector<double>& conds, int n, int trials,
                                std::uint64_t seed) {
  require(n >= 6 && trials >= 1, "dot2_bench: need n >= 6 and trials >= 1");
  std::vector<Dot2Row> rows;
  for (double c : conds)
    rows.push_back(precision == Precision::fp32 ? dot2_row<float>(c, n, trials, seed)
                                                : dot2_row<double>(c, n, trials, seed));
  return rows;
}

std::string dot2_csv(const std::vector<Dot2Row>& rows) {
  std::ostringstream os;
  os << "cond,achieved_cond,relerr_plain,relerr_dot2,relerr_wide,note\n";
  for (const auto& r : rows)
    os << fmt(r.cond) << ',' << fmt(r.achieved_cond) << ',' << fmt(r.relerr_plain) << ',' << fmt(r.relerr_dot2)
       << ',' << fmt(r.relerr_wide) << ',' << csv_text(r.note) << '\n';
  return os.str();
}

PruneResult prune(const ExperimentConfig& c, const PruneOptions& o) {
  const auto sections = o.sections.empty() ? solver::all_sections() : o.sections;
  for (const auto& s : sections) {
    if (!known_sections().count(s)) throw ConfigError("prune: unknown section '" + s + "'");
  }
  PruneResult res;
  const auto baseline = run_solve(with_backends(c, arith::SectionMap()));

  SampleOptions so;
  so.samples = o.samples;
  so.mode = McaMode::rr;
  so.t = 23;
  bool have_reference = false;

  for (const auto& s : sections) {
    PruneEntry e;
    e.section = s;
    try {
      const auto r = run_solve(with_backends(c, scoped_map(arith::Backend::vprec(arith::kSingle), {s})));
      e.forward_error = relative_difference(r.solution, baseline.solution);
    } catch (const std::exception&) {
      e.forward_error = std::numeric_limits<double>::infinity();
    }
    e.stage1_pass = e.forward_error <= o.vprec_threshold;
    if (e.stage1_pass) {
      if (!have_reference) {
        so.sections = solver::cg_only_sections();
        res.reference_width = mca_sample(c, so).width_at(o.probe_iteration);
        have_reference = true;
      }
      so.sections = {s};
      const double w = mca_sample(c, so).width_at(o.probe_iteration);
      e.stage2_run = true;
      e.width_ratio = res.reference_width > 0 ? w / res.reference_width
                                              : (w > 0 ? std::numeric_limits<double>::infinity() : 0.0);
      e.stage2_pass = e.width_ratio <= o.mca_width_threshold;
    }
    if (e.stage1_pass && e.stage2_pass) res.candidates.push_back(s);
    res.entries.push_back(e);
  }
  return res;
}

json prune_to_json(const PruneResult& r, const PruneOptions& o) {
  json entries = json::array();
  for (const auto& e : r.entries) {
    entries.push_back({{"section", e.section},
                       {"forward_error", e.forward_error},
                       {"stage1_pass", e.stage1_pass},
                       {"stage2_run", e.stage2_run},
                       {"width_ratio", e.width_ratio},
                       {"stage2_pass", e.stage2_pass}});
  }
  return {{"vprec_threshold", o.vprec_threshold},
          {"mca_width_threshold", o.mca_width_threshold},
          {"samples", o.samples},
          {"probe_iteration", o.probe_iteration},
          {"reference_width", r.reference_width},
          {"entries", entries},
          {"candidates", r.candidates}};
}

Intensity intensity(std::string_view kernel, const std::vector<std::uint64_t>& dims, Precision precision) {
  const std::uint64_t s = static_cast<std::uint64_t>(bytes_per_value(precision));
  Intensity out;
  out.kernel = std::string(kernel);
  auto mxm_bytes = [&](std::uint64_t m, std::uint64_t n, std::uint64_t k) { return s * (m * k + k * n + m * n); };
  // Nekbone's local_grad3 issues mxm(D, n, u, n, ur, n^2), n slab products
  // mxm(u_k, n, D^T, n, us_k, n) and mxm(u, n^2, D^T, n, ut, n).
  auto grad = [&](std::uint64_t n, std::uint64_t& flops, std::uint64_t& bytes) {
    flops = sem::local_grad3_flops(n);
    bytes = mxm_bytes(n, n * n, n) + n * mxm_bytes(n, n, n) + mxm_bytes(n * n, n, n);
  };
  if (kernel == "mxm") {
    if (dims.size() != 3) throw ConfigError("intensity mxm: expected m n k");
    out.flops = sem::mxm_flops(dims[0], dims[1], dims[2]);
    out.bytes = mxm_bytes(dims[0], dims[1], dims[2]);
  } else if (kernel == "glsc3" || kernel == "add2s") {
    if (dims.size() != 1) throw ConfigError("intensity " + out.kernel + ": expected n");
    out.flops = (kernel == "glsc3" ? 3 : 2) * dims[0];
    out.bytes = 3 * s * dims[0];
  } else if (kernel == "local_grad3" || kernel == "ax") {
    if (dims.empty() || dims.size() > 2) throw ConfigError("intensity " + out.kernel + ": expected N [E]");
    const std::uint64_t n = dims[0] + 1, e = dims.size() == 2 ? dims[1] : 1;
    std::uint64_t f = 0, b = 0;
    grad(n, f, b);
    if (kernel == "ax") {
      // forward and transposed gradients, 3 metric products (read 6, write 3),
      // 2 adds in the transpose sum (read 3, write 1)
      f = sem::ax_element_flops(n);
      b = 2 * b + 9 * s * n * n * n + 4 * s * n * n * n;
    }
    out.flops = e * f;
    out.bytes = e * b;
  } else {
    throw ConfigError("unknown kernel '" + out.kernel + "' (mxm, glsc3, add2s, ax, local_grad3)");
  }
  out.intensity = static_cast<double>(out.flops) / static_cast<double>(out.bytes);
  return out;
}

json intensity_to_json(const Intensity& i, Precision precision) {
  return {{"kernel", i.kernel},
          {"precision", to_string(precision)},
          {"flops", i.flops},
          {"bytes", i.bytes},
          {"intensity", i.intensity}};
}

double gain_percent(double t_double, double t_mixed) {
  require(t_double > 0, "gain: T_double must be positive");
  return (t_double - t_mixed) / t_double * 100.0;
}

MetricBlock metrics(const std::vector<double>& mixed, const std::vector<double>& dbl, std::optional<double> t_double,
                    std::optional<double> t_mixed) {
  require(!mixed.empty() && !dbl.empty(), "metrics: empty history");
  MetricBlock m;
  const std::size_t n = std::min(mixed.size(), dbl.size());
  m.truncated = mixed.size() != dbl.size();
  double sum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    m.ae_history.push_back(std::fabs(mixed[i] - dbl[i]));
    sum += m.ae_history.back();
  }
  m.mae = sum / static_cast<double>(n);
  if (t_double && t_mixed) m.gain_percent = gain_percent(*t_double, *t_mixed);
  return m;
}

json metrics_to_json(const MetricBlock& m) {
  json j = {{"ae_history", m.ae_history}, {"mae", m.mae}, {"truncated", m.truncated}};
  if (m.gain_percent) j["gain_percent"] = *m.gain_percent;
  return j;
}

MetricBlock metrics_from_json(const json& j) {
  MetricBlock m;
  m.ae_history = j.at("ae_history").get<std::vector<double>>();
  m.mae = j.at("mae").get<double>();
  m.truncated = j.at("truncated").get<bool>();
  if (j.contains("gain_percent")) m.gain_percent = j.at("gain_percent").get<double>();
  return m;
}

std::vector<double> residuals_from_report(const json& report) {
  if (!report.contains("schema") || report.at("schema") != kReportSchema)
    throw ConfigError("not a run report (schema " + std::string(kReportSchema) + " expected)");
  std::vector<double> out;
  for (double rtr : report.at("residual_history").get<std::vector<double>>()) out.push_back(std::sqrt(rtr));
  return out;
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream out(p, std::ios::binary);
  if (!out) throw ConfigError("cannot write " + p.string());
  out << content;
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + p.string());
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

}  // namespace mplab::lab
