#include "cli.hpp"

#include <CLI11.hpp>
#include <cmath>
#include <limits>
#include <sstream>

#include "mplab/lab.hpp"

namespace mplab::cli {

namespace {

namespace fs = std::filesystem;
using lab::json;

struct Globals {
  std::string config;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string out = ".";
  int samples = 0;
};

lab::ExperimentConfig load(const Globals& g) {
  auto c = g.config.empty() ? lab::ExperimentConfig{} : lab::load_config(g.config);
  if (g.seed_set) c.seed = g.seed;
  if (g.samples > 0) c.samples = g.samples;
  return c;
}

double parse_threshold(const std::string& s) {
  if (s == "inf" || s == "infinity") return std::numeric_limits<double>::infinity();
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument(s);
    return v;
  } catch (const std::exception&) {
    throw lab::ConfigError("bad threshold '" + s + "'");
  }
}

std::vector<std::string> split_sections(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string part; std::getline(ss, part, ',');) {
    if (!part.empty()) out.push_back(part);
  }
  return out;
}

std::vector<lab::StrategyRow> load_rows(const std::string& path, int ranks) {
  if (path.empty()) return lab::default_strategy_rows(ranks);
  json j;
  try {
    j = json::parse(lab::read_file(path));
  } catch (const json::parse_error& e) {
    throw lab::ConfigError(path + ": " + e.what());
  }
  if (!j.is_array()) throw lab::ConfigError(path + ": expected an array of rows");
  std::vector<lab::StrategyRow> rows;
  for (const auto& r : j) {
    try {
      lab::StrategyRow row;
      row.name = r.value("name", "row" + std::to_string(rows.size()));
      json cfg = {{"policy", r.at("policy")}};
      row.policy = lab::parse_config(cfg).policy;
      row.gs_mode = gs::parse_mode(r.value("gs_mode", "sequential"));
      row.ranks = r.value("ranks", ranks);
      row.preconditioner = solver::parse_preconditioner(r.value("preconditioner", "jacobi"));
      rows.push_back(row);
    } catch (const lab::ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw lab::ConfigError(path + ": " + e.what());
    }
  }
  return rows;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Mixed-precision solver laboratory"};
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--config", g.config, "Experiment config (JSON)");
  auto* seed_opt = app.add_option("--seed", g.seed, "Seed for noise and generators");
  app.add_option("--out", g.out, "Output directory");
  app.add_option("--samples", g.samples, "Number of samples");

  auto* solve = app.add_subcommand("solve", "One PCG solve; writes report.json and history.csv");

  auto* sweep = app.add_subcommand("vprec-sweep", "Vprec(t, 11) mantissa sweep");
  std::string sweep_scope = "cg_only";
  std::vector<int> ts;
  int t_min = 3, t_max = 52;
  sweep->add_option("--scope", sweep_scope, "whole or cg_only");
  sweep->add_option("--t", ts, "Explicit list of t values");
  sweep->add_option("--t-min", t_min);
  sweep->add_option("--t-max", t_max);

  auto* mca = app.add_subcommand("mca-sample", "Monte Carlo sampling envelope");
  std::string mca_mode = "rr", mca_scope = "cg_only", mca_sections;
  int mca_t = 23;
  bool force_index = false;
  mca->add_option("--mode", mca_mode, "rr or mca");
  mca->add_option("--t", mca_t, "Virtual precision");
  mca->add_option("--scope", mca_scope, "whole or cg_only");
  mca->add_option("--sections", mca_sections, "Comma-separated sections (overrides --scope)");
  mca->add_flag("--force-same-index", force_index, "Give every sample index 0");

  auto* strat = app.add_subcommand("strategy-matrix", "Convergence classification of precision strategies");
  std::string rows_path;
  strat->add_option("--rows", rows_path, "JSON array of rows (default: built-in comparison)");

  auto* dot = app.add_subcommand("dot2-bench", "Plain vs dot2 vs wide dot accuracy over a condition grid");
  std::string dot_precision = "fp32";
  int cond_lo = 1, cond_hi = 16, per_decade = 1, dot_n = 100, trials = 11;
  dot->add_option("--precision", dot_precision);
  dot->add_option("--log10-min", cond_lo);
  dot->add_option("--log10-max", cond_hi);
  dot->add_option("--per-decade", per_decade);
  dot->add_option("--n", dot_n);
  dot->add_option("--trials", trials);

  auto* pr = app.add_subcommand("prune", "Two-stage candidate pruning");
  std::string vprec_thr = "1e-6", mca_thr = "10", prune_sections;
  int probe = 10;
  pr->add_option("--vprec-threshold", vprec_thr, "Forward-error threshold (number or inf)");
  pr->add_option("--mca-threshold", mca_thr, "Envelope width ratio threshold (number or inf)");
  pr->add_option("--probe", probe, "Iteration where envelope widths are compared");
  pr->add_option("--sections", prune_sections, "Comma-separated sections (default: all)");

  auto* inten = app.add_subcommand("intensity", "Analytic arithmetic intensity");
  std::string kernel, int_precision = "fp64";
  std::vector<std::uint64_t> dims;
  inten->add_option("kernel", kernel)->required();
  inten->add_option("dims", dims)->required();
  inten->add_option("--precision", int_precision);

  auto* met = app.add_subcommand("metrics", "AE / MAE / Gain between two run reports");
  std::string mixed_path, double_path;
  std::optional<double> t_double, t_mixed;
  met->add_option("--mixed", mixed_path)->required();
  met->add_option("--double", double_path)->required();
  met->add_option("--t-double", t_double);
  met->add_option("--t-mixed", t_mixed);

  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "mplab: " << e.what() << '\n';
    return 1;
  }
  g.seed_set = seed_opt->count() > 0;
  const fs::path dir(g.out);

  try {
    if (solve->parsed()) {
      const auto c = load(g);
      solver::RunReport r;
      try {
        r = lab::run_solve(c);
      } catch (const solver::OperatorNotSpd& e) {
        err << "mplab: " << e.what() << '\n';
        return 3;
      }
      lab::write_file(dir / "report.json", lab::report_to_json(r, c).dump(2) + "\n");
      lab::write_file(dir / "history.csv", lab::history_csv(r));
      out << "iterations " << r.iterations << " converged " << r.converged << " stagnated " << r.stagnated
          << " final " << lab::fmt(r.final_residual()) << '\n';
      return lab::exit_code(r);
    }
    if (sweep->parsed()) {
      const auto c = load(g);
      if (ts.empty()) {
        for (int t = t_min; t <= t_max; ++t) ts.push_back(t);
      }
      const auto rows = lab::vprec_sweep(c, ts, lab::parse_scope(sweep_scope));
      lab::write_file(dir / "vprec_sweep.csv", lab::sweep_csv(rows));
      out << lab::sweep_csv(rows);
      return 0;
    }
    if (mca->parsed()) {
      const auto c = load(g);
      lab::SampleOptions o;
      o.samples = c.samples;
      o.mode = lab::parse_mca_mode(mca_mode);
      o.t = mca_t;
      o.sections = mca_sections.empty() ? lab::scope_sections(lab::parse_scope(mca_scope)) : split_sections(mca_sections);
      if (force_index) o.forced_index = 0;
      const auto s = lab::mca_sample(c, o);
      lab::write_file(dir / "mca_envelope.csv", lab::envelope_csv(s));
      lab::write_file(dir / "mca_samples.csv", lab::samples_csv(s));
      json summary = {{"samples", o.samples},
                      {"mode", mca_mode},
                      {"t", o.t},
                      {"sections", o.sections},
                      {"all_converged", s.all_converged()},
                      {"convergence_ratio", s.convergence_ratio()},
                      {"width_at_10", s.width_at(10)},
                      {"config", lab::to_json(c)}};
      lab::write_file(dir / "mca_summary.json", summary.dump(2) + "\n");
      out << "all converged " << s.all_converged() << " ratio " << lab::fmt(s.convergence_ratio()) << " width@10 "
          << lab::fmt(s.width_at(10)) << '\n';
      return 0;
    }
    if (strat->parsed()) {
      const auto c = load(g);
      const auto res = lab::strategy_matrix(c, load_rows(rows_path, c.ranks));
      lab::write_file(dir / "strategy_matrix.csv", lab::strategy_csv(res));
      out << lab::strategy_csv(res);
      return 0;
    }
    if (dot->parsed()) {
      const auto c = load(g);
      const auto rows = lab::dot2_bench(parse_precision(dot_precision), lab::log_grid(cond_lo, cond_hi, per_decade),
                                        dot_n, trials, c.seed);
      lab::write_file(dir / "dot2_bench.csv", lab::dot2_csv(rows));
      out << lab::dot2_csv(rows);
      return 0;
    }
    if (pr->parsed()) {
      const auto c = load(g);
      lab::PruneOptions o;
      o.vprec_threshold = parse_threshold(vprec_thr);
      o.mca_width_threshold = parse_threshold(mca_thr);
      o.samples = g.samples > 0 ? g.samples : o.samples;
      o.probe_iteration = probe;
      o.sections = split_sections(prune_sections);
      const auto r = lab::prune(c, o);
      const auto j = lab::prune_to_json(r, o);
      lab::write_file(dir / "prune.json", j.dump(2) + "\n");
      out << j["candidates"].dump() << '\n';
      return 0;
    }
    if (inten->parsed()) {
      const auto p = parse_precision(int_precision);
      const auto j = lab::intensity_to_json(lab::intensity(kernel, dims, p), p);
      lab::write_file(dir / "intensity.json", j.dump(2) + "\n");
      out << j.dump() << '\n';
      return 0;
    }
    if (met->parsed()) {
      const auto m = json::parse(lab::read_file(mixed_path));
      const auto d = json::parse(lab::read_file(double_path));
      const auto block = lab::metrics(lab::residuals_from_report(m), lab::residuals_from_report(d), t_double, t_mixed);
      const auto j = lab::metrics_to_json(block);
      lab::write_file(dir / "metrics.json", j.dump(2) + "\n");
      out << "mae " << lab::fmt(block.mae);
      if (block.gain_percent) out << " gain% " << lab::fmt(*block.gain_percent);
      out << '\n';
      return 0;
    }
  } catch (const lab::ConfigError& e) {
    err << "mplab: " << e.what() << '\n';
    return 1;
  } catch (const json::exception& e) {
    err << "mplab: " << e.what() << '\n';
    return 1;
  } catch (const ContractViolation& e) {
    err << "mplab: " << e.what() << '\n';
    return 1;
  } catch (const std::invalid_argument& e) {
    err << "mplab: " << e.what() << '\n';
    return 1;
  } catch (const sem::NumericError& e) {
    err << "mplab: " << e.what() << '\n';
    return 3;
  }
  return 1;
}

}  // namespace mplab::cli
