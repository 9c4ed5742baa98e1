#pragma once

// Experiment harness: configs, the sweep / sampling / strategy / pruning
// drivers, dot2 benchmark, intensity estimates and residual metrics, plus
// their CSV and JSON artifacts.

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mplab/arith.hpp"
#include "mplab/gs.hpp"
#include "mplab/sem.hpp"
#include "mplab/solver.hpp"

namespace mplab::lab {

using json = nlohmann::ordered_json;

inline constexpr const char* kConfigSchema = "mplab.config/1";
inline constexpr const char* kReportSchema = "mplab.report/1";

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  sem::MeshSpec mesh{2, 2, 2, 4};
  int ranks = 1;
  gs::Mode gs_mode = gs::Mode::tree;
  solver::Preconditioner preconditioner = solver::Preconditioner::jacobi;
  sem::Load load = sem::Load::manufactured;
  solver::PrecisionPolicy policy;
  solver::CgConfig cg;
  arith::SectionMap backends;
  bool perturb_sqrt = true;
  std::uint64_t seed = 0;
  int samples = 20;
};

/// Named policies: fp64, fp32, mixed, dot2, dot2_compensated.
solver::PrecisionPolicy named_policy(std::string_view name);

/// Throws ConfigError on unknown keys, bad values or unknown section labels.
ExperimentConfig parse_config(const json& j);
ExperimentConfig load_config(const std::filesystem::path& path);
json to_json(const ExperimentConfig& c);

/// Outcome of a solve mapped to the CLI exit code: 0 converged, 2 stagnated
/// or iteration limit, 3 breakdown.
int exit_code(const solver::RunReport& r);

/// One PCG solve under the config. OperatorNotSpd propagates.
solver::RunReport run_solve(const ExperimentConfig& c, std::uint64_t sample_index = 0);

json report_to_json(const solver::RunReport& r, const ExperimentConfig& c);
/// Columns: iter, rtr, beta, pap.
std::string history_csv(const solver::RunReport& r);

enum class Scope { whole, cg_only };
Scope parse_scope(std::string_view s);
std::string_view to_string(Scope s);
std::vector<std::string> scope_sections(Scope s);

struct SweepRow {
  int t = 0;
  double final_residual = 0.0;
  int iterations = 0;
  bool converged = false;
  bool stagnated = false;
  std::string error;
};

/// One solve per t with Vprec(t, 11) on the scope's sections. The config's
/// cg settings fix the iteration budget and stopping rule.
std::vector<SweepRow> vprec_sweep(const ExperimentConfig& c, const std::vector<int>& ts, Scope scope);
/// Columns: t, final_residual, iterations, converged, stagnated, error.
std::string sweep_csv(const std::vector<SweepRow>& rows);

enum class McaMode { rr, mca };
McaMode parse_mca_mode(std::string_view s);

struct SampleSet {
  std::vector<solver::RunReport> runs;
  // Envelope of sqrt(rtr) per iteration, truncated to the shortest run.
  std::vector<double> mean, min, max;
  /// max - min at 1-based iteration k (0 when past the envelope).
  double width_at(int k) const;
  /// max/min over the final residuals of the converged runs.
  double convergence_ratio() const;
  bool all_converged() const;
};

struct SampleOptions {
  int samples = 20;
  McaMode mode = McaMode::rr;
  int t = 23;
  std::vector<std::string> sections;
  /// Every sample uses this sample index instead of 0..S-1.
  std::optional<std::uint64_t> forced_index;
};

/// S solves with independent noise streams. Breakdowns are kept in `runs`.
SampleSet mca_sample(const ExperimentConfig& c, const SampleOptions& o);
/// Columns: iter, mean, min, max.
std::string envelope_csv(const SampleSet& s);
/// Columns: sample, iter, residual.
std::string samples_csv(const SampleSet& s);

struct StrategyRow {
  std::string name;
  solver::PrecisionPolicy policy;
  gs::Mode gs_mode = gs::Mode::sequential;
  int ranks = 8;
  solver::Preconditioner preconditioner = solver::Preconditioner::jacobi;
};

struct StrategyResult {
  StrategyRow row;
  std::string outcome;  // converges | stagnates | iteration_limit | breakdown | not_spd | error
  int iterations = 0;
  double final_residual = 0.0;
};

/// fp64 baseline, then the three rows of the mixed-strategy comparison:
/// fp32 ops with fp64 GS and reductions, all fp32, and fp32 with dot2 local
/// reductions combined in fp32.
std::vector<StrategyRow> default_strategy_rows(int ranks);
std::vector<StrategyResult> strategy_matrix(const ExperimentConfig& base, const std::vector<StrategyRow>& rows);
/// Columns: name, ops, gso_precision, gso_mode, dot, reduce, ranks, preconditioner, outcome, iterations, final_residual.
std::string strategy_csv(const std::vector<StrategyResult>& rows);

struct Dot2Row {
  double cond = 0.0;
  double achieved_cond = 0.0;
  double relerr_plain = 0.0;
  double relerr_dot2 = 0.0;
  double relerr_wide = 0.0;
  std::string note;
};

/// Log-spaced grid 10^lo .. 10^hi with `per_decade` points per decade.
std::vector<double> log_grid(int lo, int hi, int per_decade = 1);

/// Median relative errors over `trials` generated problems per grid point.
/// Rows beyond the reachable condition number carry a note and NaN errors.
std::vector<Dot2Row> dot2_bench(Precision precision, const std::vector<double>& conds, int n, int trials,
                                std::uint64_t seed);
/// Columns: cond, achieved_cond, relerr_plain, relerr_dot2, relerr_wide, note.
std::string dot2_csv(const std::vector<Dot2Row>& rows);

struct PruneOptions {
  double vprec_threshold = 1e-6;
  double mca_width_threshold = 10.0;
  int samples = 5;
  int probe_iteration = 10;
  std::vector<std::string> sections;  // empty: every section
};

struct PruneEntry {
  std::string section;
  double forward_error = 0.0;  // relative solution difference to the fp64 run
  bool stage1_pass = false;
  double width_ratio = 0.0;  // envelope width / reference width at the probe
  bool stage2_run = false;
  bool stage2_pass = false;
};

struct PruneResult {
  double reference_width = 0.0;  // RR on the CG-loop kernels
  std::vector<PruneEntry> entries;
  std::vector<std::string> candidates;
};

/// Stage 1: Vprec(single) on one section; keep if the relative solution
/// difference to the IEEE run is <= vprec_threshold. Stage 2: RR(23) on that
/// section with `samples` samples; keep if its envelope width at the probe
/// iteration is <= mca_width_threshold times the width of RR(23) on all
/// CG-loop kernels.
PruneResult prune(const ExperimentConfig& c, const PruneOptions& o);
json prune_to_json(const PruneResult& r, const PruneOptions& o);

struct Intensity {
  std::string kernel;
  std::uint64_t flops = 0;
  std::uint64_t bytes = 0;
  double intensity = 0.0;
};

/// Analytic counts. mxm takes {m, n, k}; glsc3 and add2s take {n};
/// local_grad3 and ax take {N} or {N, E} (degree, elements).
Intensity intensity(std::string_view kernel, const std::vector<std::uint64_t>& dims, Precision precision);
json intensity_to_json(const Intensity& i, Precision precision);

struct MetricBlock {
  std::vector<double> ae_history;
  double mae = 0.0;
  bool truncated = false;
  std::optional<double> gain_percent;
};

/// AE_i = |m_i - d_i| over the common prefix. Throws ContractViolation on an
/// empty history.
MetricBlock metrics(const std::vector<double>& mixed, const std::vector<double>& dbl,
                    std::optional<double> t_double = {}, std::optional<double> t_mixed = {});
/// (T_double - T_mixed) / T_double * 100.
double gain_percent(double t_double, double t_mixed);
json metrics_to_json(const MetricBlock& m);
MetricBlock metrics_from_json(const json& j);

/// Residual histories (sqrt(rtr)) from a stored report.
std::vector<double> residuals_from_report(const json& report);

/// %.17g
std::string fmt(double v);

void write_file(const std::filesystem::path& p, const std::string& content);
std::string read_file(const std::filesystem::path& p);

}  // namespace mplab::lab
