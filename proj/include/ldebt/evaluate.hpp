#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ldebt/monitor.hpp"
#include "ldebt/policies.hpp"
#include "ldebt/scenario.hpp"

namespace ldebt {

enum class ScoreUnitKind { Q75, Median, Mean };

std::string_view to_string(ScoreUnitKind k);
ScoreUnitKind parse_score_unit(std::string_view s);
inline constexpr ScoreUnitKind kAllScoreUnits[] = {ScoreUnitKind::Q75, ScoreUnitKind::Median,
                                                   ScoreUnitKind::Mean};

struct ScoreUnit {
  ScoreUnitKind kind = ScoreUnitKind::Q75;
  double value = 1.0;

  double lambda(double kappa_cost) const { return kappa_cost * value; }
};

/// Linear interpolation between order statistics: h = (n - 1) p,
/// q = x[floor h] + (h - floor h) (x[floor h + 1] - x[floor h]).
/// `sorted` must be ascending and nonempty.
double quantile_sorted(std::span<const double> sorted, double p);
double quantile(std::vector<double> values, double p);

double objective(const PolicyTrajectory& traj, double lambda);

/// Retrain count and summed positive regret; objective(lambda) follows from these.
struct RunSummary {
  int retrains = 0;
  double regret_sum = 0.0;

  double objective(double lambda) const { return lambda * retrains + regret_sum; }
};

RunSummary summarize_run(const PolicyTrajectory& traj);

/// Scale from the strictly positive entries of `calibration_regrets`.
/// Throws CalibrationError if none are positive.
ScoreUnit score_unit(std::span<const double> calibration_regrets, ScoreUnitKind kind);

struct TuneResult {
  std::size_t index = 0;
  double mean_objective = 0.0;
  double mean_retrains = 0.0;
};

/// Grid member with the smallest mean objective; ties go to fewer mean
/// retrains, then to the earlier member. per_member[i][j] is member i on
/// tuning path j.
TuneResult select_grid_member(std::span<const std::vector<RunSummary>> per_member, double lambda);

struct TunedPolicy {
  PolicySpec spec;
  TuneResult result;
};

TunedPolicy tune_policy(std::span<const PolicySpec> grid, std::span<const PathData> tuning_paths,
                        const AgeAdjustment& adj, const NigParams& prior, double lambda);

enum class Aggregation { CellMeanRatio, GrandMeanRatio };

std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view s);

/// Paired per-path objectives of a debt policy and a benchmark in one cell.
struct PairedCell {
  std::vector<double> debt;
  std::vector<double> bench;
};

/// mean(debt) / mean(bench); nullopt when the benchmark mean is exactly 0.
std::optional<double> cell_relative(const PairedCell& cell);

/// Aggregate relative objective over cells; cells with an undefined ratio are skipped.
std::optional<double> aggregate_relative(std::span<const PairedCell> cells, Aggregation agg);

struct BootstrapCi {
  double low = 0.0;
  double high = 0.0;
  double point = 0.0;
  std::size_t replicates = 0;
  std::size_t undefined = 0;  // replicates where the ratio was undefined
  bool exhaustive = false;
};

/// Paired bootstrap over paths within each cell; 2.5 / 97.5 percentiles of the
/// aggregate relative objective. When the number of distinct ordered
/// resamples is at most B they are enumerated exactly instead of sampled.
/// The interval is widened if needed so that it contains the point estimate.
BootstrapCi paired_bootstrap_ci(std::span<const PairedCell> cells, std::size_t B, std::uint64_t seed,
                                Aggregation agg = Aggregation::CellMeanRatio);

struct PolicyOutcome {
  PolicySpec spec;
  std::vector<double> objective;  // per held-out path
  std::vector<int> retrains;
};

struct CellEvaluation {
  ScenarioCell cell;
  ScoreUnitKind unit = ScoreUnitKind::Q75;
  double lambda = 0.0;
  std::map<PolicyKind, PolicyOutcome> outcomes;
};

struct Comparison {
  PolicyKind policy;
  PolicyKind benchmark;
};

/// The six comparison rows of the primary table.
std::vector<Comparison> table1_comparisons();

struct ReportRow {
  PolicyKind policy = PolicyKind::DebtThreshold;
  PolicyKind benchmark = PolicyKind::Calendar;
  ScoreUnitKind unit = ScoreUnitKind::Q75;
  int wins = 0;
  int cells = 0;
  int undefined_cells = 0;
  double mean_rel = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  double median_rel = 0.0;
  double iqr_low = 0.0;
  double iqr_high = 0.0;
};

struct CellComparisonRow {
  ScenarioCell cell;
  ScoreUnitKind unit = ScoreUnitKind::Q75;
  PolicyKind policy = PolicyKind::DebtThreshold;
  PolicyKind benchmark = PolicyKind::Calendar;
  double policy_mean = 0.0;
  double bench_mean = 0.0;
  std::optional<double> relative;
  bool win = false;
};

struct NoShiftRow {
  ScoreUnitKind unit = ScoreUnitKind::Q75;
  PolicyKind policy = PolicyKind::Never;
  int cells = 0;
  double mean_retrains = 0.0;
  double mean_objective = 0.0;
};

struct Report {
  std::vector<ReportRow> rows;
  std::vector<CellComparisonRow> cell_rows;
  std::vector<NoShiftRow> no_shift;
};

struct SummarizeOptions {
  std::size_t bootstrap_b = 2000;
  std::uint64_t bootstrap_seed = 0;
  Aggregation aggregation = Aggregation::CellMeanRatio;
};

/// Aggregates one score unit. `expected` lists every cell the experiment
/// declares; any of them missing from `evals` raises IncompleteExperiment.
/// Non-stable cells feed the comparison rows; no-shift cells feed the
/// no-shift table.
Report summarize(std::span<const CellEvaluation> evals, std::span<const ScenarioCell> expected,
                 ScoreUnitKind unit, std::span<const Comparison> comparisons,
                 const SummarizeOptions& opts = {});

}  // namespace ldebt
