#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "ldebt/evaluate.hpp"
#include "ldebt/policies.hpp"
#include "ldebt/scenario.hpp"

namespace ldebt {

enum class UtilityPooling { Family, Cell };

/// Policies run on calibration paths to collect the score-unit regrets and
/// the utility-model rows: every calendar-grid member, or never-retrain alone.
enum class CalibrationRuns { CalendarGrid, Never };

/// How no-shift cells are tuned: on the pooled tuning paths of every cell with
/// the same cost ratio, or on their own tuning paths.
enum class NoShiftTuning { Pooled, Own };

struct ExperimentConfig {
  std::uint64_t master_seed = 20240126;
  ScenarioConfig scenario;

  int paths_calibration = 20;
  int paths_tuning = 8;
  int paths_evaluation = 100;

  ScoreUnitKind score_unit = ScoreUnitKind::Q75;
  std::vector<double> kappas{std::begin(kCostRatios), std::end(kCostRatios)};
  std::vector<RegimeKind> regimes{RegimeKind::NoShift, RegimeKind::AbruptCoef,
                                  RegimeKind::VarianceShift, RegimeKind::GradualDrift};
  std::vector<double> shift_probs{std::begin(kShiftProbs), std::end(kShiftProbs)};

  std::vector<int> grid_calendar{1, 2, 3, 5, 8, 10, 15, 20, 25, 30, 40, 50, 75, 100, 150, 201};
  std::vector<double> grid_cusum_kref{0, 0.01, 0.02, 0.05, 0.1, 0.2};
  std::vector<double> grid_cusum_h{0.05, 0.1, 0.2, 0.5, 1, 2, 5};
  std::vector<double> grid_debt_threshold{0.5, 1, 1.5, 2, 2.5, 3, 4, 5, 6, 8};
  /// Raw-debt alarm thresholds are these multipliers times the median stable
  /// calibration raw debt.
  std::vector<double> grid_alarm_multipliers{0.5, 1, 1.5, 2, 2.5, 3, 4, 5, 6, 8};

  int age_smoothing_window = 0;
  RegretTarget utility_target = RegretTarget::NextPeriod;
  UtilityPooling utility_pooling = UtilityPooling::Family;
  CalibrationRuns calibration_runs = CalibrationRuns::CalendarGrid;
  NoShiftTuning no_shift_tuning = NoShiftTuning::Pooled;
  Aggregation aggregation = Aggregation::CellMeanRatio;
  int bootstrap_b = 2000;

  /// Comma-separated "regime[:prob[:kappa]]" patterns; "*" matches anything.
  /// Restricts tuning, evaluation and reporting; calibration always uses the
  /// full cell set.
  std::string cells_filter = "*";

  // Run-environment settings; excluded from the canonical text and hash.
  std::filesystem::path out_dir = "results";
  int jobs = 1;

  void validate() const;

  /// Every declared cell, sorted.
  std::vector<ScenarioCell> all_cells() const;
  /// Declared cells that pass the filter, sorted.
  std::vector<ScenarioCell> selected_cells() const;

  /// Sorted key=value lines describing everything that affects outputs.
  std::string canonical_text() const;

  /// Applies one key=value setting; throws ConfigError on unknown keys.
  void set(const std::string& key, const std::string& value);
};

/// Flat key=value text; '#' starts a comment.
ExperimentConfig load_config(const std::filesystem::path& file, ExperimentConfig base = {});

bool cell_matches(const ScenarioCell& cell, const std::string& filter);

/// Tuning grids materialized as policy specs. The alarm grid needs the
/// calibrated raw-debt median.
std::vector<PolicySpec> calendar_grid(const ExperimentConfig& cfg);
std::vector<PolicySpec> cusum_grid(const ExperimentConfig& cfg);
std::vector<PolicySpec> debt_threshold_grid(const ExperimentConfig& cfg);
std::vector<PolicySpec> alarm_grid(const ExperimentConfig& cfg, double raw_debt_median);

}  // namespace ldebt
