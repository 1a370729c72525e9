#pragma once

// Calibrate -> tune -> evaluate -> report. Each stage writes CSV artifacts
// into the output directory and records itself in manifest.txt; later
// stages read those artifacts back, so stages can be rerun individually.

#include <filesystem>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "ldebt/config.hpp"
#include "ldebt/evaluate.hpp"
#include "ldebt/monitor.hpp"
#include "ldebt/policies.hpp"

namespace ldebt {

struct Calibration {
  AgeAdjustment adj;
  std::map<ScoreUnitKind, ScoreUnit> units;
  double raw_debt_median = 0.0;
  std::size_t positive_regrets = 0;
  /// Keyed by utility group (shift family, or cell label under per-cell pooling).
  std::map<std::string, UtilityModel> debt_models;
  std::map<std::string, UtilityModel> hybrid_models;
  /// Binned calibration relationship between adjusted debt and next-period regret.
  struct Bin {
    double lo = 0.0;
    double hi = 0.0;
    std::size_t count = 0;
    double mean_regret = 0.0;
  };
  std::vector<Bin> debt_regret_bins;
};

std::string utility_group(const ExperimentConfig& cfg, const ScenarioCell& cell);

Calibration calibrate(const ExperimentConfig& cfg);

struct TunedKey {
  ScenarioCell cell;
  ScoreUnitKind unit;
  PolicyKind kind;
  friend bool operator<(const TunedKey& a, const TunedKey& b) {
    if (a.cell < b.cell) return true;
    if (b.cell < a.cell) return false;
    return std::tie(a.unit, a.kind) < std::tie(b.unit, b.kind);
  }
};

struct TunedEntry {
  PolicySpec spec;
  TuneResult result;
};

using TunedTable = std::map<TunedKey, TunedEntry>;

/// Tunes Calendar, Cusum, DebtThreshold and AlarmRawDebt per selected cell
/// and score unit.
TunedTable tune_all(const ExperimentConfig& cfg, const Calibration& cal);

/// All eight policies on the held-out paths of every selected cell, for every
/// score unit.
std::vector<CellEvaluation> evaluate_all(const ExperimentConfig& cfg, const Calibration& cal,
                                         const TunedTable& tuned);

/// Policy spec used in a cell under a unit: tuned grid member, or the
/// calibrated utility model, or the parameter-free baselines.
PolicySpec policy_for(PolicyKind kind, const ScenarioCell& cell, ScoreUnitKind unit,
                      const ExperimentConfig& cfg, const Calibration& cal, const TunedTable& tuned);

enum class Stage { Calibrate, Tune, Evaluate, Report };

std::string_view to_string(Stage s);

/// Runs one stage against cfg.out_dir. Throws StageError when a prerequisite
/// stage is missing and ManifestMismatch when the directory holds artifacts
/// from a different config.
void run_stage(const ExperimentConfig& cfg, Stage stage);

/// All four stages in order.
void run_pipeline(const ExperimentConfig& cfg);

/// Git blob hash (SHA-1 of "blob <size>\0" + content), hex.
std::string git_blob_hash(const std::string& content);

/// Parsed manifest.txt: key=value pairs.
std::map<std::string, std::string> read_manifest(const std::filesystem::path& out_dir);

}  // namespace ldebt
