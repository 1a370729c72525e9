#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "ldebt/nig.hpp"
#include "ldebt/rng.hpp"

namespace ldebt {

enum class RegimeKind { NoShift, AbruptCoef, VarianceShift, GradualDrift };

std::string_view to_string(RegimeKind r);
RegimeKind parse_regime(std::string_view s);

inline constexpr double kShiftProbs[] = {0.02, 0.05, 0.10, 0.20};
inline constexpr double kCostRatios[] = {0.1, 0.25, 0.5, 1.0, 2.0, 4.0};

struct ScenarioCell {
  RegimeKind regime = RegimeKind::NoShift;
  double shift_prob = 0.0;
  double kappa_cost = 1.0;

  /// Checks membership in the declared probability and cost-ratio sets.
  void validate() const;
  /// Stable identity used for RNG keying and sorting; independent of run order.
  std::uint64_t key() const;
  std::string label() const;

  friend bool operator==(const ScenarioCell&, const ScenarioCell&) = default;
};

bool operator<(const ScenarioCell& a, const ScenarioCell& b);

struct TrueState {
  double beta_t = 0.0;
  double sigma2_t = 1.0;
  bool shift_done = false;
  bool drift_active = false;
};

/// Independent RNG substream labels. Each (purpose, path, period, role) gets
/// its own stream.
enum class StreamRole : std::uint64_t { Init = 0, Warmup = 1, Regime = 2, Update = 3, Monitor = 4, Eval = 5 };

/// Which family of paths a path belongs to; calibration, tuning and held-out
/// evaluation paths never share random streams.
enum class PathPurpose : std::uint64_t { Calibration = 0, Tuning = 1, Evaluation = 2 };

struct ScenarioConfig {
  int horizon = 200;  // T
  int warmup = 300;
  int burnin = 20;
  int update_size = 5;
  int monitor_size = 5;
  int eval_size = 40;
  double initial_beta_sd = 1.0;
  double initial_sigma2 = 1.0;
  double abrupt_sd = 2.0;
  double variance_low = 3.0;
  double variance_high = 6.0;
  double drift_sd = 0.15;
};

struct PeriodData {
  std::vector<Observation> update_batch;
  std::vector<Observation> monitor_batch;
  std::vector<Observation> eval_batch;
  TrueState truth;
};

struct SeedRecord {
  std::uint64_t master_seed = 0;
  std::uint64_t cell_key = 0;
  PathPurpose purpose = PathPurpose::Evaluation;
  std::uint64_t path_index = 0;
};

struct PathData {
  TrueState initial;  // state the warm-up sample was drawn under
  std::vector<Observation> warmup;
  std::vector<PeriodData> periods;  // periods[t - 1] holds period t
  SeedRecord seed_record;
};

/// One period of true-parameter evolution. `period` is 1-based.
TrueState evolve_regime(const TrueState& state, RegimeKind regime, double shift_prob, int period,
                        int burnin, Engine& rng, const ScenarioConfig& cfg = {});

/// Draws `n` observations x ~ N(0, 1), y = beta_t x + N(0, sigma2_t).
std::vector<Observation> draw_batch(const TrueState& state, int n, Engine& rng);

PathData generate_path(const ScenarioCell& cell, std::uint64_t master_seed, std::uint64_t path_index,
                       PathPurpose purpose = PathPurpose::Evaluation,
                       const ScenarioConfig& cfg = {});

/// Posterior after the warm-up sample; deployed and shadow both start here.
NigParams warm_start(const PathData& path, const NigParams& prior = kDefaultPrior);

/// CSV dump: period, role, x, y, beta_true, sigma2_true. Warm-up rows use period 0.
void write_path_csv(const PathData& path, std::ostream& out);

}  // namespace ldebt
