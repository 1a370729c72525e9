#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "ldebt/monitor.hpp"
#include "ldebt/nig.hpp"
#include "ldebt/scenario.hpp"

namespace ldebt {

enum class PolicyKind {
  DebtThreshold,
  DebtUtility,
  HybridUtility,
  Calendar,
  Cusum,
  AlarmRawDebt,
  Always,
  Never,
};

std::string_view to_string(PolicyKind k);
PolicyKind parse_policy(std::string_view s);

enum class UtilityFeature { PosAdjDebt, Age, ScoreGap, MeanGap, ResidExceed, RawDebt };

std::string_view to_string(UtilityFeature f);
UtilityFeature parse_feature(std::string_view s);
double feature_value(UtilityFeature f, const MonitoringRecord& rec);

/// Feature lists for the two regression-style policies.
std::vector<UtilityFeature> debt_utility_features();
std::vector<UtilityFeature> hybrid_utility_features();

/// Linear model for log(1 + r); coef[0] is the intercept.
struct UtilityModel {
  std::vector<UtilityFeature> features;
  std::vector<double> coef;

  double linear_predictor(const MonitoringRecord& rec) const;
  friend bool operator==(const UtilityModel&, const UtilityModel&) = default;
};

struct ThresholdParams {
  double c = 0.0;
  friend bool operator==(const ThresholdParams&, const ThresholdParams&) = default;
};
struct CalendarParams {
  int period = 1;  // retrain cadence in periods
  friend bool operator==(const CalendarParams&, const CalendarParams&) = default;
};
struct CusumParams {
  double k_ref = 0.0;
  double h = 1.0;
  friend bool operator==(const CusumParams&, const CusumParams&) = default;
};

using PolicyParams =
    std::variant<std::monostate, ThresholdParams, CalendarParams, CusumParams, UtilityModel>;

struct PolicySpec {
  PolicyKind kind = PolicyKind::Never;
  PolicyParams params;

  static PolicySpec debt_threshold(double c);
  static PolicySpec alarm_raw_debt(double threshold);
  static PolicySpec calendar(int period);
  static PolicySpec cusum(double k_ref, double h);
  static PolicySpec utility(PolicyKind kind, UtilityModel model);
  static PolicySpec always() { return {PolicyKind::Always, {}}; }
  static PolicySpec never() { return {PolicyKind::Never, {}}; }

  /// Short parameter string for reports, e.g. "k_ref=0.05;h=0.5".
  std::string describe() const;

  friend bool operator==(const PolicySpec&, const PolicySpec&) = default;
};

struct PolicyTrajectory {
  std::vector<int> retrain_periods;  // periods at which a retrain was applied
  std::vector<double> deployed_score;  // per-period mean eval log score, index t - 1
  std::vector<double> shadow_score;
  std::vector<MonitoringRecord> records;
  std::vector<NigParams> deployed;         // deployed posterior in force during period t
  std::vector<double> shadow_deployed_kl;  // KL(shadow || deployed) right after step (1)
  std::vector<double> detector_start;      // CUSUM statistic after step (1)
  std::vector<double> detector_end;        // CUSUM statistic after step (5)
  int retrain_count = 0;
  int numerical_warnings = 0;
};

/// Shadow evolution depends only on the path, so it is computed once and
/// shared across every policy run on that path.
struct ShadowTrace {
  NigParams warm;
  std::vector<NigParams> after_update;  // shadow after the period-t update
  std::vector<double> eval_score;
  int numerical_warnings = 0;
};

ShadowTrace compute_shadow_trace(const PathData& path, const NigParams& prior = kDefaultPrior);

struct RunOptions {
  /// Fill the per-period posterior and detector vectors (tests and dumps).
  bool record_detail = true;
};

/// Runs one policy over a path with the one-period action lag. Per period t:
/// (1) apply a retrain decided at t-1 (deployed <- shadow, age <- 0, detector
/// reset); (2) update the shadow; (3) monitoring features; (4) evaluation
/// scores; (5) trigger. Spell age is t minus the period the deployment was
/// applied; the warm-start deployment counts as applied at period 1.
PolicyTrajectory run_policy(const PathData& path, const PolicySpec& spec, const AgeAdjustment& adj,
                            const NigParams& prior, double lambda, const RunOptions& opts = {});
PolicyTrajectory run_policy(const PathData& path, const ShadowTrace& shadow, const PolicySpec& spec,
                            const AgeAdjustment& adj, double lambda, const RunOptions& opts = {});

bool decide_debt_threshold(const MonitoringRecord& rec, double c);

struct UtilityRow {
  std::vector<double> features;
  double regret = 0.0;
};

/// Least squares of log(1 + r) on an intercept and the features, via normal
/// equations with 1e-8 ridge jitter on the diagonal.
UtilityModel fit_utility_model(std::span<const UtilityRow> rows,
                               std::span<const UtilityFeature> features);

/// Streaming form of fit_utility_model: keeps only the normal equations.
class UtilityAccumulator {
 public:
  explicit UtilityAccumulator(std::span<const UtilityFeature> features);

  void add(std::span<const double> features, double regret);
  /// Appends another accumulator's rows (same feature list).
  void merge(const UtilityAccumulator& other);
  std::size_t rows() const { return n_; }
  const std::vector<UtilityFeature>& features() const { return features_; }
  UtilityModel fit() const;

 private:
  std::vector<UtilityFeature> features_;
  std::vector<double> xtx_;  // row-major (p x p)
  std::vector<double> xty_;
  std::size_t n_ = 0;
  std::vector<double> first_;
  bool distinct_ = false;
};

double predict_regret(const UtilityModel& model, const MonitoringRecord& rec);

double cusum_step(double g_prev, double score_gap, double k_ref);

/// Two-state Bayes action threshold on the stale probability.
double binary_threshold(double c_churn, double c_wait);

double one_period_regret(double shadow_score, double deployed_score);

/// CSV: period, age, raw_debt, adj_debt, score_gap, deployed_eval_score,
/// shadow_eval_score, retrain_applied.
void write_trajectory_csv(const PolicyTrajectory& traj, std::ostream& out);

enum class RegretTarget { NextPeriod, SamePeriod };

/// Training rows from a calibration trajectory: features of period t paired
/// with the realized evaluation regret of period t+1 (or t). With the
/// next-period target, periods whose decision was to retrain are skipped since
/// their next-period regret is not a regret of waiting.
std::vector<UtilityRow> utility_rows(const PolicyTrajectory& traj,
                                     std::span<const UtilityFeature> features, RegretTarget target);
void accumulate_utility_rows(const PolicyTrajectory& traj, RegretTarget target, UtilityAccumulator& acc);

}  // namespace ldebt
