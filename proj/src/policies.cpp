#include "ldebt/policies.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"

namespace ldebt {

namespace {

constexpr PolicyKind kAllKinds[] = {
    PolicyKind::DebtThreshold, PolicyKind::DebtUtility, PolicyKind::HybridUtility,
    PolicyKind::Calendar,      PolicyKind::Cusum,       PolicyKind::AlarmRawDebt,
    PolicyKind::Always,        PolicyKind::Never,
};

constexpr UtilityFeature kAllFeatures[] = {
    UtilityFeature::PosAdjDebt, UtilityFeature::Age,         UtilityFeature::ScoreGap,
    UtilityFeature::MeanGap,    UtilityFeature::ResidExceed, UtilityFeature::RawDebt,
};

// Mutable per-run state; confined to a single run_policy call.
struct RunState {
  NigParams deployed;
  int applied_at = 1;
  bool pending = false;
  double cusum = 0.0;
};

bool trigger(const PolicySpec& spec, const MonitoringRecord& rec, double lambda, RunState& st) {
  switch (spec.kind) {
    case PolicyKind::Never:
      return false;
    case PolicyKind::Always:
      return true;
    case PolicyKind::DebtThreshold:
      return decide_debt_threshold(rec, std::get<ThresholdParams>(spec.params).c);
    case PolicyKind::AlarmRawDebt:
      return rec.raw_debt > std::get<ThresholdParams>(spec.params).c;
    case PolicyKind::Calendar:
      return rec.age + 1 >= std::get<CalendarParams>(spec.params).period;
    case PolicyKind::Cusum: {
      const auto& p = std::get<CusumParams>(spec.params);
      st.cusum = cusum_step(st.cusum, rec.score_gap, p.k_ref);
      return st.cusum > p.h;
    }
    case PolicyKind::DebtUtility:
    case PolicyKind::HybridUtility:
      return predict_regret(std::get<UtilityModel>(spec.params), rec) > lambda;
  }
  return false;
}

}  // namespace

std::string_view to_string(PolicyKind k) {
  switch (k) {
    case PolicyKind::DebtThreshold: return "debt_threshold";
    case PolicyKind::DebtUtility: return "debt_utility";
    case PolicyKind::HybridUtility: return "hybrid_utility";
    case PolicyKind::Calendar: return "calendar";
    case PolicyKind::Cusum: return "cusum";
    case PolicyKind::AlarmRawDebt: return "alarm_raw_debt";
    case PolicyKind::Always: return "always";
    case PolicyKind::Never: return "never";
  }
  return "?";
}

PolicyKind parse_policy(std::string_view s) {
  for (auto k : kAllKinds) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown policy '" + std::string(s) + "'");
}

std::string_view to_string(UtilityFeature f) {
  switch (f) {
    case UtilityFeature::PosAdjDebt: return "pos_adj_debt";
    case UtilityFeature::Age: return "age";
    case UtilityFeature::ScoreGap: return "score_gap";
    case UtilityFeature::MeanGap: return "mean_gap";
    case UtilityFeature::ResidExceed: return "resid_exceed";
    case UtilityFeature::RawDebt: return "raw_debt";
  }
  return "?";
}

UtilityFeature parse_feature(std::string_view s) {
  for (auto f : kAllFeatures) {
    if (s == to_string(f)) return f;
  }
  throw ConfigError("unknown utility feature '" + std::string(s) + "'");
}

double feature_value(UtilityFeature f, const MonitoringRecord& rec) {
  switch (f) {
    case UtilityFeature::PosAdjDebt: return std::max(0.0, rec.adj_debt);
    case UtilityFeature::Age: return static_cast<double>(rec.age);
    case UtilityFeature::ScoreGap: return rec.score_gap;
    case UtilityFeature::MeanGap: return rec.mean_gap;
    case UtilityFeature::ResidExceed: return rec.resid_exceed;
    case UtilityFeature::RawDebt: return rec.raw_debt;
  }
  return 0.0;
}

std::vector<UtilityFeature> debt_utility_features() {
  return {UtilityFeature::PosAdjDebt, UtilityFeature::Age};
}

std::vector<UtilityFeature> hybrid_utility_features() {
  return {UtilityFeature::PosAdjDebt, UtilityFeature::Age,         UtilityFeature::ScoreGap,
          UtilityFeature::MeanGap,    UtilityFeature::ResidExceed, UtilityFeature::RawDebt};
}

double UtilityModel::linear_predictor(const MonitoringRecord& rec) const {
  double eta = coef.at(0);
  for (std::size_t j = 0; j < features.size(); ++j) eta += coef.at(j + 1) * feature_value(features[j], rec);
  return eta;
}

PolicySpec PolicySpec::debt_threshold(double c) {
  if (std::isnan(c)) throw std::invalid_argument("debt threshold must not be NaN");
  return {PolicyKind::DebtThreshold, ThresholdParams{c}};
}

PolicySpec PolicySpec::alarm_raw_debt(double threshold) {
  if (!(threshold > 0)) throw std::invalid_argument("raw debt alarm threshold must be positive");
  return {PolicyKind::AlarmRawDebt, ThresholdParams{threshold}};
}

PolicySpec PolicySpec::calendar(int period) {
  if (period < 1) throw std::invalid_argument("calendar period must be >= 1");
  return {PolicyKind::Calendar, CalendarParams{period}};
}

PolicySpec PolicySpec::cusum(double k_ref, double h) {
  if (!(k_ref >= 0) || !(h > 0)) throw std::invalid_argument("CUSUM needs k_ref >= 0 and h > 0");
  return {PolicyKind::Cusum, CusumParams{k_ref, h}};
}

PolicySpec PolicySpec::utility(PolicyKind kind, UtilityModel model) {
  if (kind != PolicyKind::DebtUtility && kind != PolicyKind::HybridUtility) {
    throw std::invalid_argument("utility spec needs a utility policy kind");
  }
  if (model.coef.size() != model.features.size() + 1) {
    throw std::invalid_argument("utility model coefficient count must be features + 1");
  }
  return {kind, std::move(model)};
}

std::string PolicySpec::describe() const {
  struct Visitor {
    std::string operator()(std::monostate) const { return ""; }
    std::string operator()(const ThresholdParams& p) const { return "c=" + csv::num(p.c); }
    std::string operator()(const CalendarParams& p) const { return "k=" + std::to_string(p.period); }
    std::string operator()(const CusumParams& p) const {
      return "k_ref=" + csv::num(p.k_ref) + ";h=" + csv::num(p.h);
    }
    std::string operator()(const UtilityModel& m) const {
      std::string s;
      for (std::size_t j = 0; j < m.coef.size(); ++j) {
        s += (j ? ";" : "") + std::string(j ? to_string(m.features[j - 1]) : "intercept") + "=" +
             csv::num(m.coef[j]);
      }
      return s;
    }
  };
  return std::visit(Visitor{}, params);
}

ShadowTrace compute_shadow_trace(const PathData& path, const NigParams& prior) {
  ShadowTrace tr;
  UpdateDiagnostics diag;
  tr.warm = update(prior, path.warmup, &diag);
  NigParams shadow = tr.warm;
  tr.after_update.reserve(path.periods.size());
  tr.eval_score.reserve(path.periods.size());
  for (const auto& pd : path.periods) {
    shadow = update(shadow, pd.update_batch, &diag);
    tr.after_update.push_back(shadow);
    tr.eval_score.push_back(mean_log_score(shadow, pd.eval_batch));
  }
  tr.numerical_warnings = diag.beta_clamped ? 1 : 0;
  return tr;
}

PolicyTrajectory run_policy(const PathData& path, const PolicySpec& spec, const AgeAdjustment& adj,
                            const NigParams& prior, double lambda, const RunOptions& opts) {
  return run_policy(path, compute_shadow_trace(path, prior), spec, adj, lambda, opts);
}

PolicyTrajectory run_policy(const PathData& path, const ShadowTrace& shadow, const PolicySpec& spec,
                            const AgeAdjustment& adj, double lambda, const RunOptions& opts) {
  const std::size_t horizon = path.periods.size();
  PolicyTrajectory traj;
  traj.deployed_score.reserve(horizon);
  traj.shadow_score.reserve(horizon);
  traj.records.reserve(horizon);
  if (opts.record_detail) {
    traj.deployed.reserve(horizon);
    traj.shadow_deployed_kl.reserve(horizon);
    traj.detector_start.reserve(horizon);
    traj.detector_end.reserve(horizon);
  }
  traj.numerical_warnings = shadow.numerical_warnings;

  RunState st;
  st.deployed = shadow.warm;
  for (std::size_t i = 0; i < horizon; ++i) {
    const int t = static_cast<int>(i) + 1;
    const PeriodData& pd = path.periods[i];
    const NigParams& shadow_before = i == 0 ? shadow.warm : shadow.after_update[i - 1];

    // (1) apply the action decided last period
    if (st.pending) {
      st.deployed = shadow_before;
      st.applied_at = t;
      st.cusum = 0.0;
      st.pending = false;
      traj.retrain_periods.push_back(t);
    }
    if (opts.record_detail) {
      traj.deployed.push_back(st.deployed);
      traj.shadow_deployed_kl.push_back(kl_nig(shadow_before, st.deployed));
      traj.detector_start.push_back(st.cusum);
    }

    // (2) shadow update, (3) monitoring, (4) evaluation
    const NigParams& shadow_now = shadow.after_update[i];
    MonitoringRecord rec =
        monitoring_features(shadow_now, st.deployed, pd.monitor_batch, t - st.applied_at, adj);
    rec.period = t;
    traj.deployed_score.push_back(mean_log_score(st.deployed, pd.eval_batch));
    traj.shadow_score.push_back(shadow.eval_score[i]);

    // (5) decide; takes effect next period
    st.pending = trigger(spec, rec, lambda, st);
    if (opts.record_detail) traj.detector_end.push_back(st.cusum);
    traj.records.push_back(rec);
  }
  traj.retrain_count = static_cast<int>(traj.retrain_periods.size());
  return traj;
}

bool decide_debt_threshold(const MonitoringRecord& rec, double c) { return rec.adj_debt > c; }

UtilityAccumulator::UtilityAccumulator(std::span<const UtilityFeature> features)
    : features_(features.begin(), features.end()),
      xtx_((features.size() + 1) * (features.size() + 1), 0.0),
      xty_(features.size() + 1, 0.0) {}

void UtilityAccumulator::add(std::span<const double> features, double regret) {
  if (features.size() != features_.size()) {
    throw std::invalid_argument("utility row width does not match the feature list");
  }
  if (!(regret >= 0)) throw std::invalid_argument("utility regret target must be >= 0");
  if (n_ == 0) {
    first_.assign(features.begin(), features.end());
  } else if (!distinct_) {
    distinct_ = !std::equal(features.begin(), features.end(), first_.begin());
  }
  const std::size_t p = xty_.size();
  const double target = std::log1p(regret);
  auto x = [&](std::size_t j) { return j == 0 ? 1.0 : features[j - 1]; };
  for (std::size_t i = 0; i < p; ++i) {
    const double xi = x(i);
    xty_[i] += target * xi;
    for (std::size_t j = 0; j <= i; ++j) xtx_[i * p + j] += xi * x(j);
  }
  ++n_;
}

void UtilityAccumulator::merge(const UtilityAccumulator& other) {
  if (other.features_ != features_) throw std::invalid_argument("merging accumulators with different features");
  if (other.n_ == 0) return;
  if (n_ == 0) {
    first_ = other.first_;
    distinct_ = other.distinct_;
  } else if (!distinct_) {
    distinct_ = other.distinct_ || other.first_ != first_;
  }
  for (std::size_t i = 0; i < xtx_.size(); ++i) xtx_[i] += other.xtx_[i];
  for (std::size_t i = 0; i < xty_.size(); ++i) xty_[i] += other.xty_[i];
  n_ += other.n_;
}

UtilityModel UtilityAccumulator::fit() const {
  const auto p = static_cast<Eigen::Index>(xty_.size());
  if (static_cast<Eigen::Index>(n_) < p) {
    throw UnderdeterminedFit("utility fit needs at least " + std::to_string(p) + " rows, got " +
                             std::to_string(n_));
  }
  if (!distinct_) throw UnderdeterminedFit("utility fit needs two distinct feature rows");
  Eigen::MatrixXd xtx(p, p);
  Eigen::VectorXd xty(p);
  for (Eigen::Index i = 0; i < p; ++i) {
    xty(i) = xty_[static_cast<std::size_t>(i)];
    for (Eigen::Index j = 0; j <= i; ++j) {
      xtx(i, j) = xtx(j, i) = xtx_[static_cast<std::size_t>(i * p + j)];
    }
  }
  xtx.diagonal().array() += 1e-8;
  const Eigen::VectorXd beta = xtx.ldlt().solve(xty);

  UtilityModel m;
  m.features = features_;
  m.coef.assign(beta.data(), beta.data() + beta.size());
  return m;
}

UtilityModel fit_utility_model(std::span<const UtilityRow> rows,
                               std::span<const UtilityFeature> features) {
  UtilityAccumulator acc(features);
  for (const auto& r : rows) acc.add(r.features, r.regret);
  return acc.fit();
}

double predict_regret(const UtilityModel& model, const MonitoringRecord& rec) {
  return std::max(0.0, std::expm1(model.linear_predictor(rec)));
}

double cusum_step(double g_prev, double score_gap, double k_ref) {
  return std::max(0.0, g_prev + std::max(0.0, score_gap) - k_ref);
}

double binary_threshold(double c_churn, double c_wait) {
  if (!(c_churn > 0) || !(c_wait > 0)) throw std::invalid_argument("excess losses must be positive");
  return c_churn / (c_churn + c_wait);
}

double one_period_regret(double shadow_score, double deployed_score) {
  return std::max(0.0, shadow_score - deployed_score);
}

void write_trajectory_csv(const PolicyTrajectory& traj, std::ostream& out) {
  out << "period,age,raw_debt,adj_debt,score_gap,deployed_eval_score,shadow_eval_score,retrain_applied\n";
  std::size_t next_retrain = 0;
  for (std::size_t i = 0; i < traj.records.size(); ++i) {
    const auto& r = traj.records[i];
    bool applied = false;
    if (next_retrain < traj.retrain_periods.size() && traj.retrain_periods[next_retrain] == r.period) {
      applied = true;
      ++next_retrain;
    }
    out << r.period << ',' << r.age << ',' << csv::num(r.raw_debt) << ',' << csv::num(r.adj_debt) << ','
        << csv::num(r.score_gap) << ',' << csv::num(traj.deployed_score[i]) << ','
        << csv::num(traj.shadow_score[i]) << ',' << (applied ? 1 : 0) << '\n';
  }
}

namespace {

template <class Fn>
void for_each_utility_row(const PolicyTrajectory& traj, RegretTarget target, Fn&& fn) {
  const std::size_t offset = target == RegretTarget::NextPeriod ? 1 : 0;
  std::vector<bool> applied(traj.records.size() + 2, false);
  for (int t : traj.retrain_periods) {
    if (t >= 1 && static_cast<std::size_t>(t) < applied.size()) applied[static_cast<std::size_t>(t)] = true;
  }
  for (std::size_t i = 0; i + offset < traj.records.size(); ++i) {
    // records[i] is period i + 1; a retrain applied at i + 2 was decided there.
    if (offset == 1 && applied[i + 2]) continue;
    fn(traj.records[i], one_period_regret(traj.shadow_score[i + offset], traj.deployed_score[i + offset]));
  }
}

}  // namespace

std::vector<UtilityRow> utility_rows(const PolicyTrajectory& traj,
                                     std::span<const UtilityFeature> features, RegretTarget target) {
  std::vector<UtilityRow> rows;
  for_each_utility_row(traj, target, [&](const MonitoringRecord& rec, double regret) {
    UtilityRow r;
    r.features.reserve(features.size());
    for (auto f : features) r.features.push_back(feature_value(f, rec));
    r.regret = regret;
    rows.push_back(std::move(r));
  });
  return rows;
}

void accumulate_utility_rows(const PolicyTrajectory& traj, RegretTarget target, UtilityAccumulator& acc) {
  std::vector<double> x(acc.features().size());
  for_each_utility_row(traj, target, [&](const MonitoringRecord& rec, double regret) {
    for (std::size_t j = 0; j < x.size(); ++j) x[j] = feature_value(acc.features()[j], rec);
    acc.add(x, regret);
  });
}

}  // namespace ldebt
