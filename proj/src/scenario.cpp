#include "ldebt/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <tuple>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"

namespace ldebt {

namespace {

bool in_set(double v, std::span<const double> set) {
  return std::any_of(set.begin(), set.end(), [v](double s) { return std::abs(s - v) < 1e-12; });
}

std::uint64_t quantize(double v) { return static_cast<std::uint64_t>(std::llround(v * 1e6)); }

Engine period_stream(const SeedRecord& s, StreamRole role, int period) {
  return make_engine(s.master_seed, {s.cell_key, static_cast<std::uint64_t>(s.purpose),
                                     s.path_index, static_cast<std::uint64_t>(role),
                                     static_cast<std::uint64_t>(period)});
}

}  // namespace

std::string_view to_string(RegimeKind r) {
  switch (r) {
    case RegimeKind::NoShift: return "no_shift";
    case RegimeKind::AbruptCoef: return "abrupt";
    case RegimeKind::VarianceShift: return "variance";
    case RegimeKind::GradualDrift: return "gradual";
  }
  return "?";
}

RegimeKind parse_regime(std::string_view s) {
  for (auto r : {RegimeKind::NoShift, RegimeKind::AbruptCoef, RegimeKind::VarianceShift,
                 RegimeKind::GradualDrift}) {
    if (s == to_string(r)) return r;
  }
  throw ConfigError("unknown regime '" + std::string(s) + "'");
}

void ScenarioCell::validate() const {
  if (!in_set(kappa_cost, kCostRatios)) {
    throw ConfigError("cost ratio " + csv::num(kappa_cost) + " not in the declared set");
  }
  if (regime == RegimeKind::NoShift) {
    if (shift_prob != 0.0) throw ConfigError("no_shift cells require shift_prob = 0");
  } else if (!in_set(shift_prob, kShiftProbs)) {
    throw ConfigError("shift probability " + csv::num(shift_prob) + " not in the declared set");
  }
}

std::uint64_t ScenarioCell::key() const {
  return stream_seed(0x5CE7A210ULL,
                     {static_cast<std::uint64_t>(regime), quantize(shift_prob), quantize(kappa_cost)});
}

std::string ScenarioCell::label() const {
  return std::string(to_string(regime)) + ":" + csv::num(shift_prob) + ":" + csv::num(kappa_cost);
}

bool operator<(const ScenarioCell& a, const ScenarioCell& b) {
  return std::tuple(static_cast<int>(a.regime), a.shift_prob, a.kappa_cost) <
         std::tuple(static_cast<int>(b.regime), b.shift_prob, b.kappa_cost);
}

TrueState evolve_regime(const TrueState& state, RegimeKind regime, double shift_prob, int period,
                        int burnin, Engine& rng, const ScenarioConfig& cfg) {
  TrueState next = state;
  const bool after_burnin = period > burnin;
  std::bernoulli_distribution hazard(std::clamp(shift_prob, 0.0, 1.0));
  switch (regime) {
    case RegimeKind::NoShift:
      break;
    case RegimeKind::AbruptCoef:
      if (after_burnin && !state.shift_done && hazard(rng)) {
        next.beta_t += std::normal_distribution<double>(0.0, cfg.abrupt_sd)(rng);
        next.shift_done = true;
      }
      break;
    case RegimeKind::VarianceShift:
      if (after_burnin && !state.shift_done && hazard(rng)) {
        next.sigma2_t *=
            std::uniform_real_distribution<double>(cfg.variance_low, cfg.variance_high)(rng);
        next.shift_done = true;
      }
      break;
    case RegimeKind::GradualDrift:
      if (after_burnin && !state.drift_active && hazard(rng)) next.drift_active = true;
      if (next.drift_active) {
        next.beta_t += std::normal_distribution<double>(0.0, cfg.drift_sd)(rng);
      }
      break;
  }
  return next;
}

std::vector<Observation> draw_batch(const TrueState& state, int n, Engine& rng) {
  std::normal_distribution<double> std_normal(0.0, 1.0);
  const double sd = std::sqrt(state.sigma2_t);
  std::vector<Observation> out(static_cast<std::size_t>(n));
  for (auto& o : out) {
    o.x = std_normal(rng);
    o.y = state.beta_t * o.x + sd * std_normal(rng);
  }
  return out;
}

PathData generate_path(const ScenarioCell& cell, std::uint64_t master_seed, std::uint64_t path_index,
                       PathPurpose purpose, const ScenarioConfig& cfg) {
  PathData path;
  path.seed_record = {master_seed, cell.key(), purpose, path_index};

  TrueState state;
  {
    Engine init = period_stream(path.seed_record, StreamRole::Init, 0);
    state.beta_t = std::normal_distribution<double>(0.0, cfg.initial_beta_sd)(init);
    state.sigma2_t = cfg.initial_sigma2;
  }
  path.initial = state;
  {
    Engine warm = period_stream(path.seed_record, StreamRole::Warmup, 0);
    path.warmup = draw_batch(state, cfg.warmup, warm);
  }

  path.periods.reserve(static_cast<std::size_t>(cfg.horizon));
  for (int t = 1; t <= cfg.horizon; ++t) {
    Engine regime_rng = period_stream(path.seed_record, StreamRole::Regime, t);
    state = evolve_regime(state, cell.regime, cell.shift_prob, t, cfg.burnin, regime_rng, cfg);

    PeriodData pd;
    pd.truth = state;
    Engine upd = period_stream(path.seed_record, StreamRole::Update, t);
    Engine mon = period_stream(path.seed_record, StreamRole::Monitor, t);
    Engine ev = period_stream(path.seed_record, StreamRole::Eval, t);
    pd.update_batch = draw_batch(state, cfg.update_size, upd);
    pd.monitor_batch = draw_batch(state, cfg.monitor_size, mon);
    pd.eval_batch = draw_batch(state, cfg.eval_size, ev);
    path.periods.push_back(std::move(pd));
  }
  return path;
}

NigParams warm_start(const PathData& path, const NigParams& prior) {
  return update(prior, path.warmup);
}

void write_path_csv(const PathData& path, std::ostream& out) {
  out << "period,role,x,y,beta_true,sigma2_true\n";
  auto rows = [&](int period, std::string_view role, const std::vector<Observation>& batch,
                  const TrueState& s) {
    for (const auto& o : batch) {
      out << period << ',' << role << ',' << csv::num(o.x) << ',' << csv::num(o.y) << ','
          << csv::num(s.beta_t) << ',' << csv::num(s.sigma2_t) << '\n';
    }
  };
  rows(0, "warmup", path.warmup, path.initial);
  for (std::size_t i = 0; i < path.periods.size(); ++i) {
    const auto& pd = path.periods[i];
    const int t = static_cast<int>(i) + 1;
    rows(t, "update", pd.update_batch, pd.truth);
    rows(t, "monitor", pd.monitor_batch, pd.truth);
    rows(t, "eval", pd.eval_batch, pd.truth);
  }
}

}  // namespace ldebt
