#include "ldebt/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

#include "ldebt/errors.hpp"
#include "ldebt/rng.hpp"

namespace ldebt {

namespace {

double mean_of(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Weighted mean sum(counts[i] * x[i]) / n, accumulated in index order.
double count_mean(std::span<const double> x, std::span<const int> counts) {
  double s = 0;
  for (std::size_t i = 0; i < x.size(); ++i) s += counts[i] * x[i];
  return s / static_cast<double>(x.size());
}

std::optional<double> aggregate_from_means(std::span<const double> debt_means,
                                           std::span<const double> bench_means, Aggregation agg) {
  if (agg == Aggregation::GrandMeanRatio) {
    const double d = std::accumulate(debt_means.begin(), debt_means.end(), 0.0);
    const double b = std::accumulate(bench_means.begin(), bench_means.end(), 0.0);
    if (b == 0.0) return std::nullopt;
    return d / b;
  }
  double s = 0;
  int n = 0;
  for (std::size_t c = 0; c < debt_means.size(); ++c) {
    if (bench_means[c] == 0.0) continue;
    s += debt_means[c] / bench_means[c];
    ++n;
  }
  if (n == 0) return std::nullopt;
  return s / n;
}

}  // namespace

std::string_view to_string(ScoreUnitKind k) {
  switch (k) {
    case ScoreUnitKind::Q75: return "q75";
    case ScoreUnitKind::Median: return "median";
    case ScoreUnitKind::Mean: return "mean";
  }
  return "?";
}

ScoreUnitKind parse_score_unit(std::string_view s) {
  for (auto k : kAllScoreUnits) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown score unit '" + std::string(s) + "'");
}

std::string_view to_string(Aggregation a) {
  return a == Aggregation::CellMeanRatio ? "cell_mean_ratio" : "grand_mean_ratio";
}

Aggregation parse_aggregation(std::string_view s) {
  if (s == "cell_mean_ratio") return Aggregation::CellMeanRatio;
  if (s == "grand_mean_ratio") return Aggregation::GrandMeanRatio;
  throw ConfigError("unknown aggregation '" + std::string(s) + "'");
}

double quantile_sorted(std::span<const double> sorted, double p) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

double quantile(std::vector<double> values, double p) {
  std::sort(values.begin(), values.end());
  return quantile_sorted(values, p);
}

double objective(const PolicyTrajectory& traj, double lambda) {
  return summarize_run(traj).objective(lambda);
}

RunSummary summarize_run(const PolicyTrajectory& traj) {
  RunSummary s;
  s.retrains = traj.retrain_count;
  for (std::size_t i = 0; i < traj.shadow_score.size(); ++i) {
    s.regret_sum += one_period_regret(traj.shadow_score[i], traj.deployed_score[i]);
  }
  return s;
}

ScoreUnit score_unit(std::span<const double> calibration_regrets, ScoreUnitKind kind) {
  std::vector<double> pos;
  for (double r : calibration_regrets) {
    if (r > 0) pos.push_back(r);
  }
  if (pos.empty()) throw CalibrationError("no positive calibration regrets for the score unit");
  std::sort(pos.begin(), pos.end());
  ScoreUnit u;
  u.kind = kind;
  switch (kind) {
    case ScoreUnitKind::Q75: u.value = quantile_sorted(pos, 0.75); break;
    case ScoreUnitKind::Median: u.value = quantile_sorted(pos, 0.5); break;
    case ScoreUnitKind::Mean: u.value = mean_of(pos); break;
  }
  return u;
}

TuneResult select_grid_member(std::span<const std::vector<RunSummary>> per_member, double lambda) {
  if (per_member.empty()) throw std::invalid_argument("tuning grid is empty");
  TuneResult best;
  bool have = false;
  for (std::size_t i = 0; i < per_member.size(); ++i) {
    const auto& runs = per_member[i];
    if (runs.empty()) throw std::invalid_argument("tuning needs at least one path");
    double obj = 0, ret = 0;
    for (const auto& r : runs) {
      obj += r.objective(lambda);
      ret += r.retrains;
    }
    obj /= static_cast<double>(runs.size());
    ret /= static_cast<double>(runs.size());
    if (!have || obj < best.mean_objective ||
        (obj == best.mean_objective && ret < best.mean_retrains)) {
      best = {i, obj, ret};
      have = true;
    }
  }
  return best;
}

TunedPolicy tune_policy(std::span<const PolicySpec> grid, std::span<const PathData> tuning_paths,
                        const AgeAdjustment& adj, const NigParams& prior, double lambda) {
  std::vector<ShadowTrace> traces;
  traces.reserve(tuning_paths.size());
  for (const auto& p : tuning_paths) traces.push_back(compute_shadow_trace(p, prior));
  std::vector<std::vector<RunSummary>> per_member(grid.size());
  const RunOptions lean{false};
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t j = 0; j < tuning_paths.size(); ++j) {
      per_member[i].push_back(
          summarize_run(run_policy(tuning_paths[j], traces[j], grid[i], adj, lambda, lean)));
    }
  }
  const TuneResult r = select_grid_member(per_member, lambda);
  return {grid[r.index], r};
}

std::optional<double> cell_relative(const PairedCell& cell) {
  const double b = mean_of(cell.bench);
  if (b == 0.0) return std::nullopt;
  return mean_of(cell.debt) / b;
}

std::optional<double> aggregate_relative(std::span<const PairedCell> cells, Aggregation agg) {
  std::vector<double> d, b;
  for (const auto& c : cells) {
    d.push_back(mean_of(c.debt));
    b.push_back(mean_of(c.bench));
  }
  return aggregate_from_means(d, b, agg);
}

BootstrapCi paired_bootstrap_ci(std::span<const PairedCell> cells, std::size_t B, std::uint64_t seed,
                                Aggregation agg) {
  if (B < 1000) throw std::invalid_argument("bootstrap needs B >= 1000");
  if (cells.empty()) throw std::invalid_argument("bootstrap needs at least one cell");
  for (const auto& c : cells) {
    if (c.debt.size() != c.bench.size() || c.debt.empty()) {
      throw std::invalid_argument("paired objectives must be aligned and nonempty");
    }
  }

  BootstrapCi ci;
  {
    std::vector<double> d, b;
    std::vector<int> ones;
    for (const auto& c : cells) {
      ones.assign(c.debt.size(), 1);
      d.push_back(count_mean(c.debt, ones));
      b.push_back(count_mean(c.bench, ones));
    }
    const auto point = aggregate_from_means(d, b, agg);
    if (!point) throw std::invalid_argument("relative objective undefined: benchmark means are 0");
    ci.point = *point;
  }

  // Distinct ordered resamples = prod n_c^n_c, capped to avoid overflow.
  double combos = 1.0;
  for (const auto& c : cells) {
    combos *= std::pow(static_cast<double>(c.debt.size()), static_cast<double>(c.debt.size()));
    if (combos > static_cast<double>(B)) break;
  }
  ci.exhaustive = combos <= static_cast<double>(B);

  std::vector<std::vector<int>> counts(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) counts[c].assign(cells[c].debt.size(), 0);
  std::vector<double> dm(cells.size()), bm(cells.size());
  std::vector<double> stats;

  auto record = [&]() {
    for (std::size_t c = 0; c < cells.size(); ++c) {
      dm[c] = count_mean(cells[c].debt, counts[c]);
      bm[c] = count_mean(cells[c].bench, counts[c]);
    }
    const auto r = aggregate_from_means(dm, bm, agg);
    if (r) {
      stats.push_back(*r);
    } else {
      ++ci.undefined;
    }
  };

  if (ci.exhaustive) {
    // Odometer over every cell's ordered index tuple.
    std::vector<std::vector<std::size_t>> idx(cells.size());
    for (std::size_t c = 0; c < cells.size(); ++c) idx[c].assign(cells[c].debt.size(), 0);
    while (true) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        std::fill(counts[c].begin(), counts[c].end(), 0);
        for (auto i : idx[c]) ++counts[c][i];
      }
      record();
      bool carried = true;
      for (std::size_t c = 0; c < cells.size() && carried; ++c) {
        for (std::size_t k = 0; k < idx[c].size() && carried; ++k) {
          if (++idx[c][k] < idx[c].size()) {
            carried = false;
          } else {
            idx[c][k] = 0;
          }
        }
      }
      if (carried) break;
    }
  } else {
    Engine rng(stream_seed(seed, {0xB007ULL}));
    for (std::size_t rep = 0; rep < B; ++rep) {
      for (std::size_t c = 0; c < cells.size(); ++c) {
        const std::size_t n = counts[c].size();
        std::fill(counts[c].begin(), counts[c].end(), 0);
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        for (std::size_t k = 0; k < n; ++k) ++counts[c][pick(rng)];
      }
      record();
    }
  }

  ci.replicates = stats.size();
  if (stats.empty()) {
    ci.low = ci.high = ci.point;
    return ci;
  }
  std::sort(stats.begin(), stats.end());
  ci.low = std::min(quantile_sorted(stats, 0.025), ci.point);
  ci.high = std::max(quantile_sorted(stats, 0.975), ci.point);
  return ci;
}

std::vector<Comparison> table1_comparisons() {
  return {
      {PolicyKind::DebtThreshold, PolicyKind::Calendar},
      {PolicyKind::DebtThreshold, PolicyKind::Cusum},
      {PolicyKind::DebtUtility, PolicyKind::Calendar},
      {PolicyKind::DebtUtility, PolicyKind::Cusum},
      {PolicyKind::HybridUtility, PolicyKind::Calendar},
      {PolicyKind::HybridUtility, PolicyKind::Cusum},
  };
}

Report summarize(std::span<const CellEvaluation> evals, std::span<const ScenarioCell> expected,
                 ScoreUnitKind unit, std::span<const Comparison> comparisons,
                 const SummarizeOptions& opts) {
  std::map<ScenarioCell, const CellEvaluation*, decltype([](const ScenarioCell& a,
                                                           const ScenarioCell& b) { return a < b; })>
      by_cell;
  for (const auto& e : evals) {
    if (e.unit == unit) by_cell[e.cell] = &e;
  }
  std::vector<ScenarioCell> cells(expected.begin(), expected.end());
  std::sort(cells.begin(), cells.end());
  std::string missing;
  for (const auto& c : cells) {
    if (!by_cell.contains(c)) missing += (missing.empty() ? "" : ", ") + c.label();
  }
  if (!missing.empty()) {
    throw IncompleteExperiment("missing evaluated cells for unit " + std::string(to_string(unit)) +
                               ": " + missing);
  }

  Report report;
  for (const auto& cmp : comparisons) {
    ReportRow row;
    row.policy = cmp.policy;
    row.benchmark = cmp.benchmark;
    row.unit = unit;
    std::vector<PairedCell> paired;
    std::vector<double> rels;
    for (const auto& c : cells) {
      if (c.regime == RegimeKind::NoShift) continue;
      const CellEvaluation& e = *by_cell.at(c);
      const auto pit = e.outcomes.find(cmp.policy);
      const auto bit = e.outcomes.find(cmp.benchmark);
      if (pit == e.outcomes.end() || bit == e.outcomes.end()) {
        throw IncompleteExperiment("cell " + c.label() + " lacks outcomes for " +
                                   std::string(to_string(cmp.policy)) + " or " +
                                   std::string(to_string(cmp.benchmark)));
      }
      PairedCell pc{pit->second.objective, bit->second.objective};
      CellComparisonRow cr;
      cr.cell = c;
      cr.unit = unit;
      cr.policy = cmp.policy;
      cr.benchmark = cmp.benchmark;
      cr.policy_mean = mean_of(pc.debt);
      cr.bench_mean = mean_of(pc.bench);
      cr.relative = cell_relative(pc);
      cr.win = cr.policy_mean < cr.bench_mean;
      report.cell_rows.push_back(cr);

      ++row.cells;
      if (cr.win) ++row.wins;
      if (cr.relative) {
        rels.push_back(*cr.relative);
      } else {
        ++row.undefined_cells;
      }
      paired.push_back(std::move(pc));
    }
    if (!paired.empty() && !rels.empty()) {
      const BootstrapCi ci = paired_bootstrap_ci(paired, opts.bootstrap_b,
                                                 stream_seed(opts.bootstrap_seed,
                                                             {static_cast<std::uint64_t>(cmp.policy),
                                                              static_cast<std::uint64_t>(cmp.benchmark),
                                                              static_cast<std::uint64_t>(unit)}),
                                                 opts.aggregation);
      row.mean_rel = ci.point;
      row.ci_low = ci.low;
      row.ci_high = ci.high;
      std::sort(rels.begin(), rels.end());
      row.median_rel = quantile_sorted(rels, 0.5);
      row.iqr_low = quantile_sorted(rels, 0.25);
      row.iqr_high = quantile_sorted(rels, 0.75);
    } else {
      const double nan = std::nan("");
      row.mean_rel = row.ci_low = row.ci_high = row.median_rel = row.iqr_low = row.iqr_high = nan;
    }
    report.rows.push_back(row);
  }

  // No-shift table: every policy evaluated in the no-shift cells.
  std::map<PolicyKind, NoShiftRow> ns;
  for (const auto& c : cells) {
    if (c.regime != RegimeKind::NoShift) continue;
    for (const auto& [kind, out] : by_cell.at(c)->outcomes) {
      NoShiftRow& r = ns[kind];
      r.unit = unit;
      r.policy = kind;
      ++r.cells;
      r.mean_objective += mean_of(out.objective);
      double ret = 0;
      for (int k : out.retrains) ret += k;
      r.mean_retrains += ret / static_cast<double>(out.retrains.size());
    }
  }
  for (auto& [kind, r] : ns) {
    r.mean_objective /= r.cells;
    r.mean_retrains /= r.cells;
    report.no_shift.push_back(r);
  }
  return report;
}

}  // namespace ldebt
