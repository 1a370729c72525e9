#include "ldebt/pipeline.hpp"

#include <openssl/evp.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"
#include "ldebt/parallel.hpp"

namespace ldebt {

namespace {

constexpr PolicyKind kTunedKinds[] = {PolicyKind::Calendar, PolicyKind::Cusum,
                                      PolicyKind::DebtThreshold, PolicyKind::AlarmRawDebt};

constexpr PolicyKind kEvaluatedKinds[] = {
    PolicyKind::DebtThreshold, PolicyKind::DebtUtility, PolicyKind::HybridUtility,
    PolicyKind::Calendar,      PolicyKind::Cusum,       PolicyKind::AlarmRawDebt,
    PolicyKind::Always,        PolicyKind::Never,
};

constexpr double kBinWidth = 0.5;
constexpr double kBinLow = -3.0;
constexpr double kBinHigh = 10.0;

const RunOptions kLean{false};

std::vector<PolicySpec> grid_for(PolicyKind kind, const ExperimentConfig& cfg, const Calibration& cal) {
  switch (kind) {
    case PolicyKind::Calendar: return calendar_grid(cfg);
    case PolicyKind::Cusum: return cusum_grid(cfg);
    case PolicyKind::DebtThreshold: return debt_threshold_grid(cfg);
    case PolicyKind::AlarmRawDebt: return alarm_grid(cfg, cal.raw_debt_median);
    default: throw std::logic_error("policy kind is not tuned");
  }
}

std::string cell_fields(const ScenarioCell& c) {
  return std::string(to_string(c.regime)) + "," + csv::num(c.shift_prob) + "," + csv::num(c.kappa_cost);
}

ScenarioCell parse_cell(const std::vector<std::string>& row, std::size_t at) {
  return {parse_regime(row.at(at)), csv::to_double(row.at(at + 1)), csv::to_double(row.at(at + 2))};
}

// ---------------------------------------------------------------------------
// Artifact serialization

std::string calibration_csv(const Calibration& cal) {
  std::ostringstream out;
  out << "key,value\n";
  for (const auto& [kind, unit] : cal.units) out << "s0_" << to_string(kind) << ',' << csv::num(unit.value) << '\n';
  out << "raw_debt_median," << csv::num(cal.raw_debt_median) << '\n';
  out << "positive_regrets," << cal.positive_regrets << '\n';
  return out.str();
}

std::string utility_csv(const Calibration& cal) {
  std::ostringstream out;
  out << "group,policy,term,coefficient\n";
  auto emit = [&](PolicyKind kind, const std::map<std::string, UtilityModel>& models) {
    for (const auto& [group, m] : models) {
      for (std::size_t j = 0; j < m.coef.size(); ++j) {
        out << group << ',' << to_string(kind) << ','
            << (j == 0 ? std::string("intercept") : std::string(to_string(m.features[j - 1]))) << ','
            << csv::num(m.coef[j]) << '\n';
      }
    }
  };
  emit(PolicyKind::DebtUtility, cal.debt_models);
  emit(PolicyKind::HybridUtility, cal.hybrid_models);
  return out.str();
}

std::string bins_csv(const Calibration& cal) {
  std::ostringstream out;
  out << "adj_debt_low,adj_debt_high,count,mean_next_regret\n";
  for (const auto& b : cal.debt_regret_bins) {
    out << csv::num(b.lo) << ',' << csv::num(b.hi) << ',' << b.count << ',' << csv::num(b.mean_regret) << '\n';
  }
  return out.str();
}

std::string age_csv(const AgeAdjustment& adj) {
  std::ostringstream out;
  write_age_adjustment(adj, out);
  return out.str();
}

Calibration read_calibration(const std::filesystem::path& dir) {
  Calibration cal;
  {
    std::ifstream in(dir / "age_adjustment.csv");
    cal.adj = read_age_adjustment(in);
  }
  {
    std::ifstream in(dir / "calibration.csv");
    for (const auto& row : csv::read_rows(in, nullptr)) {
      const std::string& k = row.at(0);
      if (k.rfind("s0_", 0) == 0) {
        const auto kind = parse_score_unit(k.substr(3));
        cal.units[kind] = {kind, csv::to_double(row.at(1))};
      } else if (k == "raw_debt_median") {
        cal.raw_debt_median = csv::to_double(row.at(1));
      } else if (k == "positive_regrets") {
        cal.positive_regrets = static_cast<std::size_t>(csv::to_int(row.at(1)));
      }
    }
  }
  {
    std::ifstream in(dir / "utility_models.csv");
    for (const auto& row : csv::read_rows(in, nullptr)) {
      const PolicyKind kind = parse_policy(row.at(1));
      auto& models = kind == PolicyKind::DebtUtility ? cal.debt_models : cal.hybrid_models;
      UtilityModel& m = models[row.at(0)];
      if (row.at(2) != "intercept") m.features.push_back(parse_feature(row.at(2)));
      m.coef.push_back(csv::to_double(row.at(3)));
    }
  }
  return cal;
}

std::string tuned_csv(const TunedTable& tuned) {
  std::ostringstream out;
  out << "regime,shift_prob,kappa,score_unit,policy,grid_index,params,mean_objective,mean_retrains\n";
  for (const auto& [key, e] : tuned) {
    out << cell_fields(key.cell) << ',' << to_string(key.unit) << ',' << to_string(key.kind) << ','
        << e.result.index << ',' << e.spec.describe() << ',' << csv::num(e.result.mean_objective) << ','
        << csv::num(e.result.mean_retrains) << '\n';
  }
  return out.str();
}

TunedTable read_tuned(const std::filesystem::path& dir, const ExperimentConfig& cfg, const Calibration& cal) {
  TunedTable tuned;
  std::map<PolicyKind, std::vector<PolicySpec>> grids;
  for (auto k : kTunedKinds) grids[k] = grid_for(k, cfg, cal);
  std::ifstream in(dir / "tuned_params.csv");
  for (const auto& row : csv::read_rows(in, nullptr)) {
    TunedKey key{parse_cell(row, 0), parse_score_unit(row.at(3)), parse_policy(row.at(4))};
    const auto idx = static_cast<std::size_t>(csv::to_int(row.at(5)));
    const auto& grid = grids.at(key.kind);
    if (idx >= grid.size() || grid[idx].describe() != row.at(6)) {
      throw ManifestMismatch("tuned_params.csv does not match the configured grids");
    }
    tuned[key] = {grid[idx], {idx, csv::to_double(row.at(7)), csv::to_double(row.at(8))}};
  }
  return tuned;
}

std::string per_path_csv(const std::vector<CellEvaluation>& evals) {
  std::ostringstream out;
  out << "regime,shift_prob,kappa,score_unit,policy,path,retrains,objective\n";
  for (const auto& e : evals) {
    for (const auto& [kind, o] : e.outcomes) {
      for (std::size_t j = 0; j < o.objective.size(); ++j) {
        out << cell_fields(e.cell) << ',' << to_string(e.unit) << ',' << to_string(kind) << ',' << j << ','
            << o.retrains[j] << ',' << csv::num(o.objective[j]) << '\n';
      }
    }
  }
  return out.str();
}

std::string per_cell_csv(const std::vector<CellEvaluation>& evals) {
  std::ostringstream out;
  out << "regime,shift_prob,kappa,score_unit,lambda,policy,params,paths,mean_objective,mean_retrains\n";
  for (const auto& e : evals) {
    for (const auto& [kind, o] : e.outcomes) {
      double obj = 0, ret = 0;
      for (std::size_t j = 0; j < o.objective.size(); ++j) {
        obj += o.objective[j];
        ret += o.retrains[j];
      }
      const auto n = static_cast<double>(o.objective.size());
      out << cell_fields(e.cell) << ',' << to_string(e.unit) << ',' << csv::num(e.lambda) << ','
          << to_string(kind) << ',' << o.spec.describe() << ',' << o.objective.size() << ','
          << csv::num(obj / n) << ',' << csv::num(ret / n) << '\n';
    }
  }
  return out.str();
}

std::vector<CellEvaluation> read_per_path(const std::filesystem::path& dir) {
  std::map<std::pair<ScenarioCell, ScoreUnitKind>, CellEvaluation,
           decltype([](const auto& a, const auto& b) {
             if (a.first < b.first) return true;
             if (b.first < a.first) return false;
             return a.second < b.second;
           })>
      by_key;
  std::ifstream in(dir / "per_path.csv");
  for (const auto& row : csv::read_rows(in, nullptr)) {
    const ScenarioCell cell = parse_cell(row, 0);
    const ScoreUnitKind unit = parse_score_unit(row.at(3));
    CellEvaluation& e = by_key[{cell, unit}];
    e.cell = cell;
    e.unit = unit;
    PolicyOutcome& o = e.outcomes[parse_policy(row.at(4))];
    if (static_cast<std::size_t>(csv::to_int(row.at(5))) != o.objective.size()) {
      throw IncompleteExperiment("per_path.csv rows are out of order");
    }
    o.retrains.push_back(static_cast<int>(csv::to_int(row.at(6))));
    o.objective.push_back(csv::to_double(row.at(7)));
  }
  std::vector<CellEvaluation> out;
  for (auto& [k, e] : by_key) out.push_back(std::move(e));
  return out;
}

std::string fmt_opt(double v) { return std::isnan(v) ? "NA" : csv::num(v); }

std::string report_rows_csv(const std::vector<ReportRow>& rows) {
  std::ostringstream out;
  out << "policy,benchmark,score_unit,wins,cells,mean_rel,ci_low,ci_high,median_rel,iqr_low,iqr_high\n";
  for (const auto& r : rows) {
    out << to_string(r.policy) << ',' << to_string(r.benchmark) << ',' << to_string(r.unit) << ','
        << r.wins << ',' << r.cells << ',' << fmt_opt(r.mean_rel) << ',' << fmt_opt(r.ci_low) << ','
        << fmt_opt(r.ci_high) << ',' << fmt_opt(r.median_rel) << ',' << fmt_opt(r.iqr_low) << ','
        << fmt_opt(r.iqr_high) << '\n';
  }
  return out.str();
}

std::string cell_rows_csv(const std::vector<CellComparisonRow>& rows) {
  std::ostringstream out;
  out << "regime,shift_prob,kappa,score_unit,policy,benchmark,policy_mean,bench_mean,relative,win\n";
  for (const auto& r : rows) {
    out << cell_fields(r.cell) << ',' << to_string(r.unit) << ',' << to_string(r.policy) << ','
        << to_string(r.benchmark) << ',' << csv::num(r.policy_mean) << ',' << csv::num(r.bench_mean) << ','
        << (r.relative ? csv::num(*r.relative) : std::string("NA")) << ',' << (r.win ? 1 : 0) << '\n';
  }
  return out.str();
}

std::string no_shift_csv(const std::vector<NoShiftRow>& rows) {
  std::ostringstream out;
  out << "score_unit,policy,cells,mean_retrains,mean_objective\n";
  for (const auto& r : rows) {
    out << to_string(r.unit) << ',' << to_string(r.policy) << ',' << r.cells << ','
        << csv::num(r.mean_retrains) << ',' << csv::num(r.mean_objective) << '\n';
  }
  return out.str();
}

// ---------------------------------------------------------------------------
// Manifest

constexpr Stage kStages[] = {Stage::Calibrate, Stage::Tune, Stage::Evaluate, Stage::Report};

std::vector<std::string> stage_files(Stage s) {
  switch (s) {
    case Stage::Calibrate:
      return {"age_adjustment.csv", "calibration.csv", "utility_models.csv", "calibration_debt_regret.csv"};
    case Stage::Tune: return {"tuned_params.csv"};
    case Stage::Evaluate: return {"per_path.csv", "per_cell.csv"};
    case Stage::Report:
      return {"table1_primary.csv", "table1_sensitivity.csv", "cell_comparisons.csv", "no_shift_summary.csv"};
  }
  return {};
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw StageError("missing artifact " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

class Manifest {
 public:
  explicit Manifest(const ExperimentConfig& cfg) : dir_(cfg.out_dir) {
    std::filesystem::create_directories(dir_);
    entries_ = read_manifest(dir_);
    const std::string hash = git_blob_hash(cfg.canonical_text());
    if (const auto it = entries_.find("config_hash"); it != entries_.end() && it->second != hash) {
      throw ManifestMismatch("output directory " + dir_.string() +
                             " holds artifacts from a different config (hash " + it->second + ")");
    }
    entries_["config_hash"] = hash;
    std::istringstream lines(cfg.canonical_text());
    std::string line;
    while (std::getline(lines, line)) {
      const auto eq = line.find('=');
      entries_["config." + line.substr(0, eq)] = line.substr(eq + 1);
    }
    entries_["seed_fanout"] =
        "stream_seed(seed; cell_key(regime,shift_prob,kappa), purpose{0=calibration,1=tuning,"
        "2=evaluation}, path_index, role{0=init,1=warmup,2=regime,3=update,4=monitor,5=eval}, period)";
  }

  void require(Stage s) const {
    const auto it = entries_.find("stage." + std::string(to_string(s)));
    if (it == entries_.end() || it->second != "done") {
      throw StageError("stage '" + std::string(to_string(s)) + "' has not completed in " + dir_.string());
    }
    for (const auto& f : stage_files(s)) {
      const auto h = entries_.find("file." + f);
      if (h == entries_.end() || git_blob_hash(read_file(dir_ / f)) != h->second) {
        throw ManifestMismatch("artifact " + f + " does not match the manifest");
      }
    }
  }

  void write(const std::string& name, const std::string& content) {
    std::ofstream out(dir_ / name, std::ios::binary);
    out << content;
    if (!out) throw StageError("cannot write " + (dir_ / name).string());
    entries_["file." + name] = git_blob_hash(content);
  }

  void complete(Stage s) {
    bool later = false;
    for (Stage other : kStages) {
      if (later) {
        entries_.erase("stage." + std::string(to_string(other)));
        for (const auto& f : stage_files(other)) {
          entries_.erase("file." + f);
          std::filesystem::remove(dir_ / f);
        }
      }
      if (other == s) later = true;
    }
    entries_["stage." + std::string(to_string(s))] = "done";
    save();
  }

  void invalidate(Stage s) {
    entries_.erase("stage." + std::string(to_string(s)));
    save();
  }

 private:
  void save() const {
    std::ofstream out(dir_ / "manifest.txt", std::ios::binary);
    for (const auto& [k, v] : entries_) out << k << '=' << v << '\n';
  }

  std::filesystem::path dir_;
  std::map<std::string, std::string> entries_;
};

}  // namespace

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::Calibrate: return "calibrate";
    case Stage::Tune: return "tune";
    case Stage::Evaluate: return "evaluate";
    case Stage::Report: return "report";
  }
  return "?";
}

std::string git_blob_hash(const std::string& content) {
  const std::string header = "blob " + std::to_string(content.size()) + '\0';
  std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr);
  EVP_DigestUpdate(ctx, header.data(), header.size());
  EVP_DigestUpdate(ctx, content.data(), content.size());
  EVP_DigestFinal_ex(ctx, digest.data(), &len);
  EVP_MD_CTX_free(ctx);
  static constexpr char kHex[] = "0123456789abcdef";
  std::string hex;
  for (unsigned i = 0; i < len; ++i) {
    const unsigned char b = digest[i];
    hex += kHex[b >> 4];
    hex += kHex[b & 15];
  }
  return hex;
}

std::map<std::string, std::string> read_manifest(const std::filesystem::path& out_dir) {
  std::map<std::string, std::string> m;
  std::ifstream in(out_dir / "manifest.txt");
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq != std::string::npos) m[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return m;
}

std::string utility_group(const ExperimentConfig& cfg, const ScenarioCell& cell) {
  if (cfg.utility_pooling == UtilityPooling::Cell) {
    return std::string(to_string(cell.regime)) + ":" + csv::num(cell.shift_prob) + ":" +
           csv::num(cell.kappa_cost);
  }
  return std::string(to_string(cell.regime));
}

Calibration calibrate(const ExperimentConfig& cfg) {
  const auto cells = cfg.all_cells();
  const auto n_paths = static_cast<std::size_t>(cfg.paths_calibration);
  const std::size_t n_items = cells.size() * n_paths;
  const AgeAdjustment identity = AgeAdjustment::identity();
  auto path_for = [&](std::size_t item) {
    return generate_path(cells[item / n_paths], cfg.master_seed, item % n_paths, PathPurpose::Calibration,
                         cfg.scenario);
  };

  // Pass 1: stable never-retrain runs fix the age adjustment.
  std::vector<std::vector<MonitoringRecord>> stable_records(n_items);
  parallel_for(n_items, cfg.jobs, [&](std::size_t item) {
    if (cells[item / n_paths].regime != RegimeKind::NoShift) return;
    const PathData path = path_for(item);
    stable_records[item] = run_policy(path, PolicySpec::never(), identity, kDefaultPrior, 0.0, kLean).records;
  });
  Calibration cal;
  std::vector<AgeDebt> stable;
  std::vector<double> stable_raw;
  for (const auto& recs : stable_records) {
    for (const auto& r : recs) {
      stable.push_back({r.age, r.raw_debt});
      stable_raw.push_back(r.raw_debt);
    }
  }
  stable_records = {};
  cal.adj = fit_age_adjustment(stable, {kSigmaFloor, cfg.age_smoothing_window});
  cal.raw_debt_median = quantile(stable_raw, 0.5);
  if (!(cal.raw_debt_median > 0)) throw CalibrationError("stable raw debt median is not positive");

  // Pass 2: calibration runs under the adjustment supply regrets and utility rows.
  const std::vector<PolicySpec> runs =
      cfg.calibration_runs == CalibrationRuns::CalendarGrid ? calendar_grid(cfg)
                                                            : std::vector<PolicySpec>{PolicySpec::never()};
  const auto debt_features = debt_utility_features();
  const auto hybrid_features = hybrid_utility_features();
  struct ItemOut {
    std::vector<double> regrets;
    UtilityAccumulator debt;
    UtilityAccumulator hybrid;
    std::vector<std::pair<double, double>> debt_regret;  // (adj_debt_t, regret_{t+1}) under never
  };
  std::vector<std::optional<ItemOut>> outs(n_items);
  parallel_for(n_items, cfg.jobs, [&](std::size_t item) {
    const ScenarioCell& cell = cells[item / n_paths];
    const PathData path = path_for(item);
    const ShadowTrace trace = compute_shadow_trace(path);
    ItemOut out{{}, UtilityAccumulator(debt_features), UtilityAccumulator(hybrid_features), {}};
    for (const auto& spec : runs) {
      const auto tr = run_policy(path, trace, spec, cal.adj, 0.0, kLean);
      if (cell.regime != RegimeKind::NoShift) {
        for (std::size_t i = 0; i < tr.shadow_score.size(); ++i) {
          out.regrets.push_back(one_period_regret(tr.shadow_score[i], tr.deployed_score[i]));
        }
      }
      accumulate_utility_rows(tr, cfg.utility_target, out.debt);
      accumulate_utility_rows(tr, cfg.utility_target, out.hybrid);
      if (spec.kind == PolicyKind::Never ||
          (spec.kind == PolicyKind::Calendar &&
           std::get<CalendarParams>(spec.params).period > cfg.scenario.horizon)) {
        for (std::size_t i = 0; i + 1 < tr.records.size(); ++i) {
          out.debt_regret.emplace_back(tr.records[i].adj_debt,
                                       one_period_regret(tr.shadow_score[i + 1], tr.deployed_score[i + 1]));
        }
      }
    }
    outs[item] = std::move(out);
  });

  std::vector<double> regrets;
  std::map<std::string, UtilityAccumulator> debt_acc, hybrid_acc;
  std::map<long, Calibration::Bin> bins;
  for (std::size_t item = 0; item < n_items; ++item) {
    const ItemOut& out = *outs[item];
    regrets.insert(regrets.end(), out.regrets.begin(), out.regrets.end());
    const std::string group = utility_group(cfg, cells[item / n_paths]);
    debt_acc.try_emplace(group, debt_features).first->second.merge(out.debt);
    hybrid_acc.try_emplace(group, hybrid_features).first->second.merge(out.hybrid);
    for (const auto& [d, r] : out.debt_regret) {
      const double a = std::clamp(d, kBinLow, kBinHigh - 1e-9);
      const long b = static_cast<long>(std::floor((a - kBinLow) / kBinWidth));
      auto& bin = bins[b];
      bin.lo = kBinLow + b * kBinWidth;
      bin.hi = bin.lo + kBinWidth;
      ++bin.count;
      bin.mean_regret += r;
    }
  }
  for (auto& [b, bin] : bins) {
    bin.mean_regret /= static_cast<double>(bin.count);
    cal.debt_regret_bins.push_back(bin);
  }

  for (auto kind : kAllScoreUnits) cal.units[kind] = score_unit(regrets, kind);
  cal.positive_regrets = static_cast<std::size_t>(
      std::count_if(regrets.begin(), regrets.end(), [](double r) { return r > 0; }));
  for (const auto& [group, acc] : debt_acc) cal.debt_models[group] = acc.fit();
  for (const auto& [group, acc] : hybrid_acc) cal.hybrid_models[group] = acc.fit();
  return cal;
}

TunedTable tune_all(const ExperimentConfig& cfg, const Calibration& cal) {
  const auto selected = cfg.selected_cells();
  const auto n_paths = static_cast<std::size_t>(cfg.paths_tuning);
  const bool pool_stable = cfg.no_shift_tuning == NoShiftTuning::Pooled;

  // Tuning pool per selected cell: the cell itself, or for no-shift cells under
  // pooled tuning every declared cell with the same cost ratio.
  std::vector<std::vector<ScenarioCell>> pools;
  std::vector<ScenarioCell> cells;
  for (const auto& cell : selected) {
    std::vector<ScenarioCell> pool{cell};
    if (pool_stable && cell.regime == RegimeKind::NoShift) {
      pool.clear();
      for (const auto& other : cfg.all_cells()) {
        if (other.kappa_cost == cell.kappa_cost) pool.push_back(other);
      }
    }
    cells.insert(cells.end(), pool.begin(), pool.end());
    pools.push_back(std::move(pool));
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  auto index_of = [&](const ScenarioCell& c) {
    return static_cast<std::size_t>(std::lower_bound(cells.begin(), cells.end(), c) - cells.begin());
  };

  std::vector<std::pair<PolicyKind, std::vector<PolicySpec>>> grids;
  std::vector<PolicySpec> flat;
  for (auto k : kTunedKinds) {
    grids.emplace_back(k, grid_for(k, cfg, cal));
    flat.insert(flat.end(), grids.back().second.begin(), grids.back().second.end());
  }

  // summaries[item][member]
  std::vector<std::vector<RunSummary>> summaries(cells.size() * n_paths);
  parallel_for(summaries.size(), cfg.jobs, [&](std::size_t item) {
    const PathData path = generate_path(cells[item / n_paths], cfg.master_seed, item % n_paths,
                                        PathPurpose::Tuning, cfg.scenario);
    const ShadowTrace trace = compute_shadow_trace(path);
    auto& out = summaries[item];
    out.reserve(flat.size());
    for (const auto& spec : flat) {
      out.push_back(summarize_run(run_policy(path, trace, spec, cal.adj, 0.0, kLean)));
    }
  });

  TunedTable tuned;
  for (std::size_t c = 0; c < selected.size(); ++c) {
    std::size_t offset = 0;
    for (const auto& [kind, grid] : grids) {
      std::vector<std::vector<RunSummary>> per_member(grid.size());
      for (const auto& member_cell : pools[c]) {
        const std::size_t base = index_of(member_cell) * n_paths;
        for (std::size_t m = 0; m < grid.size(); ++m) {
          for (std::size_t j = 0; j < n_paths; ++j) per_member[m].push_back(summaries[base + j][offset + m]);
        }
      }
      for (auto unit : kAllScoreUnits) {
        const double lambda = cal.units.at(unit).lambda(selected[c].kappa_cost);
        const TuneResult r = select_grid_member(per_member, lambda);
        tuned[{selected[c], unit, kind}] = {grid[r.index], r};
      }
      offset += grid.size();
    }
  }
  return tuned;
}

PolicySpec policy_for(PolicyKind kind, const ScenarioCell& cell, ScoreUnitKind unit,
                      const ExperimentConfig& cfg, const Calibration& cal, const TunedTable& tuned) {
  switch (kind) {
    case PolicyKind::Always: return PolicySpec::always();
    case PolicyKind::Never: return PolicySpec::never();
    case PolicyKind::DebtUtility:
      return PolicySpec::utility(kind, cal.debt_models.at(utility_group(cfg, cell)));
    case PolicyKind::HybridUtility:
      return PolicySpec::utility(kind, cal.hybrid_models.at(utility_group(cfg, cell)));
    default: {
      const auto it = tuned.find({cell, unit, kind});
      if (it == tuned.end()) {
        throw IncompleteExperiment("no tuned " + std::string(to_string(kind)) + " for cell " + cell.label());
      }
      return it->second.spec;
    }
  }
}

std::vector<CellEvaluation> evaluate_all(const ExperimentConfig& cfg, const Calibration& cal,
                                         const TunedTable& tuned) {
  const auto cells = cfg.selected_cells();
  const auto n_paths = static_cast<std::size_t>(cfg.paths_evaluation);

  // Distinct runs per cell. Only utility triggers depend on lambda.
  struct RunKey {
    PolicySpec spec;
    double lambda;
  };
  std::vector<std::vector<RunKey>> runs(cells.size());
  std::vector<std::map<std::pair<ScoreUnitKind, PolicyKind>, std::size_t>> run_of(cells.size());
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (auto unit : kAllScoreUnits) {
      const double lambda = cal.units.at(unit).lambda(cells[c].kappa_cost);
      for (auto kind : kEvaluatedKinds) {
        RunKey key{policy_for(kind, cells[c], unit, cfg, cal, tuned),
                   (kind == PolicyKind::DebtUtility || kind == PolicyKind::HybridUtility) ? lambda : 0.0};
        auto& list = runs[c];
        auto it = std::find_if(list.begin(), list.end(), [&](const RunKey& k) {
          return k.spec == key.spec && k.lambda == key.lambda;
        });
        if (it == list.end()) {
          list.push_back(key);
          it = list.end() - 1;
        }
        run_of[c][{unit, kind}] = static_cast<std::size_t>(it - list.begin());
      }
    }
  }

  std::vector<std::vector<RunSummary>> summaries(cells.size() * n_paths);
  parallel_for(summaries.size(), cfg.jobs, [&](std::size_t item) {
    const std::size_t c = item / n_paths;
    const PathData path = generate_path(cells[c], cfg.master_seed, item % n_paths, PathPurpose::Evaluation,
                                        cfg.scenario);
    const ShadowTrace trace = compute_shadow_trace(path);
    for (const auto& rk : runs[c]) {
      summaries[item].push_back(summarize_run(run_policy(path, trace, rk.spec, cal.adj, rk.lambda, kLean)));
    }
  });

  std::vector<CellEvaluation> evals;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    for (auto unit : kAllScoreUnits) {
      CellEvaluation e;
      e.cell = cells[c];
      e.unit = unit;
      e.lambda = cal.units.at(unit).lambda(cells[c].kappa_cost);
      for (auto kind : kEvaluatedKinds) {
        const std::size_t r = run_of[c].at({unit, kind});
        PolicyOutcome o;
        o.spec = runs[c][r].spec;
        for (std::size_t j = 0; j < n_paths; ++j) {
          const RunSummary& s = summaries[c * n_paths + j][r];
          o.objective.push_back(s.objective(e.lambda));
          o.retrains.push_back(s.retrains);
        }
        e.outcomes[kind] = std::move(o);
      }
      evals.push_back(std::move(e));
    }
  }
  return evals;
}

void run_stage(const ExperimentConfig& cfg, Stage stage) {
  cfg.validate();
  Manifest manifest(cfg);
  const auto& dir = cfg.out_dir;
  switch (stage) {
    case Stage::Calibrate: {
      manifest.invalidate(Stage::Calibrate);
      const Calibration cal = calibrate(cfg);
      manifest.write("age_adjustment.csv", age_csv(cal.adj));
      manifest.write("calibration.csv", calibration_csv(cal));
      manifest.write("utility_models.csv", utility_csv(cal));
      manifest.write("calibration_debt_regret.csv", bins_csv(cal));
      break;
    }
    case Stage::Tune: {
      manifest.require(Stage::Calibrate);
      manifest.invalidate(Stage::Tune);
      const Calibration cal = read_calibration(dir);
      manifest.write("tuned_params.csv", tuned_csv(tune_all(cfg, cal)));
      break;
    }
    case Stage::Evaluate: {
      manifest.require(Stage::Calibrate);
      manifest.require(Stage::Tune);
      manifest.invalidate(Stage::Evaluate);
      const Calibration cal = read_calibration(dir);
      const TunedTable tuned = read_tuned(dir, cfg, cal);
      const auto evals = evaluate_all(cfg, cal, tuned);
      manifest.write("per_path.csv", per_path_csv(evals));
      manifest.write("per_cell.csv", per_cell_csv(evals));
      break;
    }
    case Stage::Report: {
      manifest.require(Stage::Evaluate);
      manifest.invalidate(Stage::Report);
      const auto evals = read_per_path(dir);
      const auto cells = cfg.selected_cells();
      const auto comparisons = table1_comparisons();
      SummarizeOptions opts;
      opts.bootstrap_b = static_cast<std::size_t>(cfg.bootstrap_b);
      opts.bootstrap_seed = cfg.master_seed;
      opts.aggregation = cfg.aggregation;
      std::vector<ReportRow> primary, sensitivity;
      std::vector<CellComparisonRow> cell_rows;
      std::vector<NoShiftRow> no_shift;
      for (auto unit : kAllScoreUnits) {
        Report r = summarize(evals, cells, unit, comparisons, opts);
        if (unit == cfg.score_unit) primary = r.rows;
        sensitivity.insert(sensitivity.end(), r.rows.begin(), r.rows.end());
        cell_rows.insert(cell_rows.end(), r.cell_rows.begin(), r.cell_rows.end());
        no_shift.insert(no_shift.end(), r.no_shift.begin(), r.no_shift.end());
      }
      manifest.write("table1_primary.csv", report_rows_csv(primary));
      manifest.write("table1_sensitivity.csv", report_rows_csv(sensitivity));
      manifest.write("cell_comparisons.csv", cell_rows_csv(cell_rows));
      manifest.write("no_shift_summary.csv", no_shift_csv(no_shift));
      break;
    }
  }
  manifest.complete(stage);
}

void run_pipeline(const ExperimentConfig& cfg) {
  for (Stage s : kStages) run_stage(cfg, s);
}

}  // namespace ldebt
