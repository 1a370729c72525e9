#include "ldebt/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"

namespace ldebt {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <typename T, typename Parse>
std::vector<T> parse_list(const std::string& key, const std::string& value, Parse parse) {
  std::vector<T> out;
  for (const auto& tok : csv::split(value)) {
    const std::string t = trim(tok);
    if (t.empty()) continue;
    try {
      out.push_back(parse(t));
    } catch (const Error& e) {
      throw ConfigError(key + ": " + e.what());
    }
  }
  if (out.empty()) throw ConfigError(key + " must not be empty");
  return out;
}

std::vector<double> doubles(const std::string& key, const std::string& v) {
  return parse_list<double>(key, v, [](const std::string& t) { return csv::to_double(t); });
}

int to_int(const std::string& key, const std::string& v) {
  try {
    return static_cast<int>(csv::to_int(trim(v)));
  } catch (const Error&) {
    throw ConfigError(key + ": expected an integer, got '" + v + "'");
  }
}

template <typename T, typename F>
std::string join(const std::vector<T>& v, F fmt) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
  return s;
}

std::string num_list(const std::vector<double>& v) {
  return join(v, [](double d) { return csv::num(d); });
}

bool near(double a, double b) { return std::abs(a - b) < 1e-9; }

}  // namespace

void ExperimentConfig::validate() const {
  if (paths_calibration < 1 || paths_tuning < 1 || paths_evaluation < 1) {
    throw ConfigError("path counts must be >= 1");
  }
  if (scenario.horizon < scenario.burnin + 1) throw ConfigError("horizon must exceed burnin");
  if (scenario.warmup < 0 || scenario.update_size < 0 || scenario.monitor_size < 1 ||
      scenario.eval_size < 1) {
    throw ConfigError("batch sizes must be positive");
  }
  if (grid_calendar.empty() || grid_cusum_kref.empty() || grid_cusum_h.empty() ||
      grid_debt_threshold.empty() || grid_alarm_multipliers.empty()) {
    throw ConfigError("tuning grids must be nonempty");
  }
  if (std::find(regimes.begin(), regimes.end(), RegimeKind::NoShift) == regimes.end()) {
    throw ConfigError("regimes must include no_shift (it calibrates the age adjustment)");
  }
  if (bootstrap_b < 1000) throw ConfigError("bootstrap_b must be >= 1000");
  if (jobs < 1) throw ConfigError("jobs must be >= 1");
  for (const auto& c : all_cells()) c.validate();
  if (selected_cells().empty()) throw ConfigError("cell filter '" + cells_filter + "' selects no cells");
}

std::vector<ScenarioCell> ExperimentConfig::all_cells() const {
  std::vector<ScenarioCell> cells;
  for (auto r : regimes) {
    for (double k : kappas) {
      if (r == RegimeKind::NoShift) {
        cells.push_back({r, 0.0, k});
      } else {
        for (double p : shift_probs) cells.push_back({r, p, k});
      }
    }
  }
  std::sort(cells.begin(), cells.end());
  cells.erase(std::unique(cells.begin(), cells.end()), cells.end());
  return cells;
}

std::vector<ScenarioCell> ExperimentConfig::selected_cells() const {
  std::vector<ScenarioCell> out;
  for (const auto& c : all_cells()) {
    if (cell_matches(c, cells_filter)) out.push_back(c);
  }
  return out;
}

bool cell_matches(const ScenarioCell& cell, const std::string& filter) {
  const std::string f = trim(filter);
  if (f.empty() || f == "*") return true;
  for (const auto& pattern : csv::split(f)) {
    const auto parts = csv::split(trim(pattern), ':');
    bool ok = true;
    if (!parts.empty() && parts[0] != "*" && parts[0] != to_string(cell.regime)) ok = false;
    if (ok && parts.size() > 1 && parts[1] != "*" && !near(csv::to_double(parts[1]), cell.shift_prob)) {
      ok = false;
    }
    if (ok && parts.size() > 2 && parts[2] != "*" && !near(csv::to_double(parts[2]), cell.kappa_cost)) {
      ok = false;
    }
    if (ok) return true;
  }
  return false;
}

std::string ExperimentConfig::canonical_text() const {
  std::map<std::string, std::string> kv;
  kv["seed"] = std::to_string(master_seed);
  kv["horizon"] = std::to_string(scenario.horizon);
  kv["warmup"] = std::to_string(scenario.warmup);
  kv["burnin"] = std::to_string(scenario.burnin);
  kv["update_size"] = std::to_string(scenario.update_size);
  kv["monitor_size"] = std::to_string(scenario.monitor_size);
  kv["eval_size"] = std::to_string(scenario.eval_size);
  kv["initial_beta_sd"] = csv::num(scenario.initial_beta_sd);
  kv["initial_sigma2"] = csv::num(scenario.initial_sigma2);
  kv["paths_calibration"] = std::to_string(paths_calibration);
  kv["paths_tuning"] = std::to_string(paths_tuning);
  kv["paths_evaluation"] = std::to_string(paths_evaluation);
  kv["score_unit"] = std::string(to_string(score_unit));
  kv["kappas"] = num_list(kappas);
  kv["regimes"] = join(regimes, [](RegimeKind r) { return std::string(to_string(r)); });
  kv["shift_probs"] = num_list(shift_probs);
  kv["grid_calendar"] = join(grid_calendar, [](int k) { return std::to_string(k); });
  kv["grid_cusum_kref"] = num_list(grid_cusum_kref);
  kv["grid_cusum_h"] = num_list(grid_cusum_h);
  kv["grid_debt_threshold"] = num_list(grid_debt_threshold);
  kv["grid_alarm_multipliers"] = num_list(grid_alarm_multipliers);
  kv["age_smoothing_window"] = std::to_string(age_smoothing_window);
  kv["utility_target"] = utility_target == RegretTarget::NextPeriod ? "next" : "same";
  kv["utility_pooling"] = utility_pooling == UtilityPooling::Family ? "family" : "cell";
  kv["calibration_runs"] = calibration_runs == CalibrationRuns::CalendarGrid ? "calendar_grid" : "never";
  kv["no_shift_tuning"] = no_shift_tuning == NoShiftTuning::Pooled ? "pooled" : "own";
  kv["aggregation"] = std::string(to_string(aggregation));
  kv["bootstrap_b"] = std::to_string(bootstrap_b);
  kv["cells"] = trim(cells_filter).empty() ? "*" : trim(cells_filter);
  std::string out;
  for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
  return out;
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key);
  const std::string value = trim(raw_value);
  if (key == "seed") {
    try {
      master_seed = std::stoull(value);
    } catch (const std::exception&) {
      throw ConfigError("seed: expected an unsigned integer");
    }
  } else if (key == "horizon") {
    scenario.horizon = to_int(key, value);
  } else if (key == "warmup") {
    scenario.warmup = to_int(key, value);
  } else if (key == "burnin") {
    scenario.burnin = to_int(key, value);
  } else if (key == "update_size") {
    scenario.update_size = to_int(key, value);
  } else if (key == "monitor_size") {
    scenario.monitor_size = to_int(key, value);
  } else if (key == "eval_size") {
    scenario.eval_size = to_int(key, value);
  } else if (key == "initial_beta_sd") {
    scenario.initial_beta_sd = csv::to_double(value);
  } else if (key == "initial_sigma2") {
    scenario.initial_sigma2 = csv::to_double(value);
  } else if (key == "paths_calibration") {
    paths_calibration = to_int(key, value);
  } else if (key == "paths_tuning") {
    paths_tuning = to_int(key, value);
  } else if (key == "paths_evaluation") {
    paths_evaluation = to_int(key, value);
  } else if (key == "score_unit") {
    score_unit = parse_score_unit(value);
  } else if (key == "kappas") {
    kappas = doubles(key, value);
  } else if (key == "regimes") {
    regimes = parse_list<RegimeKind>(key, value, [](const std::string& t) { return parse_regime(t); });
  } else if (key == "shift_probs") {
    shift_probs = doubles(key, value);
  } else if (key == "grid_calendar") {
    grid_calendar = parse_list<int>(key, value, [&](const std::string& t) { return to_int(key, t); });
  } else if (key == "grid_cusum_kref") {
    grid_cusum_kref = doubles(key, value);
  } else if (key == "grid_cusum_h") {
    grid_cusum_h = doubles(key, value);
  } else if (key == "grid_debt_threshold") {
    grid_debt_threshold = doubles(key, value);
  } else if (key == "grid_alarm_multipliers") {
    grid_alarm_multipliers = doubles(key, value);
  } else if (key == "age_smoothing_window") {
    age_smoothing_window = to_int(key, value);
  } else if (key == "utility_target") {
    if (value == "next") {
      utility_target = RegretTarget::NextPeriod;
    } else if (value == "same") {
      utility_target = RegretTarget::SamePeriod;
    } else {
      throw ConfigError("utility_target must be next or same");
    }
  } else if (key == "utility_pooling") {
    if (value == "family") {
      utility_pooling = UtilityPooling::Family;
    } else if (value == "cell") {
      utility_pooling = UtilityPooling::Cell;
    } else {
      throw ConfigError("utility_pooling must be family or cell");
    }
  } else if (key == "calibration_runs") {
    if (value == "calendar_grid") {
      calibration_runs = CalibrationRuns::CalendarGrid;
    } else if (value == "never") {
      calibration_runs = CalibrationRuns::Never;
    } else {
      throw ConfigError("calibration_runs must be calendar_grid or never");
    }
  } else if (key == "no_shift_tuning") {
    if (value == "pooled") {
      no_shift_tuning = NoShiftTuning::Pooled;
    } else if (value == "own") {
      no_shift_tuning = NoShiftTuning::Own;
    } else {
      throw ConfigError("no_shift_tuning must be pooled or own");
    }
  } else if (key == "aggregation") {
    aggregation = parse_aggregation(value);
  } else if (key == "bootstrap_b") {
    bootstrap_b = to_int(key, value);
  } else if (key == "cells") {
    cells_filter = value;
  } else if (key == "out") {
    out_dir = value;
  } else if (key == "jobs") {
    jobs = to_int(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

ExperimentConfig load_config(const std::filesystem::path& file, ExperimentConfig base) {
  std::ifstream in(file);
  if (!in) throw ConfigError("cannot open config file " + file.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(file.string() + ":" + std::to_string(lineno) + ": expected key=value");
    }
    base.set(line.substr(0, eq), line.substr(eq + 1));
  }
  return base;
}

std::vector<PolicySpec> calendar_grid(const ExperimentConfig& cfg) {
  std::vector<PolicySpec> g;
  for (int k : cfg.grid_calendar) g.push_back(PolicySpec::calendar(k));
  return g;
}

std::vector<PolicySpec> cusum_grid(const ExperimentConfig& cfg) {
  std::vector<PolicySpec> g;
  for (double k : cfg.grid_cusum_kref) {
    for (double h : cfg.grid_cusum_h) g.push_back(PolicySpec::cusum(k, h));
  }
  return g;
}

std::vector<PolicySpec> debt_threshold_grid(const ExperimentConfig& cfg) {
  std::vector<PolicySpec> g;
  for (double c : cfg.grid_debt_threshold) g.push_back(PolicySpec::debt_threshold(c));
  return g;
}

std::vector<PolicySpec> alarm_grid(const ExperimentConfig& cfg, double raw_debt_median) {
  std::vector<PolicySpec> g;
  for (double m : cfg.grid_alarm_multipliers) g.push_back(PolicySpec::alarm_raw_debt(m * raw_debt_median));
  return g;
}

}  // namespace ldebt
