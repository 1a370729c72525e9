// End-to-end acceptance run: one PASS/FAIL line per criterion, nonzero exit
// if any criterion fails. The desk-scale pipeline runs once for criteria 3-5
// and a second time for criterion 7.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"
#include "ldebt/evaluate.hpp"
#include "ldebt/pipeline.hpp"
#include "ldebt/policies.hpp"
#include "ldebt/selftest.hpp"

using namespace ldebt;
namespace fs = std::filesystem;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;

  void require(bool ok, const std::string& what) {
    if (!ok) pass = false;
    detail += (detail.empty() ? "" : "; ") + what + (ok ? "" : " [failed]");
  }
};

std::string fmt(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::map<std::string, std::string>> read_table(const fs::path& p) {
  std::ifstream in(p);
  std::vector<std::string> header;
  const auto rows = csv::read_rows(in, &header);
  std::vector<std::map<std::string, std::string>> out;
  for (const auto& r : rows) {
    std::map<std::string, std::string> m;
    for (std::size_t i = 0; i < header.size() && i < r.size(); ++i) m[header[i]] = r[i];
    out.push_back(m);
  }
  return out;
}

const std::map<std::string, std::string>& find_row(const std::vector<std::map<std::string, std::string>>& t,
                                                   const std::map<std::string, std::string>& key) {
  for (const auto& r : t) {
    bool ok = true;
    for (const auto& [k, v] : key) ok = ok && r.count(k) && r.at(k) == v;
    if (ok) return r;
  }
  throw std::runtime_error("row not found in report table");
}

// ---------------------------------------------------------------- 1

Verdict exactness() {
  Verdict v;
  const auto t0 = std::chrono::steady_clock::now();
  const auto checks = selftest();
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  for (const char* name :
       {"kl_closed_form_vs_monte_carlo", "sequential_vs_batch_update", "student_t_density_integrates_to_one"}) {
    bool found = false;
    for (const auto& c : checks) {
      if (c.name != name) continue;
      found = true;
      v.require(c.passed, std::string(name) + " " + fmt(c.measured) + "<=" + fmt(c.tolerance));
    }
    if (!found) v.require(false, std::string(name) + " missing");
  }
  v.require(secs < 120.0, "runtime " + fmt(secs) + "s < 120s");
  return v;
}

// ---------------------------------------------------------------- 2

Verdict mechanics() {
  Verdict v;
  const RegimeKind regimes[] = {RegimeKind::AbruptCoef, RegimeKind::VarianceShift, RegimeKind::GradualDrift,
                                RegimeKind::NoShift};
  const AgeAdjustment adj{{0.0}, 0.05};
  const PolicySpec triggered[] = {PolicySpec::debt_threshold(1.0), PolicySpec::cusum(0.0, 0.05),
                                  PolicySpec::alarm_raw_debt(0.05), PolicySpec::calendar(7)};
  int always_bad = 0, never_bad = 0, lag_bad = 0, adoption_bad = 0, cusum_bad = 0, cusum_resets = 0;
  std::mt19937_64 pick(11);
  std::uniform_int_distribution<int> period(2, 199);
  for (int i = 0; i < 50; ++i) {
    const RegimeKind r = regimes[i % 4];
    const PathData path =
        generate_path({r, r == RegimeKind::NoShift ? 0.0 : 0.1, 1.0}, 777, static_cast<std::uint64_t>(i));
    const ShadowTrace trace = compute_shadow_trace(path);
    if (run_policy(path, trace, PolicySpec::always(), adj, 1.0).retrain_count != 199) ++always_bad;
    if (run_policy(path, trace, PolicySpec::never(), adj, 1.0).retrain_count != 0) ++never_bad;
    for (const auto& spec : triggered) {
      const auto base = run_policy(path, trace, spec, adj, 1.0);
      for (int t : base.retrain_periods) {
        if (base.shadow_deployed_kl[static_cast<std::size_t>(t - 1)] != 0.0) ++adoption_bad;
        if (spec.kind == PolicyKind::Cusum) {
          ++cusum_resets;
          if (base.detector_start[static_cast<std::size_t>(t - 1)] != 0.0) ++cusum_bad;
        }
      }
      const int t = period(pick);
      PathData mutated = path;
      for (auto& o : mutated.periods[static_cast<std::size_t>(t - 1)].monitor_batch) o.y += 30.0;
      const auto alt = run_policy(mutated, spec, adj, kDefaultPrior, 1.0);
      for (int s = 0; s < t; ++s) {
        if (!(alt.deployed[static_cast<std::size_t>(s)] == base.deployed[static_cast<std::size_t>(s)])) {
          ++lag_bad;
          break;
        }
      }
    }
  }
  v.require(always_bad == 0, "always=199 on 50/50");
  v.require(never_bad == 0, "never=0 on 50/50");
  v.require(lag_bad == 0, "lag law violations " + std::to_string(lag_bad) + "/200");
  v.require(adoption_bad == 0, "adoption law violations " + std::to_string(adoption_bad));
  v.require(cusum_resets > 0 && cusum_bad == 0,
            "cusum reset " + std::to_string(cusum_resets - cusum_bad) + "/" + std::to_string(cusum_resets));
  return v;
}

// ---------------------------------------------------------------- 3, 4, 5

ExperimentConfig desk_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.paths_evaluation = 30;
  cfg.out_dir = out;
  cfg.jobs = static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
  return cfg;
}

Verdict reproduction(const fs::path& dir) {
  Verdict v;
  const auto t1 = read_table(dir / "table1_primary.csv");
  const auto& cal = find_row(t1, {{"policy", "debt_threshold"}, {"benchmark", "calendar"}});
  const auto& cus = find_row(t1, {{"policy", "debt_threshold"}, {"benchmark", "cusum"}});
  const int wins = std::stoi(cal.at("wins")), cells = std::stoi(cal.at("cells"));
  const double rel_cal = std::stod(cal.at("mean_rel")), rel_cus = std::stod(cus.at("mean_rel"));
  v.require(cells == 72, "cells " + std::to_string(cells) + "=72");
  v.require(wins >= 60, "DT vs calendar wins " + std::to_string(wins) + "/72 >= 60");
  v.require(rel_cal >= 0.55 && rel_cal <= 0.85, "DT vs calendar mean " + fmt(rel_cal) + " in [0.55,0.85]");
  v.require(rel_cus >= 0.90 && rel_cus <= 1.10, "DT vs cusum mean " + fmt(rel_cus) + " in [0.90,1.10]");
  return v;
}

Verdict no_shift(const fs::path& dir) {
  Verdict v;
  const auto t = read_table(dir / "no_shift_summary.csv");
  const double dt = std::stod(find_row(t, {{"score_unit", "q75"}, {"policy", "debt_threshold"}}).at("mean_retrains"));
  const double cal = std::stod(find_row(t, {{"score_unit", "q75"}, {"policy", "calendar"}}).at("mean_retrains"));
  v.require(dt < 5.0, "DT retrains " + fmt(dt) + " < 5");
  v.require(cal > 20.0, "calendar retrains " + fmt(cal) + " > 20");
  return v;
}

Verdict sensitivity(const fs::path& dir) {
  Verdict v;
  const auto t = read_table(dir / "table1_sensitivity.csv");
  auto wins = [&](const char* unit) {
    return std::stoi(
        find_row(t, {{"policy", "debt_threshold"}, {"benchmark", "calendar"}, {"score_unit", unit}}).at("wins"));
  };
  const int q75 = wins("q75"), median = wins("median"), mean = wins("mean");
  // Ten percentage points of 72 cells.
  const double ten_points = 0.10 * 72;
  v.require(mean >= q75 - ten_points, "mean-unit wins " + std::to_string(mean) + " >= q75 " + std::to_string(q75) +
                                          " - 10pts");
  v.require(median <= q75 - ten_points,
            "median-unit wins " + std::to_string(median) + " drop >= 10pts below " + std::to_string(q75));
  std::map<std::string, double> kv;
  for (const auto& r : read_table(dir / "calibration.csv")) kv[r.at("key")] = std::stod(r.at("value"));
  const double s_med = kv.at("s0_median"), s_q75 = kv.at("s0_q75"), s_mean = kv.at("s0_mean");
  v.require(s_med > 0 && s_med < s_q75 && s_q75 < s_mean,
            "s0 median " + fmt(s_med) + " < q75 " + fmt(s_q75) + " < mean " + fmt(s_mean));
  return v;
}

// ---------------------------------------------------------------- 6

double type7(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  const double h = (v.size() - 1) * p;
  const auto i = static_cast<std::size_t>(std::floor(h));
  if (i + 1 >= v.size()) return v.back();
  return v[i] + (h - std::floor(h)) * (v[i + 1] - v[i]);
}

bool bootstrap_oracle() {
  const std::vector<PairedCell> cells = {{{1.0, 2.0, 4.0}, {2.0, 2.5, 3.0}}, {{0.3, 0.9, 0.1}, {0.5, 0.2, 0.8}}};
  // Enumerate multisets of {0,1,2} with multinomial multiplicities.
  std::vector<std::pair<std::array<int, 3>, int>> ms;
  const int fact[] = {1, 1, 2, 6};
  for (int a = 0; a <= 3; ++a) {
    for (int b = 0; a + b <= 3; ++b) ms.push_back({{a, b, 3 - a - b}, 6 / (fact[a] * fact[b] * fact[3 - a - b])});
  }
  auto wmean = [](const std::vector<double>& x, const std::array<int, 3>& c) {
    return (c[0] * x[0] + c[1] * x[1] + c[2] * x[2]) / 3.0;
  };
  std::vector<double> stats;
  for (const auto& [c0, w0] : ms) {
    for (const auto& [c1, w1] : ms) {
      const double r = 0.5 * (wmean(cells[0].debt, c0) / wmean(cells[0].bench, c0) +
                              wmean(cells[1].debt, c1) / wmean(cells[1].bench, c1));
      stats.insert(stats.end(), static_cast<std::size_t>(w0 * w1), r);
    }
  }
  const std::array<int, 3> ones{1, 1, 1};
  const double point = 0.5 * (wmean(cells[0].debt, ones) / wmean(cells[0].bench, ones) +
                              wmean(cells[1].debt, ones) / wmean(cells[1].bench, ones));
  const auto ci = paired_bootstrap_ci(cells, 1000, 3);
  auto close = [](double a, double b) { return std::abs(a - b) <= 1e-12 * std::max(1.0, std::abs(b)); };
  return ci.exhaustive && ci.replicates == stats.size() &&
         close(ci.low, std::min(type7(stats, 0.025), point)) &&
         close(ci.high, std::max(type7(stats, 0.975), point));
}

double utility_fit_error() {
  const auto features = hybrid_utility_features();
  std::mt19937_64 rng(42);
  std::normal_distribution<double> z(0.0, 1.0);
  std::exponential_distribution<double> e(3.0);
  std::vector<UtilityRow> rows;
  std::vector<std::vector<double>> X;
  std::vector<double> resid;
  for (int i = 0; i < 60; ++i) {
    UtilityRow r;
    std::vector<double> x{1.0};
    for (std::size_t j = 0; j < features.size(); ++j) {
      r.features.push_back(z(rng));
      x.push_back(r.features.back());
    }
    r.regret = e(rng);
    rows.push_back(r);
    X.push_back(x);
    resid.push_back(std::log1p(r.regret));
  }
  // Cyclic coordinate descent on the raw squared-error objective.
  std::vector<double> b(X[0].size(), 0.0);
  for (int sweep = 0; sweep < 20000; ++sweep) {
    double moved = 0;
    for (std::size_t j = 0; j < b.size(); ++j) {
      double num = 0, den = 0;
      for (std::size_t i = 0; i < X.size(); ++i) {
        num += X[i][j] * (resid[i] + X[i][j] * b[j]);
        den += X[i][j] * X[i][j];
      }
      const double d = num / den - b[j];
      for (std::size_t i = 0; i < X.size(); ++i) resid[i] -= X[i][j] * d;
      b[j] += d;
      moved = std::max(moved, std::abs(d));
    }
    if (moved < 1e-14) break;
  }
  const UtilityModel m = fit_utility_model(rows, features);
  double worst = 0;
  for (std::size_t j = 0; j < b.size(); ++j) worst = std::max(worst, std::abs(m.coef[j] - b[j]));
  return worst;
}

Verdict oracles() {
  Verdict v;
  v.require(bootstrap_oracle(), "bootstrap CI equals 2-cell/3-path enumeration");
  const double err = utility_fit_error();
  v.require(err <= 1e-6, "utility fit vs brute force " + fmt(err) + " <= 1e-6");
  const double thr = binary_threshold(2, 1);
  v.require(std::abs(thr - 2.0 / 3.0) < 1e-15, "binary threshold (2,1) = " + fmt(thr));
  return v;
}

// ---------------------------------------------------------------- 7

Verdict determinism(const fs::path& a, const fs::path& b) {
  Verdict v;
  int same = 0, total = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const auto name = entry.path().filename();
    ++total;
    if (fs::exists(b / name) && slurp(a / name) == slurp(b / name)) {
      ++same;
    } else {
      v.require(false, name.string() + " differs");
    }
  }
  v.require(total > 0 && same == total, std::to_string(same) + "/" + std::to_string(total) + " files identical");
  const auto ma = read_manifest(a), mb = read_manifest(b);
  v.require(ma == mb && ma.count("config_hash"), "manifest hashes equal");
  return v;
}

void report(int n, const std::string& name, const Verdict& v, bool& all) {
  std::cout << (v.pass ? "PASS" : "FAIL") << " criterion " << n << " (" << name << "): " << v.detail << std::endl;
  all = all && v.pass;
}

template <class F>
Verdict guarded(F&& f) {
  try {
    return f();
  } catch (const std::exception& e) {
    Verdict v;
    v.require(false, std::string("error: ") + e.what());
    return v;
  }
}

}  // namespace

int main() {
  bool all = true;
  report(1, "exactness", guarded(exactness), all);
  report(2, "mechanics", guarded(mechanics), all);

  const fs::path root = fs::temp_directory_path() / "ldebt_acceptance";
  const fs::path run_a = root / "run_a", run_b = root / "run_b";
  fs::remove_all(root);
  bool ran = false;
  std::string run_error;
  try {
    const auto t0 = std::chrono::steady_clock::now();
    run_pipeline(desk_config(run_a));
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::cout << "desk run: 78 cells, 30 held-out paths, " << desk_config(run_a).jobs << " jobs, " << fmt(secs)
              << "s" << std::endl;
    ran = true;
  } catch (const std::exception& e) {
    run_error = e.what();
  }
  auto needs_run = [&](auto f) {
    return guarded([&] {
      if (!ran) throw std::runtime_error("desk run failed: " + run_error);
      return f();
    });
  };
  report(3, "desk-scale reproduction", needs_run([&] { return reproduction(run_a); }), all);
  report(4, "no-shift behavior", needs_run([&] { return no_shift(run_a); }), all);
  report(5, "score-unit sensitivity", needs_run([&] { return sensitivity(run_a); }), all);
  report(6, "oracle equivalence", guarded(oracles), all);
  report(7, "determinism", needs_run([&] {
           run_pipeline(desk_config(run_b));
           return determinism(run_a, run_b);
         }),
         all);
  fs::remove_all(root);
  return all ? 0 : 1;
}
