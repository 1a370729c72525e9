// Command-line driver: calibrate -> tune -> evaluate -> report, plus
// selftest and single-path dumps.

#include <CLI11.hpp>
#include <fstream>
#include <iostream>

#include "ldebt/config.hpp"
#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"
#include "ldebt/pipeline.hpp"
#include "ldebt/selftest.hpp"

namespace {

struct Overrides {
  std::string config;
  std::string seed;
  std::string out;
  std::string paths_eval;
  std::string score_unit;
  std::string cells;
  std::string jobs;
  std::vector<std::string> sets;
};

ldebt::ExperimentConfig build_config(const Overrides& o) {
  ldebt::ExperimentConfig cfg;
  if (!o.config.empty()) cfg = ldebt::load_config(o.config);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ldebt::ConfigError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (!o.seed.empty()) cfg.set("seed", o.seed);
  if (!o.out.empty()) cfg.set("out", o.out);
  if (!o.paths_eval.empty()) cfg.set("paths_evaluation", o.paths_eval);
  if (!o.score_unit.empty()) cfg.set("score_unit", o.score_unit);
  if (!o.cells.empty()) cfg.set("cells", o.cells);
  if (!o.jobs.empty()) cfg.set("jobs", o.jobs);
  cfg.validate();
  return cfg;
}

ldebt::ScenarioCell parse_cell_arg(const std::string& s) {
  const auto parts = ldebt::csv::split(s, ':');
  if (parts.size() != 3) throw ldebt::ConfigError("--cell expects regime:shift_prob:kappa");
  ldebt::ScenarioCell c{ldebt::parse_regime(parts[0]), ldebt::csv::to_double(parts[1]),
                        ldebt::csv::to_double(parts[2])};
  c.validate();
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Posterior learning debt: retraining-policy simulation"};
  app.require_subcommand(1);
  app.fallthrough();

  Overrides o;
  app.add_option("--config", o.config, "Flat key=value config file");
  app.add_option("--seed", o.seed, "Master seed");
  app.add_option("--out", o.out, "Output directory");
  app.add_option("--paths-eval", o.paths_eval, "Held-out paths per cell");
  app.add_option("--score-unit", o.score_unit, "Primary score unit: q75, median or mean");
  app.add_option("--cells", o.cells, "Cell filter, e.g. 'abrupt:0.05:*,no_shift'");
  app.add_option("--jobs", o.jobs, "Worker threads");
  app.add_option("--set", o.sets, "Extra config override key=value (repeatable)");

  auto* all = app.add_subcommand("all", "Run every stage");
  auto* calibrate = app.add_subcommand("calibrate", "Fit age adjustment, score units, utility models");
  auto* tune = app.add_subcommand("tune", "Tune calendar, CUSUM and threshold policies per cell");
  auto* evaluate = app.add_subcommand("evaluate", "Evaluate all policies on held-out paths");
  auto* report = app.add_subcommand("report", "Aggregate the primary and sensitivity tables");
  auto* selftest = app.add_subcommand("selftest", "Exactness and mechanics checks");
  auto* dump = app.add_subcommand("dump", "Write one path and one policy trajectory as CSV");

  std::string dump_cell = "abrupt:0.05:1";
  std::string dump_policy = "never";
  std::string dump_purpose = "evaluation";
  std::uint64_t dump_index = 0;
  double dump_param = 1.0;
  double dump_param2 = 0.5;
  std::string dump_path_csv = "path.csv";
  std::string dump_traj_csv = "trajectory.csv";
  dump->add_option("--cell", dump_cell, "regime:shift_prob:kappa");
  dump->add_option("--path-index", dump_index);
  dump->add_option("--purpose", dump_purpose, "calibration, tuning or evaluation");
  dump->add_option("--policy", dump_policy, "debt_threshold, calendar, cusum, alarm_raw_debt, always, never");
  dump->add_option("--param", dump_param, "threshold c, calendar k, CUSUM k_ref, or alarm threshold");
  dump->add_option("--param2", dump_param2, "CUSUM limit h");
  dump->add_option("--path-csv", dump_path_csv);
  dump->add_option("--trajectory-csv", dump_traj_csv);

  CLI11_PARSE(app, argc, argv);

  try {
    if (selftest->parsed()) {
      return ldebt::print_checks(ldebt::selftest(), std::cout) ? 0 : 1;
    }
    const ldebt::ExperimentConfig cfg = build_config(o);
    if (all->parsed()) {
      ldebt::run_pipeline(cfg);
    } else if (calibrate->parsed()) {
      ldebt::run_stage(cfg, ldebt::Stage::Calibrate);
    } else if (tune->parsed()) {
      ldebt::run_stage(cfg, ldebt::Stage::Tune);
    } else if (evaluate->parsed()) {
      ldebt::run_stage(cfg, ldebt::Stage::Evaluate);
    } else if (report->parsed()) {
      ldebt::run_stage(cfg, ldebt::Stage::Report);
    } else if (dump->parsed()) {
      const auto cell = parse_cell_arg(dump_cell);
      const ldebt::PathPurpose purpose = dump_purpose == "calibration" ? ldebt::PathPurpose::Calibration
                                         : dump_purpose == "tuning"    ? ldebt::PathPurpose::Tuning
                                                                       : ldebt::PathPurpose::Evaluation;
      const auto path = ldebt::generate_path(cell, cfg.master_seed, dump_index, purpose, cfg.scenario);
      ldebt::AgeAdjustment adj = ldebt::AgeAdjustment::identity();
      if (std::ifstream in(cfg.out_dir / "age_adjustment.csv"); in) adj = ldebt::read_age_adjustment(in);
      ldebt::PolicySpec spec;
      switch (ldebt::parse_policy(dump_policy)) {
        case ldebt::PolicyKind::DebtThreshold: spec = ldebt::PolicySpec::debt_threshold(dump_param); break;
        case ldebt::PolicyKind::Calendar: spec = ldebt::PolicySpec::calendar(static_cast<int>(dump_param)); break;
        case ldebt::PolicyKind::Cusum: spec = ldebt::PolicySpec::cusum(dump_param, dump_param2); break;
        case ldebt::PolicyKind::AlarmRawDebt: spec = ldebt::PolicySpec::alarm_raw_debt(dump_param); break;
        case ldebt::PolicyKind::Always: spec = ldebt::PolicySpec::always(); break;
        case ldebt::PolicyKind::Never: spec = ldebt::PolicySpec::never(); break;
        default: throw ldebt::ConfigError("dump supports non-utility policies only");
      }
      const auto traj = ldebt::run_policy(path, spec, adj, ldebt::kDefaultPrior, 0.0);
      std::ofstream pout(dump_path_csv);
      ldebt::write_path_csv(path, pout);
      std::ofstream tout(dump_traj_csv);
      ldebt::write_trajectory_csv(traj, tout);
      std::cout << "wrote " << dump_path_csv << " and " << dump_traj_csv << " (" << traj.retrain_count
                << " retrains)\n";
    }
  } catch (const ldebt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
  return 0;
}
