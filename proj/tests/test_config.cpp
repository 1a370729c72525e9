#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "ldebt/config.hpp"
#include "ldebt/errors.hpp"

using namespace ldebt;

TEST_CASE("defaults validate and declare the full cell grid") {
  const ExperimentConfig cfg;
  CHECK_NOTHROW(cfg.validate());
  CHECK(cfg.all_cells().size() == 78);
  CHECK(cfg.selected_cells().size() == 78);
  CHECK(cfg.calibration_runs == CalibrationRuns::CalendarGrid);
  CHECK(cfg.no_shift_tuning == NoShiftTuning::Pooled);
}

TEST_CASE("set: known keys, unknown keys and malformed values") {
  ExperimentConfig cfg;
  cfg.set("paths_evaluation", "30");
  CHECK(cfg.paths_evaluation == 30);
  cfg.set("score_unit", "median");
  CHECK(cfg.score_unit == ScoreUnitKind::Median);
  cfg.set("calibration_runs", "never");
  CHECK(cfg.calibration_runs == CalibrationRuns::Never);
  cfg.set("no_shift_tuning", "own");
  CHECK(cfg.no_shift_tuning == NoShiftTuning::Own);
  cfg.set("grid_calendar", "1,5,201");
  CHECK(cfg.grid_calendar == std::vector<int>{1, 5, 201});
  CHECK_THROWS_AS(cfg.set("colour", "blue"), ConfigError);
  CHECK_THROWS_AS(cfg.set("paths_tuning", "many"), ConfigError);
  CHECK_THROWS_AS(cfg.set("calibration_runs", "always"), ConfigError);
  CHECK_THROWS_AS(cfg.set("no_shift_tuning", "maybe"), ConfigError);
}

TEST_CASE("validate rejects impossible settings") {
  ExperimentConfig a;
  a.bootstrap_b = 500;
  CHECK_THROWS_AS(a.validate(), ConfigError);
  ExperimentConfig b;
  b.regimes = {RegimeKind::AbruptCoef};
  CHECK_THROWS_AS(b.validate(), ConfigError);
  ExperimentConfig c;
  c.cells_filter = "gradual:0.9";
  CHECK_THROWS_AS(c.validate(), ConfigError);
  ExperimentConfig d;
  d.paths_tuning = 0;
  CHECK_THROWS_AS(d.validate(), ConfigError);
}

TEST_CASE("load_config: comments, blank lines and bad lines") {
  const auto dir = std::filesystem::temp_directory_path() / "ldebt_test_config";
  std::filesystem::create_directories(dir);
  {
    std::ofstream f(dir / "ok.cfg");
    f << "# desk run\n\npaths_evaluation = 30\nseed=7  # trailing comment\ncells=abrupt:*:1\n";
  }
  const ExperimentConfig cfg = load_config(dir / "ok.cfg");
  CHECK(cfg.paths_evaluation == 30);
  CHECK(cfg.master_seed == 7);
  CHECK(cfg.selected_cells().size() == 4);
  {
    std::ofstream f(dir / "bad.cfg");
    f << "paths_evaluation\n";
  }
  CHECK_THROWS_AS(load_config(dir / "bad.cfg"), ConfigError);
  CHECK_THROWS_AS(load_config(dir / "missing.cfg"), ConfigError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("canonical_text: covers outputs, excludes the run environment") {
  ExperimentConfig a, b;
  b.out_dir = "elsewhere";
  b.jobs = 4;
  CHECK(a.canonical_text() == b.canonical_text());
  b.master_seed = 1;
  CHECK(a.canonical_text() != b.canonical_text());
  ExperimentConfig c;
  c.no_shift_tuning = NoShiftTuning::Own;
  CHECK(a.canonical_text() != c.canonical_text());
  CHECK(a.canonical_text().find("calibration_runs=calendar_grid\n") != std::string::npos);
  CHECK(a.canonical_text().find("out=") == std::string::npos);
}

TEST_CASE("cell_matches patterns") {
  const ScenarioCell c{RegimeKind::VarianceShift, 0.05, 2.0};
  CHECK(cell_matches(c, "*"));
  CHECK(cell_matches(c, ""));
  CHECK(cell_matches(c, "variance"));
  CHECK(cell_matches(c, "variance:0.05"));
  CHECK(cell_matches(c, "variance:*:2"));
  CHECK(cell_matches(c, "abrupt,variance:0.05:2"));
  CHECK_FALSE(cell_matches(c, "variance:0.1"));
  CHECK_FALSE(cell_matches(c, "gradual"));
  CHECK_FALSE(cell_matches(c, "*:*:4"));
}

TEST_CASE("tuning grids") {
  const ExperimentConfig cfg;
  CHECK(calendar_grid(cfg).size() == 16);
  CHECK(cusum_grid(cfg).size() == 42);
  CHECK(debt_threshold_grid(cfg).size() == 10);
  const auto alarm = alarm_grid(cfg, 0.2);
  REQUIRE(alarm.size() == 10);
  CHECK(std::get<ThresholdParams>(alarm.front().params).c == doctest::Approx(0.1));
  CHECK(std::get<ThresholdParams>(alarm.back().params).c == doctest::Approx(1.6));
  CHECK(alarm.front().kind == PolicyKind::AlarmRawDebt);
}
