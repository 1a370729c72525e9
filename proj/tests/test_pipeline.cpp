#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"
#include "ldebt/pipeline.hpp"

using namespace ldebt;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.paths_calibration = 2;
  cfg.paths_tuning = 2;
  cfg.paths_evaluation = 3;
  cfg.bootstrap_b = 1000;
  cfg.cells_filter = "abrupt:0.1:1,no_shift:*:1";
  cfg.out_dir = out;
  return cfg;
}

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("ldebt_test_pipeline_" + name);
  fs::remove_all(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const char* const kArtifacts[] = {"age_adjustment.csv", "calibration.csv", "calibration_debt_regret.csv",
                                  "utility_models.csv", "tuned_params.csv", "per_path.csv",
                                  "per_cell.csv", "table1_primary.csv", "table1_sensitivity.csv",
                                  "cell_comparisons.csv", "no_shift_summary.csv", "manifest.txt"};

}  // namespace

TEST_CASE("git_blob_hash matches git") {
  CHECK(git_blob_hash("") == "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  CHECK(git_blob_hash("hello\n") == "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_CASE("pipeline: artifacts, manifest hashes and report shape") {
  const fs::path dir = fresh_dir("smoke");
  const ExperimentConfig cfg = tiny(dir);
  run_pipeline(cfg);
  for (const char* f : kArtifacts) CHECK_MESSAGE(fs::exists(dir / f), f);
  const auto m = read_manifest(dir);
  CHECK(m.at("config_hash") == git_blob_hash(cfg.canonical_text()));
  CHECK(m.at("config.paths_evaluation") == "3");
  for (const char* stage : {"calibrate", "tune", "evaluate", "report"}) {
    CHECK(m.at(std::string("stage.") + stage) == "done");
  }
  int files = 0;
  for (const auto& [k, v] : m) {
    if (k.rfind("file.", 0) != 0) continue;
    ++files;
    CHECK_MESSAGE(v == git_blob_hash(slurp(dir / k.substr(5))), k);
  }
  CHECK(files == 11);

  std::ifstream t1(dir / "table1_primary.csv");
  std::vector<std::string> header;
  const auto rows = csv::read_rows(t1, &header);
  CHECK(header.front() == "policy");
  CHECK(rows.size() == 6);
  for (const auto& r : rows) CHECK(r[4] == "1");  // one non-stable cell selected
  std::ifstream pp(dir / "per_path.csv");
  CHECK(csv::read_rows(pp, &header).size() == 2 * 3 * 8 * 3);  // cells x paths x policies x units
  fs::remove_all(dir);
}

TEST_CASE("pipeline: deterministic across directories and job counts") {
  const fs::path a = fresh_dir("a"), b = fresh_dir("b");
  run_pipeline(tiny(a));
  ExperimentConfig cb = tiny(b);
  cb.jobs = 3;
  run_pipeline(cb);
  for (const char* f : kArtifacts) CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);

  // Rerunning a single stage reproduces its artifacts.
  const std::string before = slurp(a / "table1_primary.csv");
  run_stage(tiny(a), Stage::Report);
  CHECK(slurp(a / "table1_primary.csv") == before);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST_CASE("pipeline: stage prerequisites and config mismatch") {
  const fs::path dir = fresh_dir("stages");
  CHECK_THROWS_AS(run_stage(tiny(dir), Stage::Evaluate), StageError);
  CHECK_THROWS_AS(run_stage(tiny(dir), Stage::Tune), StageError);
  run_stage(tiny(dir), Stage::Calibrate);
  CHECK_THROWS_AS(run_stage(tiny(dir), Stage::Report), StageError);
  ExperimentConfig other = tiny(dir);
  other.master_seed = 1;
  CHECK_THROWS_AS(run_stage(other, Stage::Tune), ManifestMismatch);

  // A tampered artifact is detected by the next stage that reads it.
  {
    std::ofstream f(dir / "age_adjustment.csv", std::ios::app);
    f << "\n";
  }
  CHECK_THROWS_AS(run_stage(tiny(dir), Stage::Tune), ManifestMismatch);
  fs::remove_all(dir);
}
