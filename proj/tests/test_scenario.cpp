#include <doctest.h>

#include <cmath>
#include <set>
#include <sstream>
#include <string>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"
#include "ldebt/scenario.hpp"

using namespace ldebt;

namespace {

bool same_batch(const std::vector<Observation>& a, const std::vector<Observation>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].x != b[i].x || a[i].y != b[i].y) return false;
  }
  return true;
}

// First period whose truth differs from the initial state, or 0.
int first_change(const PathData& p) {
  for (std::size_t i = 0; i < p.periods.size(); ++i) {
    const auto& s = p.periods[i].truth;
    if (s.beta_t != p.initial.beta_t || s.sigma2_t != p.initial.sigma2_t) return static_cast<int>(i) + 1;
  }
  return 0;
}

}  // namespace

TEST_CASE("cells: validation of declared sets") {
  CHECK_NOTHROW((ScenarioCell{RegimeKind::AbruptCoef, 0.05, 0.25}.validate()));
  CHECK_NOTHROW((ScenarioCell{RegimeKind::NoShift, 0.0, 4.0}.validate()));
  CHECK_THROWS_AS((ScenarioCell{RegimeKind::NoShift, 0.05, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ScenarioCell{RegimeKind::GradualDrift, 0.3, 1.0}.validate()), ConfigError);
  CHECK_THROWS_AS((ScenarioCell{RegimeKind::VarianceShift, 0.1, 3.0}.validate()), ConfigError);
  CHECK(parse_regime("gradual") == RegimeKind::GradualDrift);
  CHECK(to_string(RegimeKind::VarianceShift) == "variance");
  CHECK_THROWS(parse_regime("sideways"));
}

TEST_CASE("cells: keys are distinct across the full grid") {
  std::set<std::uint64_t> keys;
  int n = 0;
  for (auto r : {RegimeKind::AbruptCoef, RegimeKind::VarianceShift, RegimeKind::GradualDrift}) {
    for (double p : kShiftProbs) {
      for (double k : kCostRatios) {
        keys.insert(ScenarioCell{r, p, k}.key());
        ++n;
      }
    }
  }
  for (double k : kCostRatios) {
    keys.insert(ScenarioCell{RegimeKind::NoShift, 0.0, k}.key());
    ++n;
  }
  CHECK(n == 78);
  CHECK(keys.size() == 78);
}

TEST_CASE("evolve_regime: no shift never changes the state") {
  Engine rng(1);
  TrueState s{0.7, 1.0, false, false};
  for (int t = 1; t <= 200; ++t) {
    const TrueState next = evolve_regime(s, RegimeKind::NoShift, 1.0, t, 20, rng);
    CHECK(next.beta_t == s.beta_t);
    CHECK(next.sigma2_t == s.sigma2_t);
    s = next;
  }
}

TEST_CASE("evolve_regime: hazard is off during burn-in") {
  Engine rng(2);
  const TrueState s{0.3, 1.0, false, false};
  for (auto r : {RegimeKind::AbruptCoef, RegimeKind::VarianceShift, RegimeKind::GradualDrift}) {
    for (int t = 1; t <= 20; ++t) {
      const TrueState next = evolve_regime(s, r, 1.0, t, 20, rng);
      CHECK_FALSE(next.shift_done);
      CHECK_FALSE(next.drift_active);
      CHECK(next.beta_t == s.beta_t);
    }
    const TrueState first = evolve_regime(s, r, 1.0, 21, 20, rng);
    CHECK((first.shift_done || first.drift_active));
  }
}

TEST_CASE("evolve_regime: abrupt and variance shocks happen once") {
  for (auto r : {RegimeKind::AbruptCoef, RegimeKind::VarianceShift}) {
    const PathData p = generate_path({r, 0.2, 1.0}, 42, 3);
    int changes = 0;
    TrueState prev = p.initial;
    for (const auto& pd : p.periods) {
      if (pd.truth.beta_t != prev.beta_t || pd.truth.sigma2_t != prev.sigma2_t) ++changes;
      prev = pd.truth;
    }
    CHECK(changes == 1);
  }
}

TEST_CASE("evolve_regime: shock distributions") {
  // Abrupt: shock ~ N(0, 2^2). Variance: multiplier ~ U(3, 6). Both after a
  // geometric waiting time past burn-in with mean 1 / p.
  const int n = 400;
  double s_delta2 = 0, s_wait = 0;
  double lo = 1e9, hi = -1e9;
  for (int i = 0; i < n; ++i) {
    const PathData a = generate_path({RegimeKind::AbruptCoef, 0.2, 1.0}, 7, static_cast<std::uint64_t>(i));
    const int t = first_change(a);
    REQUIRE(t > 20);
    const double d = a.periods[static_cast<std::size_t>(t - 1)].truth.beta_t - a.initial.beta_t;
    s_delta2 += d * d;
    s_wait += t - 20;

    const PathData v = generate_path({RegimeKind::VarianceShift, 0.2, 1.0}, 7, static_cast<std::uint64_t>(i));
    const int tv = first_change(v);
    REQUIRE(tv > 20);
    const double m = v.periods[static_cast<std::size_t>(tv - 1)].truth.sigma2_t / v.initial.sigma2_t;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  CHECK(s_delta2 / n == doctest::Approx(4.0).epsilon(0.25));
  CHECK(s_wait / n == doctest::Approx(5.0).epsilon(0.14));
  CHECK(lo >= 3.0);
  CHECK(hi <= 6.0);
  CHECK(hi - lo > 2.5);
}

TEST_CASE("evolve_regime: gradual drift increments after onset") {
  double ss = 0;
  int count = 0;
  for (int i = 0; i < 50; ++i) {
    const PathData p = generate_path({RegimeKind::GradualDrift, 0.2, 1.0}, 9, static_cast<std::uint64_t>(i));
    const int onset = first_change(p);
    REQUIRE(onset > 20);
    for (std::size_t t = static_cast<std::size_t>(onset); t < p.periods.size(); ++t) {
      CHECK(p.periods[t].truth.drift_active);
      const double d = p.periods[t].truth.beta_t - p.periods[t - 1].truth.beta_t;
      ss += d * d;
      ++count;
    }
    CHECK(p.periods.back().truth.sigma2_t == p.initial.sigma2_t);
  }
  CHECK(std::sqrt(ss / count) == doctest::Approx(0.15).epsilon(0.05));
}

TEST_CASE("generate_path: shapes and determinism") {
  const ScenarioCell cell{RegimeKind::AbruptCoef, 0.05, 0.5};
  const PathData a = generate_path(cell, 123, 4, PathPurpose::Tuning);
  const PathData b = generate_path(cell, 123, 4, PathPurpose::Tuning);
  REQUIRE(a.periods.size() == 200);
  CHECK(a.warmup.size() == 300);
  for (std::size_t t = 0; t < 200; ++t) {
    CHECK(a.periods[t].update_batch.size() == 5);
    CHECK(a.periods[t].monitor_batch.size() == 5);
    CHECK(a.periods[t].eval_batch.size() == 40);
    CHECK(same_batch(a.periods[t].eval_batch, b.periods[t].eval_batch));
  }
  CHECK(same_batch(a.warmup, b.warmup));
  CHECK(a.seed_record.path_index == 4);
  CHECK(a.seed_record.cell_key == cell.key());

  // Purpose, path index, seed and cost ratio each select different streams.
  CHECK_FALSE(same_batch(a.warmup, generate_path(cell, 123, 4, PathPurpose::Evaluation).warmup));
  CHECK_FALSE(same_batch(a.warmup, generate_path(cell, 123, 5, PathPurpose::Tuning).warmup));
  CHECK_FALSE(same_batch(a.warmup, generate_path(cell, 124, 4, PathPurpose::Tuning).warmup));
  CHECK_FALSE(same_batch(a.warmup, generate_path({RegimeKind::AbruptCoef, 0.05, 1.0}, 123, 4,
                                                 PathPurpose::Tuning).warmup));
  // Batches within a period are separate streams.
  CHECK_FALSE(same_batch(a.periods[0].update_batch, a.periods[0].monitor_batch));
}

TEST_CASE("draw_batch: covariate and noise moments") {
  Engine rng(77);
  const TrueState s{1.5, 4.0, false, false};
  const auto obs = draw_batch(s, 100000, rng);
  double mx = 0, vx = 0, vr = 0;
  for (const auto& o : obs) mx += o.x;
  mx /= 100000.0;
  for (const auto& o : obs) {
    vx += (o.x - mx) * (o.x - mx);
    vr += (o.y - 1.5 * o.x) * (o.y - 1.5 * o.x);
  }
  CHECK(std::abs(mx) < 0.015);
  CHECK(vx / 100000.0 == doctest::Approx(1.0).epsilon(0.02));
  CHECK(vr / 100000.0 == doctest::Approx(4.0).epsilon(0.02));
}

TEST_CASE("warm_start: conjugate update on the warm-up sample") {
  const PathData p = generate_path({RegimeKind::NoShift, 0.0, 1.0}, 5, 0);
  const NigParams w = warm_start(p);
  CHECK(w == update(kDefaultPrior, p.warmup));
  CHECK(w.alpha == doctest::Approx(2.0 + 150.0));
  CHECK(std::abs(w.mu - p.initial.beta_t) < 0.3);
}

TEST_CASE("write_path_csv: header and row count") {
  const PathData p = generate_path({RegimeKind::VarianceShift, 0.1, 2.0}, 5, 1);
  std::ostringstream out;
  write_path_csv(p, out);
  std::istringstream in(out.str());
  std::vector<std::string> header;
  const auto rows = csv::read_rows(in, &header);
  CHECK(header == std::vector<std::string>{"period", "role", "x", "y", "beta_true", "sigma2_true"});
  CHECK(rows.size() == 300 + 200 * 50);
  CHECK(rows.front()[0] == "0");
  CHECK(rows.front()[1] == "warmup");
  CHECK(rows.back()[0] == "200");
  CHECK(rows.back()[1] == "eval");
  CHECK(csv::to_double(rows.back()[5]) == p.periods.back().truth.sigma2_t);
}
