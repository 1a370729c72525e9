#include "ldebt/selftest.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numbers>
#include <ostream>
#include <random>

#include "ldebt/csv.hpp"
#include "ldebt/monitor.hpp"
#include "ldebt/policies.hpp"
#include "ldebt/rng.hpp"
#include "ldebt/scenario.hpp"

namespace ldebt {

namespace {

constexpr double kEulerGamma = 0.57721566490153286061;

NigParams random_nig(Engine& rng, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  std::uniform_real_distribution<double> m(-2.0, 2.0);
  return {m(rng), u(rng), u(rng), u(rng)};
}

CheckResult check_digamma() {
  const double e1 = std::abs(boost::math::digamma(1.0) + kEulerGamma);
  const double e2 = std::abs(boost::math::digamma(2.0) - (1.0 - kEulerGamma));
  const double worst = std::max(e1, e2);
  return {"digamma_known_values", worst <= 1e-12, worst, 1e-12, "psi(1) = -gamma, psi(2) = 1 - gamma"};
}

CheckResult check_kl_mc(const SelfTestHooks& hooks) {
  Engine rng(stream_seed(7, {1}));
  double worst = 0;
  for (int i = 0; i < 10; ++i) {
    const NigParams a = random_nig(rng, 0.5, 10.0);
    const NigParams b = random_nig(rng, 0.5, 10.0);
    const McEstimate mc = kl_nig_mc(a, b, hooks.kl_mc_samples, stream_seed(7, {2, static_cast<std::uint64_t>(i)}));
    worst = std::max(worst, std::abs(hooks.kl(a, b) - mc.estimate) / mc.std_error);
  }
  return {"kl_closed_form_vs_monte_carlo", worst <= 3.0, worst, 3.0,
          "max |closed - MC| in standard errors over 10 random pairs"};
}

CheckResult check_kl_identity(const SelfTestHooks& hooks) {
  Engine rng(stream_seed(7, {3}));
  double worst = 0;
  double most_negative = 0;
  for (int i = 0; i < 1000; ++i) {
    const NigParams a = random_nig(rng, 0.1, 10.0);
    const NigParams b = random_nig(rng, 0.1, 10.0);
    worst = std::max(worst, std::abs(hooks.kl(a, a)));
    most_negative = std::min(most_negative, hooks.kl(a, b));
  }
  const bool ok = worst <= 1e-12 && most_negative >= -1e-12;
  return {"kl_identity_and_nonnegativity", ok, std::max(worst, -most_negative), 1e-12,
          "kl(p, p) and min kl(p, q) over 1000 random pairs"};
}

CheckResult check_sequential_batch() {
  Engine rng(stream_seed(7, {4}));
  std::normal_distribution<double> n01(0.0, 1.0);
  std::uniform_int_distribution<int> len(1, 30);
  double worst = 0;
  for (int i = 0; i < 1000; ++i) {
    const NigParams prior = random_nig(rng, 0.1, 10.0);
    std::vector<Observation> batch(static_cast<std::size_t>(len(rng)));
    for (auto& o : batch) o = {n01(rng), 2.0 * n01(rng)};
    const NigParams whole = update(prior, batch);
    NigParams seq = prior;
    for (const auto& o : batch) seq = update(seq, std::span(&o, 1));
    worst = std::max({worst, std::abs(whole.mu - seq.mu), std::abs(whole.kappa - seq.kappa),
                      std::abs(whole.alpha - seq.alpha), std::abs(whole.beta - seq.beta)});
  }
  return {"sequential_vs_batch_update", worst <= 1e-10, worst, 1e-10, "1000 random (prior, batch) instances"};
}

// Integral over the real line via y = loc + scale * tan(theta), Simpson's rule.
double integrate_density(const StudentT& t) {
  const int n = 20000;
  const double a = -std::numbers::pi / 2, b = std::numbers::pi / 2;
  const double h = (b - a) / n;
  double s = 0;
  for (int i = 1; i < n; ++i) {
    const double th = a + i * h;
    const double c = std::cos(th);
    const double f = std::exp(log_score(t, t.loc + t.scale * std::tan(th))) * t.scale / (c * c);
    s += (i % 2 ? 4.0 : 2.0) * f;
  }
  return s * h / 3.0;
}

CheckResult check_density_integral() {
  double worst = 0;
  for (const StudentT t : {StudentT{4, 0, 1}, StudentT{1.5, 2, 0.3}, StudentT{30, -1, 5}, StudentT{604, 0.4, 1.1}}) {
    worst = std::max(worst, std::abs(integrate_density(t) - 1.0));
  }
  return {"student_t_density_integrates_to_one", worst <= 1e-3, worst, 1e-3, "four (df, loc, scale) settings"};
}

std::vector<PathData> check_paths(int n) {
  std::vector<PathData> paths;
  const RegimeKind regimes[] = {RegimeKind::AbruptCoef, RegimeKind::VarianceShift, RegimeKind::GradualDrift,
                                RegimeKind::NoShift};
  for (int i = 0; i < n; ++i) {
    const RegimeKind r = regimes[i % 4];
    const ScenarioCell cell{r, r == RegimeKind::NoShift ? 0.0 : 0.2, 1.0};
    paths.push_back(generate_path(cell, 99, static_cast<std::uint64_t>(i), PathPurpose::Evaluation));
  }
  return paths;
}

CheckResult check_lag_law() {
  const auto paths = check_paths(8);
  const AgeAdjustment adj{{0.0}, 0.05};
  const PolicySpec specs[] = {PolicySpec::debt_threshold(1.0), PolicySpec::cusum(0.0, 0.05),
                              PolicySpec::alarm_raw_debt(0.05)};
  int violations = 0;
  int probes = 0;
  for (const auto& path : paths) {
    for (const auto& spec : specs) {
      const auto base = run_policy(path, spec, adj, kDefaultPrior, 0.1);
      for (int t : {10, 60, 150}) {
        PathData mutated = path;
        for (auto& o : mutated.periods[static_cast<std::size_t>(t - 1)].monitor_batch) o.y += 25.0;
        const auto alt = run_policy(mutated, spec, adj, kDefaultPrior, 0.1);
        ++probes;
        for (int s = 1; s <= t; ++s) {
          if (!(alt.deployed[static_cast<std::size_t>(s - 1)] == base.deployed[static_cast<std::size_t>(s - 1)])) {
            ++violations;
            break;
          }
        }
      }
    }
  }
  return {"lag_law", violations == 0, static_cast<double>(violations), 0.0,
          std::to_string(probes) + " monitoring-batch mutations; deployment through period t unchanged"};
}

CheckResult check_adoption(const SelfTestHooks& hooks) {
  const auto paths = check_paths(8);
  double worst = 0;
  int bad_counts = 0;
  for (const auto& path : paths) {
    const ShadowTrace trace = compute_shadow_trace(path);
    const auto traj = run_policy(path, trace, PolicySpec::always(), AgeAdjustment::identity(), 0.1);
    if (traj.retrain_count != static_cast<int>(path.periods.size()) - 1) ++bad_counts;
    for (int t : traj.retrain_periods) {
      const auto i = static_cast<std::size_t>(t - 1);
      const NigParams& shadow_before =
          t == 1 ? warm_start(path) : trace.after_update[i - 1];
      worst = std::max(worst, std::abs(hooks.kl(shadow_before, traj.deployed[i])));
    }
  }
  return {"adoption_law_and_always_count", worst <= 1e-12 && bad_counts == 0, worst, 1e-12,
          "kl(shadow, deployed) at each applied retrain; Always applies T - 1 retrains"};
}

}  // namespace

std::vector<CheckResult> selftest(const SelfTestHooks& hooks) {
  return {check_digamma(),          check_kl_mc(hooks),          check_kl_identity(hooks),
          check_sequential_batch(), check_density_integral(),    check_lag_law(),
          check_adoption(hooks)};
}

bool print_checks(const std::vector<CheckResult>& checks, std::ostream& out) {
  bool all = true;
  for (const auto& c : checks) {
    all = all && c.passed;
    out << (c.passed ? "PASS " : "FAIL ") << c.name << "  measured=" << csv::num(c.measured)
        << " tol=" << csv::num(c.tolerance) << "  (" << c.detail << ")\n";
  }
  return all;
}

}  // namespace ldebt
