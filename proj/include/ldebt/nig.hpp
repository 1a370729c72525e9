#pragma once

// Conjugate normal-inverse-gamma machinery for the scalar no-intercept
// regression y = b * x + e, e ~ N(0, s2):
//
//   b | s2 ~ N(mu, s2 / kappa),   s2 ~ InvGamma(alpha, beta).

#include <cstdint>
#include <span>

namespace ldebt {

struct NigParams {
  double mu = 0.0;
  double kappa = 1.0;
  double alpha = 2.0;
  double beta = 1.0;

  bool valid() const;
  friend bool operator==(const NigParams&, const NigParams&) = default;
};

/// Prior used throughout the simulation: (mu, kappa, alpha, beta) = (0, 1, 2, 1).
inline constexpr NigParams kDefaultPrior{0.0, 1.0, 2.0, 1.0};

struct Observation {
  double x = 0.0;
  double y = 0.0;
};

struct StudentT {
  double df = 1.0;
  double loc = 0.0;
  double scale = 1.0;
};

/// Floor applied to the posterior rate when cancellation drives it non-positive.
inline constexpr double kBetaFloor = 1e-12;

struct UpdateDiagnostics {
  bool beta_clamped = false;
};

/// Conjugate update. Throws InvalidObservation on non-finite data. If the
/// rate cancels to <= 0 it is floored at kBetaFloor and `diag->beta_clamped`
/// is set (when diag is non-null).
NigParams update(const NigParams& prior, std::span<const Observation> batch,
                 UpdateDiagnostics* diag = nullptr);

/// Posterior predictive of y at covariate x.
StudentT predictive(const NigParams& p, double x);

double log_score(const StudentT& dist, double y);

/// Mean log predictive density of `batch` under `p`.
double mean_log_score(const NigParams& p, std::span<const Observation> batch);

/// Exact KL(ref || dep) between NIG distributions over (b, s2).
double kl_nig(const NigParams& ref, const NigParams& dep);

struct McEstimate {
  double estimate = 0.0;
  double std_error = 0.0;
};

/// Monte Carlo KL(ref || dep): draws (b, s2) from ref and averages the
/// log-density ratio. Requires n_samples >= 1000.
McEstimate kl_nig_mc(const NigParams& ref, const NigParams& dep,
                     std::int64_t n_samples, std::uint64_t seed);

/// Monte Carlo KL between the two posterior predictives at covariate x.
/// Individual estimates can be slightly negative; the raw mean is returned.
McEstimate predictive_debt_mc(const NigParams& ref, const NigParams& dep, double x,
                              std::int64_t n_samples, std::uint64_t seed);

/// Joint log density of (b, s2) under p.
double nig_log_density(const NigParams& p, double b, double s2);

}  // namespace ldebt
