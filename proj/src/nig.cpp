#include "ldebt/nig.hpp"

#include <boost/math/special_functions/digamma.hpp>
#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>
#include <string>

#include "ldebt/errors.hpp"

namespace ldebt {

namespace {

struct TConstant {
  double half_df_plus_one;
  double log_norm;  // log density at the center for unit scale
};

TConstant t_constant(double df) {
  const double h = 0.5 * (df + 1.0);
  return {h, std::lgamma(h) - std::lgamma(0.5 * df) - 0.5 * std::log(df * std::numbers::pi)};
}

double t_log_density(const TConstant& c, double df, double loc, double scale, double y) {
  const double z = (y - loc) / scale;
  return c.log_norm - std::log(scale) - c.half_df_plus_one * std::log1p(z * z / df);
}

McEstimate mean_and_se(double sum, double sum_sq, std::int64_t n) {
  const double nd = static_cast<double>(n);
  const double mean = sum / nd;
  const double var = std::max(0.0, (sum_sq - nd * mean * mean) / (nd - 1.0));
  return {mean, std::sqrt(var / nd)};
}

void require_samples(std::int64_t n) {
  if (n < 1000) throw std::invalid_argument("Monte Carlo estimators need at least 1000 samples");
}

}  // namespace

bool NigParams::valid() const {
  return std::isfinite(mu) && std::isfinite(kappa) && std::isfinite(alpha) &&
         std::isfinite(beta) && kappa > 0 && alpha > 0 && beta > 0;
}

NigParams update(const NigParams& prior, std::span<const Observation> batch,
                 UpdateDiagnostics* diag) {
  double sxx = 0, sxy = 0, syy = 0;
  for (const auto& o : batch) {
    if (!std::isfinite(o.x) || !std::isfinite(o.y)) {
      throw InvalidObservation("non-finite observation (x=" + std::to_string(o.x) +
                               ", y=" + std::to_string(o.y) + ")");
    }
    sxx += o.x * o.x;
    sxy += o.x * o.y;
    syy += o.y * o.y;
  }
  NigParams post;
  post.kappa = prior.kappa + sxx;
  post.mu = (prior.kappa * prior.mu + sxy) / post.kappa;
  post.alpha = prior.alpha + 0.5 * static_cast<double>(batch.size());
  post.beta = prior.beta + 0.5 * (syy + prior.kappa * prior.mu * prior.mu -
                                  post.kappa * post.mu * post.mu);
  if (!(post.beta > 0)) {
    post.beta = kBetaFloor;
    if (diag) diag->beta_clamped = true;
  }
  return post;
}

StudentT predictive(const NigParams& p, double x) {
  return {2.0 * p.alpha, p.mu * x, std::sqrt((p.beta / p.alpha) * (1.0 + x * x / p.kappa))};
}

double log_score(const StudentT& dist, double y) {
  return t_log_density(t_constant(dist.df), dist.df, dist.loc, dist.scale, y);
}

double mean_log_score(const NigParams& p, std::span<const Observation> batch) {
  if (batch.empty()) return 0.0;
  const double df = 2.0 * p.alpha;
  const TConstant c = t_constant(df);
  const double var_ratio = p.beta / p.alpha;
  double sum = 0;
  for (const auto& o : batch) {
    const double scale = std::sqrt(var_ratio * (1.0 + o.x * o.x / p.kappa));
    sum += t_log_density(c, df, p.mu * o.x, scale, o.y);
  }
  return sum / static_cast<double>(batch.size());
}

double kl_nig(const NigParams& ref, const NigParams& dep) {
  const double k_ratio = dep.kappa / ref.kappa;
  const double dmu = ref.mu - dep.mu;
  const double normal =
      0.5 * (dep.kappa * dmu * dmu * ref.alpha / ref.beta + k_ratio - 1.0 - std::log(k_ratio));
  const double inv_gamma = (ref.alpha - dep.alpha) * boost::math::digamma(ref.alpha) -
                           std::lgamma(ref.alpha) + std::lgamma(dep.alpha) +
                           dep.alpha * (std::log(ref.beta) - std::log(dep.beta)) +
                           ref.alpha * (dep.beta - ref.beta) / ref.beta;
  return std::max(0.0, normal + inv_gamma);
}

double nig_log_density(const NigParams& p, double b, double s2) {
  const double d = b - p.mu;
  const double log_normal = -0.5 * std::log(2.0 * std::numbers::pi * s2 / p.kappa) -
                            0.5 * p.kappa * d * d / s2;
  const double log_ig = p.alpha * std::log(p.beta) - std::lgamma(p.alpha) -
                        (p.alpha + 1.0) * std::log(s2) - p.beta / s2;
  return log_normal + log_ig;
}

McEstimate kl_nig_mc(const NigParams& ref, const NigParams& dep, std::int64_t n_samples,
                     std::uint64_t seed) {
  require_samples(n_samples);
  std::mt19937_64 rng(seed);
  std::gamma_distribution<double> precision(ref.alpha, 1.0 / ref.beta);
  std::normal_distribution<double> std_normal(0.0, 1.0);
  double sum = 0, sum_sq = 0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const double s2 = 1.0 / precision(rng);
    const double b = ref.mu + std::sqrt(s2 / ref.kappa) * std_normal(rng);
    const double r = nig_log_density(ref, b, s2) - nig_log_density(dep, b, s2);
    sum += r;
    sum_sq += r * r;
  }
  return mean_and_se(sum, sum_sq, n_samples);
}

McEstimate predictive_debt_mc(const NigParams& ref, const NigParams& dep, double x,
                              std::int64_t n_samples, std::uint64_t seed) {
  require_samples(n_samples);
  const StudentT q_ref = predictive(ref, x);
  const StudentT q_dep = predictive(dep, x);
  const TConstant c_ref = t_constant(q_ref.df);
  const TConstant c_dep = t_constant(q_dep.df);
  std::mt19937_64 rng(seed);
  std::student_t_distribution<double> t(q_ref.df);
  double sum = 0, sum_sq = 0;
  for (std::int64_t i = 0; i < n_samples; ++i) {
    const double y = q_ref.loc + q_ref.scale * t(rng);
    const double r = t_log_density(c_ref, q_ref.df, q_ref.loc, q_ref.scale, y) -
                     t_log_density(c_dep, q_dep.df, q_dep.loc, q_dep.scale, y);
    sum += r;
    sum_sq += r * r;
  }
  return mean_and_se(sum, sum_sq, n_samples);
}

}  // namespace ldebt
