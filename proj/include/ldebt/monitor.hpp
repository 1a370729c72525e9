#pragma once

#include <iosfwd>
#include <span>
#include <vector>

#include "ldebt/nig.hpp"

namespace ldebt {

/// Stable-sample mean of sqrt-KL debt per spell age, plus a pooled residual
/// scale. Ages beyond the calibrated range reuse the last calibrated mean.
struct AgeAdjustment {
  std::vector<double> mu0_by_age;  // index = spell age
  double sigma0 = 1.0;

  int a_max() const { return static_cast<int>(mu0_by_age.size()) - 1; }
  double mu0(int age) const;

  /// mu0 = 0, sigma0 = 1: adjusted debt equals raw debt.
  static AgeAdjustment identity() { return {{0.0}, 1.0}; }

  friend bool operator==(const AgeAdjustment&, const AgeAdjustment&) = default;
};

inline constexpr double kSigmaFloor = 1e-6;
inline constexpr double kResidualCutoff = 2.0;

struct AgeDebt {
  int age = 0;
  double raw_debt = 0.0;
};

struct AgeFitOptions {
  double sigma_floor = kSigmaFloor;
  /// Centered moving-average window over ages for mu0; 0 or 1 disables.
  int smoothing_window = 0;
};

struct MonitoringRecord {
  int period = 0;
  int age = 0;
  double raw_debt = 0.0;
  double adj_debt = 0.0;
  double score_gap = 0.0;     // shadow minus deployed mean log score, monitoring batch
  double mean_gap = 0.0;      // |mu_shadow - mu_deployed|
  double resid_exceed = 0.0;  // fraction of |standardized residual| > 2 under deployed
};

/// sqrt(KL(shadow || deployed)); the shadow is the reference.
double raw_debt(const NigParams& shadow, const NigParams& deployed);

/// Throws CalibrationGap if any age in 0..max(age) has no record.
AgeAdjustment fit_age_adjustment(std::span<const AgeDebt> stable_records,
                                 const AgeFitOptions& opts = {});

double adjust(double raw, int age, const AgeAdjustment& adj);

MonitoringRecord monitoring_features(const NigParams& shadow, const NigParams& deployed,
                                     std::span<const Observation> batch, int age,
                                     const AgeAdjustment& adj);

/// Rows "age,mu0" followed by a trailing "sigma0,<value>" row.
void write_age_adjustment(const AgeAdjustment& adj, std::ostream& out);
AgeAdjustment read_age_adjustment(std::istream& in);

}  // namespace ldebt
