#include "ldebt/monitor.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <ostream>
#include <string>

#include "ldebt/csv.hpp"
#include "ldebt/errors.hpp"

namespace ldebt {

double AgeAdjustment::mu0(int age) const {
  const int a = std::clamp(age, 0, a_max());
  return mu0_by_age[static_cast<std::size_t>(a)];
}

double raw_debt(const NigParams& shadow, const NigParams& deployed) {
  return std::sqrt(kl_nig(shadow, deployed));
}

AgeAdjustment fit_age_adjustment(std::span<const AgeDebt> stable_records,
                                 const AgeFitOptions& opts) {
  if (stable_records.empty()) throw CalibrationGap("no stable calibration records");
  int a_max = 0;
  for (const auto& r : stable_records) {
    if (r.age < 0) throw CalibrationError("negative spell age in calibration records");
    a_max = std::max(a_max, r.age);
  }
  const auto n_ages = static_cast<std::size_t>(a_max) + 1;
  std::vector<double> sum(n_ages, 0.0);
  std::vector<long> count(n_ages, 0);
  for (const auto& r : stable_records) {
    sum[static_cast<std::size_t>(r.age)] += r.raw_debt;
    ++count[static_cast<std::size_t>(r.age)];
  }
  std::string missing;
  for (std::size_t a = 0; a < n_ages; ++a) {
    if (count[a] == 0) missing += (missing.empty() ? "" : ",") + std::to_string(a);
  }
  if (!missing.empty()) throw CalibrationGap("no stable records at ages: " + missing);

  AgeAdjustment adj;
  adj.mu0_by_age.resize(n_ages);
  for (std::size_t a = 0; a < n_ages; ++a) adj.mu0_by_age[a] = sum[a] / static_cast<double>(count[a]);

  if (opts.smoothing_window > 1) {
    const int half = opts.smoothing_window / 2;
    std::vector<double> smoothed(n_ages);
    for (int a = 0; a <= a_max; ++a) {
      const int lo = std::max(0, a - half);
      const int hi = std::min(a_max, a + half);
      double s = 0;
      for (int b = lo; b <= hi; ++b) s += adj.mu0_by_age[static_cast<std::size_t>(b)];
      smoothed[static_cast<std::size_t>(a)] = s / (hi - lo + 1);
    }
    adj.mu0_by_age = std::move(smoothed);
  }

  // Sample standard deviation of pooled residuals.
  double ss = 0;
  double mean = 0;
  for (const auto& r : stable_records) mean += r.raw_debt - adj.mu0(r.age);
  mean /= static_cast<double>(stable_records.size());
  for (const auto& r : stable_records) {
    const double e = r.raw_debt - adj.mu0(r.age) - mean;
    ss += e * e;
  }
  const double n = static_cast<double>(stable_records.size());
  const double sd = n > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  adj.sigma0 = std::max(sd, opts.sigma_floor);
  return adj;
}

double adjust(double raw, int age, const AgeAdjustment& adj) {
  return (raw - adj.mu0(age)) / adj.sigma0;
}

MonitoringRecord monitoring_features(const NigParams& shadow, const NigParams& deployed,
                                     std::span<const Observation> batch, int age,
                                     const AgeAdjustment& adj) {
  MonitoringRecord rec;
  rec.age = age;
  rec.raw_debt = raw_debt(shadow, deployed);
  rec.adj_debt = adjust(rec.raw_debt, age, adj);
  rec.score_gap = mean_log_score(shadow, batch) - mean_log_score(deployed, batch);
  rec.mean_gap = std::abs(shadow.mu - deployed.mu);
  if (!batch.empty()) {
    int exceed = 0;
    for (const auto& o : batch) {
      const StudentT q = predictive(deployed, o.x);
      if (std::abs(o.y - q.loc) / q.scale > kResidualCutoff) ++exceed;
    }
    rec.resid_exceed = static_cast<double>(exceed) / static_cast<double>(batch.size());
  }
  return rec;
}

void write_age_adjustment(const AgeAdjustment& adj, std::ostream& out) {
  out << "age,mu0\n";
  for (std::size_t a = 0; a < adj.mu0_by_age.size(); ++a) {
    out << a << ',' << csv::num(adj.mu0_by_age[a]) << '\n';
  }
  out << "sigma0," << csv::num(adj.sigma0) << '\n';
}

AgeAdjustment read_age_adjustment(std::istream& in) {
  std::vector<std::string> header;
  const auto rows = csv::read_rows(in, &header);
  if (header != std::vector<std::string>{"age", "mu0"}) {
    throw CalibrationError("age adjustment file has an unexpected header");
  }
  AgeAdjustment adj;
  bool have_sigma = false;
  for (const auto& row : rows) {
    if (row.size() != 2) throw CalibrationError("age adjustment row must have 2 fields");
    if (row[0] == "sigma0") {
      adj.sigma0 = csv::to_double(row[1]);
      have_sigma = true;
      continue;
    }
    if (have_sigma) throw CalibrationError("sigma0 must be the trailing row");
    if (csv::to_int(row[0]) != static_cast<long long>(adj.mu0_by_age.size())) {
      throw CalibrationError("age rows must be contiguous from 0");
    }
    adj.mu0_by_age.push_back(csv::to_double(row[1]));
  }
  if (!have_sigma || adj.mu0_by_age.empty()) throw CalibrationError("incomplete age adjustment file");
  return adj;
}

}  // namespace ldebt
