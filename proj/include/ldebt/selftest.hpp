#pragma once

#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "ldebt/nig.hpp"

namespace ldebt {

struct CheckResult {
  std::string name;
  bool passed = false;
  double measured = 0.0;   // worst error observed
  double tolerance = 0.0;
  std::string detail;
};

/// Injection points for negative controls.
struct SelfTestHooks {
  std::function<double(const NigParams&, const NigParams&)> kl = kl_nig;
  std::int64_t kl_mc_samples = 1'000'000;
};

std::vector<CheckResult> selftest(const SelfTestHooks& hooks = {});

/// One line per check; returns true when all passed.
bool print_checks(const std::vector<CheckResult>& checks, std::ostream& out);

}  // namespace ldebt
