#include <doctest.h>

#include <sstream>

#include "ldebt/selftest.hpp"

using namespace ldebt;

namespace {

const CheckResult& find(const std::vector<CheckResult>& checks, const std::string& name) {
  for (const auto& c : checks) {
    if (c.name == name) return c;
  }
  FAIL("no check named " << name);
  return checks.front();
}

}  // namespace

TEST_CASE("selftest: every check passes on the shipped implementation") {
  const auto checks = selftest();
  CHECK(checks.size() == 7);
  for (const auto& c : checks) CHECK_MESSAGE(c.passed, c.name << " measured " << c.measured);
  std::ostringstream out;
  CHECK(print_checks(checks, out));
  CHECK(out.str().find("FAIL") == std::string::npos);
}

TEST_CASE("selftest: an offset KL fails the identity and adoption checks") {
  SelfTestHooks hooks;
  hooks.kl = [](const NigParams& a, const NigParams& b) { return kl_nig(a, b) + 1e-3; };
  const auto checks = selftest(hooks);
  CHECK_FALSE(find(checks, "kl_identity_and_nonnegativity").passed);
  CHECK_FALSE(find(checks, "adoption_law_and_always_count").passed);
  CHECK(find(checks, "sequential_vs_batch_update").passed);
  std::ostringstream out;
  CHECK_FALSE(print_checks(checks, out));
}

TEST_CASE("selftest: a scaled KL fails the Monte Carlo comparison") {
  SelfTestHooks hooks;
  hooks.kl = [](const NigParams& a, const NigParams& b) { return 1.05 * kl_nig(a, b); };
  const auto checks = selftest(hooks);
  CHECK_FALSE(find(checks, "kl_closed_form_vs_monte_carlo").passed);
  CHECK(find(checks, "kl_identity_and_nonnegativity").passed);
}
