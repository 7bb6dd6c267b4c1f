#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "linrec/verify.hpp"

using namespace linrec;

TEST_CASE("the property suite passes on a healthy build") {
  VerifyOptions opt;
  opt.workers = 4;
  auto report = run_verify(opt);
  REQUIRE(report.checks.size() == 12);
  for (const auto& c : report.checks) {
    INFO(c.name, ": ", c.detail);
    CHECK(c.passed);
  }
  CHECK(report.all_passed());
}

TEST_CASE("the suite passes in 32-bit mode with its own tolerances") {
  VerifyOptions opt;
  opt.workers = 2;
  opt.use_f32 = true;
  auto report = run_verify(opt);
  for (const auto& c : report.checks) {
    INFO(c.name, ": ", c.detail);
    CHECK(c.passed);
  }
}

TEST_CASE("the suite passes with one worker and with many") {
  for (int w : {1, 8}) {
    VerifyOptions opt;
    opt.workers = w;
    CHECK(run_verify(opt).all_passed());
  }
}

TEST_CASE("an injected sign flip in a backward pass is caught") {
  VerifyOptions opt;
  opt.workers = 2;
  opt.inject_gradient_fault = true;
  auto report = run_verify(opt);
  CHECK_FALSE(report.all_passed());
  int failures = 0;
  for (const auto& c : report.checks)
    if (!c.passed) {
      ++failures;
      CHECK(c.name.find("recurrence backward") != std::string::npos);
    }
  CHECK(failures == 1);  // precisely the sabotaged check
}

TEST_CASE("the table prints one line per check plus a summary") {
  VerifyOptions opt;
  opt.workers = 2;
  auto report = run_verify(opt);
  std::ostringstream out;
  print_verify_table(out, report);
  const std::string text = out.str();
  CHECK(std::count(text.begin(), text.end(), '\n') ==
        long(report.checks.size()) + 1);
  CHECK(text.find("PASS  ") != std::string::npos);
  CHECK(text.find("all checks passed") != std::string::npos);

  opt.inject_gradient_fault = true;
  std::ostringstream bad;
  print_verify_table(bad, run_verify(opt));
  CHECK(bad.str().find("FAIL  ") != std::string::npos);
  CHECK(bad.str().find("FAILURES present") != std::string::npos);
}
