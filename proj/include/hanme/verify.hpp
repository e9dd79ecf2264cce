#pragma once

#include <string>
#include <vector>

namespace hanme::verify {

struct CheckResult {
  std::string name;
  bool passed = false;
  bool skipped = false;
  std::string detail;
  double seconds = 0.0;
};

struct Options {
  // Optional IMDB-format dataset directory; the reproduction check is
  // skipped when empty or missing.
  std::string imdb_dir;
};

// The full property/oracle suite. Each check is self-timed and enforces its
// own runtime budget.
std::vector<CheckResult> run_all(const Options& opt = {});

// Prints one pass/fail line per check to stdout; returns the number of
// failed (non-skipped) checks.
int report(const std::vector<CheckResult>& results);

}  // namespace hanme::verify
