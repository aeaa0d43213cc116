#pragma once

#include <string>
#include <vector>

namespace emghand::selftest {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Built-in verification battery: gradient checks against central finite
/// differences, DFT/Parseval/DWT oracles, Wilcoxon exact-enumeration oracle,
/// Shapiro-Wilk sanity, ray-cast geometry oracles, and kinematics spot
/// checks. `inject_lstm_fault` flips a sign in the LSTM backward pass so the
/// gradient check must fail (mutation sanity).
std::vector<CheckResult> run_all(bool inject_lstm_fault = false);

}  // namespace emghand::selftest
