#pragma once

// Invariant suite behind `tpisim selftest`: algebraic identities, determinism, oracle
// agreement, SIMD equivalence and estimator calibration.

#include <cstdint>
#include <string>
#include <vector>

namespace tpi {

struct PropertyResult {
  std::string name;
  bool pass = false;
  std::string detail;
  double seconds = 0.0;
};

struct SelftestOptions {
  std::uint64_t seed = 1;
};

/// Names in execution order.
std::vector<std::string> selftest_property_names();

/// Runs one property; InvalidArgument for an unknown name. Exceptions thrown by the code under
/// test are reported as failures.
PropertyResult run_property(const std::string& name, const SelftestOptions& options = {});

std::vector<PropertyResult> run_selftest(const SelftestOptions& options = {});

}  // namespace tpi
