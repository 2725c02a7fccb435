#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace deskrl {

// One analytic-vs-central-difference comparison. The metric is
// max_i |a_i - g_i| / max(1, |a_i|, |g_i|) over the full parameter vector.
struct GradCheckResult {
  std::string loss_name;
  std::string arch;
  std::uint64_t seed = 0;
  double relative_error = 0.0;
  bool pass = false;
};

struct GradCheckSummary {
  std::vector<GradCheckResult> results;
  double max_relative_error = 0.0;
  bool all_pass = false;
};

// Runs every loss against both architectures on tiny randomly initialized
// models, three seeds each. Thresholds at `tolerance` (the conformance bar
// is 1e-4 with the 1e-5 central-difference step).
GradCheckSummary run_gradcheck_suite(std::uint64_t base_seed = 1, double tolerance = 1e-4);

}  // namespace deskrl
