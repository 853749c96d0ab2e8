#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace wbk {

struct GradcheckOptions {
  std::uint64_t seed = 0;
  int instances = 20;
  double tolerance = 1e-3;
  double step = 1e-3;  // central-difference half width
  // Test hook: the analytic gradient of the named case is perturbed before
  // comparison.
  std::string corrupt;
};

struct GradcheckCase {
  std::string name;
  int instances = 0;
  double max_error = 0.0;  // worst ||analytic - numeric|| / max(||analytic||, ||numeric||)
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckCase> cases;
  double seconds = 0.0;
  bool all_passed() const;
  std::string format() const;
};

std::vector<std::string> gradcheck_case_names();
GradcheckReport run_gradcheck(const GradcheckOptions& opt = {});

}  // namespace wbk
