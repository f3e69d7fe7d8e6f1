// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>
#include <vector>

namespace hpe {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

/// Fast invariant checks: codec roundtrip, loss gradients against finite
/// differences, ensemble against a brute-force mean, box squaring and flip
/// properties, and a layer gradient check.
std::vector<CheckResult> run_selftest();

}  // namespace hpe
