#pragma once

#include <string>
#include <vector>

#include "tia/grad_check.hpp"

namespace tia::suite {

struct SuiteCheck {
  std::string name;
  bool pass = false;
  double max_err = 0.0;  // relative error for FD checks, absolute for exact
  int instances = 0;
};

/// Finite-difference verification of every primitive and every loss
/// (h = 1e-5, relative tolerance 1e-4, >= 100 random instances each), plus
/// the exact gradient-reversal and detach contracts, and the full training
/// objective differentiated through a tiny model.
std::vector<SuiteCheck> run_gradient_suite(std::uint64_t seed);

bool all_pass(const std::vector<SuiteCheck>& checks);

}  // namespace tia::suite
