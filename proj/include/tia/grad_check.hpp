#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tia/tape.hpp"

namespace tia::ad {

/// Builds a scalar loss on the given tape from parameter leaves (one leaf per
/// entry, same order as the parameter list passed to grad_check).
using GraphFn =
    std::function<Tensor(Tape&, const std::vector<Tensor>& leaves)>;

struct GradCheckReport {
  double max_rel_err = 0.0;
  bool pass = false;
  std::string worst;  // "param 2, coord 5" style diagnostic
};

/// Compares the analytic gradient of f against central differences
/// (f(x+h) - f(x-h)) / 2h per coordinate. Relative error uses a
/// max(1, |analytic|, |numeric|) denominator. A non-finite evaluation fails
/// the report and names the offending coordinate.
GradCheckReport grad_check(const GraphFn& f, const std::vector<Tensor>& params,
                           double h = 1e-5, double tol = 1e-4);

}  // namespace tia::ad
