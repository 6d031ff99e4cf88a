#pragma once

#include <string>

namespace tia::toy {

/// Trains a small 2-class model with three auxiliary classifiers on a 2-D
/// shifted benchmark and writes a grid of per-classifier decisions to CSV
/// (columns: x0, x1, primary, aux_0, aux_1, aux_2). Qualitative output for
/// plotting decision-boundary pictures externally.
void write_toy2d_csv(const std::string& path, std::uint64_t seed = 7);

}  // namespace tia::toy
