#pragma once

#include <array>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tia/model.hpp"
#include "tia/synthgen.hpp"

namespace tia::eval {

/// Detection quality bucket by IoU with ground truth: Correct (>= 0.5),
/// MisLocalization (0.5 > IoU >= 0.3), Background (< 0.3).
enum class DetectionKind { Correct, MisLocalization, Background };

const char* detection_kind_name(DetectionKind kind);

/// Intersection-over-union of two (cx, cy, w, h) boxes; 0 when disjoint.
/// Requires positive widths and heights.
double iou(const std::array<double, 4>& a, const std::array<double, 4>& b);

/// Partition of [0, 1] by the quoted thresholds; boundary values 0.5 and 0.3
/// map to Correct and MisLocalization.
DetectionKind classify_detection(double iou_value);

struct EvalSummary {
  double accuracy = 0.0;
  double loc_mse = 0.0;   // mean over samples and the 4 coordinates
  double mean_iou = 0.0;
  // Error-type fractions over the correctly classified samples.
  double frac_correct = 0.0;
  double frac_misloc = 0.0;
  double frac_background = 0.0;
  std::size_t counted = 0;  // number of correctly classified samples
};

/// Per-sample predictions folded into a summary. Predicted boxes with
/// nonpositive width/height count as IoU 0 (Background).
EvalSummary summarize(const std::vector<int>& pred_labels,
                      const std::vector<std::array<double, 4>>& pred_boxes,
                      const synth::Dataset& dataset);

/// Runs the primary heads over the dataset (argmax classification, direct
/// box regression) and summarizes. Deterministic.
EvalSummary evaluate(const model::Model& model, const synth::Dataset& dataset);

nlohmann::json summary_to_json(const EvalSummary& summary);
void write_summary(const EvalSummary& summary, const std::string& path);

}  // namespace tia::eval
