#include "tia/eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

namespace tia::eval {

const char* detection_kind_name(DetectionKind kind) {
  switch (kind) {
    case DetectionKind::Correct: return "Correct";
    case DetectionKind::MisLocalization: return "MisLocalization";
    case DetectionKind::Background: return "Background";
  }
  return "?";
}

double iou(const std::array<double, 4>& a, const std::array<double, 4>& b) {
  if (a[2] <= 0.0 || a[3] <= 0.0 || b[2] <= 0.0 || b[3] <= 0.0) {
    throw InvalidArgument("iou: boxes must have positive width and height");
  }
  const double ax0 = a[0] - a[2] / 2, ax1 = a[0] + a[2] / 2;
  const double ay0 = a[1] - a[3] / 2, ay1 = a[1] + a[3] / 2;
  const double bx0 = b[0] - b[2] / 2, bx1 = b[0] + b[2] / 2;
  const double by0 = b[1] - b[3] / 2, by1 = b[1] + b[3] / 2;
  const double iw = std::min(ax1, bx1) - std::max(ax0, bx0);
  const double ih = std::min(ay1, by1) - std::max(ay0, by0);
  if (iw <= 0.0 || ih <= 0.0) return 0.0;
  const double inter = iw * ih;
  // Areas from the same corner arithmetic keep identical boxes at exactly 1.
  const double uni =
      (ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter;
  return inter / uni;
}

DetectionKind classify_detection(double iou_value) {
  if (iou_value < 0.0 || iou_value > 1.0) {
    throw InvalidArgument("classify_detection: IoU " +
                          std::to_string(iou_value) + " outside [0, 1]");
  }
  if (iou_value >= 0.5) return DetectionKind::Correct;
  if (iou_value >= 0.3) return DetectionKind::MisLocalization;
  return DetectionKind::Background;
}

EvalSummary summarize(const std::vector<int>& pred_labels,
                      const std::vector<std::array<double, 4>>& pred_boxes,
                      const synth::Dataset& dataset) {
  const std::size_t n = dataset.samples.size();
  if (n == 0) throw InvalidArgument("summarize: empty dataset");
  if (pred_labels.size() != n || pred_boxes.size() != n) {
    throw InvalidArgument("summarize: prediction count mismatch");
  }
  EvalSummary s;
  double mse = 0.0, iou_sum = 0.0;
  std::size_t correct_cls = 0, kind_counts[3] = {0, 0, 0};
  for (std::size_t i = 0; i < n; ++i) {
    const synth::Sample& gt = dataset.samples[i];
    const auto& pb = pred_boxes[i];
    for (std::size_t k = 0; k < 4; ++k) {
      const double d = pb[k] - gt.box[k];
      mse += d * d;
    }
    // Degenerate predicted boxes count as zero overlap.
    const double j =
        (pb[2] > 0.0 && pb[3] > 0.0) ? iou(pb, gt.box) : 0.0;
    iou_sum += j;
    if (pred_labels[i] == gt.label) {
      ++correct_cls;
      ++kind_counts[static_cast<int>(classify_detection(std::min(j, 1.0)))];
    }
  }
  s.accuracy = static_cast<double>(correct_cls) / static_cast<double>(n);
  s.loc_mse = mse / static_cast<double>(4 * n);
  s.mean_iou = iou_sum / static_cast<double>(n);
  s.counted = correct_cls;
  if (correct_cls > 0) {
    s.frac_correct = static_cast<double>(kind_counts[0]) / correct_cls;
    s.frac_misloc = static_cast<double>(kind_counts[1]) / correct_cls;
    s.frac_background = static_cast<double>(kind_counts[2]) / correct_cls;
  }
  return s;
}

EvalSummary evaluate(const model::Model& model, const synth::Dataset& dataset) {
  if (dataset.samples.empty()) throw InvalidArgument("evaluate: empty dataset");
  if (dataset.dim != model.config.input_dim) {
    throw InvalidArgument("evaluate: dataset dim does not match model");
  }
  std::vector<int> labels;
  std::vector<std::array<double, 4>> boxes;
  labels.reserve(dataset.samples.size());
  boxes.reserve(dataset.samples.size());

  constexpr std::size_t kChunk = 256;
  model::PathFlags flags;  // primary heads only
  for (std::size_t start = 0; start < dataset.samples.size(); start += kChunk) {
    const std::size_t stop = std::min(start + kChunk, dataset.samples.size());
    std::vector<double> xs;
    xs.reserve((stop - start) * dataset.dim);
    for (std::size_t i = start; i < stop; ++i) {
      xs.insert(xs.end(), dataset.samples[i].x.begin(),
                dataset.samples[i].x.end());
    }
    ad::Tape tape;
    model::ForwardBundle out = model::forward(
        tape, model, ad::Tensor({stop - start, dataset.dim}, std::move(xs)),
        flags);
    const std::size_t c = model.config.num_classes;
    for (std::size_t r = 0; r < stop - start; ++r) {
      std::size_t best = 0;
      for (std::size_t k = 1; k < c; ++k) {
        if (out.primary_probs.at(r, k) > out.primary_probs.at(r, best)) best = k;
      }
      labels.push_back(static_cast<int>(best));
      boxes.push_back({out.primary_box.at(r, 0), out.primary_box.at(r, 1),
                       out.primary_box.at(r, 2), out.primary_box.at(r, 3)});
    }
  }
  return summarize(labels, boxes, dataset);
}

nlohmann::json summary_to_json(const EvalSummary& s) {
  return nlohmann::json{{"accuracy", s.accuracy},
                        {"loc_mse", s.loc_mse},
                        {"mean_iou", s.mean_iou},
                        {"error_types",
                         {{"correct", s.frac_correct},
                          {"mislocalization", s.frac_misloc},
                          {"background", s.frac_background},
                          {"counted", s.counted}}}};
}

void write_summary(const EvalSummary& summary, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << summary_to_json(summary).dump(2) << '\n';
}

}  // namespace tia::eval
