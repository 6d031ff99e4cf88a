#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "tia/eval.hpp"

using tia::InvalidArgument;
using tia::Rng;
using namespace tia::eval;

namespace {

tia::synth::Dataset tiny_dataset(std::size_t n, std::size_t classes) {
  tia::synth::Dataset ds;
  ds.dim = 4;
  Rng rng(55);
  for (std::size_t i = 0; i < n; ++i) {
    tia::synth::Sample s;
    s.label = static_cast<int>(i % classes);
    s.x = {rng.normal(), rng.normal(), rng.normal(), rng.normal()};
    s.box = {0.3 + 0.4 * rng.uniform(), 0.3 + 0.4 * rng.uniform(),
             0.1 + 0.3 * rng.uniform(), 0.1 + 0.3 * rng.uniform()};
    ds.samples.push_back(s);
  }
  return ds;
}

}  // namespace

TEST_CASE("iou: worked cases") {
  std::array<double, 4> a{0.5, 0.5, 1.0, 1.0};
  CHECK(iou(a, a) == 1.0);
  // Disjoint boxes.
  CHECK(iou({0.2, 0.2, 0.1, 0.1}, {0.8, 0.8, 0.1, 0.1}) == 0.0);
  // Unit squares centered at (0.5,0.5) and (1.0,0.5): overlap 0.5, union 1.5.
  CHECK(iou({0.5, 0.5, 1.0, 1.0}, {1.0, 0.5, 1.0, 1.0}) ==
        doctest::Approx(1.0 / 3).epsilon(1e-14));
  CHECK_THROWS_AS(iou({0.5, 0.5, 0.0, 0.1}, a), InvalidArgument);
}

TEST_CASE("iou: symmetry and joint-translation invariance") {
  Rng rng(4);
  for (int it = 0; it < 200; ++it) {
    std::array<double, 4> a{rng.uniform(), rng.uniform(),
                            0.05 + 0.4 * rng.uniform(),
                            0.05 + 0.4 * rng.uniform()};
    std::array<double, 4> b{rng.uniform(), rng.uniform(),
                            0.05 + 0.4 * rng.uniform(),
                            0.05 + 0.4 * rng.uniform()};
    const double ab = iou(a, b);
    CHECK(ab == iou(b, a));
    CHECK(ab >= 0.0);
    CHECK(ab <= 1.0);
    const double dx = rng.uniform(-0.3, 0.3), dy = rng.uniform(-0.3, 0.3);
    std::array<double, 4> a2{a[0] + dx, a[1] + dy, a[2], a[3]};
    std::array<double, 4> b2{b[0] + dx, b[1] + dy, b[2], b[3]};
    CHECK(iou(a2, b2) == doctest::Approx(ab).epsilon(1e-12));
  }
}

TEST_CASE("classify_detection: thresholds exactly as quoted") {
  CHECK(classify_detection(0.6) == DetectionKind::Correct);
  CHECK(classify_detection(0.4) == DetectionKind::MisLocalization);
  CHECK(classify_detection(0.1) == DetectionKind::Background);
  // Boundaries are inclusive per the stated inequalities.
  CHECK(classify_detection(0.5) == DetectionKind::Correct);
  CHECK(classify_detection(0.3) == DetectionKind::MisLocalization);
  CHECK(classify_detection(0.0) == DetectionKind::Background);
  CHECK(classify_detection(1.0) == DetectionKind::Correct);
  CHECK_THROWS_AS(classify_detection(-0.01), InvalidArgument);
  CHECK_THROWS_AS(classify_detection(1.01), InvalidArgument);
}

TEST_CASE("classify_detection partitions [0,1]") {
  for (int i = 0; i <= 1000; ++i) {
    const double v = i / 1000.0;
    int hits = 0;
    const DetectionKind k = classify_detection(v);
    if (v >= 0.5) hits += k == DetectionKind::Correct;
    if (v >= 0.3 && v < 0.5) hits += k == DetectionKind::MisLocalization;
    if (v < 0.3) hits += k == DetectionKind::Background;
    CHECK(hits == 1);
  }
}

TEST_CASE("summarize: exact predictions give perfect scores") {
  tia::synth::Dataset ds = tiny_dataset(24, 4);
  std::vector<int> labels;
  std::vector<std::array<double, 4>> boxes;
  for (const auto& s : ds.samples) {
    labels.push_back(s.label);
    boxes.push_back(s.box);
  }
  EvalSummary s = summarize(labels, boxes, ds);
  CHECK(s.accuracy == 1.0);
  CHECK(s.loc_mse == 0.0);
  CHECK(s.mean_iou == 1.0);
  CHECK(s.frac_correct == 1.0);
  CHECK(s.frac_misloc == 0.0);
  CHECK(s.counted == 24);
}

TEST_CASE("summarize: histogram fractions sum to 1 over counted detections") {
  tia::synth::Dataset ds = tiny_dataset(40, 4);
  Rng rng(6);
  std::vector<int> labels;
  std::vector<std::array<double, 4>> boxes;
  for (const auto& s : ds.samples) {
    labels.push_back(static_cast<int>(rng.below(4)));
    boxes.push_back({s.box[0] + 0.2 * rng.normal(), s.box[1] + 0.2 * rng.normal(),
                     s.box[2], s.box[3]});
  }
  EvalSummary s = summarize(labels, boxes, ds);
  if (s.counted > 0) {
    CHECK(s.frac_correct + s.frac_misloc + s.frac_background ==
          doctest::Approx(1.0).epsilon(1e-12));
  }
  CHECK(s.accuracy >= 0.0);
  CHECK(s.accuracy <= 1.0);
  CHECK(s.mean_iou >= 0.0);
  CHECK(s.mean_iou <= 1.0);
}

TEST_CASE("summarize handles degenerate predicted boxes as background") {
  tia::synth::Dataset ds = tiny_dataset(4, 2);
  std::vector<int> labels;
  std::vector<std::array<double, 4>> boxes;
  for (const auto& s : ds.samples) {
    labels.push_back(s.label);
    boxes.push_back({s.box[0], s.box[1], -0.1, 0.2});  // invalid width
  }
  EvalSummary s = summarize(labels, boxes, ds);
  CHECK(s.mean_iou == 0.0);
  CHECK(s.frac_background == 1.0);
}

TEST_CASE("evaluate: chance-level accuracy for a zeroed classifier head") {
  tia::model::ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.num_classes = 4;
  cfg.trunk_widths = {8};
  cfg.num_aux_classifiers = 0;
  cfg.num_aux_localizers = 0;
  tia::model::Model m = tia::model::init_model(cfg, 10);
  for (auto& p : m.params) {
    if (p.group == tia::model::ParamGroup::PrimaryCls) {
      for (double& v : p.value.values) v = 0.0;
    }
  }
  tia::synth::Dataset ds = tiny_dataset(400, 4);  // balanced labels
  EvalSummary s = evaluate(m, ds);
  // Uniform rows argmax to class 0; balanced data sits at chance level.
  CHECK(s.accuracy == doctest::Approx(0.25).epsilon(1e-12));

  EvalSummary again = evaluate(m, ds);
  CHECK(s.accuracy == again.accuracy);
  CHECK(s.loc_mse == again.loc_mse);
  CHECK(s.mean_iou == again.mean_iou);
}

TEST_CASE("evaluate rejects empty datasets") {
  tia::model::ModelConfig cfg;
  cfg.input_dim = 4;
  cfg.num_classes = 2;
  cfg.trunk_widths = {8};
  cfg.num_aux_classifiers = 0;
  cfg.num_aux_localizers = 0;
  tia::model::Model m = tia::model::init_model(cfg, 1);
  tia::synth::Dataset empty;
  empty.dim = 4;
  CHECK_THROWS_AS(evaluate(m, empty), InvalidArgument);
}
