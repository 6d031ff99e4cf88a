#pragma once

#include <optional>
#include <string>
#include <vector>

#include "tia/losses.hpp"
#include "tia/model.hpp"
#include "tia/synthgen.hpp"

namespace tia::train {

using ad::Tape;
using ad::Tensor;

enum class Mode {
  SourceOnly,
  BaselineDann,
  DannTask,
  TiaCls,
  TiaLoc,
  TiaFull,
  MeasureVariant,
};

const char* mode_name(Mode mode);
Mode mode_from_name(const std::string& name);

struct ExperimentConfig {
  Mode mode = Mode::TiaFull;
  model::ModelConfig model;
  double lambda1 = 1.0, lambda2 = 1.0, lambda3 = 0.01;
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::size_t iterations = 5000;
  double lr_decay_factor = 0.1;
  std::size_t lr_decay_interval = 3500;
  std::size_t batch_source = 32, batch_target = 32;
  std::uint64_t seed = 0;
  std::string source_train, target_train, source_test, target_test;
  double grl_scale = 1.0;
  losses::MeasureKind measure_cls = losses::MeasureKind::SE_WEIGHTED;
  losses::MeasureKind measure_loc = losses::MeasureKind::SD;
  std::size_t eval_interval = 250;
};

/// Mode/measure/count consistency plus positive rates. Throws.
void validate(const ExperimentConfig& config);

/// Which objective components the mode activates (a zero trade-off weight
/// also drops its component so degenerate configs match their reduced
/// modes exactly).
struct ComponentMask {
  bool da = false;
  bool cls_da = false;
  bool loc_da = false;
};
ComponentMask components_for(const ExperimentConfig& config);

ExperimentConfig config_from_json(const std::string& text);
std::string config_to_json(const ExperimentConfig& config);
ExperimentConfig load_config(const std::string& path);

/// Per-step measurement row. Raw (unweighted) component values; absent
/// components stay zero.
struct MetricsRecord {
  std::size_t iteration = 0;
  double loss_det = 0.0;
  double loss_da = 0.0;
  double loss_cls_da = 0.0;
  double loss_loc_da = 0.0;
  double src_acc = 0.0, tgt_acc = 0.0;
  double src_loc_mse = 0.0, tgt_loc_mse = 0.0;
  double tgt_mean_iou = 0.0;
  // Batch-mean inconsistency per domain (recorded for the equilibrium trace).
  double src_cls_incon = 0.0, tgt_cls_incon = 0.0;
  double src_loc_incon = 0.0, tgt_loc_incon = 0.0;
};

struct Batch {
  Tensor x;  // (B, d)
  std::vector<int> labels;
  std::vector<std::array<double, 4>> boxes;
};

/// Cycles independently shuffled epochs over one dataset's indices.
class EpochSampler {
 public:
  EpochSampler(std::size_t dataset_size, std::size_t batch_size,
               std::uint64_t seed);
  std::vector<std::size_t> next();

 private:
  std::size_t size_, batch_;
  std::vector<std::size_t> order_;
  std::size_t cursor_;
  Rng rng_;
};

struct TrainState {
  ExperimentConfig config;
  model::Model model;
  std::vector<std::vector<double>> momentum;  // parallel to model.params
  std::size_t iteration = 0;
};

TrainState init_train_state(const ExperimentConfig& config);

/// One combined forward/backward/SGD step. Target labels are never read.
MetricsRecord train_step(TrainState& state, const Batch& source,
                         const Batch& target);

struct RunResult {
  model::Model model;
  std::vector<MetricsRecord> history;  // rows at eval intervals
  // Final evaluation (source test, target test); filled by run_experiment.
  double src_acc = 0.0, tgt_acc = 0.0;
  double src_loc_mse = 0.0, tgt_loc_mse = 0.0;
  double src_mean_iou = 0.0, tgt_mean_iou = 0.0;
  double tgt_cls_incon_first = 0.0, tgt_cls_incon_last = 0.0;
};

/// Full training loop. When `out_dir` is nonempty, writes metrics.csv,
/// model.json and eval.json there (metrics.csv is flushed before any abort).
RunResult run_experiment(const ExperimentConfig& config,
                         const std::string& out_dir = "");

/// In-memory variant used by the ablation harness (datasets already loaded).
RunResult run_experiment(const ExperimentConfig& config,
                         const synth::Dataset& source_train,
                         const synth::Dataset& target_train,
                         const synth::Dataset& source_test,
                         const synth::Dataset& target_test,
                         const std::string& out_dir = "");

std::string metrics_csv_header();
std::string metrics_csv_row(const MetricsRecord& r);

}  // namespace tia::train
