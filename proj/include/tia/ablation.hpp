#pragma once

#include <string>
#include <vector>

#include "tia/trainer.hpp"

namespace tia::ablate {

struct Cell {
  std::string label;
  train::ExperimentConfig config;  // seed is overwritten per run
};

struct AblationSpec {
  std::vector<Cell> cells;
  std::vector<std::uint64_t> seeds;
};

/// Rows mirroring the subtask-measure study: baseline, task-DANN, the
/// pairwise measures (2 predictors each) and the full inconsistency losses.
std::vector<Cell> measure_comparison_cells(const train::ExperimentConfig& base);

/// Two predictor-count sweeps: the classifier bank and the localizer bank
/// varied over {0, 2, 4, 8, 16, 32} with the other bank disabled.
std::vector<Cell> bank_sweep_cells(const train::ExperimentConfig& base);

/// Dispersion-measure rows (MAD, variance, SD) with the classification
/// branch removed.
std::vector<Cell> dispersion_cells(const train::ExperimentConfig& base);

/// JSON: {"base_config": <experiment config>, "seeds": [...]} plus either
/// "preset": "measures" | "bank_sweep" | "dispersion" or explicit "cells": [{label, and
/// any of mode, n, m, measure_cls, measure_loc, lambda1..3}].
AblationSpec spec_from_json(const std::string& text);
AblationSpec load_spec(const std::string& path);

struct SeedResult {
  double tgt_acc = 0.0, tgt_loc_mse = 0.0, tgt_mean_iou = 0.0;
};

struct Row {
  Cell cell;
  bool failed = false;
  std::string error;
  std::vector<SeedResult> per_seed;
  double acc_mean = 0.0, acc_std = 0.0;
  double mse_mean = 0.0, mse_std = 0.0;
  double iou_mean = 0.0, iou_std = 0.0;
};

struct Table {
  std::vector<std::uint64_t> seeds;
  std::vector<Row> rows;
};

/// Runs every cell x seed. `threads` 0 reads TIA_THREADS (default: available
/// parallelism). A failed cell is marked failed; the rest proceed. Results
/// are independent of thread count and execution order.
Table run_ablation(const AblationSpec& spec, unsigned threads = 0);

std::string table_to_csv(const Table& table);
void write_table(const Table& table, const std::string& path);

}  // namespace tia::ablate
