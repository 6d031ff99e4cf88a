#pragma once

#include <array>
#include <string>
#include <vector>

#include "tia/tape.hpp"

namespace tia::losses {

using ad::Tape;
using ad::Tensor;

/// Disagreement measures. SE_WEIGHTED is the confidence-weighted entropy loss
/// for classifier banks; SD the per-boundary standard-deviation loss for
/// localizer banks. L1/KL/SWD are the pairwise classification variants, and
/// MAD/VARIANCE swap the dispersion statistic inside the localization loss.
enum class MeasureKind { SE_WEIGHTED, SD, L1, KL, SWD, MAD, VARIANCE };

const char* measure_name(MeasureKind kind);
MeasureKind measure_from_name(const std::string& name);
bool measure_is_classification(MeasureKind kind);
bool measure_is_localization(MeasureKind kind);
/// L1/KL/SWD run on exactly two predictors; the bank losses need >= 2.
bool measure_requires_pair(MeasureKind kind);

// Fixed so that SWD is a deterministic function of its inputs.
inline constexpr std::size_t kSwdProjections = 128;
inline constexpr std::uint64_t kSwdProjectionSeed = 20240117;

// ---------------------------------------------------------------------------
// Graph builders. Each takes the per-head outputs of one bank over a batch
// (head h -> (B, C) probabilities or (B, 4) boxes, all on `tape`) and returns
// the per-sample inconsistency vector (shape (B); SWD is a batch-level
// discrepancy and returns shape (1)).
// ---------------------------------------------------------------------------

/// Confidence-weighted entropy inconsistency of a classifier bank:
/// per sample, with column vectors m_i over the N heads,
///   loss = -sum_i entropy(softmax(m_i)) * mean(m_i).
Tensor cls_inconsistency_graph(Tape& tape, const std::vector<Tensor>& probs);

/// Standard-deviation inconsistency of a localizer bank: per sample,
///   loss = 1/(4 sqrt(M)) * sum_coord ||column - column_mean||_2.
Tensor loc_inconsistency_graph(Tape& tape, const std::vector<Tensor>& boxes);

/// Any measure, dispatched; per-sample vector except SWD (shape (1)).
Tensor measure_graph(Tape& tape, MeasureKind kind,
                     const std::vector<Tensor>& outputs);

/// Domain-adaptation combiner: -mean(target inconsistency) + mean(source
/// inconsistency). Minimised by the heads, reversed into the trunk by GRL.
Tensor task_da_loss_graph(Tape& tape, const Tensor& per_sample_source,
                          const Tensor& per_sample_target);

/// Mean cross-entropy of probability rows against integer labels.
Tensor cross_entropy_graph(Tape& tape, const Tensor& probs,
                           const std::vector<int>& labels);

/// Smooth-L1 (beta=1) regression loss summed over the 4 box coordinates,
/// averaged over the batch.
Tensor smooth_l1_loss_graph(Tape& tape, const Tensor& pred,
                            const std::vector<std::array<double, 4>>& targets);

/// Mean binary cross-entropy of sigmoid outputs (B,1) against 0/1 labels.
Tensor bce_graph(Tape& tape, const Tensor& probs,
                 const std::vector<int>& labels);

// ---------------------------------------------------------------------------
// Eager, validated entry points (also the surface the python module binds).
// ---------------------------------------------------------------------------

/// probs: N x C matrix of classifier probability rows. Requires N >= 2 and
/// each row to sum to 1 within 1e-6 with entries in [0,1].
double cls_inconsistency(const Tensor& probs);

/// preds: M x 4 matrix of localizer outputs. Requires M >= 2, finite entries.
double loc_inconsistency(const Tensor& preds);

/// outputs: one matrix per predictor; single-sample rows (1 x C or 1 x 4) or
/// whole batches for SWD.
double alt_measure(MeasureKind kind, const std::vector<Tensor>& outputs);

/// Scalar combiner over precomputed per-sample inconsistency values.
double task_da_loss(const std::vector<double>& source_values,
                    const std::vector<double>& target_values);

struct LossComponents {
  double detection = 0.0;
  double da = 0.0;       // instance-level DANN term
  double cls_da = 0.0;   // classification inconsistency alignment
  double loc_da = 0.0;   // localization inconsistency alignment
};

/// Weighted total: detection + l1*da + l2*cls_da + l3*loc_da. Absent
/// components are zero in `components`. Negative weights are rejected.
double total_loss(const LossComponents& components, double lambda1,
                  double lambda2, double lambda3);

}  // namespace tia::losses
