#pragma once

#include <string>
#include <vector>

#include "tia/tape.hpp"

namespace tia::model {

using ad::Tape;
using ad::Tensor;

struct ModelConfig {
  std::size_t input_dim = 10;
  std::size_t num_classes = 4;
  std::vector<std::size_t> trunk_widths = {64, 64};
  std::size_t num_aux_classifiers = 8;  // N
  std::size_t num_aux_localizers = 4;   // M
  std::vector<std::size_t> disc_widths = {32};
  /// Extra per-task binary discriminators (the task-DANN ablation row).
  bool with_task_discriminators = false;
};

void validate(const ModelConfig& config);

/// Disjoint, exhaustive parameter partition; the detach/GRL wiring and the
/// optimizer's per-group isolation checks are expressed against it.
enum class ParamGroup {
  Trunk,
  PrimaryCls,
  PrimaryLoc,
  AuxCls,
  AuxLoc,
  Disc,
  TaskDiscCls,
  TaskDiscLoc,
};

const char* group_name(ParamGroup g);

struct Param {
  ParamGroup group;
  int head = -1;  // bank index for AuxCls / AuxLoc
  std::string name;
  Tensor value;
};

struct Model {
  ModelConfig config;
  std::vector<Param> params;

  std::size_t feature_dim() const { return config.trunk_widths.back(); }
};

/// Fan-in scaled uniform init; every head draws from its own RNG stream so
/// the banks differ. Deterministic in (config, seed).
Model init_model(const ModelConfig& config, std::uint64_t seed);

/// Which graph paths to build. Both auxiliary paths share head weights; they
/// differ only in how gradients reach the trunk (cut vs reversed).
struct PathFlags {
  bool primary = true;
  bool aux_detached = false;
  bool aux_adapt = false;
  bool discriminator = false;
  bool task_discriminators = false;
  /// Testing hook: route the adaptation paths through identity instead of
  /// GRL, for comparing gradients against the reversal contract.
  bool adapt_identity = false;
  double grl_scale = 1.0;
};

struct ForwardBundle {
  Tensor features;        // (B, F)
  Tensor primary_probs;   // (B, C)
  Tensor primary_box;     // (B, 4)
  std::vector<Tensor> aux_cls_detached, aux_cls_adapt;  // N x (B, C)
  std::vector<Tensor> aux_loc_detached, aux_loc_adapt;  // M x (B, 4)
  Tensor disc_prob;                                     // (B, 1)
  Tensor task_disc_cls_prob, task_disc_loc_prob;        // (B, 1)
};

/// Model parameters registered as leaves on one tape, parallel to
/// model.params; gradients are read back through these nodes.
struct TapedParams {
  std::vector<Tensor> leaves;
};

TapedParams lift(Tape& tape, const Model& model);

ForwardBundle forward(Tape& tape, const Model& model, const TapedParams& tp,
                      const Tensor& x_batch, const PathFlags& flags);

/// Convenience: lift + forward on a fresh caller-owned tape.
ForwardBundle forward(Tape& tape, const Model& model, const Tensor& x_batch,
                      const PathFlags& flags);

/// JSON round-trip: {format_version, config, parameters:{group:[...]}}.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);
std::string model_to_json(const Model& model);
Model model_from_json(const std::string& text);

}  // namespace tia::model
