#pragma once

#include <array>
#include <string>
#include <vector>

#include "tia/common.hpp"

namespace tia::synth {

enum class Domain { Source, Target };

const char* domain_name(Domain d);

/// One detection-surrogate sample: features, class label, normalized box
/// (cx, cy, w, h) and the domain it was drawn from.
struct Sample {
  std::vector<double> x;
  int label = 0;
  std::array<double, 4> box{};
  Domain domain = Domain::Source;
};

struct Dataset {
  std::size_t dim = 0;
  std::vector<Sample> samples;
};

/// Generative recipe for a source/target pair with controlled covariate
/// shift: class-conditional Gaussians in a shared latent space; the target
/// domain sees the latent through an orthogonal transform plus translation.
/// Labels and boxes are functions of the latent alone, so both tasks are
/// preserved across the shift.
struct ShiftSpec {
  std::size_t dim = 10;
  std::size_t num_classes = 4;
  std::vector<std::vector<double>> class_means;       // C x d
  double class_cov_scale = 1.0;
  std::vector<std::vector<double>> target_rotation;   // d x d, orthogonal
  std::vector<double> target_shift;                   // d
  std::vector<std::vector<double>> box_map;           // 4 x d
  double noise_sigma = 0.1;
  std::size_t train_per_domain = 2000;
  std::size_t test_per_domain = 500;
};

/// The benchmark recipe used throughout: d=10, C=4, 2000 train samples per
/// domain. Matrices are built from a fixed construction seed so the default
/// is one specific benchmark, not a family.
ShiftSpec default_shift_spec();

/// Checks orthogonality of the rotation (1e-8), class-mean separation
/// (>= 3x covariance scale), dimensions and counts. Throws InvalidArgument.
void validate(const ShiftSpec& spec);

struct GeneratedData {
  Dataset source_train, source_test, target_train, target_test;
};

/// Deterministic in (spec, seed). Target-train labels are generated and
/// stored, but adaptation training must never read them.
GeneratedData generate_dataset(const ShiftSpec& spec, std::uint64_t seed);

/// CSV with header: domain,y,b_cx,b_cy,b_w,b_h,x_0,...,x_{d-1}.
/// Floats carry 17 significant digits; byte-identical for identical data.
void write_dataset(const Dataset& dataset, const std::string& path);
Dataset read_dataset(const std::string& path);

ShiftSpec shift_spec_from_json(const std::string& text);
std::string shift_spec_to_json(const ShiftSpec& spec);
ShiftSpec load_shift_spec(const std::string& path);

/// Squashes the 4 linear box readouts into the valid ranges:
/// cx, cy in (0,1); w, h in (0.05, 0.5).
std::array<double, 4> squash_box(const std::array<double, 4>& raw);

}  // namespace tia::synth
