#include "tia/toy2d.hpp"

#include <algorithm>
#include <fstream>

#include "tia/trainer.hpp"

namespace tia::toy {

void write_toy2d_csv(const std::string& path, std::uint64_t seed) {
  synth::ShiftSpec spec;
  spec.dim = 2;
  spec.num_classes = 2;
  spec.train_per_domain = 400;
  spec.test_per_domain = 100;
  spec.noise_sigma = 0.15;
  {
    // Hand-set geometry: means on the x-axis, a 90-degree rotation plus a
    // small shift as the target transform.
    spec.class_means = {{-2.0, 0.0}, {2.0, 0.0}};
    spec.target_rotation = {{0.0, -1.0}, {1.0, 0.0}};
    spec.target_shift = {0.5, 0.5};
    spec.box_map = {{0.4, 0.1}, {0.1, 0.4}, {-0.3, 0.2}, {0.2, -0.3}};
  }
  synth::GeneratedData data = synth::generate_dataset(spec, seed);

  train::ExperimentConfig config;
  config.mode = train::Mode::TiaCls;
  config.model.input_dim = 2;
  config.model.num_classes = 2;
  config.model.trunk_widths = {16, 16};
  config.model.num_aux_classifiers = 3;
  config.model.num_aux_localizers = 0;
  config.model.disc_widths = {8};
  config.iterations = 400;
  config.batch_source = 16;
  config.batch_target = 16;
  config.learning_rate = 0.05;
  config.lr_decay_interval = 300;
  config.eval_interval = 200;
  config.seed = seed;

  train::RunResult result = train::run_experiment(
      config, data.source_train, data.target_train, data.source_test,
      data.target_test);

  // Grid over the joint feature range of both domains.
  double lo = 1e300, hi = -1e300;
  for (const auto* ds : {&data.source_train, &data.target_train}) {
    for (const synth::Sample& s : ds->samples) {
      for (double v : s.x) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
      }
    }
  }
  const double pad = 0.1 * (hi - lo);
  lo -= pad;
  hi += pad;

  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << "x0,x1,primary";
  for (std::size_t i = 0; i < config.model.num_aux_classifiers; ++i)
    out << ",aux_" << i;
  out << '\n';

  constexpr std::size_t kGrid = 41;
  model::PathFlags flags;
  flags.aux_detached = true;
  for (std::size_t gy = 0; gy < kGrid; ++gy) {
    for (std::size_t gx = 0; gx < kGrid; ++gx) {
      const double x0 = lo + (hi - lo) * gx / (kGrid - 1);
      const double x1 = lo + (hi - lo) * gy / (kGrid - 1);
      ad::Tape tape;
      model::ForwardBundle b = model::forward(
          tape, result.model, ad::Tensor({1, 2}, {x0, x1}), flags);
      auto argmax = [](const ad::Tensor& probs) {
        return probs.values[0] >= probs.values[1] ? 0 : 1;
      };
      out << format_double(x0) << ',' << format_double(x1) << ','
          << argmax(b.primary_probs);
      for (const ad::Tensor& p : b.aux_cls_detached) out << ',' << argmax(p);
      out << '\n';
    }
  }
}

}  // namespace tia::toy
