// Command-line front end for the inconsistency-alignment laboratory:
// dataset generation, training, evaluation, ablation sweeps and the
// gradient verification suite. Data goes to files, diagnostics to stderr.
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "tia/ablation.hpp"
#include "tia/eval.hpp"
#include "tia/gradcheck_suite.hpp"
#include "tia/synthgen.hpp"
#include "tia/toy2d.hpp"
#include "tia/trainer.hpp"

namespace {

int run_gen(const std::string& spec_arg, std::uint64_t seed,
            const std::string& out_dir) {
  tia::synth::ShiftSpec spec = spec_arg == "default"
                                   ? tia::synth::default_shift_spec()
                                   : tia::synth::load_shift_spec(spec_arg);
  tia::synth::validate(spec);
  tia::synth::GeneratedData data = tia::synth::generate_dataset(spec, seed);
  std::filesystem::create_directories(out_dir);
  tia::synth::write_dataset(data.source_train, out_dir + "/source_train.csv");
  tia::synth::write_dataset(data.source_test, out_dir + "/source_test.csv");
  tia::synth::write_dataset(data.target_train, out_dir + "/target_train.csv");
  tia::synth::write_dataset(data.target_test, out_dir + "/target_test.csv");
  std::ofstream spec_out(out_dir + "/shift_spec.json", std::ios::binary);
  spec_out << tia::synth::shift_spec_to_json(spec) << '\n';
  std::cerr << "wrote 4 dataset splits to " << out_dir << "\n";
  return 0;
}

int run_train(const std::string& config_path, const std::string& out_dir) {
  tia::train::ExperimentConfig config = tia::train::load_config(config_path);
  tia::train::RunResult result = tia::train::run_experiment(config, out_dir);
  std::cerr << "final: src_acc=" << result.src_acc
            << " tgt_acc=" << result.tgt_acc
            << " tgt_loc_mse=" << result.tgt_loc_mse
            << " tgt_mean_iou=" << result.tgt_mean_iou << "\n";
  return 0;
}

int run_eval(const std::string& model_path, const std::string& data_path,
             const std::string& out_path) {
  tia::model::Model model = tia::model::load_model(model_path);
  tia::synth::Dataset dataset = tia::synth::read_dataset(data_path);
  tia::eval::EvalSummary summary = tia::eval::evaluate(model, dataset);
  tia::eval::write_summary(summary, out_path);
  std::cerr << "accuracy=" << summary.accuracy << " loc_mse=" << summary.loc_mse
            << " mean_iou=" << summary.mean_iou << "\n";
  return 0;
}

int run_ablate(const std::string& config_path, const std::string& out_path) {
  tia::ablate::AblationSpec spec = tia::ablate::load_spec(config_path);
  tia::ablate::Table table = tia::ablate::run_ablation(spec);
  tia::ablate::write_table(table, out_path);
  bool any_failed = false;
  for (const tia::ablate::Row& row : table.rows) {
    if (row.failed) {
      any_failed = true;
      std::cerr << "cell '" << row.cell.label << "' failed: " << row.error
                << "\n";
    }
  }
  std::cerr << "wrote " << table.rows.size() << " rows to " << out_path << "\n";
  return any_failed ? 2 : 0;
}

int run_gradcheck(std::uint64_t seed) {
  const auto checks = tia::suite::run_gradient_suite(seed);
  for (const auto& c : checks) {
    std::fprintf(stderr, "%-28s %s  max_err=%.3e  (%d instances)\n",
                 c.name.c_str(), c.pass ? "PASS" : "FAIL", c.max_err,
                 c.instances);
  }
  return tia::suite::all_pass(checks) ? 0 : 2;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"task-specific inconsistency alignment laboratory"};
  app.require_subcommand(1);

  std::string spec_arg = "default", out_dir = ".", config_path, model_path,
              data_path, out_path;
  std::uint64_t seed = 0;

  CLI::App* gen = app.add_subcommand("gen", "generate a synthetic benchmark");
  gen->add_option("--spec", spec_arg, "shift spec JSON path or 'default'");
  gen->add_option("--seed", seed, "sampling seed");
  gen->add_option("--out", out_dir, "output directory")->required();

  CLI::App* train = app.add_subcommand("train", "run one experiment");
  train->add_option("--config", config_path, "experiment config JSON")->required();
  train->add_option("--out", out_dir, "output directory")->required();

  CLI::App* eval = app.add_subcommand("eval", "evaluate a saved model");
  eval->add_option("--model", model_path, "model JSON")->required();
  eval->add_option("--data", data_path, "dataset CSV")->required();
  eval->add_option("--out", out_path, "summary JSON output")->required();

  CLI::App* ablate = app.add_subcommand("ablate", "run an ablation table");
  ablate->add_option("--config", config_path, "ablation spec JSON")->required();
  ablate->add_option("--out", out_path, "output CSV")->required();

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "run the gradient verification suite");
  gradcheck->add_option("--seed", seed, "suite seed");

  CLI::App* toy2d =
      app.add_subcommand("toy2d", "2-D decision-boundary grid CSV");
  toy2d->add_option("--out", out_path, "output CSV")->required();
  toy2d->add_option("--seed", seed, "run seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 1;
  }

  try {
    if (gen->parsed()) return run_gen(spec_arg, seed, out_dir);
    if (train->parsed()) return run_train(config_path, out_dir);
    if (eval->parsed()) return run_eval(model_path, data_path, out_path);
    if (ablate->parsed()) return run_ablate(config_path, out_path);
    if (gradcheck->parsed()) return run_gradcheck(seed);
    if (toy2d->parsed()) {
      tia::toy::write_toy2d_csv(out_path, seed);
      return 0;
    }
  } catch (const tia::InvalidArgument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
