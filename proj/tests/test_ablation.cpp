#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "tia/ablation.hpp"
#include "tia/synthgen.hpp"

using namespace tia::ablate;
using tia::train::ExperimentConfig;
using tia::train::Mode;

namespace {

struct DatasetOnDisk {
  std::string dir;
  DatasetOnDisk() {
    dir = (std::filesystem::temp_directory_path() / "tia_ablate_data").string();
    std::filesystem::create_directories(dir);
    tia::synth::ShiftSpec spec = tia::synth::default_shift_spec();
    spec.train_per_domain = 80;
    spec.test_per_domain = 24;
    tia::synth::GeneratedData data = tia::synth::generate_dataset(spec, 2);
    tia::synth::write_dataset(data.source_train, dir + "/source_train.csv");
    tia::synth::write_dataset(data.target_train, dir + "/target_train.csv");
    tia::synth::write_dataset(data.source_test, dir + "/source_test.csv");
    tia::synth::write_dataset(data.target_test, dir + "/target_test.csv");
  }
  ~DatasetOnDisk() { std::filesystem::remove_all(dir); }
};

ExperimentConfig base_config(const std::string& data_dir) {
  ExperimentConfig c;
  c.mode = Mode::TiaFull;
  c.model.input_dim = 10;
  c.model.num_classes = 4;
  c.model.trunk_widths = {12, 8};
  c.model.num_aux_classifiers = 4;
  c.model.num_aux_localizers = 2;
  c.model.disc_widths = {8};
  c.iterations = 6;
  c.batch_source = 8;
  c.batch_target = 8;
  c.eval_interval = 6;
  c.learning_rate = 0.05;
  c.source_train = data_dir + "/source_train.csv";
  c.target_train = data_dir + "/target_train.csv";
  c.source_test = data_dir + "/source_test.csv";
  c.target_test = data_dir + "/target_test.csv";
  return c;
}

}  // namespace

TEST_CASE("preset builders have the documented shapes") {
  DatasetOnDisk data;
  ExperimentConfig base = base_config(data.dir);

  auto t4 = measure_comparison_cells(base);
  REQUIRE(t4.size() == 6);
  CHECK(t4[0].config.mode == Mode::BaselineDann);
  CHECK(t4[1].config.mode == Mode::DannTask);
  CHECK(t4[1].config.model.with_task_discriminators);
  CHECK(t4[2].config.model.num_aux_classifiers == 2);
  CHECK(t4[2].config.measure_cls == tia::losses::MeasureKind::L1);
  CHECK(t4[3].config.measure_cls == tia::losses::MeasureKind::KL);
  CHECK(t4[3].config.measure_loc == tia::losses::MeasureKind::L1);
  CHECK(t4[4].config.measure_cls == tia::losses::MeasureKind::SWD);
  CHECK(t4[5].config.mode == Mode::TiaFull);

  auto f5 = bank_sweep_cells(base);
  REQUIRE(f5.size() == 12);
  const std::size_t counts[] = {0, 2, 4, 8, 16, 32};
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(f5[i].config.model.num_aux_classifiers == counts[i]);
    CHECK(f5[i].config.model.num_aux_localizers == 0);
    CHECK(f5[i + 6].config.model.num_aux_classifiers == 0);
    CHECK(f5[i + 6].config.model.num_aux_localizers == counts[i]);
  }
  CHECK(f5[0].config.mode == Mode::BaselineDann);  // N=0 disables the branch
  CHECK(f5[1].config.mode == Mode::TiaCls);
  CHECK(f5[6].config.mode == Mode::BaselineDann);
  CHECK(f5[7].config.mode == Mode::TiaLoc);

  auto t6 = dispersion_cells(base);
  REQUIRE(t6.size() == 3);
  for (const auto& cell : t6) {
    CHECK(cell.config.lambda2 == 0.0);  // classification branch removed
    CHECK(cell.config.model.num_aux_classifiers == 0);
  }
  CHECK(t6[0].config.measure_loc == tia::losses::MeasureKind::MAD);
  CHECK(t6[1].config.measure_loc == tia::losses::MeasureKind::VARIANCE);
  CHECK(t6[2].config.measure_loc == tia::losses::MeasureKind::SD);
}

TEST_CASE("single-cell spec populates per-seed columns") {
  DatasetOnDisk data;
  AblationSpec spec;
  spec.seeds = {11, 12};
  ExperimentConfig c = base_config(data.dir);
  c.mode = Mode::BaselineDann;
  spec.cells.push_back({"just_baseline", c});
  Table table = run_ablation(spec, 1);
  REQUIRE(table.rows.size() == 1);
  const Row& row = table.rows[0];
  CHECK_FALSE(row.failed);
  REQUIRE(row.per_seed.size() == 2);
  for (const SeedResult& r : row.per_seed) {
    CHECK(std::isfinite(r.tgt_acc));
    CHECK(std::isfinite(r.tgt_loc_mse));
  }
  const std::string csv = table_to_csv(table);
  CHECK(csv.find("just_baseline") != std::string::npos);
  CHECK(csv.find("seed11_tgt_acc") != std::string::npos);
}

TEST_CASE("results are independent of concurrency level") {
  DatasetOnDisk data;
  AblationSpec spec;
  spec.seeds = {1, 2, 3};
  ExperimentConfig base = base_config(data.dir);
  spec.cells = dispersion_cells(base);
  Table serial = run_ablation(spec, 1);
  Table parallel = run_ablation(spec, 4);
  CHECK(table_to_csv(serial) == table_to_csv(parallel));
}

TEST_CASE("TIA_THREADS caps concurrency without changing results") {
  DatasetOnDisk data;
  AblationSpec spec;
  spec.seeds = {5};
  ExperimentConfig c = base_config(data.dir);
  c.mode = Mode::SourceOnly;
  spec.cells.push_back({"solo", c});
  setenv("TIA_THREADS", "2", 1);
  Table capped = run_ablation(spec);  // threads resolved from env
  unsetenv("TIA_THREADS");
  Table direct = run_ablation(spec, 1);
  CHECK(table_to_csv(capped) == table_to_csv(direct));
}

TEST_CASE("a failing cell is recorded and the rest proceed") {
  DatasetOnDisk data;
  AblationSpec spec;
  spec.seeds = {1};
  ExperimentConfig good = base_config(data.dir);
  good.mode = Mode::SourceOnly;
  ExperimentConfig bad = good;
  bad.learning_rate = 1e18;  // diverges to non-finite activations
  bad.iterations = 12;
  spec.cells.push_back({"blows_up", bad});
  spec.cells.push_back({"fine", good});
  Table table = run_ablation(spec, 2);
  REQUIRE(table.rows.size() == 2);
  CHECK(table.rows[0].failed);
  CHECK(table.rows[0].error.find("non-finite") != std::string::npos);
  CHECK_FALSE(table.rows[1].failed);
  const std::string csv = table_to_csv(table);
  CHECK(csv.find("failed") != std::string::npos);
}

TEST_CASE("ablation spec JSON parsing with preset and explicit cells") {
  DatasetOnDisk data;
  ExperimentConfig base = base_config(data.dir);
  const std::string base_json = tia::train::config_to_json(base);

  AblationSpec preset = spec_from_json(
      "{\"base_config\":" + base_json + ",\"seeds\":[1,2],\"preset\":\"measures\"}");
  CHECK(preset.cells.size() == 6);
  CHECK(preset.seeds == std::vector<std::uint64_t>{1, 2});

  AblationSpec cells = spec_from_json(
      "{\"base_config\":" + base_json +
      ",\"seeds\":[3],\"cells\":[{\"label\":\"x\",\"mode\":\"baseline_dann\"},"
      "{\"mode\":\"tia_cls\",\"n\":4,\"m\":0}]}");
  REQUIRE(cells.cells.size() == 2);
  CHECK(cells.cells[0].label == "x");
  CHECK(cells.cells[1].config.model.num_aux_classifiers == 4);

  CHECK_THROWS_AS(spec_from_json("{\"seeds\":[1]}"), tia::InvalidArgument);
  CHECK_THROWS_AS(
      spec_from_json("{\"base_config\":" + base_json +
                     ",\"seeds\":[],\"preset\":\"measures\"}"),
      tia::InvalidArgument);
}
