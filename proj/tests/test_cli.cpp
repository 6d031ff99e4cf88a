#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "tia/trainer.hpp"

#ifndef TIA_CLI_PATH
#error "TIA_CLI_PATH must point at the built binary"
#endif

namespace {

namespace fs = std::filesystem;

int run(const std::string& args) {
  const int status = std::system((std::string(TIA_CLI_PATH) + " " + args +
                                  " 2>/dev/null")
                                     .c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::string& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

struct Scratch {
  fs::path dir;
  Scratch() {
    dir = fs::temp_directory_path() / "tia_cli_test";
    fs::remove_all(dir);
    fs::create_directories(dir);
  }
  ~Scratch() { fs::remove_all(dir); }
  std::string operator/(const std::string& p) const { return (dir / p).string(); }
};

}  // namespace

TEST_CASE("gen -> train -> eval pipeline produces the documented artifacts") {
  Scratch tmp;
  const std::string data = tmp / "data";
  REQUIRE(run("gen --spec default --seed 7 --out " + data) == 0);
  CHECK(fs::exists(data + "/source_train.csv"));
  CHECK(fs::exists(data + "/target_test.csv"));
  CHECK(fs::exists(data + "/shift_spec.json"));

  // A short training config over the generated files.
  tia::train::ExperimentConfig c;
  c.mode = tia::train::Mode::TiaFull;
  c.model.trunk_widths = {16, 12};
  c.model.disc_widths = {8};
  c.iterations = 20;
  c.eval_interval = 10;
  c.batch_source = 16;
  c.batch_target = 16;
  c.source_train = data + "/source_train.csv";
  c.target_train = data + "/target_train.csv";
  c.source_test = data + "/source_test.csv";
  c.target_test = data + "/target_test.csv";
  const std::string cfg_path = tmp / "config.json";
  {
    std::ofstream out(cfg_path);
    out << tia::train::config_to_json(c);
  }
  const std::string run_dir = tmp / "run";
  REQUIRE(run("train --config " + cfg_path + " --out " + run_dir) == 0);
  CHECK(fs::exists(run_dir + "/metrics.csv"));
  CHECK(fs::exists(run_dir + "/model.json"));
  CHECK(fs::exists(run_dir + "/eval.json"));

  const std::string metrics = slurp(run_dir + "/metrics.csv");
  CHECK(metrics.rfind("iter,loss_det,loss_da,loss_cls_da,loss_loc_da,"
                      "src_acc,tgt_acc,src_loc_mse,tgt_loc_mse,tgt_mean_iou",
                      0) == 0);

  const std::string eval_out = tmp / "eval_summary.json";
  REQUIRE(run("eval --model " + run_dir + "/model.json --data " + data +
              "/target_test.csv --out " + eval_out) == 0);
  CHECK(slurp(eval_out).find("accuracy") != std::string::npos);
}

TEST_CASE("validation failures exit with code 1") {
  CHECK(run("train --config /nonexistent/missing.json --out /tmp/x") == 1);
  CHECK(run("gen --spec /nonexistent/spec.json --seed 1 --out /tmp/x") == 1);
  CHECK(run("definitely-not-a-subcommand") == 1);
}

TEST_CASE("gradcheck subcommand runs the suite") {
  CHECK(run("gradcheck --seed 0") == 0);
}

TEST_CASE("ablate runs a small preset spec") {
  Scratch tmp;
  const std::string data = tmp / "data";
  REQUIRE(run("gen --spec default --seed 3 --out " + data) == 0);

  tia::train::ExperimentConfig c;
  c.mode = tia::train::Mode::TiaFull;
  c.model.trunk_widths = {12, 8};
  c.model.disc_widths = {8};
  c.model.num_aux_localizers = 2;
  c.iterations = 4;
  c.eval_interval = 4;
  c.batch_source = 8;
  c.batch_target = 8;
  c.source_train = data + "/source_train.csv";
  c.target_train = data + "/target_train.csv";
  c.source_test = data + "/source_test.csv";
  c.target_test = data + "/target_test.csv";

  const std::string spec_path = tmp / "ablate.json";
  {
    std::ofstream out(spec_path);
    out << "{\"base_config\":" << tia::train::config_to_json(c)
        << ",\"seeds\":[1,2],\"preset\":\"dispersion\"}";
  }
  const std::string csv = tmp / "table.csv";
  REQUIRE(run("ablate --config " + spec_path + " --out " + csv) == 0);
  const std::string table = slurp(csv);
  CHECK(table.find("dispersion_mad") != std::string::npos);
  CHECK(table.find("dispersion_variance") != std::string::npos);
  CHECK(table.find("dispersion_sd") != std::string::npos);
}

TEST_CASE("toy2d emits the decision grid") {
  Scratch tmp;
  const std::string csv = tmp / "toy.csv";
  REQUIRE(run("toy2d --out " + csv + " --seed 5") == 0);
  const std::string grid = slurp(csv);
  CHECK(grid.rfind("x0,x1,primary,aux_0,aux_1,aux_2", 0) == 0);
  std::size_t rows = std::count(grid.begin(), grid.end(), '\n');
  CHECK(rows == 41 * 41 + 1);
}
