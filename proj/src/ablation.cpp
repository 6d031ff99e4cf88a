#include "tia/ablation.hpp"

#include <atomic>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

namespace tia::ablate {

using json = nlohmann::json;
using losses::MeasureKind;
using train::ExperimentConfig;
using train::Mode;

namespace {

Cell make_cell(std::string label, ExperimentConfig config) {
  config.model.with_task_discriminators = config.mode == Mode::DannTask;
  return {std::move(label), std::move(config)};
}

ExperimentConfig with_counts(ExperimentConfig c, std::size_t n, std::size_t m) {
  c.model.num_aux_classifiers = n;
  c.model.num_aux_localizers = m;
  return c;
}

}  // namespace

std::vector<Cell> measure_comparison_cells(const ExperimentConfig& base) {
  std::vector<Cell> cells;

  ExperimentConfig c = base;
  c.mode = Mode::BaselineDann;
  cells.push_back(make_cell("baseline_dann", c));

  c = base;
  c.mode = Mode::DannTask;
  c.model.with_task_discriminators = true;
  cells.push_back(make_cell("dann_task", c));

  auto pair_variant = [&](const char* label, MeasureKind cls, MeasureKind loc) {
    ExperimentConfig v = with_counts(base, 2, 2);
    v.mode = Mode::MeasureVariant;
    v.measure_cls = cls;
    v.measure_loc = loc;
    cells.push_back(make_cell(label, v));
  };
  pair_variant("measure_l1_l1", MeasureKind::L1, MeasureKind::L1);
  pair_variant("measure_kl_l1", MeasureKind::KL, MeasureKind::L1);
  pair_variant("measure_swd_swd", MeasureKind::SWD, MeasureKind::SWD);

  c = base;
  c.mode = Mode::TiaFull;
  cells.push_back(make_cell("tia_full", c));
  return cells;
}

std::vector<Cell> bank_sweep_cells(const ExperimentConfig& base) {
  static const std::size_t kCounts[] = {0, 2, 4, 8, 16, 32};
  std::vector<Cell> cells;
  for (std::size_t n : kCounts) {
    ExperimentConfig c = with_counts(base, n, 0);
    c.mode = n >= 2 ? Mode::TiaCls : Mode::BaselineDann;
    cells.push_back(make_cell("cls_sweep_n" + std::to_string(n), c));
  }
  for (std::size_t m : kCounts) {
    ExperimentConfig c = with_counts(base, 0, m);
    c.mode = m >= 2 ? Mode::TiaLoc : Mode::BaselineDann;
    cells.push_back(make_cell("loc_sweep_m" + std::to_string(m), c));
  }
  return cells;
}

std::vector<Cell> dispersion_cells(const ExperimentConfig& base) {
  std::vector<Cell> cells;
  for (MeasureKind kind :
       {MeasureKind::MAD, MeasureKind::VARIANCE, MeasureKind::SD}) {
    ExperimentConfig c = with_counts(base, 0, base.model.num_aux_localizers);
    c.mode = Mode::MeasureVariant;
    c.lambda2 = 0.0;  // classification branch removed
    c.measure_loc = kind;
    cells.push_back(make_cell(std::string("dispersion_") +
                                  losses::measure_name(kind),
                              c));
  }
  return cells;
}

AblationSpec spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("ablation spec: invalid JSON: ") +
                          e.what());
  }
  AblationSpec spec;
  try {
    ExperimentConfig base =
        train::config_from_json(j.at("base_config").dump());
    spec.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    if (spec.seeds.empty()) {
      throw InvalidArgument("ablation spec: empty seed list");
    }
    if (j.contains("preset")) {
      const std::string preset = j.at("preset").get<std::string>();
      if (preset == "measures") spec.cells = measure_comparison_cells(base);
      else if (preset == "bank_sweep") spec.cells = bank_sweep_cells(base);
      else if (preset == "dispersion") spec.cells = dispersion_cells(base);
      else throw InvalidArgument("ablation spec: unknown preset '" + preset + "'");
    } else {
      for (const json& cj : j.at("cells")) {
        ExperimentConfig c = base;
        if (cj.contains("mode"))
          c.mode = train::mode_from_name(cj.at("mode").get<std::string>());
        if (cj.contains("n")) c.model.num_aux_classifiers = cj.at("n").get<std::size_t>();
        if (cj.contains("m")) c.model.num_aux_localizers = cj.at("m").get<std::size_t>();
        if (cj.contains("measure_cls"))
          c.measure_cls = losses::measure_from_name(cj.at("measure_cls").get<std::string>());
        if (cj.contains("measure_loc"))
          c.measure_loc = losses::measure_from_name(cj.at("measure_loc").get<std::string>());
        if (cj.contains("lambda1")) c.lambda1 = cj.at("lambda1").get<double>();
        if (cj.contains("lambda2")) c.lambda2 = cj.at("lambda2").get<double>();
        if (cj.contains("lambda3")) c.lambda3 = cj.at("lambda3").get<double>();
        c.model.with_task_discriminators = c.mode == Mode::DannTask;
        train::validate(c);
        const std::string label =
            cj.value("label", std::string(train::mode_name(c.mode)));
        spec.cells.push_back(make_cell(label, c));
      }
    }
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("ablation spec: missing/bad field: ") +
                          e.what());
  }
  if (spec.cells.empty()) throw InvalidArgument("ablation spec: no cells");
  for (const Cell& cell : spec.cells) train::validate(cell.config);
  return spec;
}

AblationSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open ablation spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return spec_from_json(ss.str());
}

namespace {

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("TIA_THREADS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v > 0) return static_cast<unsigned>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw > 0 ? hw : 1;
}

void fill_stats(Row& row) {
  auto moments = [&](auto proj) {
    double mean = 0.0;
    for (const SeedResult& r : row.per_seed) mean += proj(r);
    mean /= static_cast<double>(row.per_seed.size());
    double var = 0.0;
    for (const SeedResult& r : row.per_seed) {
      const double d = proj(r) - mean;
      var += d * d;
    }
    var /= static_cast<double>(row.per_seed.size());
    return std::pair<double, double>{mean, std::sqrt(var)};
  };
  std::tie(row.acc_mean, row.acc_std) =
      moments([](const SeedResult& r) { return r.tgt_acc; });
  std::tie(row.mse_mean, row.mse_std) =
      moments([](const SeedResult& r) { return r.tgt_loc_mse; });
  std::tie(row.iou_mean, row.iou_std) =
      moments([](const SeedResult& r) { return r.tgt_mean_iou; });
}

}  // namespace

Table run_ablation(const AblationSpec& spec, unsigned threads) {
  if (spec.cells.empty() || spec.seeds.empty()) {
    throw InvalidArgument("run_ablation: empty spec");
  }
  // All cells share the base datasets; load them once.
  const ExperimentConfig& first = spec.cells.front().config;
  synth::Dataset source_train = synth::read_dataset(first.source_train);
  synth::Dataset target_train = synth::read_dataset(first.target_train);
  synth::Dataset source_test = synth::read_dataset(first.source_test);
  synth::Dataset target_test = synth::read_dataset(first.target_test);

  Table table;
  table.seeds = spec.seeds;
  table.rows.resize(spec.cells.size());
  for (std::size_t i = 0; i < spec.cells.size(); ++i) {
    table.rows[i].cell = spec.cells[i];
    table.rows[i].per_seed.resize(spec.seeds.size());
  }

  struct Unit {
    std::size_t cell, seed;
  };
  std::vector<Unit> units;
  for (std::size_t c = 0; c < spec.cells.size(); ++c)
    for (std::size_t s = 0; s < spec.seeds.size(); ++s) units.push_back({c, s});

  std::mutex failure_mutex;
  std::atomic<std::size_t> next{0};
  auto worker = [&]() {
    while (true) {
      const std::size_t u = next.fetch_add(1);
      if (u >= units.size()) return;
      const Unit unit = units[u];
      Row& row = table.rows[unit.cell];
      try {
        ExperimentConfig config = row.cell.config;
        config.seed = spec.seeds[unit.seed];
        train::RunResult result = train::run_experiment(
            config, source_train, target_train, source_test, target_test);
        row.per_seed[unit.seed] = {result.tgt_acc, result.tgt_loc_mse,
                                   result.tgt_mean_iou};
      } catch (const std::exception& e) {
        std::lock_guard<std::mutex> lock(failure_mutex);
        row.failed = true;
        if (!row.error.empty()) row.error += "; ";
        row.error += "seed " + std::to_string(spec.seeds[unit.seed]) + ": " +
                     e.what();
      }
    }
  };

  const unsigned nthreads =
      std::min<unsigned>(resolve_threads(threads),
                         static_cast<unsigned>(units.size()));
  if (nthreads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(nthreads);
    for (unsigned t = 0; t < nthreads; ++t) pool.emplace_back(worker);
    for (std::thread& t : pool) t.join();
  }

  for (Row& row : table.rows) {
    if (!row.failed) fill_stats(row);
  }
  return table;
}

std::string table_to_csv(const Table& table) {
  std::ostringstream out;
  out << "label,mode,n_aux_cls,m_aux_loc,measure_cls,measure_loc,status";
  for (std::uint64_t s : table.seeds) {
    out << ",seed" << s << "_tgt_acc,seed" << s << "_tgt_mse,seed" << s
        << "_tgt_iou";
  }
  out << ",tgt_acc_mean,tgt_acc_std,tgt_mse_mean,tgt_mse_std,tgt_iou_mean,"
         "tgt_iou_std\n";
  for (const Row& row : table.rows) {
    const ExperimentConfig& c = row.cell.config;
    out << row.cell.label << ',' << train::mode_name(c.mode) << ','
        << c.model.num_aux_classifiers << ',' << c.model.num_aux_localizers
        << ',' << losses::measure_name(c.measure_cls) << ','
        << losses::measure_name(c.measure_loc) << ','
        << (row.failed ? "failed" : "ok");
    if (row.failed) {
      for (std::size_t i = 0; i < table.seeds.size() * 3 + 6; ++i) out << ',';
      out << '\n';
      continue;
    }
    for (const SeedResult& r : row.per_seed) {
      out << ',' << format_double(r.tgt_acc) << ','
          << format_double(r.tgt_loc_mse) << ','
          << format_double(r.tgt_mean_iou);
    }
    out << ',' << format_double(row.acc_mean) << ','
        << format_double(row.acc_std) << ',' << format_double(row.mse_mean)
        << ',' << format_double(row.mse_std) << ','
        << format_double(row.iou_mean) << ',' << format_double(row.iou_std)
        << '\n';
  }
  return out.str();
}

void write_table(const Table& table, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << table_to_csv(table);
  if (!out) throw Error("write failed for '" + path + "'");
}

}  // namespace tia::ablate
