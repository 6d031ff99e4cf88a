#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>

#include "tia/synthgen.hpp"

using tia::InvalidArgument;
using namespace tia::synth;

namespace {

std::string temp_path(const std::string& name) {
  return (std::filesystem::temp_directory_path() / name).string();
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Nearest-class-mean probe fitted on source train: a linear classifier
// independent of the model stack.
double ncm_accuracy(const Dataset& train, const Dataset& test,
                    std::size_t num_classes) {
  std::vector<std::vector<double>> means(num_classes,
                                         std::vector<double>(train.dim, 0.0));
  std::vector<std::size_t> counts(num_classes, 0);
  for (const Sample& s : train.samples) {
    for (std::size_t i = 0; i < train.dim; ++i) means[s.label][i] += s.x[i];
    ++counts[s.label];
  }
  for (std::size_t k = 0; k < num_classes; ++k)
    for (double& v : means[k]) v /= static_cast<double>(counts[k]);

  std::size_t hits = 0;
  for (const Sample& s : test.samples) {
    std::size_t best = 0;
    double best_d = 1e300;
    for (std::size_t k = 0; k < num_classes; ++k) {
      double d = 0.0;
      for (std::size_t i = 0; i < test.dim; ++i) {
        const double diff = s.x[i] - means[k][i];
        d += diff * diff;
      }
      if (d < best_d) {
        best_d = d;
        best = k;
      }
    }
    if (static_cast<int>(best) == s.label) ++hits;
  }
  return static_cast<double>(hits) / test.samples.size();
}

}  // namespace

TEST_CASE("default spec validates and is deterministic") {
  ShiftSpec spec = default_shift_spec();
  CHECK_NOTHROW(validate(spec));
  ShiftSpec again = default_shift_spec();
  CHECK(spec.target_rotation == again.target_rotation);
  CHECK(spec.class_means == again.class_means);
}

TEST_CASE("identity transform with zero noise: per-class means coincide") {
  ShiftSpec spec = default_shift_spec();
  spec.noise_sigma = 0.0;
  spec.train_per_domain = 200;
  for (std::size_t i = 0; i < spec.dim; ++i) {
    for (std::size_t j = 0; j < spec.dim; ++j)
      spec.target_rotation[i][j] = i == j ? 1.0 : 0.0;
    spec.target_shift[i] = 0.0;
  }
  GeneratedData data = generate_dataset(spec, 3);
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    std::vector<double> src(spec.dim, 0.0), tgt(spec.dim, 0.0);
    std::size_t n = 0;
    for (std::size_t i = 0; i < data.source_train.samples.size(); ++i) {
      if (static_cast<std::size_t>(data.source_train.samples[i].label) != k)
        continue;
      ++n;
      for (std::size_t d = 0; d < spec.dim; ++d) {
        src[d] += data.source_train.samples[i].x[d];
        tgt[d] += data.target_train.samples[i].x[d];
      }
    }
    for (std::size_t d = 0; d < spec.dim; ++d) {
      CHECK(std::fabs(src[d] / n - tgt[d] / n) < 1e-12);
    }
  }
}

TEST_CASE("same seed twice gives bit-identical datasets") {
  ShiftSpec spec = default_shift_spec();
  spec.train_per_domain = 64;
  spec.test_per_domain = 16;
  GeneratedData a = generate_dataset(spec, 7);
  GeneratedData b = generate_dataset(spec, 7);
  REQUIRE(a.source_train.samples.size() == b.source_train.samples.size());
  for (std::size_t i = 0; i < a.source_train.samples.size(); ++i) {
    CHECK(a.source_train.samples[i].x == b.source_train.samples[i].x);
    CHECK(a.source_train.samples[i].box == b.source_train.samples[i].box);
  }
  for (std::size_t i = 0; i < a.target_test.samples.size(); ++i) {
    CHECK(a.target_test.samples[i].x == b.target_test.samples[i].x);
  }
}

TEST_CASE("byte-identical files for identical (spec, seed)") {
  ShiftSpec spec = default_shift_spec();
  spec.train_per_domain = 32;
  spec.test_per_domain = 8;
  const std::string p1 = temp_path("tia_synth_a.csv");
  const std::string p2 = temp_path("tia_synth_b.csv");
  write_dataset(generate_dataset(spec, 11).source_train, p1);
  write_dataset(generate_dataset(spec, 11).source_train, p2);
  CHECK(slurp(p1) == slurp(p2));
  std::remove(p1.c_str());
  std::remove(p2.c_str());
}

TEST_CASE("write/read round-trip is value-identical") {
  ShiftSpec spec = default_shift_spec();
  spec.train_per_domain = 40;
  spec.test_per_domain = 8;
  Dataset ds = generate_dataset(spec, 5).target_train;
  const std::string path = temp_path("tia_synth_rt.csv");
  write_dataset(ds, path);
  Dataset back = read_dataset(path);
  REQUIRE(back.samples.size() == ds.samples.size());
  CHECK(back.dim == ds.dim);
  for (std::size_t i = 0; i < ds.samples.size(); ++i) {
    CHECK(back.samples[i].x == ds.samples[i].x);
    CHECK(back.samples[i].box == ds.samples[i].box);
    CHECK(back.samples[i].label == ds.samples[i].label);
    CHECK(back.samples[i].domain == ds.samples[i].domain);
  }
  std::remove(path.c_str());
}

TEST_CASE("all generated boxes satisfy the range invariants") {
  GeneratedData data = generate_dataset(default_shift_spec(), 13);
  for (const Dataset* ds : {&data.source_train, &data.target_train,
                            &data.source_test, &data.target_test}) {
    for (const Sample& s : ds->samples) {
      CHECK(s.box[0] > 0.0);
      CHECK(s.box[0] < 1.0);
      CHECK(s.box[1] > 0.0);
      CHECK(s.box[1] < 1.0);
      CHECK(s.box[2] > 0.05);
      CHECK(s.box[2] < 0.5);
      CHECK(s.box[3] > 0.05);
      CHECK(s.box[3] < 0.5);
      CHECK(s.label >= 0);
      CHECK(s.label < 4);
    }
  }
}

TEST_CASE("class-conditional transport: target mean = A * source mean + t") {
  ShiftSpec spec = default_shift_spec();
  GeneratedData data = generate_dataset(spec, 17);
  const std::size_t d = spec.dim;
  for (std::size_t k = 0; k < spec.num_classes; ++k) {
    std::vector<double> src_mean(d, 0.0), tgt_mean(d, 0.0);
    std::size_t ns = 0, nt = 0;
    for (const Sample& s : data.source_train.samples) {
      if (static_cast<std::size_t>(s.label) != k) continue;
      for (std::size_t i = 0; i < d; ++i) src_mean[i] += s.x[i];
      ++ns;
    }
    for (const Sample& s : data.target_train.samples) {
      if (static_cast<std::size_t>(s.label) != k) continue;
      for (std::size_t i = 0; i < d; ++i) tgt_mean[i] += s.x[i];
      ++nt;
    }
    for (double& v : src_mean) v /= static_cast<double>(ns);
    for (double& v : tgt_mean) v /= static_cast<double>(nt);

    // Both empirical means fluctuate; each transported coordinate has
    // variance ~2 (cov + noise) / n.
    const double sigma = std::sqrt(
        2.0 * (spec.class_cov_scale * spec.class_cov_scale +
               spec.noise_sigma * spec.noise_sigma));
    const double bound = 3.0 * sigma / std::sqrt(static_cast<double>(ns));
    for (std::size_t i = 0; i < d; ++i) {
      double transported = spec.target_shift[i];
      for (std::size_t j = 0; j < d; ++j)
        transported += spec.target_rotation[i][j] * src_mean[j];
      CHECK(std::fabs(tgt_mean[i] - transported) < bound);
    }
  }
}

TEST_CASE("the default benchmark has a real source-to-target gap") {
  ShiftSpec spec = default_shift_spec();
  GeneratedData data = generate_dataset(spec, 0);
  const double src_acc =
      ncm_accuracy(data.source_train, data.source_test, spec.num_classes);
  const double tgt_acc =
      ncm_accuracy(data.source_train, data.target_test, spec.num_classes);
  CHECK(src_acc >= 0.95);
  CHECK(tgt_acc <= src_acc - 0.1);
}

TEST_CASE("spec validation rejects bad inputs") {
  ShiftSpec spec = default_shift_spec();
  spec.num_classes = 1;
  CHECK_THROWS_AS(validate(spec), InvalidArgument);

  spec = default_shift_spec();
  spec.dim = 1;
  CHECK_THROWS_AS(validate(spec), InvalidArgument);

  spec = default_shift_spec();
  spec.train_per_domain = 0;
  CHECK_THROWS_AS(validate(spec), InvalidArgument);

  spec = default_shift_spec();
  spec.target_rotation[0][0] += 1e-3;  // break orthogonality
  CHECK_THROWS_AS(validate(spec), InvalidArgument);

  spec = default_shift_spec();
  spec.class_means[1] = spec.class_means[0];  // break separation
  CHECK_THROWS_AS(validate(spec), InvalidArgument);
}

TEST_CASE("malformed rows report the line") {
  const std::string path = temp_path("tia_synth_bad.csv");
  {
    ShiftSpec spec = default_shift_spec();
    spec.train_per_domain = 4;
    spec.test_per_domain = 2;
    write_dataset(generate_dataset(spec, 1).source_train, path);
  }

  // Corrupt row 3's width column (b_w <= 0).
  {
    std::ifstream in(path);
    std::string all, line;
    int n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (n == 3) {
        std::vector<std::string> cells;
        std::size_t start = 0;
        while (true) {
          const std::size_t comma = line.find(',', start);
          cells.push_back(line.substr(start, comma - start));
          if (comma == std::string::npos) break;
          start = comma + 1;
        }
        cells[4] = "-0.1";
        line.clear();
        for (std::size_t i = 0; i < cells.size(); ++i) {
          if (i) line += ',';
          line += cells[i];
        }
      }
      all += line + "\n";
    }
    std::ofstream out(path, std::ios::binary);
    out << all;
  }
  try {
    read_dataset(path);
    FAIL("expected a parse error");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("row 3") != std::string::npos);
  }
  std::remove(path.c_str());
}

TEST_CASE("header mismatch is fatal") {
  const std::string path = temp_path("tia_synth_hdr.csv");
  {
    std::ofstream out(path, std::ios::binary);
    out << "domain,y,b_cx,b_cy,b_w,b_h,x_0,x_9\n";  // wrong feature names
    out << "source,0,0.5,0.5,0.2,0.2,1.0,2.0\n";
  }
  CHECK_THROWS_AS(read_dataset(path), InvalidArgument);
  std::remove(path.c_str());
}

TEST_CASE("shift spec JSON round-trip") {
  ShiftSpec spec = default_shift_spec();
  ShiftSpec back = shift_spec_from_json(shift_spec_to_json(spec));
  CHECK(back.dim == spec.dim);
  CHECK(back.class_means == spec.class_means);
  CHECK(back.target_rotation == spec.target_rotation);
  CHECK(back.box_map == spec.box_map);
  CHECK(back.train_per_domain == spec.train_per_domain);
}
