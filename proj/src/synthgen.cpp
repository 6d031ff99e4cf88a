#include "tia/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace tia::synth {

using json = nlohmann::json;

const char* domain_name(Domain d) {
  return d == Domain::Source ? "source" : "target";
}

namespace {

constexpr std::uint64_t kDefaultConstructionSeed = 0x7A15BE9C0FFEEULL;

double sigmoid(double x) {
  return x >= 0.0 ? 1.0 / (1.0 + std::exp(-x))
                  : std::exp(x) / (1.0 + std::exp(x));
}

// Orthonormal columns via modified Gram-Schmidt on a seeded Gaussian matrix;
// deterministic and free of the QR sign ambiguity.
std::vector<std::vector<double>> random_orthogonal(std::size_t d, Rng& rng) {
  std::vector<std::vector<double>> q(d, std::vector<double>(d));
  for (std::size_t c = 0; c < d; ++c) {
    std::vector<double> v(d);
    for (std::size_t i = 0; i < d; ++i) v[i] = rng.normal();
    for (std::size_t prev = 0; prev < c; ++prev) {
      double dot = 0.0;
      for (std::size_t i = 0; i < d; ++i) dot += v[i] * q[i][prev];
      for (std::size_t i = 0; i < d; ++i) v[i] -= dot * q[i][prev];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-9) throw Error("random_orthogonal: degenerate draw");
    for (std::size_t i = 0; i < d; ++i) q[i][c] = v[i] / norm;
  }
  return q;
}

// Product of Givens rotations on random coordinate planes. Keeps the shift
// orthogonal but of controlled magnitude, unlike a fully random rotation.
std::vector<std::vector<double>> givens_rotation(std::size_t d,
                                                 std::size_t planes,
                                                 double angle, Rng& rng) {
  std::vector<std::vector<double>> a(d, std::vector<double>(d, 0.0));
  for (std::size_t i = 0; i < d; ++i) a[i][i] = 1.0;
  for (std::size_t p = 0; p < planes; ++p) {
    std::size_t i = rng.below(d);
    std::size_t j = rng.below(d - 1);
    if (j >= i) ++j;
    const double c = std::cos(angle), s = std::sin(angle);
    for (std::size_t k = 0; k < d; ++k) {
      const double ai = a[i][k], aj = a[j][k];
      a[i][k] = c * ai - s * aj;
      a[j][k] = s * ai + c * aj;
    }
  }
  return a;
}

}  // namespace

std::array<double, 4> squash_box(const std::array<double, 4>& raw) {
  return {sigmoid(raw[0]), sigmoid(raw[1]), 0.05 + 0.45 * sigmoid(raw[2]),
          0.05 + 0.45 * sigmoid(raw[3])};
}

ShiftSpec default_shift_spec() {
  ShiftSpec spec;
  Rng rng(kDefaultConstructionSeed);
  const std::size_t d = spec.dim, c = spec.num_classes;

  // Class means sit on orthonormal directions at radius 3*sigma, giving a
  // pairwise separation of 3*sqrt(2)*sigma.
  auto mean_dirs = random_orthogonal(d, rng);
  spec.class_means.assign(c, std::vector<double>(d));
  for (std::size_t k = 0; k < c; ++k)
    for (std::size_t i = 0; i < d; ++i)
      spec.class_means[k][i] = 3.0 * spec.class_cov_scale * mean_dirs[i][k];

  // A moderate shift: five 35-degree plane rotations plus a translation.
  // Strong enough that a source-only model degrades badly on target, mild
  // enough that adversarial alignment can actually recover it.
  spec.target_rotation = givens_rotation(d, 5, 35.0 * 3.14159265358979323846 / 180.0, rng);
  spec.target_shift.resize(d);
  for (std::size_t i = 0; i < d; ++i) spec.target_shift[i] = 0.8 * rng.normal();

  spec.box_map.assign(4, std::vector<double>(d));
  for (auto& row : spec.box_map) {
    double norm2 = 0.0;
    for (double& v : row) {
      v = rng.normal();
      norm2 += v * v;
    }
    for (double& v : row) v /= std::sqrt(norm2);
  }
  return spec;
}

void validate(const ShiftSpec& spec) {
  if (spec.num_classes < 2) throw InvalidArgument("shift spec: C < 2");
  if (spec.dim < 2) throw InvalidArgument("shift spec: d < 2");
  if (spec.train_per_domain == 0 || spec.test_per_domain == 0) {
    throw InvalidArgument("shift spec: nonpositive sample count");
  }
  if (spec.class_cov_scale <= 0.0 || spec.noise_sigma < 0.0) {
    throw InvalidArgument("shift spec: nonpositive scale");
  }
  const std::size_t d = spec.dim;
  if (spec.class_means.size() != spec.num_classes ||
      spec.target_rotation.size() != d || spec.target_shift.size() != d ||
      spec.box_map.size() != 4) {
    throw InvalidArgument("shift spec: matrix dimensions disagree with d/C");
  }
  for (const auto& row : spec.class_means)
    if (row.size() != d) throw InvalidArgument("shift spec: bad mean length");
  for (const auto& row : spec.target_rotation)
    if (row.size() != d) throw InvalidArgument("shift spec: bad rotation row");
  for (const auto& row : spec.box_map)
    if (row.size() != d) throw InvalidArgument("shift spec: bad box map row");

  // A^T A = I within 1e-8.
  for (std::size_t i = 0; i < d; ++i) {
    for (std::size_t j = 0; j < d; ++j) {
      double dot = 0.0;
      for (std::size_t k = 0; k < d; ++k)
        dot += spec.target_rotation[k][i] * spec.target_rotation[k][j];
      const double want = i == j ? 1.0 : 0.0;
      if (std::fabs(dot - want) > 1e-8) {
        throw InvalidArgument("shift spec: target transform not orthogonal");
      }
    }
  }

  for (std::size_t a = 0; a < spec.num_classes; ++a) {
    for (std::size_t b = a + 1; b < spec.num_classes; ++b) {
      double dist2 = 0.0;
      for (std::size_t i = 0; i < d; ++i) {
        const double diff = spec.class_means[a][i] - spec.class_means[b][i];
        dist2 += diff * diff;
      }
      if (std::sqrt(dist2) < 3.0 * spec.class_cov_scale) {
        throw InvalidArgument(
            "shift spec: class means closer than 3x covariance scale");
      }
    }
  }
}

namespace {

// Both domains are views of the same latent draws: source x = z + noise,
// target x = A z + t + noise. Labels and boxes come from z alone, so undoing
// the transform recovers both tasks exactly.
void generate_split(const ShiftSpec& spec, std::size_t count, Rng& rng,
                    Dataset& source, Dataset& target) {
  source.dim = target.dim = spec.dim;
  source.samples.reserve(count);
  target.samples.reserve(count);
  const std::size_t d = spec.dim;
  std::vector<double> z(d);
  for (std::size_t n = 0; n < count; ++n) {
    const int label = static_cast<int>(n % spec.num_classes);
    for (std::size_t i = 0; i < d; ++i)
      z[i] = spec.class_means[label][i] + spec.class_cov_scale * rng.normal();

    std::array<double, 4> raw{};
    for (std::size_t r = 0; r < 4; ++r) {
      double acc = 0.0;
      for (std::size_t k = 0; k < d; ++k) acc += spec.box_map[r][k] * z[k];
      raw[r] = acc;
    }
    const std::array<double, 4> box = squash_box(raw);

    Sample s;
    s.domain = Domain::Source;
    s.label = label;
    s.box = box;
    s.x.resize(d);
    for (std::size_t i = 0; i < d; ++i)
      s.x[i] = z[i] + spec.noise_sigma * rng.normal();
    source.samples.push_back(std::move(s));

    Sample t;
    t.domain = Domain::Target;
    t.label = label;
    t.box = box;
    t.x.resize(d);
    for (std::size_t i = 0; i < d; ++i) {
      double acc = spec.target_shift[i];
      for (std::size_t k = 0; k < d; ++k)
        acc += spec.target_rotation[i][k] * z[k];
      t.x[i] = acc + spec.noise_sigma * rng.normal();
    }
    target.samples.push_back(std::move(t));
  }
}

}  // namespace

GeneratedData generate_dataset(const ShiftSpec& spec, std::uint64_t seed) {
  validate(spec);
  GeneratedData out;
  // Independent streams per split so changing one count does not perturb the
  // other split.
  Rng train_rng(mix_seed(seed, 0));
  Rng test_rng(mix_seed(seed, 1));
  generate_split(spec, spec.train_per_domain, train_rng, out.source_train,
                 out.target_train);
  generate_split(spec, spec.test_per_domain, test_rng, out.source_test,
                 out.target_test);
  return out;
}

namespace {

std::string header_for(std::size_t dim) {
  std::string h = "domain,y,b_cx,b_cy,b_w,b_h";
  for (std::size_t i = 0; i < dim; ++i) h += ",x_" + std::to_string(i);
  return h;
}

void check_sample_invariants(const Sample& s, std::size_t line) {
  const double w = s.box[2], h = s.box[3];
  if (w <= 0.0 || h <= 0.0) {
    throw InvalidArgument("dataset row " + std::to_string(line) +
                          ": nonpositive box width/height");
  }
  const double corners[4] = {s.box[0] - w / 2, s.box[0] + w / 2,
                             s.box[1] - h / 2, s.box[1] + h / 2};
  for (double c : corners) {
    if (c < -0.5 || c > 1.5) {
      throw InvalidArgument("dataset row " + std::to_string(line) +
                            ": box corner outside [-0.5, 1.5]");
    }
  }
  if (s.label < 0) {
    throw InvalidArgument("dataset row " + std::to_string(line) +
                          ": negative label");
  }
}

}  // namespace

void write_dataset(const Dataset& dataset, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << header_for(dataset.dim) << '\n';
  for (const Sample& s : dataset.samples) {
    out << domain_name(s.domain) << ',' << s.label;
    for (double b : s.box) out << ',' << format_double(b);
    for (double x : s.x) out << ',' << format_double(x);
    out << '\n';
  }
  if (!out) throw Error("write failed for '" + path + "'");
}

Dataset read_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open dataset '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) {
    throw InvalidArgument("dataset '" + path + "': empty file");
  }
  if (!line.empty() && line.back() == '\r') line.pop_back();

  // Recover d from the header, then demand an exact match.
  std::size_t dim = 0;
  {
    std::size_t pos = 0, fields = 0;
    while (pos != std::string::npos) {
      ++fields;
      pos = line.find(',', pos);
      if (pos != std::string::npos) ++pos;
    }
    if (fields < 7) {
      throw InvalidArgument("dataset '" + path + "': header has " +
                            std::to_string(fields) + " columns, expected >= 7");
    }
    dim = fields - 6;
  }
  if (line != header_for(dim)) {
    throw InvalidArgument("dataset '" + path + "': header mismatch, got '" +
                          line + "'");
  }

  Dataset ds;
  ds.dim = dim;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != dim + 6) {
      throw InvalidArgument("dataset row " + std::to_string(line_no) + ": " +
                            std::to_string(cells.size()) +
                            " columns, expected " + std::to_string(dim + 6));
    }

    Sample s;
    if (cells[0] == "source") s.domain = Domain::Source;
    else if (cells[0] == "target") s.domain = Domain::Target;
    else {
      throw InvalidArgument("dataset row " + std::to_string(line_no) +
                            ", column 1: unknown domain '" + cells[0] + "'");
    }
    auto parse = [&](std::size_t col) {
      try {
        std::size_t used = 0;
        const double v = std::stod(cells[col], &used);
        if (used != cells[col].size() || !std::isfinite(v)) throw std::invalid_argument("");
        return v;
      } catch (const std::exception&) {
        throw InvalidArgument("dataset row " + std::to_string(line_no) +
                              ", column " + std::to_string(col + 1) +
                              ": bad number '" + cells[col] + "'");
      }
    };
    s.label = static_cast<int>(parse(1));
    for (std::size_t i = 0; i < 4; ++i) s.box[i] = parse(2 + i);
    s.x.resize(dim);
    for (std::size_t i = 0; i < dim; ++i) s.x[i] = parse(6 + i);
    check_sample_invariants(s, line_no);
    ds.samples.push_back(std::move(s));
  }
  return ds;
}

std::string shift_spec_to_json(const ShiftSpec& spec) {
  json j;
  j["d"] = spec.dim;
  j["num_classes"] = spec.num_classes;
  j["class_means"] = spec.class_means;
  j["class_cov_scale"] = spec.class_cov_scale;
  j["target_rotation"] = spec.target_rotation;
  j["target_shift"] = spec.target_shift;
  j["box_map"] = spec.box_map;
  j["noise_sigma"] = spec.noise_sigma;
  j["train_per_domain"] = spec.train_per_domain;
  j["test_per_domain"] = spec.test_per_domain;
  return j.dump(2);
}

ShiftSpec shift_spec_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("shift spec: invalid JSON: ") + e.what());
  }
  ShiftSpec spec;
  try {
    spec.dim = j.at("d").get<std::size_t>();
    spec.num_classes = j.at("num_classes").get<std::size_t>();
    spec.class_means = j.at("class_means").get<std::vector<std::vector<double>>>();
    spec.class_cov_scale = j.at("class_cov_scale").get<double>();
    spec.target_rotation =
        j.at("target_rotation").get<std::vector<std::vector<double>>>();
    spec.target_shift = j.at("target_shift").get<std::vector<double>>();
    spec.box_map = j.at("box_map").get<std::vector<std::vector<double>>>();
    spec.noise_sigma = j.at("noise_sigma").get<double>();
    spec.train_per_domain = j.at("train_per_domain").get<std::size_t>();
    spec.test_per_domain = j.at("test_per_domain").get<std::size_t>();
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("shift spec: missing/bad field: ") +
                          e.what());
  }
  validate(spec);
  return spec;
}

ShiftSpec load_shift_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open shift spec '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return shift_spec_from_json(ss.str());
}

}  // namespace tia::synth
