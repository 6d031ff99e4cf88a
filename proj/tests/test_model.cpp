#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>

#include "tia/losses.hpp"
#include "tia/model.hpp"

using tia::InvalidArgument;
using tia::Rng;
using tia::ad::GradientMap;
using tia::ad::Tape;
using tia::ad::Tensor;
using namespace tia::model;

namespace {

ModelConfig small_config() {
  ModelConfig c;
  c.input_dim = 5;
  c.num_classes = 3;
  c.trunk_widths = {16, 12};
  c.num_aux_classifiers = 4;
  c.num_aux_localizers = 3;
  c.disc_widths = {8};
  return c;
}

Tensor random_batch(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(rows * cols);
  for (double& x : v) x = rng.normal();
  return Tensor({rows, cols}, v);
}

double group_grad_norm(const Model& m, const TapedParams& tp,
                       const GradientMap& grads, ParamGroup group) {
  double acc = 0.0;
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    if (m.params[i].group != group) continue;
    for (double g : grads.at(tp.leaves[i])) acc += g * g;
  }
  return std::sqrt(acc);
}

}  // namespace

TEST_CASE("init is deterministic and heads differ pairwise") {
  ModelConfig cfg = small_config();
  cfg.num_aux_classifiers = 8;
  Model a = init_model(cfg, 123);
  Model b = init_model(cfg, 123);
  REQUIRE(a.params.size() == b.params.size());
  for (std::size_t i = 0; i < a.params.size(); ++i) {
    CHECK(a.params[i].value.values == b.params[i].value.values);
  }

  // Pairwise distance between auxiliary classifier weight vectors.
  std::vector<std::vector<double>> head_weights(8);
  for (const Param& p : a.params) {
    if (p.group == ParamGroup::AuxCls && p.name.ends_with(".W"))
      head_weights[p.head] = p.value.values;
  }
  for (std::size_t i = 0; i < 8; ++i) {
    for (std::size_t j = i + 1; j < 8; ++j) {
      double d = 0.0;
      for (std::size_t k = 0; k < head_weights[i].size(); ++k)
        d += std::fabs(head_weights[i][k] - head_weights[j][k]);
      CHECK(d > 0.0);
    }
  }
}

TEST_CASE("config validation") {
  ModelConfig cfg = small_config();
  cfg.trunk_widths = {4};  // trunk output below the floor
  CHECK_THROWS_AS(validate(cfg), InvalidArgument);
  cfg = small_config();
  cfg.num_classes = 1;
  CHECK_THROWS_AS(validate(cfg), InvalidArgument);
}

TEST_CASE("forward: shapes, probability rows, dual-path value identity") {
  Model m = init_model(small_config(), 9);
  Tape tape;
  PathFlags flags;
  flags.aux_detached = true;
  flags.aux_adapt = true;
  flags.discriminator = true;
  ForwardBundle out = forward(tape, m, random_batch(6, 5, 1), flags);

  CHECK(out.primary_probs.shape == tia::ad::Shape{6, 3});
  CHECK(out.primary_box.shape == tia::ad::Shape{6, 4});
  CHECK(out.disc_prob.shape == tia::ad::Shape{6, 1});
  REQUIRE(out.aux_cls_detached.size() == 4);
  REQUIRE(out.aux_loc_detached.size() == 3);

  for (std::size_t r = 0; r < 6; ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < 3; ++c) sum += out.primary_probs.at(r, c);
    CHECK(std::fabs(sum - 1.0) < 1e-9);
  }
  // GRL and detach are forward identities, so both auxiliary paths agree.
  for (std::size_t h = 0; h < 4; ++h) {
    CHECK(out.aux_cls_detached[h].values == out.aux_cls_adapt[h].values);
  }
  for (std::size_t h = 0; h < 3; ++h) {
    CHECK(out.aux_loc_detached[h].values == out.aux_loc_adapt[h].values);
  }
}

TEST_CASE("batch of one and zero-weight classifier give uniform rows") {
  Model m = init_model(small_config(), 4);
  for (Param& p : m.params) {
    if (p.group == ParamGroup::PrimaryCls) {
      for (double& v : p.value.values) v = 0.0;
    }
  }
  Tape tape;
  ForwardBundle out = forward(tape, m, random_batch(1, 5, 2), PathFlags{});
  CHECK(out.primary_probs.shape == tia::ad::Shape{1, 3});
  for (std::size_t c = 0; c < 3; ++c) {
    CHECK(out.primary_probs.at(0, c) == doctest::Approx(1.0 / 3).epsilon(1e-12));
  }
}

TEST_CASE("forward rejects wrong batch width") {
  Model m = init_model(small_config(), 4);
  Tape tape;
  CHECK_THROWS_AS(forward(tape, m, random_batch(2, 7, 3), PathFlags{}),
                  InvalidArgument);
}

TEST_CASE("gradient partition: detached path reaches no trunk parameter") {
  Model m = init_model(small_config(), 31);
  Tape tape;
  TapedParams tp = lift(tape, m);
  PathFlags flags;
  flags.primary = false;
  flags.aux_detached = true;
  ForwardBundle out = forward(tape, m, tp, tape.leaf(random_batch(5, 5, 4)), flags);

  // Supervised auxiliary loss only.
  std::vector<int> labels{0, 1, 2, 0, 1};
  Tensor loss = tia::losses::cross_entropy_graph(tape, out.aux_cls_detached[0], labels);
  for (std::size_t h = 1; h < out.aux_cls_detached.size(); ++h) {
    loss = tape.add(loss, tia::losses::cross_entropy_graph(
                              tape, out.aux_cls_detached[h], labels));
  }
  GradientMap grads = tape.backward(loss);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::Trunk) == 0.0);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::AuxCls) > 0.0);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::PrimaryCls) == 0.0);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::Disc) == 0.0);
}

TEST_CASE("gradient partition: GRL path equals negated identity path on trunk") {
  Model m = init_model(small_config(), 32);
  Tensor x = random_batch(4, 5, 5);

  auto trunk_grads = [&](bool identity) {
    Tape tape;
    TapedParams tp = lift(tape, m);
    PathFlags flags;
    flags.primary = false;
    flags.aux_adapt = true;
    flags.adapt_identity = identity;
    ForwardBundle out = forward(tape, m, tp, tape.leaf(x), flags);
    Tensor per = tia::losses::cls_inconsistency_graph(tape, out.aux_cls_adapt);
    GradientMap grads = tape.backward(tape.mean(per, 0));
    std::vector<double> flat;
    for (std::size_t i = 0; i < m.params.size(); ++i) {
      if (m.params[i].group != ParamGroup::Trunk) continue;
      const auto& g = grads.at(tp.leaves[i]);
      flat.insert(flat.end(), g.begin(), g.end());
    }
    return flat;
  };

  const auto reversed = trunk_grads(false);
  const auto straight = trunk_grads(true);
  REQUIRE(reversed.size() == straight.size());
  double max_err = 0.0;
  for (std::size_t i = 0; i < reversed.size(); ++i)
    max_err = std::max(max_err, std::fabs(reversed[i] + straight[i]));
  CHECK(max_err < 1e-10);
}

TEST_CASE("gradient partition: primary losses never touch banks or disc") {
  Model m = init_model(small_config(), 33);
  Tape tape;
  TapedParams tp = lift(tape, m);
  PathFlags flags;
  flags.aux_detached = true;
  flags.aux_adapt = true;
  flags.discriminator = true;
  ForwardBundle out = forward(tape, m, tp, tape.leaf(random_batch(5, 5, 6)), flags);
  std::vector<int> labels{0, 1, 2, 0, 1};
  Tensor loss = tia::losses::cross_entropy_graph(tape, out.primary_probs, labels);
  GradientMap grads = tape.backward(loss);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::AuxCls) == 0.0);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::AuxLoc) == 0.0);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::Disc) == 0.0);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::Trunk) > 0.0);
  CHECK(group_grad_norm(m, tp, grads, ParamGroup::PrimaryCls) > 0.0);
}

TEST_CASE("save/load round-trip reproduces forward outputs bit-identically") {
  Model m = init_model(small_config(), 77);
  const std::string path =
      (std::filesystem::temp_directory_path() / "tia_model_rt.json").string();
  save_model(m, path);
  Model back = load_model(path);

  Tensor x = random_batch(3, 5, 8);
  PathFlags flags;
  flags.aux_detached = true;
  Tape t1, t2;
  ForwardBundle o1 = forward(t1, m, x, flags);
  ForwardBundle o2 = forward(t2, back, x, flags);
  CHECK(o1.primary_probs.values == o2.primary_probs.values);
  CHECK(o1.primary_box.values == o2.primary_box.values);
  for (std::size_t h = 0; h < o1.aux_cls_detached.size(); ++h)
    CHECK(o1.aux_cls_detached[h].values == o2.aux_cls_detached[h].values);
  std::remove(path.c_str());
}

TEST_CASE("model loading rejects truncated and mismatched files") {
  Model m = init_model(small_config(), 78);
  const std::string path =
      (std::filesystem::temp_directory_path() / "tia_model_bad.json").string();
  save_model(m, path);

  // Truncate.
  {
    std::string text = model_to_json(m);
    std::ofstream out(path, std::ios::binary);
    out << text.substr(0, text.size() / 2);
  }
  CHECK_THROWS_AS(load_model(path), InvalidArgument);

  // Mismatched input dim between config and stored shapes.
  {
    std::string text = model_to_json(m);
    auto pos = text.find("\"input_dim\":5");
    REQUIRE(pos != std::string::npos);
    text.replace(pos, 13, "\"input_dim\":9");
    std::ofstream out(path, std::ios::binary);
    out << text;
  }
  CHECK_THROWS_AS(load_model(path), InvalidArgument);
  std::remove(path.c_str());
}
