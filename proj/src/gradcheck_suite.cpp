#include "tia/gradcheck_suite.hpp"

#include <algorithm>
#include <cmath>

#include "tia/losses.hpp"
#include "tia/model.hpp"
#include "tia/trainer.hpp"

namespace tia::suite {

using ad::GradCheckReport;
using ad::OpKind;
using ad::Shape;
using ad::Tape;
using ad::Tensor;

namespace {

constexpr int kInstances = 100;
constexpr double kH = 1e-5;
constexpr double kTol = 1e-4;

Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0,
                     double offset = 0.0) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = offset + scale * rng.normal();
  return Tensor(std::move(shape), std::move(v));
}

// Contracts a tensor to a scalar through a fixed random linear functional so
// FD probes the op's adjoint directly.
Tensor scalarize(Tape& tape, const Tensor& y, const std::vector<double>& w) {
  Tensor flat = y.rank() == 1 ? y : tape.reshape(y, {y.size()});
  Tensor weights = tape.leaf({flat.size()}, w);
  return tape.sum(tape.mul(flat, weights), 0);
}

std::vector<double> random_weights(std::size_t n, Rng& rng) {
  std::vector<double> w(n);
  for (double& x : w) x = rng.normal();
  return w;
}

// Runs `instances` independent grad_checks and keeps the worst.
template <typename MakeParams, typename MakeGraph>
SuiteCheck fd_check(const std::string& name, std::uint64_t seed,
                    MakeParams&& make_params, MakeGraph&& make_graph,
                    int instances = kInstances) {
  SuiteCheck check{name, true, 0.0, instances};
  for (int i = 0; i < instances; ++i) {
    Rng rng(mix_seed(seed, std::hash<std::string>{}(name), i));
    std::vector<Tensor> params = make_params(rng);
    ad::GraphFn f = make_graph(rng, params);
    GradCheckReport report = ad::grad_check(f, params, kH, kTol);
    check.max_err = std::max(check.max_err, report.max_rel_err);
    check.pass = check.pass && report.pass;
  }
  return check;
}

// ----- per-op checks --------------------------------------------------------

SuiteCheck check_unary(const std::string& name, OpKind kind,
                       std::uint64_t seed, double scale = 1.0,
                       double offset = 0.0) {
  return fd_check(
      name, seed,
      [&, scale, offset](Rng& rng) {
        const std::size_t r = 1 + rng.below(4), c = 1 + rng.below(5);
        return std::vector<Tensor>{random_tensor({r, c}, rng, scale, offset)};
      },
      [kind](Rng& rng, const std::vector<Tensor>& params) {
        auto w = random_weights(params[0].size(), rng);
        return [kind, w](Tape& tape, const std::vector<Tensor>& leaves) {
          Tensor y = tape.apply(kind, {leaves[0]});
          return scalarize(tape, y, w);
        };
      });
}

SuiteCheck check_axis_op(const std::string& name, OpKind kind,
                         std::uint64_t seed, double scale = 1.0,
                         double offset = 0.0) {
  return fd_check(
      name, seed,
      [scale, offset](Rng& rng) {
        const std::size_t r = 2 + rng.below(4), c = 2 + rng.below(4);
        return std::vector<Tensor>{random_tensor({r, c}, rng, scale, offset)};
      },
      [kind](Rng& rng, const std::vector<Tensor>& params) {
        const int axis = static_cast<int>(rng.below(2));
        const std::size_t out_len =
            axis == 0 ? params[0].shape[1] : params[0].shape[0];
        const std::size_t out_numel =
            kind == OpKind::Softmax ? params[0].size() : out_len;
        auto w = random_weights(out_numel, rng);
        return [kind, axis, w](Tape& tape, const std::vector<Tensor>& leaves) {
          Tensor y = tape.apply(kind, {leaves[0]}, axis);
          return scalarize(tape, y, w);
        };
      });
}

SuiteCheck check_matmul(std::uint64_t seed) {
  return fd_check(
      "op/matmul", seed,
      [](Rng& rng) {
        const std::size_t m = 1 + rng.below(4), k = 1 + rng.below(4),
                          n = 1 + rng.below(4);
        return std::vector<Tensor>{random_tensor({m, k}, rng),
                                   random_tensor({k, n}, rng)};
      },
      [](Rng& rng, const std::vector<Tensor>& params) {
        auto w = random_weights(params[0].shape[0] * params[1].shape[1], rng);
        return [w](Tape& tape, const std::vector<Tensor>& leaves) {
          return scalarize(tape, tape.matmul(leaves[0], leaves[1]), w);
        };
      });
}

SuiteCheck check_binary(const std::string& name, OpKind kind,
                        std::uint64_t seed, bool broadcast) {
  return fd_check(
      name, seed,
      [broadcast](Rng& rng) {
        const std::size_t r = 2 + rng.below(4), c = 1 + rng.below(5);
        std::vector<Tensor> p{random_tensor({r, c}, rng)};
        p.push_back(broadcast ? random_tensor({c}, rng)
                              : random_tensor({r, c}, rng));
        return p;
      },
      [kind](Rng& rng, const std::vector<Tensor>& params) {
        auto w = random_weights(params[0].size(), rng);
        return [kind, w](Tape& tape, const std::vector<Tensor>& leaves) {
          return scalarize(tape, tape.apply(kind, {leaves[0], leaves[1]}), w);
        };
      });
}

SuiteCheck check_scale(std::uint64_t seed) {
  return fd_check(
      "op/scale", seed,
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor({1 + rng.below(4), 3}, rng)};
      },
      [](Rng& rng, const std::vector<Tensor>& params) {
        const double factor = rng.uniform(-2.0, 2.0);
        auto w = random_weights(params[0].size(), rng);
        return [factor, w](Tape& tape, const std::vector<Tensor>& leaves) {
          return scalarize(tape, tape.scale(leaves[0], factor), w);
        };
      });
}

SuiteCheck check_stack_rows(std::uint64_t seed) {
  return fd_check(
      "op/stack_rows", seed,
      [](Rng& rng) {
        const std::size_t parts = 2 + rng.below(3), n = 1 + rng.below(6);
        std::vector<Tensor> p;
        for (std::size_t i = 0; i < parts; ++i)
          p.push_back(random_tensor({n}, rng));
        return p;
      },
      [](Rng& rng, const std::vector<Tensor>& params) {
        auto w = random_weights(params.size() * params[0].size(), rng);
        return [w](Tape& tape, const std::vector<Tensor>& leaves) {
          return scalarize(tape, tape.stack_rows(leaves), w);
        };
      });
}

SuiteCheck check_sort_columns(std::uint64_t seed) {
  return fd_check(
      "op/sort_columns", seed,
      [](Rng& rng) {
        // Gaussian entries: ties (the kink set) have measure zero.
        return std::vector<Tensor>{
            random_tensor({3 + rng.below(3), 2 + rng.below(3)}, rng, 3.0)};
      },
      [](Rng& rng, const std::vector<Tensor>& params) {
        auto w = random_weights(params[0].size(), rng);
        return [w](Tape& tape, const std::vector<Tensor>& leaves) {
          return scalarize(tape, tape.sort_columns(leaves[0]), w);
        };
      });
}

// GRL cannot pass a plain FD check by design: its backward is the negated
// identity. The contract check compares the analytic gradient against
// -scale times the FD gradient of the same graph with GRL removed.
SuiteCheck check_grl_contract(std::uint64_t seed) {
  SuiteCheck check{"wiring/grl_reversal", true, 0.0, kInstances};
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(mix_seed(seed, 0xFE1, i));
    const double grl_scale = std::vector<double>{0.0, 0.5, 1.0, 2.0}[i % 4];
    Tensor x = random_tensor({2 + rng.below(3), 3}, rng);
    auto w = random_weights(x.size(), rng);

    ad::GraphFn with_grl = [grl_scale, w](Tape& tape,
                                          const std::vector<Tensor>& leaves) {
      Tensor h = tape.mul(leaves[0], leaves[0]);
      return scalarize(tape, tape.grl(h, grl_scale), w);
    };
    ad::GraphFn without = [w](Tape& tape, const std::vector<Tensor>& leaves) {
      Tensor h = tape.mul(leaves[0], leaves[0]);
      return scalarize(tape, h, w);
    };

    Tape t1;
    std::vector<Tensor> l1{t1.leaf(x)};
    const auto g1 = t1.backward(with_grl(t1, l1)).at(l1[0]);
    Tape t2;
    std::vector<Tensor> l2{t2.leaf(x)};
    const auto g2 = t2.backward(without(t2, l2)).at(l2[0]);

    // Forward must be bit-identical to the identity path.
    Tape t3;
    Tensor lx = t3.leaf(x);
    Tensor fwd = t3.grl(lx, grl_scale);
    for (std::size_t k = 0; k < x.values.size(); ++k) {
      if (fwd.values[k] != x.values[k]) check.pass = false;
      const double err = std::fabs(g1[k] - (-grl_scale) * g2[k]);
      check.max_err = std::max(check.max_err, err);
      if (err > 1e-12) check.pass = false;
    }
  }
  return check;
}

SuiteCheck check_detach_contract(std::uint64_t seed) {
  SuiteCheck check{"wiring/detach_cut", true, 0.0, kInstances};
  for (int i = 0; i < kInstances; ++i) {
    Rng rng(mix_seed(seed, 0xFE2, i));
    Tensor x = random_tensor({2 + rng.below(3), 3}, rng);
    auto w = random_weights(x.size(), rng);

    // Loss downstream of detach: producers get exactly zero.
    Tape t1;
    Tensor lx = t1.leaf(x);
    Tensor h = t1.mul(lx, lx);
    Tensor loss = scalarize(t1, t1.detach(h), w);
    const auto g = t1.backward(loss).at(lx);
    for (double v : g) {
      check.max_err = std::max(check.max_err, std::fabs(v));
      if (v != 0.0) check.pass = false;
    }

    // Forward identity.
    Tape t2;
    Tensor lx2 = t2.leaf(x);
    Tensor fwd = t2.detach(lx2);
    for (std::size_t k = 0; k < x.values.size(); ++k) {
      if (fwd.values[k] != x.values[k]) check.pass = false;
    }

    // x * detach(x): gradient is detach(x) values, not 2x.
    Tape t3;
    Tensor lx3 = t3.leaf(x);
    Tensor prod = t3.mul(lx3, t3.detach(lx3));
    Tensor s = t3.sum(t3.reshape(prod, {prod.size()}), 0);
    const auto g3 = t3.backward(s).at(lx3);
    for (std::size_t k = 0; k < x.values.size(); ++k) {
      const double err = std::fabs(g3[k] - x.values[k]);
      check.max_err = std::max(check.max_err, err);
      if (err > 1e-12) check.pass = false;
    }
  }
  return check;
}

// A deliberately wrong gradient (x * detach(x) checked against FD) must fail.
SuiteCheck check_negative_control(std::uint64_t seed) {
  SuiteCheck check{"wiring/negative_control", true, 0.0, kInstances / 10};
  for (int i = 0; i < check.instances; ++i) {
    Rng rng(mix_seed(seed, 0xFE3, i));
    // Values away from zero so analytic (x) and true (2x) gradients differ
    // clearly on every coordinate.
    Tensor x = random_tensor({4}, rng, 1.0, 3.0);
    ad::GraphFn f = [](Tape& tape, const std::vector<Tensor>& leaves) {
      Tensor prod = tape.mul(leaves[0], tape.detach(leaves[0]));
      return tape.sum(prod, 0);
    };
    GradCheckReport report = ad::grad_check(f, {x}, kH, kTol);
    if (report.pass) check.pass = false;  // must detect the broken adjoint
    check.max_err = std::max(check.max_err, report.max_rel_err);
  }
  return check;
}

// ----- loss checks ----------------------------------------------------------

// Bank measures as functions of raw head activations (through each head's own
// softmax where the training path has one).
SuiteCheck check_bank_measure(const std::string& name,
                              losses::MeasureKind kind, bool softmax_heads,
                              std::uint64_t seed, std::size_t out_cols,
                              bool pair_only) {
  return fd_check(
      name, seed,
      [=](Rng& rng) {
        const std::size_t heads = pair_only ? 2 : 2 + rng.below(3);
        const std::size_t batch = 1 + rng.below(3);
        std::vector<Tensor> p;
        for (std::size_t h = 0; h < heads; ++h)
          p.push_back(random_tensor({batch, out_cols}, rng));
        return p;
      },
      [kind, softmax_heads](Rng&, const std::vector<Tensor>& params) {
        (void)params;
        return [kind, softmax_heads](Tape& tape,
                                     const std::vector<Tensor>& leaves) {
          std::vector<Tensor> heads;
          for (const Tensor& l : leaves)
            heads.push_back(softmax_heads ? tape.softmax(l, 1) : l);
          Tensor per_sample = losses::measure_graph(tape, kind, heads);
          return tape.mean(per_sample, 0);
        };
      });
}

SuiteCheck check_task_da(std::uint64_t seed) {
  return fd_check(
      "loss/task_da_combiner", seed,
      [](Rng& rng) {
        const std::size_t heads = 2 + rng.below(2);
        const std::size_t bs = 1 + rng.below(3), bt = 1 + rng.below(3);
        std::vector<Tensor> p;
        for (std::size_t h = 0; h < heads; ++h)
          p.push_back(random_tensor({bs, 3}, rng));
        for (std::size_t h = 0; h < heads; ++h)
          p.push_back(random_tensor({bt, 3}, rng));
        return p;
      },
      [](Rng&, const std::vector<Tensor>& params) {
        const std::size_t heads = params.size() / 2;
        return [heads](Tape& tape, const std::vector<Tensor>& leaves) {
          std::vector<Tensor> src, tgt;
          for (std::size_t h = 0; h < heads; ++h)
            src.push_back(tape.softmax(leaves[h], 1));
          for (std::size_t h = 0; h < heads; ++h)
            tgt.push_back(tape.softmax(leaves[heads + h], 1));
          Tensor s = losses::measure_graph(
              tape, losses::MeasureKind::SE_WEIGHTED, src);
          Tensor t = losses::measure_graph(
              tape, losses::MeasureKind::SE_WEIGHTED, tgt);
          return losses::task_da_loss_graph(tape, s, t);
        };
      });
}

SuiteCheck check_cross_entropy(std::uint64_t seed) {
  return fd_check(
      "loss/cross_entropy", seed,
      [](Rng& rng) {
        const std::size_t batch = 1 + rng.below(4), c = 2 + rng.below(4);
        return std::vector<Tensor>{random_tensor({batch, c}, rng)};
      },
      [](Rng& rng, const std::vector<Tensor>& params) {
        std::vector<int> labels(params[0].shape[0]);
        for (int& y : labels)
          y = static_cast<int>(rng.below(params[0].shape[1]));
        return [labels](Tape& tape, const std::vector<Tensor>& leaves) {
          Tensor probs = tape.softmax(leaves[0], 1);
          return losses::cross_entropy_graph(tape, probs, labels);
        };
      });
}

SuiteCheck check_smooth_l1_loss(std::uint64_t seed) {
  return fd_check(
      "loss/smooth_l1", seed,
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor({1 + rng.below(4), 4}, rng)};
      },
      [](Rng& rng, const std::vector<Tensor>& params) {
        std::vector<std::array<double, 4>> targets(params[0].shape[0]);
        for (auto& b : targets)
          for (double& v : b) v = rng.normal();
        return [targets](Tape& tape, const std::vector<Tensor>& leaves) {
          return losses::smooth_l1_loss_graph(tape, leaves[0], targets);
        };
      });
}

SuiteCheck check_bce(std::uint64_t seed) {
  return fd_check(
      "loss/domain_bce", seed,
      [](Rng& rng) {
        return std::vector<Tensor>{random_tensor({2 + rng.below(4), 1}, rng)};
      },
      [](Rng& rng, const std::vector<Tensor>& params) {
        std::vector<int> labels(params[0].shape[0]);
        for (int& y : labels) y = static_cast<int>(rng.below(2));
        return [labels](Tape& tape, const std::vector<Tensor>& leaves) {
          Tensor probs = tape.sigmoid(leaves[0]);
          return losses::bce_graph(tape, probs, labels);
        };
      });
}

// The full combined objective of a small model, checked with respect to
// every parameter tensor. GRL and detach are identity-rerouted here: finite
// differences probe the forward value, which those two primitives
// intentionally disagree with; their backward contracts are verified exactly
// by the wiring checks above.
SuiteCheck check_total_objective(std::uint64_t seed) {
  model::ModelConfig config;
  config.input_dim = 3;
  config.num_classes = 3;
  config.trunk_widths = {8};
  config.num_aux_classifiers = 2;
  config.num_aux_localizers = 2;
  config.disc_widths = {4};

  return fd_check(
      "loss/total_objective", seed,
      [config](Rng& rng) {
        model::Model m =
            model::init_model(config, rng.below(1u << 30));
        std::vector<Tensor> params;
        for (const auto& p : m.params) params.push_back(p.value);
        return params;
      },
      [config](Rng& rng, const std::vector<Tensor>&) {
        const std::size_t bs = 2, bt = 2;
        Tensor xs = random_tensor({bs, config.input_dim}, rng);
        Tensor xt = random_tensor({bt, config.input_dim}, rng);
        std::vector<int> labels(bs);
        for (int& y : labels) y = static_cast<int>(rng.below(config.num_classes));
        std::vector<std::array<double, 4>> boxes(bs);
        for (auto& b : boxes)
          for (double& v : b) v = rng.uniform(0.1, 0.9);

        return [config, xs, xt, labels, boxes](
                   Tape& tape, const std::vector<Tensor>& leaves) {
          model::Model m = model::init_model(config, 0);
          for (std::size_t i = 0; i < m.params.size(); ++i)
            m.params[i].value = leaves[i];
          model::TapedParams tp;
          tp.leaves = leaves;

          model::PathFlags sf;
          sf.primary = true;
          sf.aux_adapt = true;
          sf.adapt_identity = true;  // value-consistent composite graph
          sf.discriminator = true;
          model::ForwardBundle src = model::forward(tape, m, tp, xs, sf);

          model::PathFlags tf;
          tf.primary = false;
          tf.aux_adapt = true;
          tf.adapt_identity = true;
          tf.discriminator = true;
          model::ForwardBundle tgt = model::forward(tape, m, tp, xt, tf);

          Tensor det = losses::cross_entropy_graph(tape, src.primary_probs, labels);
          det = tape.add(det, losses::smooth_l1_loss_graph(tape, src.primary_box, boxes));
          // With identity rerouting the adapt-path outputs are exactly what
          // the supervised heads would produce, so they serve both terms.
          for (const Tensor& p : src.aux_cls_adapt)
            det = tape.add(det, losses::cross_entropy_graph(tape, p, labels));
          for (const Tensor& b : src.aux_loc_adapt)
            det = tape.add(det, losses::smooth_l1_loss_graph(tape, b, boxes));

          Tensor da_s = losses::bce_graph(tape, src.disc_prob, std::vector<int>(bs, 1));
          Tensor da_t = losses::bce_graph(tape, tgt.disc_prob, std::vector<int>(bt, 0));
          Tensor da = tape.scale(tape.add(da_s, da_t), 0.5);

          Tensor cls = losses::task_da_loss_graph(
              tape,
              losses::measure_graph(tape, losses::MeasureKind::SE_WEIGHTED,
                                    src.aux_cls_adapt),
              losses::measure_graph(tape, losses::MeasureKind::SE_WEIGHTED,
                                    tgt.aux_cls_adapt));
          Tensor loc = losses::task_da_loss_graph(
              tape,
              losses::measure_graph(tape, losses::MeasureKind::SD,
                                    src.aux_loc_adapt),
              losses::measure_graph(tape, losses::MeasureKind::SD,
                                    tgt.aux_loc_adapt));

          Tensor total = tape.add(det, tape.scale(da, 1.0));
          total = tape.add(total, tape.scale(cls, 1.0));
          total = tape.add(total, tape.scale(loc, 0.01));
          return total;
        };
      });
}

}  // namespace

std::vector<SuiteCheck> run_gradient_suite(std::uint64_t seed) {
  std::vector<SuiteCheck> checks;
  checks.push_back(check_matmul(seed));
  checks.push_back(check_binary("op/add", OpKind::Add, seed, false));
  checks.push_back(check_binary("op/add_broadcast", OpKind::Add, seed, true));
  checks.push_back(check_binary("op/sub", OpKind::Sub, seed, false));
  checks.push_back(check_binary("op/sub_broadcast", OpKind::Sub, seed, true));
  checks.push_back(check_binary("op/mul", OpKind::Mul, seed, false));
  checks.push_back(check_scale(seed));
  checks.push_back(check_unary("op/neg", OpKind::Neg, seed));
  checks.push_back(check_unary("op/relu", OpKind::Relu, seed));
  checks.push_back(check_unary("op/exp", OpKind::Exp, seed));
  // Positive inputs bounded away from the floor and from relu/abs kinks.
  checks.push_back(check_unary("op/log", OpKind::Log, seed, 0.4, 1.5));
  checks.push_back(check_unary("op/sigmoid", OpKind::Sigmoid, seed));
  checks.push_back(check_unary("op/abs", OpKind::Abs, seed, 1.0, 2.5));
  checks.push_back(check_unary("op/smooth_l1", OpKind::SmoothL1, seed));
  checks.push_back(check_axis_op("op/softmax", OpKind::Softmax, seed));
  checks.push_back(check_axis_op("op/sum", OpKind::Sum, seed));
  checks.push_back(check_axis_op("op/mean", OpKind::Mean, seed));
  // Offset keeps slices away from the zero-norm kink.
  checks.push_back(check_axis_op("op/l2norm", OpKind::L2Norm, seed, 1.0, 2.0));
  checks.push_back(check_unary("op/reshape", OpKind::Reshape, seed));
  checks.push_back(check_stack_rows(seed));
  checks.push_back(check_sort_columns(seed));
  checks.push_back(check_grl_contract(seed));
  checks.push_back(check_detach_contract(seed));
  checks.push_back(check_negative_control(seed));

  checks.push_back(check_bank_measure("loss/cls_inconsistency",
                                      losses::MeasureKind::SE_WEIGHTED, true,
                                      seed, 4, false));
  checks.push_back(check_bank_measure("loss/loc_inconsistency",
                                      losses::MeasureKind::SD, false, seed, 4,
                                      false));
  checks.push_back(check_bank_measure("loss/measure_l1", losses::MeasureKind::L1,
                                      true, seed, 3, true));
  checks.push_back(check_bank_measure("loss/measure_kl", losses::MeasureKind::KL,
                                      true, seed, 3, true));
  checks.push_back(check_bank_measure("loss/measure_swd",
                                      losses::MeasureKind::SWD, true, seed, 3,
                                      true));
  checks.push_back(check_bank_measure("loss/measure_mad",
                                      losses::MeasureKind::MAD, false, seed, 4,
                                      false));
  checks.push_back(check_bank_measure("loss/measure_variance",
                                      losses::MeasureKind::VARIANCE, false,
                                      seed, 4, false));
  checks.push_back(check_task_da(seed));
  checks.push_back(check_cross_entropy(seed));
  checks.push_back(check_smooth_l1_loss(seed));
  checks.push_back(check_bce(seed));
  checks.push_back(check_total_objective(seed));
  return checks;
}

bool all_pass(const std::vector<SuiteCheck>& checks) {
  for (const SuiteCheck& c : checks)
    if (!c.pass) return false;
  return true;
}

}  // namespace tia::suite
