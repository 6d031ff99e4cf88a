#include "tia/losses.hpp"

#include <algorithm>
#include <cmath>

#include "tia/common.hpp"

namespace tia::losses {

const char* measure_name(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::SE_WEIGHTED: return "se_weighted";
    case MeasureKind::SD: return "sd";
    case MeasureKind::L1: return "l1";
    case MeasureKind::KL: return "kl";
    case MeasureKind::SWD: return "swd";
    case MeasureKind::MAD: return "mad";
    case MeasureKind::VARIANCE: return "variance";
  }
  return "?";
}

MeasureKind measure_from_name(const std::string& name) {
  for (MeasureKind k :
       {MeasureKind::SE_WEIGHTED, MeasureKind::SD, MeasureKind::L1,
        MeasureKind::KL, MeasureKind::SWD, MeasureKind::MAD,
        MeasureKind::VARIANCE}) {
    if (name == measure_name(k)) return k;
  }
  throw InvalidArgument("unknown measure kind '" + name + "'");
}

bool measure_is_classification(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::SE_WEIGHTED:
    case MeasureKind::L1:
    case MeasureKind::KL:
    case MeasureKind::SWD:
      return true;
    default:
      return false;
  }
}

bool measure_is_localization(MeasureKind kind) {
  switch (kind) {
    case MeasureKind::SD:
    case MeasureKind::MAD:
    case MeasureKind::VARIANCE:
    case MeasureKind::L1:   // measure-comparison rows pair L1 with the boxes
    case MeasureKind::SWD:  // and SWD runs on both branches
      return true;
    default:
      return false;
  }
}

bool measure_requires_pair(MeasureKind kind) {
  return kind == MeasureKind::L1 || kind == MeasureKind::KL ||
         kind == MeasureKind::SWD;
}

namespace {

void check_bank(const char* what, const std::vector<Tensor>& outputs,
                std::size_t minimum) {
  if (outputs.size() < minimum) {
    throw InvalidArgument(std::string(what) + ": needs at least " +
                          std::to_string(minimum) + " predictors, got " +
                          std::to_string(outputs.size()));
  }
  for (const Tensor& t : outputs) {
    if (t.shape != outputs[0].shape) {
      throw InvalidArgument(std::string(what) +
                            ": predictor outputs disagree in shape");
    }
  }
}

// Flattens each (B, C) head output to a row and stacks the bank into a
// (heads, B*C) matrix; every column is one (sample, coordinate) slice across
// the bank.
Tensor stack_bank(Tape& tape, const std::vector<Tensor>& outputs) {
  std::vector<Tensor> flat;
  flat.reserve(outputs.size());
  for (const Tensor& t : outputs)
    flat.push_back(tape.reshape(t, {t.size()}));
  return tape.stack_rows(flat);
}

std::pair<std::size_t, std::size_t> batch_dims(const Tensor& head) {
  if (head.rank() == 2) return {head.rows(), head.cols()};
  return {1, head.size()};  // a single-sample row vector
}

}  // namespace

Tensor cls_inconsistency_graph(Tape& tape, const std::vector<Tensor>& probs) {
  check_bank("cls_inconsistency", probs, 2);
  const auto [batch, classes] = batch_dims(probs[0]);
  Tensor m = stack_bank(tape, probs);              // (N, B*C)
  Tensor soft = tape.softmax(m, 0);                // softmax over the bank
  Tensor ent_terms = tape.mul(soft, tape.log(soft));
  Tensor entropy = tape.neg(tape.sum(ent_terms, 0));  // (B*C,)
  Tensor confidence = tape.mean(m, 0);                // q, raw probabilities
  Tensor weighted = tape.mul(entropy, confidence);
  Tensor per_class = tape.reshape(weighted, {batch, classes});
  return tape.neg(tape.sum(per_class, 1));  // (B,)
}

Tensor loc_inconsistency_graph(Tape& tape, const std::vector<Tensor>& boxes) {
  check_bank("loc_inconsistency", boxes, 2);
  const auto [batch, coords] = batch_dims(boxes[0]);
  const double m_count = static_cast<double>(boxes.size());
  Tensor m = stack_bank(tape, boxes);            // (M, B*4)
  Tensor centered = tape.sub(m, tape.mean(m, 0));
  Tensor norms = tape.l2norm(centered, 0);       // (B*4,)
  Tensor per_coord = tape.reshape(norms, {batch, coords});
  return tape.scale(tape.sum(per_coord, 1),
                    1.0 / (4.0 * std::sqrt(m_count)));
}

namespace {

Tensor mad_like_graph(Tape& tape, const std::vector<Tensor>& boxes,
                      bool squared) {
  check_bank("loc dispersion", boxes, 2);
  const auto [batch, coords] = batch_dims(boxes[0]);
  Tensor m = stack_bank(tape, boxes);
  Tensor centered = tape.sub(m, tape.mean(m, 0));
  Tensor dev = squared ? tape.mul(centered, centered) : tape.abs(centered);
  Tensor per_entry = tape.mean(dev, 0);  // mean over the bank
  Tensor per_coord = tape.reshape(per_entry, {batch, coords});
  return tape.scale(tape.sum(per_coord, 1), 0.25);
}

Tensor l1_pair_graph(Tape& tape, const std::vector<Tensor>& outputs) {
  Tensor diff = tape.abs(tape.sub(outputs[0], outputs[1]));
  if (diff.rank() == 1) return tape.mean(diff, 0);
  return tape.mean(diff, 1);  // (B,)
}

Tensor kl_pair_graph(Tape& tape, const std::vector<Tensor>& outputs) {
  const Tensor& a = outputs[0];
  const Tensor& b = outputs[1];
  const int row_axis = a.rank() == 2 ? 1 : 0;
  Tensor log_a = tape.log(a);
  Tensor log_b = tape.log(b);
  Tensor kl_ab = tape.sum(tape.mul(a, tape.sub(log_a, log_b)), row_axis);
  Tensor kl_ba = tape.sum(tape.mul(b, tape.sub(log_b, log_a)), row_axis);
  return tape.scale(tape.add(kl_ab, kl_ba), 0.5);
}

std::vector<double> swd_projection_matrix(std::size_t dim) {
  Rng rng(mix_seed(kSwdProjectionSeed, dim));
  std::vector<double> w(dim * kSwdProjections);
  for (std::size_t r = 0; r < kSwdProjections; ++r) {
    double norm2 = 0.0;
    std::vector<double> col(dim);
    for (std::size_t i = 0; i < dim; ++i) {
      col[i] = rng.normal();
      norm2 += col[i] * col[i];
    }
    const double inv = 1.0 / std::sqrt(std::max(norm2, 1e-30));
    for (std::size_t i = 0; i < dim; ++i) w[i * kSwdProjections + r] = col[i] * inv;
  }
  return w;
}

// Sliced discrepancy between the two predictors' batch output distributions:
// project onto fixed random unit directions, sort each projection, mean
// squared difference. Batch-level by construction (returns shape (1)).
Tensor swd_pair_graph(Tape& tape, const std::vector<Tensor>& outputs) {
  Tensor a = outputs[0].rank() == 2
                 ? outputs[0]
                 : tape.reshape(outputs[0], {1, outputs[0].size()});
  Tensor b = outputs[1].rank() == 2
                 ? outputs[1]
                 : tape.reshape(outputs[1], {1, outputs[1].size()});
  Tensor w = tape.leaf({a.cols(), kSwdProjections},
                       swd_projection_matrix(a.cols()));
  Tensor pa = tape.sort_columns(tape.matmul(a, w));
  Tensor pb = tape.sort_columns(tape.matmul(b, w));
  Tensor diff = tape.sub(pa, pb);
  Tensor sq = tape.mul(diff, diff);
  return tape.mean(tape.mean(sq, 0), 0);  // (1,)
}

}  // namespace

Tensor measure_graph(Tape& tape, MeasureKind kind,
                     const std::vector<Tensor>& outputs) {
  if (measure_requires_pair(kind) && outputs.size() != 2) {
    throw InvalidArgument(std::string(measure_name(kind)) +
                          ": pairwise measure needs exactly 2 predictors, got " +
                          std::to_string(outputs.size()));
  }
  switch (kind) {
    case MeasureKind::SE_WEIGHTED: return cls_inconsistency_graph(tape, outputs);
    case MeasureKind::SD: return loc_inconsistency_graph(tape, outputs);
    case MeasureKind::L1: return l1_pair_graph(tape, outputs);
    case MeasureKind::KL: return kl_pair_graph(tape, outputs);
    case MeasureKind::SWD: return swd_pair_graph(tape, outputs);
    case MeasureKind::MAD: return mad_like_graph(tape, outputs, false);
    case MeasureKind::VARIANCE: return mad_like_graph(tape, outputs, true);
  }
  throw InvalidArgument("measure_graph: unknown kind");
}

Tensor task_da_loss_graph(Tape& tape, const Tensor& per_sample_source,
                          const Tensor& per_sample_target) {
  if (per_sample_source.size() == 0 || per_sample_target.size() == 0) {
    throw InvalidArgument("task_da_loss: empty batch");
  }
  Tensor mean_t = tape.mean(per_sample_target, 0);
  Tensor mean_s = tape.mean(per_sample_source, 0);
  return tape.sub(mean_s, mean_t);  // -mean_target + mean_source
}

Tensor cross_entropy_graph(Tape& tape, const Tensor& probs,
                           const std::vector<int>& labels) {
  if (probs.rank() != 2 || probs.rows() != labels.size()) {
    throw InvalidArgument("cross_entropy: probs/labels mismatch");
  }
  const std::size_t batch = probs.rows(), classes = probs.cols();
  std::vector<double> onehot(batch * classes, 0.0);
  for (std::size_t i = 0; i < batch; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= classes) {
      throw InvalidArgument("cross_entropy: label " + std::to_string(y) +
                            " out of range for " + std::to_string(classes) +
                            " classes");
    }
    onehot[i * classes + static_cast<std::size_t>(y)] = 1.0;
  }
  Tensor mask = tape.leaf({batch, classes}, std::move(onehot));
  Tensor picked = tape.sum(tape.mul(mask, tape.log(probs)), 1);
  return tape.neg(tape.mean(picked, 0));
}

Tensor smooth_l1_loss_graph(
    Tape& tape, const Tensor& pred,
    const std::vector<std::array<double, 4>>& targets) {
  if (pred.rank() != 2 || pred.cols() != 4 || pred.rows() != targets.size()) {
    throw InvalidArgument("smooth_l1_loss: pred/targets mismatch");
  }
  std::vector<double> tv;
  tv.reserve(targets.size() * 4);
  for (const auto& b : targets) tv.insert(tv.end(), b.begin(), b.end());
  Tensor target = tape.leaf({targets.size(), 4}, std::move(tv));
  Tensor per_coord = tape.smooth_l1(tape.sub(pred, target));
  return tape.mean(tape.sum(per_coord, 1), 0);
}

Tensor bce_graph(Tape& tape, const Tensor& probs,
                 const std::vector<int>& labels) {
  if (probs.size() != labels.size()) {
    throw InvalidArgument("bce: probs/labels mismatch");
  }
  const std::size_t n = labels.size();
  std::vector<double> pos(n), negv(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] != 0 && labels[i] != 1) {
      throw InvalidArgument("bce: domain labels must be 0 or 1");
    }
    pos[i] = static_cast<double>(labels[i]);
    negv[i] = 1.0 - pos[i];
  }
  Tensor p = probs.rank() == 2 ? tape.reshape(probs, {n}) : probs;
  Tensor y = tape.leaf({n}, std::move(pos));
  Tensor y_not = tape.leaf({n}, std::move(negv));
  Tensor ones = tape.leaf({n}, std::vector<double>(n, 1.0));
  Tensor ll = tape.add(tape.mul(y, tape.log(p)),
                       tape.mul(y_not, tape.log(tape.sub(ones, p))));
  return tape.neg(tape.mean(ll, 0));
}

// --- eager entry points ----------------------------------------------------

namespace {

void check_probability_rows(const char* what, const Tensor& m) {
  for (std::size_t r = 0; r < m.rows(); ++r) {
    double sum = 0.0;
    for (std::size_t c = 0; c < m.cols(); ++c) {
      const double v = m.at(r, c);
      if (v < 0.0 || v > 1.0) {
        throw InvalidArgument(std::string(what) + ": row " + std::to_string(r) +
                              " has entry outside [0,1]");
      }
      sum += v;
    }
    if (std::fabs(sum - 1.0) > 1e-6) {
      throw InvalidArgument(std::string(what) + ": row " + std::to_string(r) +
                            " sums to " + std::to_string(sum) + ", not 1");
    }
  }
}

std::vector<Tensor> rows_as_heads(Tape& tape, const Tensor& m) {
  std::vector<Tensor> heads;
  heads.reserve(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    std::vector<double> row(m.values.begin() + r * m.cols(),
                            m.values.begin() + (r + 1) * m.cols());
    heads.push_back(tape.leaf({1, m.cols()}, std::move(row)));
  }
  return heads;
}

}  // namespace

double cls_inconsistency(const Tensor& probs) {
  if (probs.rank() != 2 || probs.rows() < 2) {
    throw InvalidArgument(
        "cls_inconsistency: needs an N x C matrix with N >= 2");
  }
  check_probability_rows("cls_inconsistency", probs);
  Tape tape;
  return cls_inconsistency_graph(tape, rows_as_heads(tape, probs)).item();
}

double loc_inconsistency(const Tensor& preds) {
  if (preds.rank() != 2 || preds.cols() != 4 || preds.rows() < 2) {
    throw InvalidArgument(
        "loc_inconsistency: needs an M x 4 matrix with M >= 2");
  }
  Tape tape;
  return loc_inconsistency_graph(tape, rows_as_heads(tape, preds)).item();
}

double alt_measure(MeasureKind kind, const std::vector<Tensor>& outputs) {
  if (kind == MeasureKind::KL) {
    for (const Tensor& t : outputs) {
      Tensor m = t.rank() == 2 ? t : Tensor({1, t.size()}, t.values);
      check_probability_rows("alt_measure(kl)", m);
    }
  }
  Tape tape;
  std::vector<Tensor> on_tape;
  on_tape.reserve(outputs.size());
  for (const Tensor& t : outputs) on_tape.push_back(tape.leaf(t));
  Tensor per_sample = measure_graph(tape, kind, on_tape);
  return tape.mean(per_sample, 0).item();
}

double task_da_loss(const std::vector<double>& source_values,
                    const std::vector<double>& target_values) {
  Tape tape;
  Tensor s = tape.leaf({source_values.size()}, source_values);
  Tensor t = tape.leaf({target_values.size()}, target_values);
  return task_da_loss_graph(tape, s, t).item();
}

double total_loss(const LossComponents& c, double lambda1, double lambda2,
                  double lambda3) {
  if (lambda1 < 0.0 || lambda2 < 0.0 || lambda3 < 0.0) {
    throw InvalidArgument("total_loss: negative trade-off weight");
  }
  return c.detection + lambda1 * c.da + lambda2 * c.cls_da + lambda3 * c.loc_da;
}

}  // namespace tia::losses
