#include "tia/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tia/eval.hpp"

namespace tia::train {

using json = nlohmann::json;
using losses::MeasureKind;

const char* mode_name(Mode mode) {
  switch (mode) {
    case Mode::SourceOnly: return "source_only";
    case Mode::BaselineDann: return "baseline_dann";
    case Mode::DannTask: return "dann_task";
    case Mode::TiaCls: return "tia_cls";
    case Mode::TiaLoc: return "tia_loc";
    case Mode::TiaFull: return "tia_full";
    case Mode::MeasureVariant: return "measure_variant";
  }
  return "?";
}

Mode mode_from_name(const std::string& name) {
  for (Mode m : {Mode::SourceOnly, Mode::BaselineDann, Mode::DannTask,
                 Mode::TiaCls, Mode::TiaLoc, Mode::TiaFull,
                 Mode::MeasureVariant}) {
    if (name == mode_name(m)) return m;
  }
  throw InvalidArgument("unknown mode '" + name + "'");
}

ComponentMask components_for(const ExperimentConfig& c) {
  ComponentMask mask;
  const bool adapt = c.mode != Mode::SourceOnly;
  mask.da = adapt && c.lambda1 > 0.0;
  switch (c.mode) {
    case Mode::TiaCls:
      mask.cls_da = c.lambda2 > 0.0;
      break;
    case Mode::TiaLoc:
      mask.loc_da = c.lambda3 > 0.0;
      break;
    case Mode::TiaFull:
      mask.cls_da = c.lambda2 > 0.0;
      mask.loc_da = c.lambda3 > 0.0;
      break;
    case Mode::MeasureVariant:
    case Mode::DannTask:
      mask.cls_da = c.lambda2 > 0.0 && c.model.num_aux_classifiers >= 2;
      mask.loc_da = c.lambda3 > 0.0 && c.model.num_aux_localizers >= 2;
      if (c.mode == Mode::DannTask) {
        // Task discriminators replace the bank measures; no count needed.
        mask.cls_da = c.lambda2 > 0.0;
        mask.loc_da = c.lambda3 > 0.0;
      }
      break;
    default:
      break;
  }
  return mask;
}

void validate(const ExperimentConfig& c) {
  model::validate(c.model);
  if (c.lambda1 < 0.0 || c.lambda2 < 0.0 || c.lambda3 < 0.0) {
    throw InvalidArgument("experiment config: negative trade-off weight");
  }
  if (c.learning_rate <= 0.0) throw InvalidArgument("experiment config: learning rate must be positive");
  if (c.momentum < 0.0 || c.momentum >= 1.0) {
    throw InvalidArgument("experiment config: momentum must be in [0, 1)");
  }
  if (c.lr_decay_factor <= 0.0) throw InvalidArgument("experiment config: lr decay factor must be positive");
  if (c.lr_decay_interval == 0) throw InvalidArgument("experiment config: lr decay interval must be positive");
  if (c.batch_source == 0 || c.batch_target == 0) {
    throw InvalidArgument("experiment config: batch sizes must be positive");
  }
  if (c.eval_interval == 0) throw InvalidArgument("experiment config: eval interval must be positive");
  if (c.grl_scale < 0.0) throw InvalidArgument("experiment config: negative grl scale");

  const ComponentMask mask = components_for(c);
  const std::size_t n = c.model.num_aux_classifiers;
  const std::size_t m = c.model.num_aux_localizers;
  switch (c.mode) {
    case Mode::TiaCls:
      if (n < 2) throw InvalidArgument("tia_cls: needs >= 2 auxiliary classifiers");
      break;
    case Mode::TiaLoc:
      if (m < 2) throw InvalidArgument("tia_loc: needs >= 2 auxiliary localizers");
      break;
    case Mode::TiaFull:
      if (n < 2 || m < 2) {
        throw InvalidArgument("tia_full: needs >= 2 auxiliary predictors per bank");
      }
      break;
    case Mode::MeasureVariant:
      if (!losses::measure_is_classification(c.measure_cls)) {
        throw InvalidArgument(std::string("measure_variant: '") +
                              losses::measure_name(c.measure_cls) +
                              "' is not a classification measure");
      }
      if (!losses::measure_is_localization(c.measure_loc)) {
        throw InvalidArgument(std::string("measure_variant: '") +
                              losses::measure_name(c.measure_loc) +
                              "' is not a localization measure");
      }
      if (mask.cls_da && losses::measure_requires_pair(c.measure_cls) && n != 2) {
        throw InvalidArgument("measure_variant: pairwise classification measure needs exactly 2 auxiliary classifiers");
      }
      if (mask.loc_da && losses::measure_requires_pair(c.measure_loc) && m != 2) {
        throw InvalidArgument("measure_variant: pairwise localization measure needs exactly 2 auxiliary localizers");
      }
      break;
    case Mode::DannTask:
      if (!c.model.with_task_discriminators) {
        throw InvalidArgument("dann_task: model.with_task_discriminators must be set");
      }
      break;
    default:
      break;
  }
}

std::string config_to_json(const ExperimentConfig& c) {
  json j;
  j["mode"] = mode_name(c.mode);
  j["model"] = {{"input_dim", c.model.input_dim},
                {"num_classes", c.model.num_classes},
                {"trunk_widths", c.model.trunk_widths},
                {"num_aux_classifiers", c.model.num_aux_classifiers},
                {"num_aux_localizers", c.model.num_aux_localizers},
                {"disc_widths", c.model.disc_widths},
                {"with_task_discriminators", c.model.with_task_discriminators}};
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["lambda3"] = c.lambda3;
  j["learning_rate"] = c.learning_rate;
  j["momentum"] = c.momentum;
  j["iterations"] = c.iterations;
  j["lr_decay_factor"] = c.lr_decay_factor;
  j["lr_decay_interval"] = c.lr_decay_interval;
  j["batch_source"] = c.batch_source;
  j["batch_target"] = c.batch_target;
  j["seed"] = c.seed;
  j["datasets"] = {{"source_train", c.source_train},
                   {"target_train", c.target_train},
                   {"source_test", c.source_test},
                   {"target_test", c.target_test}};
  j["grl_scale"] = c.grl_scale;
  j["measure_cls"] = losses::measure_name(c.measure_cls);
  j["measure_loc"] = losses::measure_name(c.measure_loc);
  j["eval_interval"] = c.eval_interval;
  return j.dump(2);
}

ExperimentConfig config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("experiment config: invalid JSON: ") +
                          e.what());
  }
  ExperimentConfig c;
  try {
    c.mode = mode_from_name(j.at("mode").get<std::string>());
    const json& mj = j.at("model");
    c.model.input_dim = mj.at("input_dim").get<std::size_t>();
    c.model.num_classes = mj.at("num_classes").get<std::size_t>();
    c.model.trunk_widths = mj.value("trunk_widths", c.model.trunk_widths);
    c.model.num_aux_classifiers = mj.at("num_aux_classifiers").get<std::size_t>();
    c.model.num_aux_localizers = mj.at("num_aux_localizers").get<std::size_t>();
    c.model.disc_widths = mj.value("disc_widths", c.model.disc_widths);
    c.model.with_task_discriminators =
        mj.value("with_task_discriminators", c.mode == Mode::DannTask);
    c.lambda1 = j.value("lambda1", c.lambda1);
    c.lambda2 = j.value("lambda2", c.lambda2);
    c.lambda3 = j.value("lambda3", c.lambda3);
    c.learning_rate = j.at("learning_rate").get<double>();
    c.momentum = j.value("momentum", c.momentum);
    c.iterations = j.at("iterations").get<std::size_t>();
    c.lr_decay_factor = j.value("lr_decay_factor", c.lr_decay_factor);
    c.lr_decay_interval = j.value("lr_decay_interval", c.lr_decay_interval);
    c.batch_source = j.value("batch_source", c.batch_source);
    c.batch_target = j.value("batch_target", c.batch_target);
    c.seed = j.value("seed", c.seed);
    const json& dj = j.at("datasets");
    c.source_train = dj.at("source_train").get<std::string>();
    c.target_train = dj.at("target_train").get<std::string>();
    c.source_test = dj.at("source_test").get<std::string>();
    c.target_test = dj.at("target_test").get<std::string>();
    c.grl_scale = j.value("grl_scale", c.grl_scale);
    if (j.contains("measure_cls"))
      c.measure_cls = losses::measure_from_name(j.at("measure_cls").get<std::string>());
    if (j.contains("measure_loc"))
      c.measure_loc = losses::measure_from_name(j.at("measure_loc").get<std::string>());
    c.eval_interval = j.value("eval_interval", c.eval_interval);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("experiment config: missing/bad field: ") +
                          e.what());
  }
  validate(c);
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InvalidArgument("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return config_from_json(ss.str());
}

EpochSampler::EpochSampler(std::size_t dataset_size, std::size_t batch_size,
                           std::uint64_t seed)
    : size_(dataset_size), batch_(batch_size), cursor_(0), rng_(seed) {
  if (batch_size > dataset_size) {
    throw InvalidArgument("batch size " + std::to_string(batch_size) +
                          " exceeds dataset size " + std::to_string(dataset_size));
  }
  order_.resize(size_);
  for (std::size_t i = 0; i < size_; ++i) order_[i] = i;
  rng_.shuffle(order_);
}

std::vector<std::size_t> EpochSampler::next() {
  if (cursor_ + batch_ > size_) {  // incomplete tail is dropped
    rng_.shuffle(order_);
    cursor_ = 0;
  }
  std::vector<std::size_t> out(order_.begin() + cursor_,
                               order_.begin() + cursor_ + batch_);
  cursor_ += batch_;
  return out;
}

namespace {

Batch make_batch(const synth::Dataset& ds, const std::vector<std::size_t>& idx,
                 bool with_labels, std::size_t num_classes) {
  Batch b;
  std::vector<double> xs;
  xs.reserve(idx.size() * ds.dim);
  for (std::size_t i : idx) {
    const synth::Sample& s = ds.samples[i];
    xs.insert(xs.end(), s.x.begin(), s.x.end());
    if (with_labels) {
      if (s.label < 0 || static_cast<std::size_t>(s.label) >= num_classes) {
        throw InvalidArgument("sample label " + std::to_string(s.label) +
                              " out of range for C=" + std::to_string(num_classes));
      }
      b.labels.push_back(s.label);
      b.boxes.push_back(s.box);
    }
  }
  b.x = Tensor({idx.size(), ds.dim}, std::move(xs));
  return b;
}

double vec_mean(const std::vector<double>& v) {
  double acc = 0.0;
  for (double x : v) acc += x;
  return v.empty() ? 0.0 : acc / static_cast<double>(v.size());
}

}  // namespace

TrainState init_train_state(const ExperimentConfig& config) {
  validate(config);
  TrainState state;
  state.config = config;
  state.model = model::init_model(config.model, config.seed);
  state.momentum.resize(state.model.params.size());
  for (std::size_t i = 0; i < state.momentum.size(); ++i) {
    state.momentum[i].assign(state.model.params[i].value.size(), 0.0);
  }
  return state;
}

MetricsRecord train_step(TrainState& state, const Batch& source,
                         const Batch& target) {
  const ExperimentConfig& cfg = state.config;
  if (source.x.rows() != cfg.batch_source) {
    throw InvalidArgument("train_step: source batch size mismatch");
  }
  const ComponentMask mask = components_for(cfg);
  const bool aux_measures = (mask.cls_da || mask.loc_da) && cfg.mode != Mode::DannTask;
  const bool task_discs = (mask.cls_da || mask.loc_da) && cfg.mode == Mode::DannTask;
  const bool needs_target = mask.da || mask.cls_da || mask.loc_da;
  if (needs_target && target.x.rows() != cfg.batch_target) {
    throw InvalidArgument("train_step: target batch size mismatch");
  }

  Tape tape;
  model::TapedParams tp = lift(tape, state.model);

  model::PathFlags src_flags;
  src_flags.primary = true;
  src_flags.aux_detached = cfg.model.num_aux_classifiers > 0 ||
                           cfg.model.num_aux_localizers > 0;
  src_flags.aux_adapt = aux_measures;
  src_flags.discriminator = mask.da;
  src_flags.task_discriminators = task_discs;
  src_flags.grl_scale = cfg.grl_scale;

  model::ForwardBundle src =
      model::forward(tape, state.model, tp, source.x, src_flags);

  // Detection objective: primary heads plus the detached auxiliary banks,
  // all on labeled source data only.
  Tensor loss_det = losses::cross_entropy_graph(tape, src.primary_probs, source.labels);
  loss_det = tape.add(loss_det, losses::smooth_l1_loss_graph(tape, src.primary_box, source.boxes));
  for (const Tensor& probs : src.aux_cls_detached) {
    loss_det = tape.add(loss_det, losses::cross_entropy_graph(tape, probs, source.labels));
  }
  for (const Tensor& box : src.aux_loc_detached) {
    loss_det = tape.add(loss_det, losses::smooth_l1_loss_graph(tape, box, source.boxes));
  }

  MetricsRecord rec;
  rec.iteration = state.iteration + 1;

  Tensor total = loss_det;

  model::ForwardBundle tgt;
  if (needs_target) {
    model::PathFlags tgt_flags;
    tgt_flags.primary = false;
    tgt_flags.aux_detached = false;  // target labels are never read
    tgt_flags.aux_adapt = aux_measures;
    tgt_flags.discriminator = mask.da;
    tgt_flags.task_discriminators = task_discs;
    tgt_flags.grl_scale = cfg.grl_scale;
    tgt = model::forward(tape, state.model, tp, target.x, tgt_flags);
  }

  // Combined-batch mean BCE against domain labels (source = 1, target = 0).
  auto domain_bce = [&](const Tensor& src_prob, const Tensor& tgt_prob) {
    const double ns = static_cast<double>(source.x.rows());
    const double nt = static_cast<double>(target.x.rows());
    Tensor s = losses::bce_graph(tape, src_prob, std::vector<int>(source.x.rows(), 1));
    Tensor t = losses::bce_graph(tape, tgt_prob, std::vector<int>(target.x.rows(), 0));
    return tape.add(tape.scale(s, ns / (ns + nt)), tape.scale(t, nt / (ns + nt)));
  };

  if (mask.da) {
    Tensor da = domain_bce(src.disc_prob, tgt.disc_prob);
    rec.loss_da = da.item();
    total = tape.add(total, tape.scale(da, cfg.lambda1));
  }

  if (mask.cls_da) {
    Tensor cls_da;
    if (cfg.mode == Mode::DannTask) {
      cls_da = domain_bce(src.task_disc_cls_prob, tgt.task_disc_cls_prob);
    } else {
      Tensor s = losses::measure_graph(tape, cfg.measure_cls, src.aux_cls_adapt);
      Tensor t = losses::measure_graph(tape, cfg.measure_cls, tgt.aux_cls_adapt);
      rec.src_cls_incon = vec_mean(s.values);
      rec.tgt_cls_incon = vec_mean(t.values);
      cls_da = losses::task_da_loss_graph(tape, s, t);
    }
    rec.loss_cls_da = cls_da.item();
    total = tape.add(total, tape.scale(cls_da, cfg.lambda2));
  }

  if (mask.loc_da) {
    Tensor loc_da;
    if (cfg.mode == Mode::DannTask) {
      loc_da = domain_bce(src.task_disc_loc_prob, tgt.task_disc_loc_prob);
    } else {
      Tensor s = losses::measure_graph(tape, cfg.measure_loc, src.aux_loc_adapt);
      Tensor t = losses::measure_graph(tape, cfg.measure_loc, tgt.aux_loc_adapt);
      rec.src_loc_incon = vec_mean(s.values);
      rec.tgt_loc_incon = vec_mean(t.values);
      loc_da = losses::task_da_loss_graph(tape, s, t);
    }
    rec.loss_loc_da = loc_da.item();
    total = tape.add(total, tape.scale(loc_da, cfg.lambda3));
  }

  rec.loss_det = loss_det.item();

  ad::GradientMap grads = tape.backward(total);

  // SGD with momentum; the adversarial signs are already encoded by GRL
  // placement, so a single plain minimization step covers the maximin game.
  const double lr = cfg.learning_rate *
                    std::pow(cfg.lr_decay_factor,
                             static_cast<double>(state.iteration / cfg.lr_decay_interval));
  for (std::size_t i = 0; i < state.model.params.size(); ++i) {
    const std::vector<double>& g = grads.at(tp.leaves[i]);
    std::vector<double>& v = state.momentum[i];
    std::vector<double>& theta = state.model.params[i].value.values;
    for (std::size_t k = 0; k < g.size(); ++k) {
      v[k] = cfg.momentum * v[k] + g[k];
      theta[k] -= lr * v[k];
    }
  }
  ++state.iteration;
  return rec;
}

std::string metrics_csv_header() {
  return "iter,loss_det,loss_da,loss_cls_da,loss_loc_da,src_acc,tgt_acc,"
         "src_loc_mse,tgt_loc_mse,tgt_mean_iou";
}

std::string metrics_csv_row(const MetricsRecord& r) {
  std::string out = std::to_string(r.iteration);
  for (double v : {r.loss_det, r.loss_da, r.loss_cls_da, r.loss_loc_da,
                   r.src_acc, r.tgt_acc, r.src_loc_mse, r.tgt_loc_mse,
                   r.tgt_mean_iou}) {
    out += ',';
    out += format_double(v);
  }
  return out;
}

namespace {

void write_eval_json(const std::string& path, const RunResult& result,
                     const eval::EvalSummary& src_summary,
                     const eval::EvalSummary& tgt_summary) {
  json j;
  j["source_test"] = eval::summary_to_json(src_summary);
  j["target_test"] = eval::summary_to_json(tgt_summary);
  j["tgt_cls_inconsistency"] = {{"first", result.tgt_cls_incon_first},
                                {"last", result.tgt_cls_incon_last}};
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << j.dump(2) << '\n';
}

}  // namespace

RunResult run_experiment(const ExperimentConfig& config,
                         const synth::Dataset& source_train,
                         const synth::Dataset& target_train,
                         const synth::Dataset& source_test,
                         const synth::Dataset& target_test,
                         const std::string& out_dir) {
  validate(config);
  if (source_train.dim != config.model.input_dim ||
      target_train.dim != config.model.input_dim) {
    throw InvalidArgument("run_experiment: dataset dim does not match model input dim");
  }

  TrainState state = init_train_state(config);
  EpochSampler src_sampler(source_train.samples.size(), config.batch_source,
                           mix_seed(config.seed, 101));
  EpochSampler tgt_sampler(target_train.samples.size(), config.batch_target,
                           mix_seed(config.seed, 202));

  RunResult result{state.model};
  std::ofstream metrics;
  const bool writing = !out_dir.empty();
  if (writing) {
    std::filesystem::create_directories(out_dir);
    metrics.open(out_dir + "/metrics.csv", std::ios::binary);
    if (!metrics) throw Error("cannot open '" + out_dir + "/metrics.csv' for writing");
    metrics << metrics_csv_header() << '\n';
  }

  eval::EvalSummary src_summary, tgt_summary;
  auto emit_row = [&](MetricsRecord rec) {
    src_summary = eval::evaluate(state.model, source_test);
    tgt_summary = eval::evaluate(state.model, target_test);
    rec.src_acc = src_summary.accuracy;
    rec.tgt_acc = tgt_summary.accuracy;
    rec.src_loc_mse = src_summary.loc_mse;
    rec.tgt_loc_mse = tgt_summary.loc_mse;
    rec.tgt_mean_iou = tgt_summary.mean_iou;
    result.history.push_back(rec);
    if (writing) {
      metrics << metrics_csv_row(rec) << '\n';
      metrics.flush();
    }
  };

  emit_row(MetricsRecord{});  // iteration 0: the freshly initialized model

  MetricsRecord last_step;
  for (std::size_t it = 1; it <= config.iterations; ++it) {
    Batch src = make_batch(source_train, src_sampler.next(), true,
                           config.model.num_classes);
    Batch tgt = make_batch(target_train, tgt_sampler.next(), false, 0);
    try {
      last_step = train_step(state, src, tgt);
    } catch (const Error& e) {
      if (writing) metrics.flush();
      throw Error("iteration " + std::to_string(it) + ": " + e.what() +
                  " (last components: det=" + format_double(last_step.loss_det) +
                  " da=" + format_double(last_step.loss_da) +
                  " cls_da=" + format_double(last_step.loss_cls_da) +
                  " loc_da=" + format_double(last_step.loss_loc_da) + ")");
    }
    if (it == 1) result.tgt_cls_incon_first = last_step.tgt_cls_incon;
    result.tgt_cls_incon_last = last_step.tgt_cls_incon;
    if (it % config.eval_interval == 0 || it == config.iterations) {
      emit_row(last_step);
    }
  }

  result.model = state.model;
  result.src_acc = src_summary.accuracy;
  result.tgt_acc = tgt_summary.accuracy;
  result.src_loc_mse = src_summary.loc_mse;
  result.tgt_loc_mse = tgt_summary.loc_mse;
  result.src_mean_iou = src_summary.mean_iou;
  result.tgt_mean_iou = tgt_summary.mean_iou;

  if (writing) {
    model::save_model(state.model, out_dir + "/model.json");
    write_eval_json(out_dir + "/eval.json", result, src_summary, tgt_summary);
  }
  return result;
}

RunResult run_experiment(const ExperimentConfig& config,
                         const std::string& out_dir) {
  synth::Dataset source_train = synth::read_dataset(config.source_train);
  synth::Dataset target_train = synth::read_dataset(config.target_train);
  synth::Dataset source_test = synth::read_dataset(config.source_test);
  synth::Dataset target_test = synth::read_dataset(config.target_test);
  return run_experiment(config, source_train, target_train, source_test,
                        target_test, out_dir);
}

}  // namespace tia::train
