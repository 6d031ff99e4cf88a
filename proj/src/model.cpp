#include "tia/model.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "tia/common.hpp"

namespace tia::model {

using json = nlohmann::json;

namespace {
constexpr int kFormatVersion = 1;
}

void validate(const ModelConfig& config) {
  if (config.input_dim < 1) throw InvalidArgument("model config: input_dim < 1");
  if (config.num_classes < 2) throw InvalidArgument("model config: C < 2");
  if (config.trunk_widths.empty()) {
    throw InvalidArgument("model config: trunk needs at least one layer");
  }
  if (config.trunk_widths.back() < 8) {
    throw InvalidArgument("model config: trunk output dim must be >= 8");
  }
  if (config.disc_widths.empty()) {
    throw InvalidArgument("model config: discriminator needs a hidden layer");
  }
}

const char* group_name(ParamGroup g) {
  switch (g) {
    case ParamGroup::Trunk: return "trunk";
    case ParamGroup::PrimaryCls: return "cls_primary";
    case ParamGroup::PrimaryLoc: return "loc_primary";
    case ParamGroup::AuxCls: return "aux_cls";
    case ParamGroup::AuxLoc: return "aux_loc";
    case ParamGroup::Disc: return "disc";
    case ParamGroup::TaskDiscCls: return "task_disc_cls";
    case ParamGroup::TaskDiscLoc: return "task_disc_loc";
  }
  return "?";
}

namespace {

ParamGroup group_from_name(const std::string& name) {
  for (ParamGroup g : {ParamGroup::Trunk, ParamGroup::PrimaryCls,
                       ParamGroup::PrimaryLoc, ParamGroup::AuxCls,
                       ParamGroup::AuxLoc, ParamGroup::Disc,
                       ParamGroup::TaskDiscCls, ParamGroup::TaskDiscLoc}) {
    if (name == group_name(g)) return g;
  }
  throw InvalidArgument("model file: unknown parameter group '" + name + "'");
}

Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  std::vector<double> v(ad::numel(shape));
  for (double& x : v) x = rng.uniform(-bound, bound);
  return Tensor(std::move(shape), std::move(v));
}

// One linear layer (W stored input-major for x * W) appended to `params`.
void add_linear(std::vector<Param>& params, ParamGroup group, int head,
                const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  params.push_back({group, head, prefix + ".W", uniform_tensor({in, out}, bound, rng)});
  params.push_back({group, head, prefix + ".b", uniform_tensor({out}, bound, rng)});
}

std::uint64_t stream_seed(std::uint64_t seed, ParamGroup group, int head) {
  return mix_seed(seed, static_cast<std::uint64_t>(group) + 1,
                  static_cast<std::uint64_t>(head + 1));
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  validate(config);
  Model m;
  m.config = config;

  {
    Rng rng(stream_seed(seed, ParamGroup::Trunk, -1));
    std::size_t in = config.input_dim;
    for (std::size_t l = 0; l < config.trunk_widths.size(); ++l) {
      add_linear(m.params, ParamGroup::Trunk, -1, "layer" + std::to_string(l),
                 in, config.trunk_widths[l], rng);
      in = config.trunk_widths[l];
    }
  }
  const std::size_t feat = config.trunk_widths.back();
  {
    Rng rng(stream_seed(seed, ParamGroup::PrimaryCls, -1));
    add_linear(m.params, ParamGroup::PrimaryCls, -1, "head", feat,
               config.num_classes, rng);
  }
  {
    Rng rng(stream_seed(seed, ParamGroup::PrimaryLoc, -1));
    add_linear(m.params, ParamGroup::PrimaryLoc, -1, "head", feat, 4, rng);
  }
  for (std::size_t i = 0; i < config.num_aux_classifiers; ++i) {
    Rng rng(stream_seed(seed, ParamGroup::AuxCls, static_cast<int>(i)));
    add_linear(m.params, ParamGroup::AuxCls, static_cast<int>(i),
               "head" + std::to_string(i), feat, config.num_classes, rng);
  }
  for (std::size_t i = 0; i < config.num_aux_localizers; ++i) {
    Rng rng(stream_seed(seed, ParamGroup::AuxLoc, static_cast<int>(i)));
    add_linear(m.params, ParamGroup::AuxLoc, static_cast<int>(i),
               "head" + std::to_string(i), feat, 4, rng);
  }
  auto add_disc = [&](ParamGroup group) {
    Rng rng(stream_seed(seed, group, -1));
    std::size_t in = feat;
    for (std::size_t l = 0; l < config.disc_widths.size(); ++l) {
      add_linear(m.params, group, -1, "layer" + std::to_string(l), in,
                 config.disc_widths[l], rng);
      in = config.disc_widths[l];
    }
    add_linear(m.params, group, -1, "out", in, 1, rng);
  };
  add_disc(ParamGroup::Disc);
  if (config.with_task_discriminators) {
    add_disc(ParamGroup::TaskDiscCls);
    add_disc(ParamGroup::TaskDiscLoc);
  }
  return m;
}

TapedParams lift(Tape& tape, const Model& model) {
  TapedParams tp;
  tp.leaves.reserve(model.params.size());
  for (const Param& p : model.params) tp.leaves.push_back(tape.leaf(p.value));
  return tp;
}

namespace {

// Index of the param named `prefix.W` within a group/head (W, then b).
struct ParamIndex {
  const Model& model;
  const TapedParams& tp;

  std::pair<const Tensor*, const Tensor*> linear(ParamGroup group, int head,
                                                 const std::string& prefix) const {
    const Tensor* w = nullptr;
    const Tensor* b = nullptr;
    for (std::size_t i = 0; i < model.params.size(); ++i) {
      const Param& p = model.params[i];
      if (p.group != group || p.head != head) continue;
      if (p.name == prefix + ".W") w = &tp.leaves[i];
      if (p.name == prefix + ".b") b = &tp.leaves[i];
    }
    if (!w || !b) {
      throw Error(std::string("forward: missing parameters for ") +
                  group_name(group) + "/" + prefix);
    }
    return {w, b};
  }
};

Tensor linear(Tape& tape, const ParamIndex& idx, ParamGroup group, int head,
              const std::string& prefix, const Tensor& x) {
  auto [w, b] = idx.linear(group, head, prefix);
  return tape.add(tape.matmul(x, *w), *b);
}

Tensor disc_forward(Tape& tape, const ParamIndex& idx, ParamGroup group,
                    const ModelConfig& config, const Tensor& x) {
  Tensor h = x;
  for (std::size_t l = 0; l < config.disc_widths.size(); ++l) {
    h = tape.relu(linear(tape, idx, group, -1, "layer" + std::to_string(l), h));
  }
  return tape.sigmoid(linear(tape, idx, group, -1, "out", h));
}

}  // namespace

ForwardBundle forward(Tape& tape, const Model& model, const TapedParams& tp,
                      const Tensor& x_batch, const PathFlags& flags) {
  if (x_batch.rank() != 2 || x_batch.cols() != model.config.input_dim) {
    throw InvalidArgument("forward: batch shape " + ad::shape_str(x_batch.shape) +
                          " does not match input dim " +
                          std::to_string(model.config.input_dim));
  }
  if (x_batch.rows() == 0) throw InvalidArgument("forward: empty batch");

  const ParamIndex idx{model, tp};
  ForwardBundle out;

  Tensor h = x_batch.node >= 0 ? x_batch : tape.leaf(x_batch);
  for (std::size_t l = 0; l < model.config.trunk_widths.size(); ++l) {
    h = tape.relu(
        linear(tape, idx, ParamGroup::Trunk, -1, "layer" + std::to_string(l), h));
  }
  out.features = h;

  if (flags.primary) {
    out.primary_probs = tape.softmax(
        linear(tape, idx, ParamGroup::PrimaryCls, -1, "head", h), 1);
    out.primary_box = linear(tape, idx, ParamGroup::PrimaryLoc, -1, "head", h);
  }

  if (flags.aux_detached) {
    Tensor fd = tape.detach(h);
    for (std::size_t i = 0; i < model.config.num_aux_classifiers; ++i) {
      out.aux_cls_detached.push_back(tape.softmax(
          linear(tape, idx, ParamGroup::AuxCls, static_cast<int>(i),
                 "head" + std::to_string(i), fd),
          1));
    }
    for (std::size_t i = 0; i < model.config.num_aux_localizers; ++i) {
      out.aux_loc_detached.push_back(
          linear(tape, idx, ParamGroup::AuxLoc, static_cast<int>(i),
                 "head" + std::to_string(i), fd));
    }
  }

  const bool wants_adapt =
      flags.aux_adapt || flags.discriminator || flags.task_discriminators;
  if (wants_adapt) {
    Tensor fg = flags.adapt_identity ? h : tape.grl(h, flags.grl_scale);
    if (flags.aux_adapt) {
      for (std::size_t i = 0; i < model.config.num_aux_classifiers; ++i) {
        out.aux_cls_adapt.push_back(tape.softmax(
            linear(tape, idx, ParamGroup::AuxCls, static_cast<int>(i),
                   "head" + std::to_string(i), fg),
            1));
      }
      for (std::size_t i = 0; i < model.config.num_aux_localizers; ++i) {
        out.aux_loc_adapt.push_back(
            linear(tape, idx, ParamGroup::AuxLoc, static_cast<int>(i),
                   "head" + std::to_string(i), fg));
      }
    }
    if (flags.discriminator) {
      out.disc_prob =
          disc_forward(tape, idx, ParamGroup::Disc, model.config, fg);
    }
    if (flags.task_discriminators) {
      if (!model.config.with_task_discriminators) {
        throw InvalidArgument(
            "forward: model was built without task discriminators");
      }
      out.task_disc_cls_prob =
          disc_forward(tape, idx, ParamGroup::TaskDiscCls, model.config, fg);
      out.task_disc_loc_prob =
          disc_forward(tape, idx, ParamGroup::TaskDiscLoc, model.config, fg);
    }
  }
  return out;
}

ForwardBundle forward(Tape& tape, const Model& model, const Tensor& x_batch,
                      const PathFlags& flags) {
  TapedParams tp = lift(tape, model);
  return forward(tape, model, tp, x_batch, flags);
}

std::string model_to_json(const Model& model) {
  json cfg;
  cfg["input_dim"] = model.config.input_dim;
  cfg["num_classes"] = model.config.num_classes;
  cfg["trunk_widths"] = model.config.trunk_widths;
  cfg["num_aux_classifiers"] = model.config.num_aux_classifiers;
  cfg["num_aux_localizers"] = model.config.num_aux_localizers;
  cfg["disc_widths"] = model.config.disc_widths;
  cfg["with_task_discriminators"] = model.config.with_task_discriminators;

  json params = json::object();
  for (const Param& p : model.params) {
    json entry;
    entry["head"] = p.head;
    entry["name"] = p.name;
    entry["shape"] = p.value.shape;
    entry["values"] = p.value.values;
    params[group_name(p.group)].push_back(std::move(entry));
  }
  json j;
  j["format_version"] = kFormatVersion;
  j["config"] = std::move(cfg);
  j["parameters"] = std::move(params);
  return j.dump();
}

Model model_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model file: invalid JSON: ") + e.what());
  }
  try {
    if (j.at("format_version").get<int>() != kFormatVersion) {
      throw InvalidArgument(
          "model file: unsupported format_version " +
          std::to_string(j.at("format_version").get<int>()) + ", expected " +
          std::to_string(kFormatVersion));
    }
    const json& cfg = j.at("config");
    ModelConfig config;
    config.input_dim = cfg.at("input_dim").get<std::size_t>();
    config.num_classes = cfg.at("num_classes").get<std::size_t>();
    config.trunk_widths = cfg.at("trunk_widths").get<std::vector<std::size_t>>();
    config.num_aux_classifiers = cfg.at("num_aux_classifiers").get<std::size_t>();
    config.num_aux_localizers = cfg.at("num_aux_localizers").get<std::size_t>();
    config.disc_widths = cfg.at("disc_widths").get<std::vector<std::size_t>>();
    config.with_task_discriminators =
        cfg.at("with_task_discriminators").get<bool>();
    validate(config);

    // Rebuild against a reference layout so shapes and names are verified.
    Model reference = init_model(config, 0);
    Model m;
    m.config = config;
    m.params = reference.params;
    std::size_t loaded = 0;
    for (auto& [gname, entries] : j.at("parameters").items()) {
      const ParamGroup group = group_from_name(gname);
      for (const json& entry : entries) {
        const int head = entry.at("head").get<int>();
        const std::string name = entry.at("name").get<std::string>();
        const auto shape = entry.at("shape").get<ad::Shape>();
        auto values = entry.at("values").get<std::vector<double>>();
        bool placed = false;
        for (Param& p : m.params) {
          if (p.group == group && p.head == head && p.name == name) {
            if (p.value.shape != shape) {
              throw InvalidArgument("model file: parameter " + gname + "/" +
                                    name + " has shape " + ad::shape_str(shape) +
                                    ", expected " +
                                    ad::shape_str(p.value.shape));
            }
            p.value = Tensor(shape, std::move(values));
            placed = true;
            ++loaded;
            break;
          }
        }
        if (!placed) {
          throw InvalidArgument("model file: unexpected parameter " + gname +
                                "/" + name);
        }
      }
    }
    if (loaded != m.params.size()) {
      throw InvalidArgument("model file: incomplete parameter set (" +
                            std::to_string(loaded) + " of " +
                            std::to_string(m.params.size()) + ")");
    }
    return m;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("model file: missing/bad field: ") +
                          e.what());
  }
}

void save_model(const Model& model, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << model_to_json(model) << '\n';
  if (!out) throw Error("write failed for '" + path + "'");
}

Model load_model(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidArgument("cannot open model '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return model_from_json(ss.str());
}

}  // namespace tia::model
