// Python bindings for the inconsistency-alignment laboratory: the loss
// surface, dataset generation, experiment runner, ablation harness and the
// gradient verification suite.
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "tia/ablation.hpp"
#include "tia/eval.hpp"
#include "tia/gradcheck_suite.hpp"
#include "tia/losses.hpp"
#include "tia/synthgen.hpp"
#include "tia/toy2d.hpp"
#include "tia/trainer.hpp"

namespace py = pybind11;

namespace {

tia::ad::Tensor tensor_from_array(const py::array_t<double>& arr) {
  py::buffer_info info = arr.request();
  tia::ad::Shape shape;
  for (py::ssize_t d : info.shape) shape.push_back(static_cast<std::size_t>(d));
  auto contiguous = py::array_t<double, py::array::c_style | py::array::forcecast>(arr);
  const double* data = contiguous.data();
  return tia::ad::Tensor(shape,
                         std::vector<double>(data, data + contiguous.size()));
}

std::vector<tia::ad::Tensor> tensors_from_list(const std::vector<py::array_t<double>>& arrays) {
  std::vector<tia::ad::Tensor> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(tensor_from_array(a));
  return out;
}

py::dict summary_dict(const tia::eval::EvalSummary& s) {
  py::dict d;
  d["accuracy"] = s.accuracy;
  d["loc_mse"] = s.loc_mse;
  d["mean_iou"] = s.mean_iou;
  d["frac_correct"] = s.frac_correct;
  d["frac_mislocalization"] = s.frac_misloc;
  d["frac_background"] = s.frac_background;
  d["counted"] = s.counted;
  return d;
}

}  // namespace

PYBIND11_MODULE(tialab, m) {
  m.doc() =
      "Task-specific inconsistency alignment laboratory: auxiliary-predictor "
      "disagreement losses, gradient-reversal adversarial training and the "
      "synthetic covariate-shift benchmark.";

  // Base first: translators run newest-first, so the subclass must be
  // registered after its base to win the dispatch.
  py::register_exception<tia::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<tia::InvalidArgument>(m, "InvalidArgument",
                                               PyExc_ValueError);

  m.def(
      "cls_inconsistency",
      [](const py::array_t<double>& probs) {
        return tia::losses::cls_inconsistency(tensor_from_array(probs));
      },
      py::arg("probs"),
      "Confidence-weighted entropy inconsistency of an N x C classifier "
      "probability matrix (rows = classifiers). Range [-ln N, 0].");

  m.def(
      "loc_inconsistency",
      [](const py::array_t<double>& preds) {
        return tia::losses::loc_inconsistency(tensor_from_array(preds));
      },
      py::arg("preds"),
      "Standard-deviation inconsistency of an M x 4 localizer output matrix.");

  m.def(
      "alt_measure",
      [](const std::string& kind, const std::vector<py::array_t<double>>& outputs) {
        return tia::losses::alt_measure(tia::losses::measure_from_name(kind),
                                        tensors_from_list(outputs));
      },
      py::arg("kind"), py::arg("outputs"),
      "Dispersion measure by name: l1, kl, swd, mad, variance, "
      "se_weighted, sd.");

  m.def("task_da_loss", &tia::losses::task_da_loss, py::arg("source_values"),
        py::arg("target_values"),
        "-mean(target) + mean(source) over per-sample inconsistencies.");

  m.def(
      "total_loss",
      [](double det, double da, double cls_da, double loc_da, double l1,
         double l2, double l3) {
        tia::losses::LossComponents c{det, da, cls_da, loc_da};
        return tia::losses::total_loss(c, l1, l2, l3);
      },
      py::arg("detection"), py::arg("da"), py::arg("cls_da"), py::arg("loc_da"),
      py::arg("lambda1") = 1.0, py::arg("lambda2") = 1.0,
      py::arg("lambda3") = 0.01);

  m.def(
      "iou",
      [](const std::array<double, 4>& a, const std::array<double, 4>& b) {
        return tia::eval::iou(a, b);
      },
      py::arg("box_a"), py::arg("box_b"),
      "IoU of two (cx, cy, w, h) boxes.");

  m.def(
      "classify_detection",
      [](double v) {
        return std::string(
            tia::eval::detection_kind_name(tia::eval::classify_detection(v)));
      },
      py::arg("iou_value"),
      "Correct (IoU >= 0.5), MisLocalization (>= 0.3) or Background.");

  m.def("default_shift_spec", [] {
    return tia::synth::shift_spec_to_json(tia::synth::default_shift_spec());
  });

  m.def(
      "generate_dataset",
      [](const std::string& spec_json, std::uint64_t seed,
         const std::string& out_dir) {
        tia::synth::ShiftSpec spec = tia::synth::shift_spec_from_json(spec_json);
        tia::synth::GeneratedData data = tia::synth::generate_dataset(spec, seed);
        std::filesystem::create_directories(out_dir);
        tia::synth::write_dataset(data.source_train, out_dir + "/source_train.csv");
        tia::synth::write_dataset(data.source_test, out_dir + "/source_test.csv");
        tia::synth::write_dataset(data.target_train, out_dir + "/target_train.csv");
        tia::synth::write_dataset(data.target_test, out_dir + "/target_test.csv");
      },
      py::arg("spec_json"), py::arg("seed"), py::arg("out_dir"),
      "Writes the four dataset splits as CSV.");

  m.def(
      "run_experiment",
      [](const std::string& config_json, const std::string& out_dir) {
        tia::train::ExperimentConfig config =
            tia::train::config_from_json(config_json);
        tia::train::RunResult r = tia::train::run_experiment(config, out_dir);
        py::dict d;
        d["src_acc"] = r.src_acc;
        d["tgt_acc"] = r.tgt_acc;
        d["src_loc_mse"] = r.src_loc_mse;
        d["tgt_loc_mse"] = r.tgt_loc_mse;
        d["src_mean_iou"] = r.src_mean_iou;
        d["tgt_mean_iou"] = r.tgt_mean_iou;
        d["tgt_cls_incon_first"] = r.tgt_cls_incon_first;
        d["tgt_cls_incon_last"] = r.tgt_cls_incon_last;
        py::list history;
        for (const auto& rec : r.history)
          history.append(tia::train::metrics_csv_row(rec));
        d["history"] = history;
        return d;
      },
      py::arg("config_json"), py::arg("out_dir") = std::string(),
      "Runs one experiment; returns the final evaluation summary.");

  m.def(
      "evaluate",
      [](const std::string& model_path, const std::string& data_path) {
        tia::model::Model model = tia::model::load_model(model_path);
        tia::synth::Dataset ds = tia::synth::read_dataset(data_path);
        return summary_dict(tia::eval::evaluate(model, ds));
      },
      py::arg("model_path"), py::arg("data_path"));

  m.def(
      "run_ablation",
      [](const std::string& spec_json, const std::string& out_csv,
         unsigned threads) {
        tia::ablate::AblationSpec spec = tia::ablate::spec_from_json(spec_json);
        tia::ablate::Table table = tia::ablate::run_ablation(spec, threads);
        tia::ablate::write_table(table, out_csv);
        return table.rows.size();
      },
      py::arg("spec_json"), py::arg("out_csv"), py::arg("threads") = 0,
      "Runs an ablation table; returns the number of rows written.");

  m.def(
      "run_gradient_suite",
      [](std::uint64_t seed) {
        py::list out;
        for (const auto& check : tia::suite::run_gradient_suite(seed)) {
          py::dict d;
          d["name"] = check.name;
          d["pass"] = check.pass;
          d["max_err"] = check.max_err;
          d["instances"] = check.instances;
          out.append(d);
        }
        return out;
      },
      py::arg("seed") = 0);

  m.def("write_toy2d_csv", &tia::toy::write_toy2d_csv, py::arg("path"),
        py::arg("seed") = 7);
}
