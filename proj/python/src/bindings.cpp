// Python bindings. Images cross the boundary as 2-D numpy arrays (float32 in
// [0,1] for images, uint8 {0,1} for masks); configs and reports as JSON text,
// which the hgit package turns into dicts.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "hgit/curation.hpp"
#include "hgit/errors.hpp"
#include "hgit/harness.hpp"
#include "hgit/io.hpp"
#include "hgit/metrics.hpp"
#include "hgit/segmodel.hpp"
#include "hgit/synthgen.hpp"
#include "hgit/translate.hpp"

namespace py = pybind11;
using nlohmann::json;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;
using ByteArray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

hgit::GrayImage to_image(const FloatArray& a) {
  if (a.ndim() != 2) throw hgit::ArgumentError("image must be a 2-D array");
  const auto h = static_cast<int>(a.shape(0)), w = static_cast<int>(a.shape(1));
  hgit::GrayImage img(h, w, std::vector<float>(a.data(), a.data() + a.size()));
  img.validate();
  return img;
}

FloatArray from_image(const hgit::GrayImage& img) {
  FloatArray a({img.height(), img.width()});
  std::copy(img.pixels().begin(), img.pixels().end(), a.mutable_data());
  return a;
}

hgit::BinaryMask to_mask(const ByteArray& a) {
  if (a.ndim() != 2) throw hgit::ArgumentError("mask must be a 2-D array");
  hgit::BinaryMask m(static_cast<int>(a.shape(0)), static_cast<int>(a.shape(1)),
                     std::vector<std::uint8_t>(a.data(), a.data() + a.size()));
  m.validate();
  return m;
}

ByteArray from_mask(const hgit::BinaryMask& m) {
  ByteArray a({m.height(), m.width()});
  std::copy(m.labels().begin(), m.labels().end(), a.mutable_data());
  return a;
}

py::array_t<double> bins_array(const hgit::Histogram& h) {
  py::array_t<double> a(hgit::kHistogramBins);
  std::copy(h.bins().begin(), h.bins().end(), a.mutable_data());
  return a;
}

hgit::Histogram to_histogram(const py::array_t<double, py::array::c_style | py::array::forcecast>& a,
                             std::int64_t pixel_count) {
  if (a.ndim() != 1 || a.shape(0) != hgit::kHistogramBins) throw hgit::ArgumentError("histogram needs 256 bins");
  hgit::Histogram::Bins b{};
  std::copy(a.data(), a.data() + hgit::kHistogramBins, b.begin());
  return hgit::Histogram(b, pixel_count);
}

py::dict counts_dict(const hgit::ConfusionCounts& c) {
  py::dict d;
  d["tp"] = c.tp;
  d["fp"] = c.fp;
  d["tn"] = c.tn;
  d["fn"] = c.fn;
  return d;
}

std::vector<hgit::BinaryMask> to_masks(const std::vector<ByteArray>& arrays) {
  std::vector<hgit::BinaryMask> out;
  out.reserve(arrays.size());
  for (const auto& a : arrays) out.push_back(to_mask(a));
  return out;
}

}  // namespace

PYBIND11_MODULE(_hgit, m) {
  m.doc() = "Histogram-gated image translation core";

  auto base = py::register_exception<hgit::Error>(m, "Error", PyExc_RuntimeError);
  py::register_exception<hgit::IoError>(m, "IoError", base.ptr());
  py::register_exception<hgit::FormatError>(m, "FormatError", base.ptr());
  py::register_exception<hgit::ArgumentError>(m, "ArgumentError", base.ptr());
  py::register_exception<hgit::GenerationError>(m, "GenerationError", base.ptr());
  py::register_exception<hgit::TrainingError>(m, "TrainingError", base.ptr());
  py::register_exception<hgit::ConfigError>(m, "ConfigError", base.ptr());

  // imagecore
  py::class_<hgit::DatasetSplit>(m, "DatasetSplit")
      .def(py::init([](const std::string& role, std::vector<std::string> ids, const std::vector<FloatArray>& images,
                       std::optional<std::vector<ByteArray>> masks) {
             hgit::DatasetSplit s;
             s.role = hgit::split_role_from_string(role);
             s.ids = std::move(ids);
             for (const auto& a : images) s.images.push_back(to_image(a));
             if (masks) s.masks = to_masks(*masks);
             s.validate();
             return s;
           }),
           py::arg("role"), py::arg("ids"), py::arg("images"), py::arg("masks") = py::none())
      .def_property_readonly("role", [](const hgit::DatasetSplit& s) { return std::string(hgit::to_string(s.role)); })
      .def_readonly("ids", &hgit::DatasetSplit::ids)
      .def_property_readonly("images",
                             [](const hgit::DatasetSplit& s) {
                               std::vector<FloatArray> out;
                               for (const auto& i : s.images) out.push_back(from_image(i));
                               return out;
                             })
      .def_property_readonly("masks",
                             [](const hgit::DatasetSplit& s) -> std::optional<std::vector<ByteArray>> {
                               if (!s.masks) return std::nullopt;
                               std::vector<ByteArray> out;
                               for (const auto& k : *s.masks) out.push_back(from_mask(k));
                               return out;
                             })
      .def("__len__", &hgit::DatasetSplit::size);

  m.def("read_manifest", &hgit::read_manifest, py::arg("path"));
  m.def(
      "write_split",
      [](const hgit::DatasetSplit& s, const std::filesystem::path& dir) { return hgit::write_split(s, dir, "manifest.json"); },
      py::arg("split"), py::arg("dir"));
  m.def(
      "compute_histogram", [](const FloatArray& img) { return bins_array(hgit::compute_histogram(to_image(img))); },
      py::arg("image"));

  // synthgen
  m.def("style_presets", &hgit::style_preset_names);
  m.def(
      "style_preset", [](const std::string& name) { return hgit::style_preset(name).to_json().dump(); },
      py::arg("name"));
  m.def(
      "generate_domain_pair",
      [](const std::string& source, const std::string& target, int n_train, int n_test, int size, std::uint64_t seed) {
        hgit::LayoutSpec spec;
        spec.image_size = size;
        spec.seed = seed;
        const auto p =
            hgit::generate_domain_pair(hgit::style_preset(source), hgit::style_preset(target), n_train, n_test, spec);
        py::dict d;
        d["source_train"] = p.source_train;
        d["source_test"] = p.source_test;
        d["target_train"] = p.target_train;
        d["target_test"] = p.target_test;
        d["target_train_labeled"] = p.target_train_labeled();
        return d;
      },
      py::arg("source") = "source", py::arg("target") = "shifted-dark-lowcontrast", py::arg("n_train") = 200,
      py::arg("n_test") = 50, py::arg("size") = 64, py::arg("seed") = 0);

  // translate
  m.def(
      "hist_match",
      [](const FloatArray& img, const py::array_t<double, py::array::c_style | py::array::forcecast>& target_bins) {
        return from_image(hgit::hist_match(to_image(img), to_histogram(target_bins, 1)));
      },
      py::arg("image"), py::arg("target_bins"));
  m.def(
      "fda_translate",
      [](const FloatArray& src, const FloatArray& tgt, double beta) {
        return from_image(hgit::fda_translate(to_image(src), to_image(tgt), beta));
      },
      py::arg("source"), py::arg("target"), py::arg("beta") = 0.05);

  py::class_<hgit::TranslatorModel, std::shared_ptr<hgit::TranslatorModel>>(m, "TranslatorModel")
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<hgit::TranslatorModel>(hgit::TranslatorModel::load(p)); })
      .def("save", &hgit::TranslatorModel::save)
      .def("translate", [](const hgit::TranslatorModel& t, const hgit::DatasetSplit& s) { return hgit::apply_translator(s, t); })
      .def_property_readonly("training_log", [](const hgit::TranslatorModel& t) {
        std::vector<py::dict> out;
        for (const auto& e : t.training_log()) {
          py::dict d;
          d["epoch"] = e.epoch;
          d["generator_loss"] = e.generator_loss;
          d["discriminator_loss"] = e.discriminator_loss;
          d["cycle_loss"] = e.cycle_loss;
          out.push_back(d);
        }
        return out;
      });
  m.def(
      "train_translator",
      [](const hgit::DatasetSplit& source, const hgit::DatasetSplit& target, const std::string& config) {
        json j = json::parse(config);
        j["backend"] = "cyclegan";
        const auto cfg = hgit::TranslationConfig::from_json(j);
        py::gil_scoped_release release;
        return std::make_shared<hgit::TranslatorModel>(hgit::train_translator(source, target, cfg));
      },
      py::arg("source"), py::arg("target"), py::arg("config_json") = "{}");
  m.def(
      "translate",
      [](const std::string& config, const hgit::DatasetSplit& source, const hgit::DatasetSplit& target) {
        const auto cfg = hgit::TranslationConfig::from_json(json::parse(config));
        py::gil_scoped_release release;
        return hgit::make_translator(cfg, source, target)->translate(source);
      },
      py::arg("config_json"), py::arg("source"), py::arg("target"));

  // curation
  m.def("ks_statistic", [](const py::array_t<double>& a, const py::array_t<double>& b) {
    return hgit::ks_statistic(to_histogram(a, 1), to_histogram(b, 1));
  });
  m.def("ks_p_value", &hgit::ks_p_value, py::arg("d"), py::arg("n1"), py::arg("n2"));
  m.def(
      "gate",
      [](const hgit::DatasetSplit& transformed, const hgit::DatasetSplit& target, double keep_percent) {
        hgit::CurationConfig cfg;
        cfg.keep_percent = keep_percent;
        auto [selected, report] = hgit::gate(transformed, target, cfg);
        return py::make_tuple(selected, report.to_json().dump());
      },
      py::arg("transformed"), py::arg("target"), py::arg("keep_percent") = 70.0);

  // segmodel
  py::class_<hgit::SegmenterModel, std::shared_ptr<hgit::SegmenterModel>>(m, "SegmenterModel")
      .def_static("load", [](const std::filesystem::path& p) { return std::make_shared<hgit::SegmenterModel>(hgit::SegmenterModel::load(p)); })
      .def("save", &hgit::SegmenterModel::save)
      .def("parameter_count", &hgit::SegmenterModel::parameter_count)
      .def("probabilities", [](const hgit::SegmenterModel& s, const FloatArray& img) {
        const auto g = to_image(img);
        const auto p = s.probabilities(g);
        FloatArray a({g.height(), g.width()});
        std::copy(p.begin(), p.end(), a.mutable_data());
        return a;
      });
  m.def(
      "train_segmenter",
      [](const hgit::DatasetSplit& data, const std::string& config) {
        const auto cfg = hgit::SegTrainConfig::from_json(json::parse(config));
        py::gil_scoped_release release;
        return std::make_shared<hgit::SegmenterModel>(hgit::train_segmenter(data, cfg));
      },
      py::arg("data"), py::arg("config_json") = "{}");
  m.def(
      "predict",
      [](const hgit::DatasetSplit& data, const hgit::SegmenterModel& model, double threshold) {
        std::vector<ByteArray> out;
        for (const auto& k : hgit::predict(data, model, threshold)) out.push_back(from_mask(k));
        return out;
      },
      py::arg("data"), py::arg("model"), py::arg("threshold") = 0.5);
  m.def(
      "bce_loss",
      [](const FloatArray& probs, const ByteArray& mask) {
        if (probs.ndim() != 2 || probs.shape(0) != mask.shape(0) || probs.shape(1) != mask.shape(1)) {
          throw hgit::ArgumentError("bce_loss: probs and mask must be 2-D arrays of one shape");
        }
        const hgit::BinaryMask k = to_mask(mask);
        return hgit::bce_loss(std::span<const float>(probs.data(), static_cast<std::size_t>(probs.size())),
                              std::span<const hgit::BinaryMask>(&k, 1));
      },
      py::arg("probs"), py::arg("mask"));

  // metrics
  m.def(
      "evaluate",
      [](const std::vector<ByteArray>& preds, const std::vector<ByteArray>& truths) {
        const auto p = to_masks(preds), t = to_masks(truths);
        const auto c = hgit::confusion(p, t);
        py::dict d;
        d["counts"] = counts_dict(c);
        d["sa"] = hgit::segmentation_accuracy(c);
        const auto i = hgit::iou(c);
        d["iou"] = i.value;
        d["iou_both_empty"] = i.both_empty;
        return d;
      },
      py::arg("preds"), py::arg("truths"));

  // harness
  m.def(
      "run_experiment",
      [](const std::string& config, bool resume, int jobs, std::function<void(const std::string&)> log) {
        const auto cfg = hgit::ExperimentConfig::from_json(json::parse(config));
        hgit::MatrixOptions opts;
        opts.resume = resume;
        opts.jobs = jobs;
        if (log) {
          opts.log = [log](const std::string& s) {
            py::gil_scoped_acquire acquire;
            log(s);
          };
        }
        py::gil_scoped_release release;
        return hgit::run_matrix(cfg, opts).to_json().dump();
      },
      py::arg("config_json"), py::arg("resume") = false, py::arg("jobs") = 1, py::arg("log") = nullptr);
  m.def("desk_preset", [] { return hgit::ExperimentConfig::desk_preset().to_json().dump(); });
}
