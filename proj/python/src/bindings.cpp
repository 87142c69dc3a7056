// Python bindings. Matrices cross the boundary as float64 numpy arrays
// (rows are time steps, columns are variates).

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ltsm/ltsm.hpp"

namespace py = pybind11;
using namespace ltsm;

namespace {

TimeSeries as_series(const Matrix& values, const std::string& name) {
  std::vector<std::string> names;
  for (Eigen::Index j = 0; j < values.cols(); ++j) names.push_back("v" + std::to_string(j));
  return TimeSeries(name, "1h", values, std::move(names));
}

BackboneConfig config_from(const py::dict& d) {
  // Round-trip through JSON so Python sees the same keys as checkpoint manifests.
  const auto text = py::module_::import("json").attr("dumps")(d).cast<std::string>();
  BackboneConfig c = BackboneConfig::from_json(nlohmann::json::parse(text));
  c.validate();
  return c;
}

py::object to_py(const nlohmann::json& j) {
  return py::module_::import("json").attr("loads")(j.dump());
}

}  // namespace

PYBIND11_MODULE(_ltsm, m) {
  m.doc() = "Time-series prompt, tokenizer and backbone toolkit";

  static py::exception<Error> base_error(m, "LtsmError");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object err = py::reinterpret_borrow<py::object>(base_error)(py::str(e.what()));
      err.attr("code") = errc_name(e.code());
      PyErr_SetObject(base_error.ptr(), err.ptr());
    }
  });

  // series
  m.def("load_csv", [](const std::filesystem::path& p) { return load_csv(p).values(); }, py::arg("path"),
        "Numeric columns of a CSV file as a T x d array.");
  m.def(
      "chronological_split",
      [](const Matrix& values, double train, double val, double test) {
        const auto s = chronological_split(as_series(values, "x"), SplitSpec{train, val, test});
        return py::make_tuple(s.train.values(), s.val.values(), s.test.values());
      },
      py::arg("values"), py::arg("train") = 0.7, py::arg("val") = 0.1, py::arg("test") = 0.2);
  m.def("downsample_indices", &downsample_indices, py::arg("length"), py::arg("rate"));
  m.def("window_count", &window_count, py::arg("length"), py::arg("lookback_len"), py::arg("horizon"),
        py::arg("stride") = 1);

  // prompts
  m.def("feature_names", &feature_names);
  m.def(
      "feature_value",
      [](const std::string& name, const std::vector<double>& s, std::size_t lag, std::size_t bins) {
        return feature_value(name, s, FeatureParams{lag, bins});
      },
      py::arg("name"), py::arg("series"), py::arg("lag") = 1, py::arg("bins") = 10);
  m.def(
      "extract_features",
      [](const Matrix& values, const std::string& catalog) {
        return extract_features(as_series(values, "x"), FeatureCatalog::preset(catalog));
      },
      py::arg("values"), py::arg("catalog") = "canonical", "M x d raw feature matrix.");
  m.def(
      "standardized_prompts",
      [](const std::vector<Matrix>& raws) {
        const auto stats = fit_standardizer(raws);
        std::vector<Matrix> out;
        for (const auto& r : raws) out.push_back(standardize(r, stats).features);
        return out;
      },
      py::arg("raw_features"), "Standardize raw feature matrices with statistics pooled over all of them.");

  // tokenizer
  m.def(
      "patchify",
      [](const std::vector<double>& x, std::size_t patch_len, std::size_t stride) {
        return patch_matrix(x, PatchConfig{patch_len, stride});
      },
      py::arg("x"), py::arg("patch_len") = 16, py::arg("stride") = 8);
  py::class_<Quantizer>(m, "Quantizer")
      .def_property_readonly("edges", &Quantizer::edges)
      .def_property_readonly("scale", &Quantizer::scale)
      .def_property_readonly("num_bins", &Quantizer::num_bins)
      .def("bin_width", &Quantizer::bin_width)
      .def("quantize", [](const Quantizer& q, const std::vector<double>& v) { return q.quantize(v); })
      .def("dequantize", [](const Quantizer& q, const std::vector<TokenId>& ids) { return q.dequantize(ids); })
      .def("to_json", [](const Quantizer& q) { return to_py(q.to_json()); });
  m.def(
      "fit_quantizer",
      [](const std::vector<double>& values, std::size_t bins, double clip_q) {
        return fit_quantizer(values, bins, clip_q);
      },
      py::arg("values"), py::arg("num_bins") = 256, py::arg("clip_q") = 0.01);

  // backbone
  py::class_<Backbone>(m, "Backbone")
      .def_static(
          "from_scratch", [](const py::dict& cfg, std::uint64_t seed) { return build(config_from(cfg), FromScratch{seed}); },
          py::arg("config"), py::arg("seed") = 0)
      .def_static("load", [](const std::filesystem::path& p) { return load(Checkpoint::read(p)); })
      .def("save", [](const Backbone& b, const std::filesystem::path& p) { save(b).write(p); })
      .def("forward", &Backbone::forward, py::arg("augmented"))
      .def("with_lora",
           [](const Backbone& b, std::size_t rank, double alpha, std::uint64_t seed) {
             LoraSpec spec;
             spec.rank = rank;
             spec.alpha = alpha;
             spec.seed = seed;
             return build(b.config(), LoraFinetune{save(b), spec});
           },
           py::arg("rank") = 4, py::arg("alpha") = 8.0, py::arg("seed") = 0)
      .def("merged", [](const Backbone& b) { return merge_lora(b); })
      .def("grad_check",
           [](const Backbone& b, const Matrix& x, const Matrix& y, double eps) { return grad_check(b, x, y, eps).max_rel_error; },
           py::arg("augmented"), py::arg("target"), py::arg("eps") = 1e-5)
      .def_property_readonly("config", [](const Backbone& b) { return to_py(b.config().to_json()); })
      .def_property_readonly("num_parameters", &Backbone::num_parameters)
      .def_property_readonly("num_trainable", &Backbone::num_trainable)
      .def_property_readonly("payload_sha256", [](const Backbone& b) { return payload_sha256(b); });

  // metrics and orchestration
  m.def("mse", &mse, py::arg("pred"), py::arg("target"));
  m.def("mae", &mae, py::arg("pred"), py::arg("target"));
  m.def(
      "generate_synthetic",
      [](const std::string& pattern, std::size_t length, std::size_t channels, std::uint64_t seed, double ar_coef,
         double noise, double amplitude) {
        SynthSpec s{parse_synth_pattern(pattern), length, channels, seed, ar_coef, noise, amplitude};
        return generate_synthetic(s).values();
      },
      py::arg("pattern") = "sine", py::arg("length") = 2000, py::arg("channels") = 1, py::arg("seed") = 0,
      py::arg("ar_coef") = 0.5, py::arg("noise") = 0.05, py::arg("amplitude") = 1.0);
  m.def(
      "run",
      [](const std::filesystem::path& config, std::optional<std::uint64_t> seed,
         std::optional<std::filesystem::path> out, std::optional<std::size_t> jobs) {
        RunOverrides ov{seed, out, jobs};
        py::gil_scoped_release release;
        return run(parse_config(config), ov).results.to_csv();
      },
      py::arg("config"), py::arg("seed") = py::none(), py::arg("out") = py::none(), py::arg("jobs") = py::none(),
      "Run an experiment config; returns the results.csv text.");
}
