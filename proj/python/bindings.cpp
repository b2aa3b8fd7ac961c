#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "ganselect/error.hpp"
#include "ganselect/experiment.hpp"

namespace py = pybind11;
using namespace ganselect;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a) {
    if (a.ndim() != 2) throw py::value_error("expected a 2-D array");
    const auto rows = static_cast<std::size_t>(a.shape(0)), cols = static_cast<std::size_t>(a.shape(1));
    return Tensor(Shape{rows, cols}, std::vector<double>(a.data(), a.data() + rows * cols));
}

std::vector<double> to_vector(const Array& a) { return std::vector<double>(a.data(), a.data() + a.size()); }

Array to_array(const Tensor& t) {
    Array out({t.rows(), t.cols()});
    std::copy(t.data().begin(), t.data().end(), out.mutable_data());
    return out;
}

Array to_array(const std::vector<double>& v) {
    Array out(std::vector<py::ssize_t>{static_cast<py::ssize_t>(v.size())});
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::dict report_dict(const MetricReport& r) {
    py::dict d;
    d["gaussian_kl"] = r.gaussian_kl;
    d["frechet"] = r.frechet;
    d["mmd2"] = r.mmd2;
    d["sliced_w2"] = r.sliced_w2;
    d["n_samples"] = r.n_samples;
    d["seed"] = r.seed;
    return d;
}

py::list report_list(const std::vector<MetricReport>& rs) {
    py::list l;
    for (const auto& r : rs) l.append(report_dict(r));
    return l;
}

py::dict probe_dict(const ProbeReport& p) {
    py::dict d;
    d["alphas"] = p.alphas;
    d["values"] = p.values;
    d["baseline"] = p.baseline;
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "GAN objectives, flatness probes and evaluation metrics";
    m.attr("__version__") = "0.1.0";

    const auto& config_error = py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IngestionError>(m, "IngestionError", config_error.ptr());
    py::register_exception<NumericError>(m, "NumericError", PyExc_ArithmeticError);

    // Config
    m.def("default_config", [] { return serialize_config(ExperimentConfig{}); },
          "Default experiment config as JSON text.");
    m.def("normalize_config", [](const std::string& text) { return serialize_config(parse_config(text)); },
          py::arg("text"), "Parses a config and re-serializes it with every field spelled out.");
    m.def("split_seed", &split_seed, py::arg("master"), py::arg("stream"));

    // Data and models
    m.def("make_dataset", [](const std::string& config_text) { return to_array(make_dataset(parse_config(config_text).dataset)); },
          py::arg("config"), "Samples the dataset described by a config's dataset section.");
    m.def(
        "generate",
        [](std::size_t latent_dim, std::size_t hidden_layers, std::size_t data_dim, const Array& params, const Array& z,
           std::size_t hidden_units) {
            const NetworkSpec spec = generator_spec(latent_dim, hidden_layers, data_dim, hidden_units);
            return to_array(generate(spec, ParamVector{to_vector(params)}, to_tensor(z)));
        },
        py::arg("latent_dim"), py::arg("hidden_layers"), py::arg("data_dim"), py::arg("params"), py::arg("z"),
        py::arg("hidden_units") = 64);
    m.def(
        "init_generator",
        [](std::size_t latent_dim, std::size_t hidden_layers, std::size_t data_dim, std::uint64_t seed,
           std::size_t hidden_units) {
            Rng rng(seed);
            return to_array(init_params(generator_spec(latent_dim, hidden_layers, data_dim, hidden_units), rng).values);
        },
        py::arg("latent_dim"), py::arg("hidden_layers"), py::arg("data_dim"), py::arg("seed"),
        py::arg("hidden_units") = 64);

    // Metrics
    m.def(
        "mmd2_unbiased",
        [](const Array& x, const Array& y, const std::vector<double>& bandwidths) {
            return mmd2_unbiased(to_tensor(x), to_tensor(y), KernelSpec{bandwidths});
        },
        py::arg("x"), py::arg("y"), py::arg("bandwidths"));
    m.def("median_pairwise_distance", [](const Array& x) { return median_pairwise_distance(to_tensor(x)); },
          py::arg("x"));
    m.def(
        "gaussian_kl",
        [](const Array& sample, const Array& mean, const Array& cov) {
            return gaussian_kl(to_tensor(sample), to_vector(mean), to_vector(cov));
        },
        py::arg("sample"), py::arg("target_mean"), py::arg("target_cov"));
    m.def("frechet_distance", [](const Array& a, const Array& b) { return frechet_distance(to_tensor(a), to_tensor(b)); },
          py::arg("a"), py::arg("b"));
    m.def(
        "sliced_wasserstein",
        [](const Array& a, const Array& b, std::size_t n_dirs, std::uint64_t seed) {
            Rng rng(seed);
            return sliced_wasserstein(to_tensor(a), to_tensor(b), n_dirs, rng);
        },
        py::arg("a"), py::arg("b"), py::arg("n_dirs") = 128, py::arg("seed") = 0);
    m.def(
        "quantize_tensor",
        [](const Array& values) {
            const QuantizedTensor q = quantize_tensor(to_vector(values));
            py::dict d;
            d["codes"] = std::vector<int>(q.codes.begin(), q.codes.end());
            d["scale"] = q.scale;
            d["zero_point"] = q.zero_point;
            d["min"] = q.min;
            d["dequantized"] = to_array(q.dequantize());
            return d;
        },
        py::arg("values"));

    // Runners (release the GIL; they may run for minutes)
    m.def(
        "run_train",
        [](const std::string& config_text, const std::filesystem::path& out) {
            const ExperimentConfig c = parse_config(config_text);
            TrainResult r;
            {
                py::gil_scoped_release release;
                r = run_train(c, out);
            }
            py::dict d;
            d["raw"] = report_list(r.raw);
            d["ema"] = report_list(r.ema);
            d["epochs"] = r.model.history.size();
            d["generator_steps"] = r.model.generator_steps;
            d["critic_steps"] = r.model.critic_steps;
            return d;
        },
        py::arg("config"), py::arg("out_dir"));
    m.def(
        "run_eval",
        [](const std::string& config_text, const std::filesystem::path& checkpoint, const std::filesystem::path& out) {
            const ExperimentConfig c = parse_config(config_text);
            std::vector<std::pair<std::string, std::vector<MetricReport>>> sets;
            {
                py::gil_scoped_release release;
                sets = run_eval(c, checkpoint, out);
            }
            py::dict d;
            for (const auto& [label, reports] : sets) d[py::str(label)] = report_list(reports);
            return d;
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("out_dir"));
    m.def(
        "run_probe",
        [](const std::string& config_text, const std::filesystem::path& checkpoint, const std::filesystem::path& out) {
            const ExperimentConfig c = parse_config(config_text);
            ProbeReport p;
            {
                py::gil_scoped_release release;
                p = run_probe(c, checkpoint, out);
            }
            return probe_dict(p);
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("out_dir"));
    m.def(
        "run_quantize",
        [](const std::string& config_text, const std::filesystem::path& checkpoint, const std::filesystem::path& out) {
            const ExperimentConfig c = parse_config(config_text);
            QuantReport q;
            {
                py::gil_scoped_release release;
                q = run_quantize(c, checkpoint, out);
            }
            py::dict d;
            d["scales"] = q.scales;
            d["zero_points"] = q.zero_points;
            d["max_abs_error"] = q.max_abs_error;
            d["before"] = report_list(q.before);
            d["after"] = report_list(q.after);
            return d;
        },
        py::arg("config"), py::arg("checkpoint"), py::arg("out_dir"));
}
