// SPDX-License-Identifier: Apache-2.0

#include "envsem/beams.hpp"
#include "envsem/channel.hpp"
#include "envsem/dataset.hpp"
#include "envsem/features.hpp"
#include "envsem/pipeline.hpp"
#include "envsem/semantics.hpp"

#include <pybind11/complex.h>
#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

namespace py = pybind11;
using namespace envsem;

namespace {

template <class T>
py::array_t<T> to_array(const std::vector<T>& v, std::vector<py::ssize_t> shape) {
    py::array_t<T> out(shape);
    if (static_cast<std::size_t>(out.size()) != v.size()) throw ConfigError("array shape does not match its length");
    std::copy(v.begin(), v.end(), out.mutable_data());
    return out;
}

py::dict dataset_dict(const Dataset& d) {
    const auto n = static_cast<py::ssize_t>(d.size());
    py::dict out;
    out["labels"] = to_array(d.labels, {n, d.cameras, d.resolution.height, d.resolution.width});
    out["locations"] = to_array(d.locations, {n, 3});
    out["beam_labels"] = to_array(d.beam_labels, {n});
    out["blockage"] = to_array(d.blockage, {n, static_cast<py::ssize_t>(d.horizons.size())});
    out["ids"] = to_array(d.ids, {n, 2});
    out["horizons"] = d.horizons;
    out["codebook_size"] = d.codebook_size;
    if (d.has_channels()) {
        py::list hs;
        for (std::size_t i = 0; i < d.size(); ++i) hs.append(d.channel(i));
        out["channels"] = hs;
    }
    return out;
}

PathComponent path_from(const py::dict& p) {
    PathComponent c;
    c.amplitude = p["amplitude"].cast<double>();
    c.phase = p.contains("phase") ? p["phase"].cast<double>() : 0.0;
    c.delay = p.contains("delay") ? p["delay"].cast<double>() : 0.0;
    c.azimuth = p.contains("azimuth") ? p["azimuth"].cast<double>() : 0.0;
    c.elevation = p.contains("elevation") ? p["elevation"].cast<double>() : 0.0;
    return c;
}

RayTraceConfig ray_from(const py::object& cfg) {
    if (cfg.is_none()) return {};
    return ray_config_from_json(Json::parse(py::str(py::module_::import("json").attr("dumps")(cfg)).cast<std::string>()));
}

} // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Environment-semantics beam and blockage prediction core";

    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<IoError>(m, "IoError", PyExc_OSError);

    m.def("dft_codebook", [](int antennas, int size) { return dft_codebook(antennas, size).vectors; },
          py::arg("antennas"), py::arg("size"));
    m.def("rate", [](const Eigen::MatrixXcd& h, const Eigen::VectorXcd& w, double snr) { return rate(h, w, snr); },
          py::arg("channel"), py::arg("w"), py::arg("snr"));
    m.def(
        "optimal_beam",
        [](const Eigen::MatrixXcd& h, const Eigen::MatrixXcd& codebook, double snr) {
            Codebook c{codebook};
            auto e = optimal_beam(h, c, snr);
            return py::make_tuple(e.optimal_index, e.rates);
        },
        py::arg("channel"), py::arg("codebook"), py::arg("snr"));
    m.def(
        "topg_indices", [](const std::vector<double>& s, int g) { return topg_indices(std::span<const double>(s), g); },
        py::arg("scores"), py::arg("g"));
    m.def(
        "assemble_channel",
        [](const std::vector<py::dict>& paths, const py::object& config) {
            std::vector<PathComponent> ps;
            for (const auto& p : paths) ps.push_back(path_from(p));
            return assemble_channel(ps, ray_from(config));
        },
        py::arg("paths"), py::arg("config") = py::none());

    m.def("feature_names", [] {
        std::vector<std::string> out;
        for (int i = 0; i < kFeatureCount; ++i) out.push_back(feature_name(i));
        return out;
    });
    m.def("concept_names", [] {
        std::vector<std::string> out;
        for (auto n : concept_names()) out.emplace_back(n);
        return out;
    });
    m.def(
        "corrupt_labels",
        [](py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast> labels, double p,
           std::uint64_t seed) {
            if (labels.ndim() != 2) throw ConfigError("labels must be a 2-D array");
            SemanticMap map;
            map.height = static_cast<int>(labels.shape(0));
            map.width = static_cast<int>(labels.shape(1));
            map.labels.assign(labels.data(), labels.data() + labels.size());
            Rng rng(seed);
            auto out = corrupt_map(map, p, rng);
            return to_array(out.labels, {map.height, map.width});
        },
        py::arg("labels"), py::arg("p"), py::arg("seed"));

    m.def(
        "generate",
        [](const std::string& config_path, const std::string& out) {
            auto cfg = config_path.empty() ? PipelineConfig{} : load_pipeline_config(config_path);
            py::gil_scoped_release release;
            cmd_generate(cfg, out);
        },
        py::arg("config"), py::arg("out"));
    m.def(
        "read_dataset", [](const std::string& dir) { return dataset_dict(read_dataset(dir)); }, py::arg("dir"));
    m.def("sha256_file", [](const std::string& path) { return sha256_file(path); }, py::arg("path"));
}
