#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

#include "deepcq/cli.hpp"
#include "deepcq/codec.hpp"
#include "deepcq/error.hpp"
#include "deepcq/field.hpp"
#include "deepcq/pipeline.hpp"
#include "deepcq/quality.hpp"
#include "deepcq/surrogate.hpp"

namespace py = pybind11;
using namespace deepcq;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Volumes are x-fastest, so a C-ordered numpy array has shape (nz, ny, nx).
py::array_t<float> to_numpy(const Dims3& d, std::span<const float> values) {
    py::array_t<float> out({d.nz, d.ny, d.nx});
    std::copy(values.begin(), values.end(), out.mutable_data());
    return out;
}

Dims3 dims_of(const FloatArray& a) {
    if (a.ndim() != 3) throw DimensionError("expected a 3D array, got " + std::to_string(a.ndim()) + " dimensions");
    return {static_cast<std::size_t>(a.shape(2)), static_cast<std::size_t>(a.shape(1)),
            static_cast<std::size_t>(a.shape(0))};
}

std::span<const float> span_of(const FloatArray& a) { return {a.data(), static_cast<std::size_t>(a.size())}; }

py::object optional_real(const std::optional<double>& v) { return v ? py::object(py::float_(*v)) : py::none(); }

}  // namespace

PYBIND11_MODULE(_deepcq, m) {
    m.doc() = "Compression-quality surrogate: codecs, metrics and trained model inference";

    static PyObject* error_type = py::register_exception<Error>(m, "DeepcqError", PyExc_RuntimeError).ptr();
    py::register_exception_translator([](std::exception_ptr p) {
        try {
            if (p) std::rethrow_exception(p);
        } catch (const Error& e) {
            PyErr_SetString(error_type, (e.category() + ": " + e.what()).c_str());
        }
    });

    m.def(
        "generate_synthetic",
        [](std::array<std::size_t, 3> dims, std::uint64_t seed, std::uint32_t timestep, int modes, double max_frequency,
           double noise, double drift) {
            SyntheticSpec s;
            s.dims = {dims[0], dims[1], dims[2]};
            s.seed = seed;
            s.n_modes = modes;
            s.max_frequency = max_frequency;
            s.noise_amplitude = noise;
            s.drift = drift;
            const auto f = generate_synthetic(s, timestep);
            return to_numpy(f.dims(), f.values());
        },
        py::arg("dims") = std::array<std::size_t, 3>{64, 64, 64}, py::arg("seed") = kDefaultSeed,
        py::arg("timestep") = 0, py::arg("modes") = 6, py::arg("max_frequency") = 4.0, py::arg("noise") = 0.02,
        py::arg("drift") = 0.05, "Seeded synthetic volume of shape (nz, ny, nx); dims are (nx, ny, nz).");

    m.def(
        "load_raw",
        [](const std::string& path, std::array<std::size_t, 3> dims) {
            const auto f = load_raw(path, {dims[0], dims[1], dims[2]});
            return to_numpy(f.dims(), f.values());
        },
        py::arg("path"), py::arg("dims"), "Headerless little-endian float32 volume; dims are (nx, ny, nz).");

    m.def(
        "compress_roundtrip",
        [](const std::string& codec, const FloatArray& volume, double eb_rel) {
            const auto d = dims_of(volume);
            const auto r = compress_roundtrip(parse_codec(codec), span_of(volume), d, eb_rel);
            py::dict out;
            out["codec"] = std::string(codec_name(r.codec));
            out["eb_rel"] = r.eb.rel;
            out["eb_abs"] = r.eb.abs;
            out["compressed_bytes"] = r.compressed_bytes;
            out["compression_ratio"] = compression_ratio(4 * d.size(), r.compressed_bytes);
            out["max_abs_error"] = r.max_abs_error;
            out["reconstruction"] = to_numpy(d, r.reconstruction);
            return out;
        },
        py::arg("codec"), py::arg("volume"), py::arg("eb_rel"));

    m.def(
        "psnr", [](const FloatArray& a, const FloatArray& b) { return optional_real(psnr(span_of(a), span_of(b))); },
        py::arg("original"), py::arg("reconstruction"), "Decibels, or None when undefined.");
    m.def(
        "ssim3d",
        [](const FloatArray& a, const FloatArray& b, std::size_t window) {
            if (a.size() != b.size()) throw DimensionError("volumes differ in size");
            SsimParams p;
            p.window = window;
            return optional_real(ssim3d(span_of(a), span_of(b), dims_of(a), p));
        },
        py::arg("original"), py::arg("reconstruction"), py::arg("window") = 7);
    m.def("percentage_error", &percentage_error, py::arg("orig"), py::arg("pred"));
    m.def(
        "mape", [](const std::vector<std::pair<double, double>>& pairs) { return mape(pairs); }, py::arg("pairs"));

    py::class_<SurrogateModel>(m, "Model")
        .def_property_readonly("backbone_hash", &SurrogateModel::backbone_hash)
        .def_property_readonly("heads",
                               [](const SurrogateModel& s) {
                                   std::vector<std::pair<std::string, std::string>> out;
                                   for (const auto& k : s.head_keys())
                                       out.emplace_back(codec_name(k.codec), metric_name(k.metric));
                                   return out;
                               })
        .def(
            "predict",
            [](const SurrogateModel& s, const std::string& codec, const std::string& metric, const FloatArray& volume,
               double eb_rel, std::size_t blocks, std::uint64_t seed) {
                const VolumeField f(dims_of(volume), std::vector<float>(volume.data(), volume.data() + volume.size()));
                return predict_volume(s, f, {parse_codec(codec), parse_metric(metric)}, eb_rel, blocks, seed);
            },
            py::arg("codec"), py::arg("metric"), py::arg("volume"), py::arg("eb_rel"), py::arg("blocks") = 32,
            py::arg("seed") = kDefaultSeed, "Mean prediction over blocks drawn from the volume.");

    m.def(
        "load_model", [](const std::string& path) { return load_model(path); }, py::arg("path"));
    m.def(
        "model_metadata", [](const std::string& path) { return read_model_metadata(path); }, py::arg("path"),
        "Metadata JSON text of a model file.");

    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::ostringstream out, err;
            const int code = cli::run(args, out, err);
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Runs a deepcq subcommand in process; returns (exit_code, stdout, stderr).");

    m.attr("DEFAULT_SEED") = kDefaultSeed;
}
