#include <sstream>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "cli.hpp"
#include "shellac/analysis.hpp"
#include "shellac/checkpoint.hpp"
#include "shellac/dataset.hpp"
#include "shellac/denoiser.hpp"
#include "shellac/error.hpp"
#include "shellac/guides.hpp"
#include "shellac/sampler.hpp"
#include "shellac/schedule.hpp"

namespace py = pybind11;
using namespace shellac;

namespace {

using Array = py::array_t<double, py::array::c_style | py::array::forcecast>;

py::array_t<double> to_numpy(std::vector<double> v) {
    auto* heap = new std::vector<double>(std::move(v));
    py::capsule owner(heap, [](void* p) { delete static_cast<std::vector<double>*>(p); });
    return py::array_t<double>(static_cast<py::ssize_t>(heap->size()), heap->data(), owner);
}

std::span<const double> view(const Array& a) {
    if (a.ndim() != 1) throw UsageError("python", "expected a 1-D array");
    return {a.data(), static_cast<std::size_t>(a.shape(0))};
}

std::vector<std::vector<double>> rows(const Array& a) {
    if (a.ndim() != 2) throw UsageError("python", "expected a 2-D array (items x positions)");
    std::vector<std::vector<double>> out(static_cast<std::size_t>(a.shape(0)));
    for (std::size_t i = 0; i < out.size(); ++i) out[i].assign(a.data(i, 0), a.data(i, 0) + a.shape(1));
    return out;
}

py::array_t<double> stack(const std::vector<std::vector<double>>& frames) {
    const std::size_t n = frames.size(), len = n ? frames[0].size() : 0;
    py::array_t<double> out({n, len});
    auto w = out.mutable_unchecked<2>();
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < len; ++j) w(i, j) = frames[i][j];
    return out;
}

NormalizationSettings norm_settings(double gain_db, const std::string& mode) {
    NormalizationSettings s;
    s.gain_db = gain_db;
    if (mode == "literal") s.mode = NormalizationMode::literal;
    else if (mode != "consistent") throw UsageError("python", "mode must be 'consistent' or 'literal'");
    return s;
}

// A trained denoiser loaded from a checkpoint.
class Model {
public:
    Model(const std::filesystem::path& path, const std::string& weights) {
        auto c = load_checkpoint(path);
        fs_ = c.data.fs;
        iteration_ = c.state.iteration;
        if (weights != "ema" && weights != "raw") throw UsageError("python", "weights must be 'ema' or 'raw'");
        denoiser_ = std::make_unique<UNetDenoiser>(c.network, std::move(c.state.params),
                                                   weights == "ema" ? WeightSource::ema : WeightSource::raw);
    }

    double fs() const { return fs_; }
    long iteration() const { return iteration_; }
    std::size_t frame_length() const { return denoiser_->frame_length(); }

    py::array_t<double> predict_noise(const Array& z, double sigma) const {
        return to_numpy(denoiser_->predict_noise(view(z), sigma));
    }

    py::array_t<double> sample(int steps, std::uint64_t seed, std::optional<double> clip) const {
        SamplerRun run;
        run.clip_denoised = clip;
        run.steps = steps;
        run.seed = seed;
        std::vector<double> x;
        {
            py::gil_scoped_release release;
            x = sample_unconditional(*denoiser_, run);
        }
        return to_numpy(std::move(x));
    }

    py::array_t<double> guided(const Array& guide, double tau0, int steps, std::uint64_t seed,
                               std::optional<double> clip) const {
        SamplerRun run;
        run.clip_denoised = clip;
        run.steps = steps;
        run.seed = seed;
        run.tau0 = tau0;
        const auto g = view(guide);
        std::vector<double> x;
        {
            py::gil_scoped_release release;
            x = sample_guided(*denoiser_, g, run);
        }
        return to_numpy(std::move(x));
    }

    py::array_t<double> variations(int revolutions, double tau_p, int steps, std::uint64_t seed,
                                   std::optional<Array> guide, std::optional<double> tau0, int threads,
                                   std::optional<double> clip) const {
        SamplerRun run;
        run.clip_denoised = clip;
        run.steps = steps;
        run.seed = seed;
        run.revolutions = revolutions;
        run.tau_p = tau_p;
        run.threads = threads;
        if (guide && !tau0) throw UsageError("python", "a guide needs tau0");
        std::vector<RevolutionFrame> frames;
        if (guide) {
            run.tau0 = *tau0;
            const auto g = view(*guide);
            py::gil_scoped_release release;
            frames = guided_variations(*denoiser_, g, run);
        } else {
            py::gil_scoped_release release;
            frames = unconditional_variations(*denoiser_, run);
        }
        return stack(frames);
    }

private:
    std::unique_ptr<UNetDenoiser> denoiser_;
    double fs_ = 0.0;
    long iteration_ = 0;
};

}  // namespace

PYBIND11_MODULE(_shellac, m) {
    m.doc() = "Diffusion-based synthesis of shellac record surface noise.";

    auto error = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<UsageError>(m, "UsageError", error);
    auto data = py::register_exception<DataError>(m, "DataError", error);
    py::register_exception<NumericError>(m, "NumericError", error);
    py::register_exception<IoError>(m, "IoError", data);
    py::register_exception<MalformedWavError>(m, "MalformedWavError", data);
    py::register_exception<UnsupportedCodecError>(m, "UnsupportedCodecError", data);

    // schedule
    m.def("sigma", [](double tau) { return schedule::sigma(schedule::DiffusionTime(tau)); }, py::arg("tau"));
    m.def("alpha", [](double tau) { return schedule::alpha(schedule::DiffusionTime(tau)); }, py::arg("tau"));
    m.def(
        "reverse_coefficients",
        [](double tau, double s) {
            const auto k = schedule::reverse_coefficients(schedule::DiffusionTime(tau), schedule::DiffusionTime(s));
            return py::make_tuple(k.f, k.g, k.h);
        },
        py::arg("tau"), py::arg("s"), "(f, g, h) of the step z_s = f z - g eps_hat + h eps.");

    // guides
    m.def(
        "synth_guide",
        [](const std::string& preset, double fs, std::uint64_t seed, std::optional<double> length) {
            auto spec = GuideSpec::preset(preset, fs);
            if (length) spec.length = *length;
            Rng rng(seed);
            return to_numpy(compose_guide(spec, rng));
        },
        py::arg("preset"), py::arg("fs"), py::arg("seed") = 0, py::arg("length") = py::none(),
        "Render a guide preset ('filtered-noise-thumps' or 'hiss-clicks').");

    // dataset
    m.def("frame_length", &frame_length, py::arg("fs"), py::arg("rpm") = 78.0);
    m.def(
        "median_rms", [](const Array& x, double b_chi) { return median_rms(view(x), b_chi); }, py::arg("x"),
        py::arg("b_chi") = 1.4826);
    m.def(
        "normalize_median_rms",
        [](const Array& x, double gain_db, const std::string& mode) {
            return to_numpy(normalize_median_rms(view(x), norm_settings(gain_db, mode)));
        },
        py::arg("x"), py::arg("gain_db") = -10.0, py::arg("mode") = "consistent");
    m.def(
        "read_wav",
        [](const std::filesystem::path& path) {
            auto a = read_wav(path);
            return py::make_tuple(to_numpy(std::vector<double>(a.samples.begin(), a.samples.end())), a.fs);
        },
        py::arg("path"), "Returns (samples, fs).");
    m.def(
        "write_wav",
        [](const std::filesystem::path& path, const Array& x, double fs, const std::string& format) {
            const auto v = view(x);
            AudioAsset a{std::vector<float>(v.begin(), v.end()), fs, path.string()};
            if (format != "float32" && format != "pcm16") throw UsageError("python", "format must be float32 or pcm16");
            write_wav(path, a, format == "pcm16" ? WavFormat::pcm16 : WavFormat::float32);
        },
        py::arg("path"), py::arg("x"), py::arg("fs"), py::arg("format") = "float32");

    // analysis
    m.def(
        "temporal_envelope",
        [](const Array& x, double fs, double window, std::optional<double> hop) {
            return to_numpy(temporal_envelope(view(x), fs, window, hop).values);
        },
        py::arg("x"), py::arg("fs"), py::arg("window") = 0.025, py::arg("hop") = py::none());
    m.def(
        "bark_envelope",
        [](const Array& x, double fs, std::size_t fft_size) {
            auto b = bark_envelope(view(x), fs, BarkOptions{fft_size});
            return py::make_tuple(to_numpy(std::move(b.band_db)), to_numpy(std::move(b.band_edges)));
        },
        py::arg("x"), py::arg("fs"), py::arg("fft_size") = 1024, "Returns (band_db, band_edges).");
    m.def(
        "pairwise_deviation_std",
        [](const Array& items, std::optional<Array> reference) {
            if (reference) return to_numpy(pairwise_deviation_std(rows(items), DeviationMode::reference, view(*reference)));
            return to_numpy(pairwise_deviation_std(rows(items), DeviationMode::all_pairs));
        },
        py::arg("items"), py::arg("reference") = py::none(),
        "Per-position deviation: against `reference` when given, otherwise over all pairs.");

    // sampling
    py::class_<Model>(m, "Model")
        .def(py::init<const std::filesystem::path&, const std::string&>(), py::arg("checkpoint"),
             py::arg("weights") = "ema")
        .def_property_readonly("fs", &Model::fs)
        .def_property_readonly("iteration", &Model::iteration)
        .def_property_readonly("frame_length", &Model::frame_length)
        .def("predict_noise", &Model::predict_noise, py::arg("z"), py::arg("sigma"))
        .def("sample", &Model::sample, py::arg("steps") = 150, py::arg("seed") = 0,
             py::arg("clip_denoised") = kDefaultClipDenoised)
        .def("guided", &Model::guided, py::arg("guide"), py::arg("tau0"), py::arg("steps") = 150, py::arg("seed") = 0,
             py::arg("clip_denoised") = kDefaultClipDenoised)
        .def("variations", &Model::variations, py::arg("revolutions"), py::arg("tau_p"), py::arg("steps") = 150,
             py::arg("seed") = 0, py::arg("guide") = py::none(), py::arg("tau0") = py::none(), py::arg("threads") = 1,
             py::arg("clip_denoised") = kDefaultClipDenoised, "Bifurcated revolutions, one per row.");

    // command line, including training
    m.def(
        "run_cli",
        [](const std::vector<std::string>& args) {
            std::vector<const char*> argv{"shellac"};
            for (const auto& a : args) argv.push_back(a.c_str());
            std::ostringstream out, err;
            int code;
            {
                py::gil_scoped_release release;
                code = cli::run(static_cast<int>(argv.size()), argv.data(), out, err);
            }
            return py::make_tuple(code, out.str(), err.str());
        },
        py::arg("args"), "Run a shellac command; returns (exit_code, stdout, stderr).");
}
