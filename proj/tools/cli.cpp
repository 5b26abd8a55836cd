#include "cli.hpp"

#include <CLI11.hpp>
#include <openssl/evp.h>
#include <spdlog/sinks/ostream_sink.h>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <optional>
#include <sstream>

#include "shellac/analysis.hpp"
#include "shellac/checkpoint.hpp"
#include "shellac/config.hpp"
#include "shellac/dataset.hpp"
#include "shellac/error.hpp"
#include "shellac/guides.hpp"
#include "shellac/sampler.hpp"
#include "shellac/trainer.hpp"

namespace shellac::cli {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

// Fixed stream ids under the run seed, disjoint from sampler branch ids.
constexpr std::uint64_t kGuideStream = 0x6a1de;
constexpr std::uint64_t kAssemblyStream = 0xa55e;
constexpr double kDefaultTauP = 0.33;
constexpr int kDefaultRevolutions = 4;

struct Args {
    // shared
    std::string config;
    std::vector<std::string> overrides;
    std::optional<std::uint64_t> seed;
    std::optional<int> threads;
    std::string out;
    std::string format = "float32";
    // train
    std::string manifest;
    std::optional<long> iterations;
    std::string resume;
    std::string progress;
    // sampling
    std::string checkpoint;
    std::optional<int> steps;
    std::optional<double> clip;
    bool no_clip = false;
    int count = 1;
    std::string weights = "ema";
    std::optional<double> tau0;
    std::optional<double> tau_p;
    std::optional<int> revolutions;
    std::optional<double> duration;
    double overlap = 0.0;
    std::string frames_dir;
    // guides
    std::string guide;
    std::string guide_preset;
    std::string guide_out;
    std::optional<std::uint64_t> guide_seed;
    bool normalize_guide = false;
    std::string preset;
    std::optional<double> fs;
    std::optional<double> length;
    // analyze
    std::vector<std::string> inputs;
    std::string reference;
    double window = 0.025;
    std::optional<double> hop;
    std::size_t fft_size = 1024;
    std::size_t spec_hop = 256;
    bool spectrograms = false;

    std::string command_line;
};

[[noreturn]] void usage(const std::string& what) { throw UsageError("cli", what); }

std::string hex(const unsigned char* p, unsigned n) {
    std::ostringstream s;
    for (unsigned i = 0; i < n; ++i) s << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(p[i]);
    return s.str();
}

std::string sha256(std::string_view bytes) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned n = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), md, &n, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256 failed");
    }
    return hex(md, n);
}

std::string sha256_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw IoError("cli", "cannot open " + p.string());
    std::ostringstream s;
    s << in.rdbuf();
    return sha256(s.str());
}

ConfigTree load_tree(const Args& a) {
    return a.config.empty() ? parse_config_text("", a.overrides) : parse_config(a.config, a.overrides);
}

json tree_json(const NetworkConfig& n, const TrainingConfig& t, const DataConfig& d, const SamplerRun& s,
               const std::optional<GuideSpec>& g) {
    return {{"network", to_json(n)},
            {"training", to_json(t)},
            {"data", to_json(d)},
            {"sampler", to_json(s)},
            {"guide", g ? to_json(*g) : json(nullptr)}};
}

/// Everything needed to regenerate an output: written next to it as <output>.json.
struct Provenance {
    std::string command;
    std::uint64_t seed = 0;
    json config;
    std::optional<std::string> checkpoint_sha256;
};

void write_manifest(const fs::path& output, const Provenance& p, const json& parameters) {
    json m{{"command", p.command},
           {"seed", p.seed},
           {"config_sha256", sha256(p.config.dump())},
           {"checkpoint_sha256", p.checkpoint_sha256 ? json(*p.checkpoint_sha256) : json(nullptr)},
           {"output", output.filename().string()},
           {"output_sha256", sha256_file(output)},
           {"parameters", parameters},
           {"config", p.config}};
    const fs::path path = output.string() + ".json";
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw IoError("cli", "cannot write manifest " + path.string());
    f << m.dump(2) << '\n';
}

WavFormat wav_format(const std::string& name) {
    if (name == "float32") return WavFormat::float32;
    if (name == "pcm16") return WavFormat::pcm16;
    usage("--format must be float32 or pcm16");
}

void write_audio(const fs::path& path, std::span<const double> x, double fs, const std::string& format) {
    if (!std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); })) {
        throw NumericError("cli", "refusing to write non-finite samples to " + path.string());
    }
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    AudioAsset a;
    a.fs = fs;
    a.samples.resize(x.size());
    std::transform(x.begin(), x.end(), a.samples.begin(), [](double v) { return static_cast<float>(v); });
    write_wav(path, a, wav_format(format));
}

/// out.wav -> out_002.wav when several outputs share one name.
fs::path numbered(const fs::path& base, int index, int count) {
    if (count == 1) return base;
    std::ostringstream name;
    name << base.stem().string() << '_' << std::setw(3) << std::setfill('0') << index << base.extension().string();
    return base.parent_path() / name.str();
}

struct Model {
    Checkpoint ckpt;
    std::string sha;
    std::unique_ptr<UNetDenoiser> denoiser;

    std::size_t frame() const { return static_cast<std::size_t>(ckpt.network.sample_count); }
    double fs() const { return ckpt.data.fs; }
};

Model load_model(const Args& a) {
    if (a.checkpoint.empty()) usage("--checkpoint is required");
    WeightSource source = WeightSource::ema;
    if (a.weights == "raw") {
        source = WeightSource::raw;
    } else if (a.weights != "ema") {
        usage("--weights must be ema or raw");
    }
    Model m;
    m.ckpt = load_checkpoint(a.checkpoint);
    m.sha = sha256_file(a.checkpoint);
    m.denoiser = std::make_unique<UNetDenoiser>(m.ckpt.network, m.ckpt.state.params, source);
    spdlog::debug("loaded {} (iteration {}, {} parameters)", a.checkpoint, m.ckpt.state.iteration,
                  m.ckpt.state.params.scalar_count());
    return m;
}

SamplerRun base_run(const Args& a, const ConfigTree& t) {
    SamplerRun r = t.sampler;
    if (a.steps) r.steps = *a.steps;
    if (a.seed) r.seed = *a.seed;
    if (a.threads) r.threads = *a.threads;
    if (a.no_clip) r.clip_denoised.reset();
    else if (a.clip) r.clip_denoised = *a.clip;
    else if (!r.clip_denoised) r.clip_denoised = kDefaultClipDenoised;
    return r;
}

json run_json(const SamplerRun& r, const Args& a) {
    json j = to_json(r);
    j["weights"] = a.weights;
    return j;
}

bool has_guide(const Args& a) { return !a.guide.empty() || !a.guide_preset.empty(); }

/// The guide as a model-length frame: from a WAV (first frame's worth of
/// samples), a preset, or the config's guide section.
std::vector<double> load_guide(const Args& a, const ConfigTree& t, const Model& m, std::uint64_t seed, json& info) {
    const std::size_t n = m.frame();
    const double fs = m.fs();
    if (!a.guide.empty() && !a.guide_preset.empty()) usage("give either --guide or --guide-preset, not both");
    std::vector<double> g;
    if (!a.guide.empty()) {
        const auto asset = read_wav(a.guide);
        if (asset.fs != fs) {
            throw DataError("cli", "guide " + a.guide + " is at " + std::to_string(asset.fs) + " Hz, the model at " +
                                       std::to_string(fs) + " Hz");
        }
        if (asset.samples.size() < n) {
            throw DataError("cli", "guide " + a.guide + " has " + std::to_string(asset.samples.size()) +
                                       " samples, the model frame needs " + std::to_string(n));
        }
        if (asset.samples.size() > n) spdlog::info("guide: using the first {} of {} samples", n, asset.samples.size());
        g.assign(asset.samples.begin(), asset.samples.begin() + static_cast<std::ptrdiff_t>(n));
        info = {{"wav", a.guide}, {"sha256", sha256_file(a.guide)}};
    } else {
        GuideSpec spec;
        if (!a.guide_preset.empty()) {
            spec = GuideSpec::preset(a.guide_preset, fs);
        } else if (t.guide) {
            spec = *t.guide;
            if (spec.fs != fs) usage("guide section fs does not match the model sample rate");
        } else {
            usage("guided sampling needs --guide, --guide-preset or a guide config section");
        }
        spec.length = static_cast<double>(n) / fs;
        const std::uint64_t gseed = a.guide_seed.value_or(Rng::derive(seed, kGuideStream).engine()());
        Rng rng(gseed);
        g = compose_guide(spec, rng);
        g.resize(n);
        info = {{"spec", to_json(spec)}, {"seed", gseed}};
    }
    if (a.normalize_guide) g = normalize_median_rms(std::span<const double>(g), m.ckpt.data.normalization);
    info["normalized"] = a.normalize_guide;
    return g;
}

// ---------------------------------------------------------------------------
// Commands

int cmd_train(const Args& a) {
    Checkpoint c;
    const bool resume = !a.resume.empty();
    if (resume) {
        if (!a.config.empty() || !a.overrides.empty() || a.seed) {
            usage("--resume takes its configuration from the checkpoint; only --iterations, --threads and "
                  "--manifest may change");
        }
        c = load_checkpoint(a.resume);
        spdlog::info("resuming from {} at iteration {}", a.resume, c.state.iteration);
    } else {
        const auto t = load_tree(a);
        c.network = t.network;
        c.training = t.training;
        c.data = t.data;
        if (a.seed) c.training.seed = *a.seed;
        const auto seeds = TrainingSeeds::from(c.training.seed);
        c.state = TrainerState::fresh(UNet(c.network).init_params(seeds.init), seeds.trainer);
    }
    if (!a.manifest.empty()) c.data.manifest = a.manifest;
    if (a.iterations) c.training.total_iterations = *a.iterations;
    if (a.threads) c.training.threads = *a.threads;
    c.training.validate();
    if (c.data.manifest.empty()) usage("training needs a corpus manifest (--manifest or data.manifest)");

    const auto n = static_cast<std::size_t>(c.network.sample_count);
    auto corpus = load_corpus(c.data.manifest, c.data.fs, n);
    spdlog::info("corpus: {} files from {}", corpus.size(), c.data.manifest);
    BatchIterator batches(std::move(corpus), n, static_cast<std::size_t>(c.training.batch_size),
                          c.data.normalization, TrainingSeeds::from(c.training.seed).data);
    if (resume) batches.restore(c.data_state);

    const fs::path out = a.out;
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    const fs::path progress_path = a.progress.empty() ? fs::path(out.string() + ".progress.jsonl") : fs::path(a.progress);
    std::ofstream progress(progress_path, resume ? std::ios::app : std::ios::trunc);
    if (!progress) throw IoError("cli", "cannot open " + progress_path.string());

    UNet net(c.network);
    UNetModel model(net);
    const long every = std::max(1L, c.training.total_iterations / 20);
    train(
        model, c.training, c.state, batches,
        [&](const TrainerState& s, const BatchSource& d) {
            save_checkpoint(out, Checkpoint{c.network, c.training, c.data, s, d.state()});
            spdlog::info("checkpoint at iteration {} -> {}", s.iteration, out.string());
        },
        [&](const LossReport& r) {
            write_progress(progress, r);
            if (r.iteration % every == 0) {
                spdlog::info("iteration {}: loss {:.5f} grad_norm {:.4f}", r.iteration, r.loss, r.grad_norm);
            }
        });

    Provenance p{a.command_line, c.training.seed,
                 tree_json(c.network, c.training, c.data, SamplerRun{}, std::nullopt),
                 resume ? std::optional<std::string>(sha256_file(a.resume)) : std::nullopt};
    write_manifest(out, p, {{"iterations", c.state.iteration}, {"resumed_from", resume ? json(a.resume) : json(nullptr)}});
    return kOk;
}

int cmd_sample(const Args& a) {
    const auto t = load_tree(a);
    const auto m = load_model(a);
    SamplerRun run = base_run(a, t);
    run.tau0 = 1.0;
    for (int i = 0; i < a.count; ++i) {
        SamplerRun ri = run;
        ri.seed = run.seed + static_cast<std::uint64_t>(i);
        const auto frame = sample_unconditional(*m.denoiser, ri);
        const auto path = numbered(a.out, i, a.count);
        write_audio(path, frame, m.fs(), a.format);
        const Provenance p{a.command_line, ri.seed,
                           tree_json(m.ckpt.network, m.ckpt.training, m.ckpt.data, ri, std::nullopt), m.sha};
        write_manifest(path, p, run_json(ri, a));
    }
    return kOk;
}

int cmd_guided(const Args& a) {
    const auto t = load_tree(a);
    const auto m = load_model(a);
    if (!a.tau0) usage("--tau0 is required (e.g. 0.33, 0.5 or 0.66)");
    SamplerRun run = base_run(a, t);
    run.tau0 = *a.tau0;
    run.tau_p = a.tau_p;
    run.revolutions = 1;
    json guide_info;
    const auto guide = load_guide(a, t, m, run.seed, guide_info);
    if (!a.guide_out.empty()) {
        write_audio(a.guide_out, guide, m.fs(), a.format);
        write_manifest(a.guide_out, {a.command_line, run.seed, tree_json(m.ckpt.network, m.ckpt.training, m.ckpt.data, run, t.guide), m.sha},
                       {{"guide", guide_info}});
    }
    for (int i = 0; i < a.count; ++i) {
        SamplerRun ri = run;
        ri.seed = run.seed + static_cast<std::uint64_t>(i);
        const auto frame = sample_guided(*m.denoiser, guide, ri);
        const auto path = numbered(a.out, i, a.count);
        write_audio(path, frame, m.fs(), a.format);
        auto params = run_json(ri, a);
        params["guide"] = guide_info;
        write_manifest(path, {a.command_line, ri.seed, tree_json(m.ckpt.network, m.ckpt.training, m.ckpt.data, ri, t.guide), m.sha},
                       params);
    }
    return kOk;
}

int cmd_variations(const Args& a) {
    const auto t = load_tree(a);
    const auto m = load_model(a);
    SamplerRun run = base_run(a, t);
    run.tau_p = a.tau_p ? a.tau_p : (t.sampler.tau_p ? t.sampler.tau_p : std::optional<double>(kDefaultTauP));
    run.revolutions = a.revolutions.value_or(t.sampler.revolutions > 1 ? t.sampler.revolutions : kDefaultRevolutions);

    std::vector<RevolutionFrame> frames;
    json params;
    if (has_guide(a) || a.tau0) {
        if (!a.tau0) usage("guided variations need --tau0");
        run.tau0 = *a.tau0;
        json guide_info;
        const auto guide = load_guide(a, t, m, run.seed, guide_info);
        frames = guided_variations(*m.denoiser, guide, run);
        params["guide"] = guide_info;
    } else {
        run.tau0 = 1.0;
        frames = unconditional_variations(*m.denoiser, run);
    }

    const double duration = a.duration.value_or(static_cast<double>(run.revolutions) * static_cast<double>(m.frame()) / m.fs());
    Rng order = Rng::derive(run.seed, kAssemblyStream);
    const auto track = assemble_track(frames, m.fs(), duration, order, a.overlap);

    const Provenance p{a.command_line, run.seed, tree_json(m.ckpt.network, m.ckpt.training, m.ckpt.data, run, t.guide), m.sha};
    params.update(run_json(run, a));
    params["duration"] = duration;
    params["overlap"] = a.overlap;
    write_audio(a.out, track, m.fs(), a.format);
    write_manifest(a.out, p, params);

    if (!a.frames_dir.empty()) {
        for (std::size_t b = 0; b < frames.size(); ++b) {
            std::ostringstream name;
            name << "revolution_" << std::setw(3) << std::setfill('0') << b << ".wav";
            const auto path = fs::path(a.frames_dir) / name.str();
            write_audio(path, frames[b], m.fs(), a.format);
            auto fp = params;
            fp["branch"] = b;
            write_manifest(path, p, fp);
        }
    }
    return kOk;
}

int cmd_guide_synth(const Args& a) {
    const auto t = load_tree(a);
    GuideSpec spec;
    if (!a.preset.empty()) {
        spec = GuideSpec::preset(a.preset, a.fs.value_or(t.data.fs));
    } else if (t.guide) {
        spec = *t.guide;
        if (a.fs) spec.fs = *a.fs;
    } else {
        usage("guide-synth needs --preset or a guide config section");
    }
    if (a.length) spec.length = *a.length;
    spec.validate();
    const std::uint64_t seed = a.seed.value_or(t.sampler.seed);
    Rng rng(seed);
    const auto x = compose_guide(spec, rng);
    write_audio(a.out, x, spec.fs, a.format);
    SamplerRun none;
    none.seed = seed;
    write_manifest(a.out, {a.command_line, seed, tree_json(t.network, t.training, t.data, none, spec), std::nullopt},
                   {{"spec", to_json(spec)}, {"samples", x.size()}});
    return kOk;
}

double mean_of(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

int cmd_analyze(const Args& a, std::ostream& out) {
    if (a.inputs.empty()) usage("analyze needs at least one input WAV");
    std::vector<AudioAsset> items;
    for (const auto& p : a.inputs) items.push_back(read_wav(p));
    std::optional<AudioAsset> ref;
    if (!a.reference.empty()) ref = read_wav(a.reference);

    const double fs = items.front().fs;
    std::size_t n = items.front().samples.size();
    for (const auto& it : items) {
        if (it.fs != fs) throw DataError("cli", it.source + " is at a different sample rate than " + items.front().source);
        n = std::min(n, it.samples.size());
    }
    if (ref) {
        if (ref->fs != fs) throw DataError("cli", "reference sample rate differs from the inputs");
        n = std::min(n, ref->samples.size());
    }
    auto as_double = [n](const AudioAsset& x) { return std::vector<double>(x.samples.begin(), x.samples.begin() + static_cast<std::ptrdiff_t>(n)); };

    const fs::path dir = a.out;
    fs::create_directories(dir);
    BarkOptions bark_opts;
    bark_opts.fft_size = a.fft_size;
    std::vector<EnvelopeSeries> envs;
    std::vector<BarkEnvelope> barks;
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto x = as_double(items[i]);
        envs.push_back(temporal_envelope(x, fs, a.window, a.hop));
        barks.push_back(bark_envelope(x, fs, bark_opts));
        if (a.spectrograms) {
            const auto s = log_spectrogram(x, fs, a.fft_size, a.spec_hop);
            const auto stem = std::to_string(i) + "_" + fs::path(a.inputs[i]).stem().string();
            write_pgm(dir / (stem + ".pgm"), s);
            write_grid(dir / (stem + ".spectrogram.tsv"), s);
        }
    }
    std::vector<std::vector<double>> env_rows, bark_rows;
    for (const auto& e : envs) env_rows.push_back(e.values);
    for (const auto& b : barks) bark_rows.push_back(b.band_db);
    write_table(dir / "envelopes.tsv", env_rows);
    write_table(dir / "bark_db.tsv", bark_rows);
    write_table(dir / "bark_edges.tsv", {barks.front().band_edges});

    json summary{{"items", items.size()}, {"fs", fs}, {"samples", n}, {"window", a.window}};
    std::optional<DeviationMode> mode;
    if (ref) {
        mode = DeviationMode::reference;
    } else if (!ref && items.size() >= 2) {
        mode = DeviationMode::all_pairs;
    } else {
        spdlog::info("analyze: deviation needs a reference or two or more inputs; skipped");
    }
    if (mode) {
        std::vector<double> env_dev, bark_dev;
        if (*mode == DeviationMode::reference) {
            const auto x = as_double(*ref);
            const auto re = temporal_envelope(x, fs, a.window, a.hop);
            const auto rb = bark_envelope(x, fs, bark_opts);
            env_dev = pairwise_deviation_std(envs, *mode, &re);
            bark_dev = pairwise_deviation_std(barks, *mode, &rb);
        } else {
            env_dev = pairwise_deviation_std(envs, *mode);
            bark_dev = pairwise_deviation_std(barks, *mode);
        }
        write_table(dir / "envelope_deviation.tsv", {env_dev});
        write_table(dir / "bark_deviation.tsv", {bark_dev});
        summary["mode"] = *mode == DeviationMode::reference ? "reference" : "all_pairs";
        summary["envelope_deviation_mean"] = mean_of(env_dev);
        summary["bark_deviation_mean_db"] = mean_of(bark_dev);
    }
    std::ofstream(dir / "summary.json") << summary.dump(2) << '\n';
    out << summary.dump(2) << '\n';
    return kOk;
}

int cmd_info(const Args& a, std::ostream& out) {
    if (a.checkpoint.empty()) usage("--checkpoint is required");
    auto meta = checkpoint_metadata(a.checkpoint);
    // generator states are only meaningful to a resumed run
    meta.erase("rng_state");
    meta.erase("data_state");
    meta["sha256"] = sha256_file(a.checkpoint);
    out << meta.dump(2) << '\n';
    return kOk;
}

// ---------------------------------------------------------------------------

void setup_logging(std::ostream& err) {
    auto sink = std::make_shared<spdlog::sinks::ostream_sink_mt>(err);
    auto logger = std::make_shared<spdlog::logger>("shellac", sink);
    logger->set_pattern("[%l] %v");
    auto level = spdlog::level::info;
    if (const char* env = std::getenv("SHELLAC_LOG_LEVEL")) {
        level = spdlog::level::from_str(env);
        // from_str maps unknown names to off; treat that as a typo rather than silence
        if (level == spdlog::level::off && std::string(env) != "off") level = spdlog::level::info;
    }
    logger->set_level(level);
    spdlog::set_default_logger(logger);
}

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

int fail(std::ostream& err, const std::string& what, int code) {
    err << "shellac: " << one_line(what) << '\n';
    return code;
}

void add_shared(CLI::App* s, Args& a, bool with_seed = true) {
    s->add_option("-c,--config", a.config, "JSON config file");
    s->add_option("--set", a.overrides, "Override a config key, e.g. training.learning_rate=2e-4")->take_all();
    if (with_seed) s->add_option("--seed", a.seed, "Random seed (default: from the config)");
}

void add_sampling(CLI::App* s, Args& a) {
    s->add_option("--checkpoint", a.checkpoint, "Trained model checkpoint")->required();
    s->add_option("--steps", a.steps, "Reverse diffusion steps T (default 150)")->check(CLI::PositiveNumber);
    s->add_option("--weights", a.weights, "ema or raw")->check(CLI::IsMember({"ema", "raw"}));
    s->add_option("--threads", a.threads, "Worker threads")->check(CLI::PositiveNumber);
    auto* clip = s->add_option("--clip-denoised", a.clip, "Bound on the clean estimate at each step (default 10)")
                     ->check(CLI::PositiveNumber);
    s->add_flag("--no-clip", a.no_clip, "Use the unbounded reverse step")->excludes(clip);
}

void add_guide_source(CLI::App* s, Args& a) {
    s->add_option("--guide", a.guide, "Guide WAV (first frame is used)");
    s->add_option("--guide-preset", a.guide_preset, "Synthesize the guide from a preset");
    s->add_option("--guide-seed", a.guide_seed, "Seed for a synthesized guide");
    s->add_flag("--normalize-guide", a.normalize_guide, "Apply the training normalization to the guide");
}

void add_output(CLI::App* s, Args& a, const std::string& what) {
    s->add_option("-o,--out", a.out, what)->required();
    s->add_option("--format", a.format, "float32 or pcm16")->check(CLI::IsMember({"float32", "pcm16"}));
}

}  // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    setup_logging(err);
    Args a;
    for (int i = 1; i < argc; ++i) a.command_line += (i > 1 ? " " : "") + std::string(argv[i]);
    a.command_line = "shellac " + a.command_line;

    CLI::App app{"Gramophone record noise synthesis with a waveform diffusion model", "shellac"};
    app.require_subcommand(1, 1);

    auto* train = app.add_subcommand("train", "Train a denoiser on a WAV corpus (Alg. 1)");
    add_shared(train, a);
    train->add_option("-o,--out", a.out, "Checkpoint path (rewritten at every save)")->required();
    train->add_option("--manifest", a.manifest, "Corpus manifest: one WAV path per line");
    train->add_option("--iterations", a.iterations, "Total iterations")->check(CLI::NonNegativeNumber);
    train->add_option("--resume", a.resume, "Continue from a checkpoint");
    train->add_option("--progress", a.progress, "JSONL progress log (default <out>.progress.jsonl)");
    train->add_option("--threads", a.threads, "Worker threads for batch items")->check(CLI::PositiveNumber);

    auto* sample = app.add_subcommand("sample", "Unconditional sampling (Alg. 2)");
    add_shared(sample, a);
    add_sampling(sample, a);
    add_output(sample, a, "Output WAV");
    sample->add_option("--count", a.count, "Number of frames; seeds run from --seed upward")->check(CLI::PositiveNumber);

    auto* guided = app.add_subcommand("guided", "Guided sampling from a truncation step (Alg. 3)");
    add_shared(guided, a);
    add_sampling(guided, a);
    add_output(guided, a, "Output WAV");
    add_guide_source(guided, a);
    guided->add_option("--tau0", a.tau0, "Truncation step, e.g. 0.33, 0.5, 0.66")->check(CLI::Range(0.0, 1.0));
    guided->add_option("--tau-p", a.tau_p, "Optional bifurcation step")->check(CLI::Range(0.0, 1.0));
    guided->add_option("--count", a.count, "Number of frames; seeds run from --seed upward")->check(CLI::PositiveNumber);
    guided->add_option("--guide-out", a.guide_out, "Also write the guide actually used");

    auto* variations = app.add_subcommand("variations", "Bifurcated revolutions assembled into a track (Eq. 17)");
    add_shared(variations, a);
    add_sampling(variations, a);
    add_output(variations, a, "Output track WAV");
    add_guide_source(variations, a);
    variations->add_option("--tau0", a.tau0, "Start from a perturbed guide at this step")->check(CLI::Range(0.0, 1.0));
    variations->add_option("--tau-p", a.tau_p, "Bifurcation step (default 0.33)")->check(CLI::Range(0.0, 1.0));
    variations->add_option("--revolutions", a.revolutions, "Number of revolutions N (default 4)")->check(CLI::PositiveNumber);
    variations->add_option("--duration", a.duration, "Track length in seconds (default N revolutions)")->check(CLI::PositiveNumber);
    variations->add_option("--overlap", a.overlap, "Crossfade between revolutions, seconds")->check(CLI::NonNegativeNumber);
    variations->add_option("--frames-dir", a.frames_dir, "Also write each revolution here");

    auto* synth = app.add_subcommand("guide-synth", "Render a guide from a preset or the config's guide section");
    add_shared(synth, a);
    add_output(synth, a, "Output WAV");
    synth->add_option("--preset", a.preset, "filtered-noise-thumps or hiss-clicks");
    synth->add_option("--fs", a.fs, "Sample rate (default data.fs)")->check(CLI::PositiveNumber);
    synth->add_option("--length", a.length, "Seconds (default one revolution)")->check(CLI::PositiveNumber);

    auto* analyze = app.add_subcommand("analyze", "Envelopes, deviation profiles and spectrograms of WAV files");
    analyze->add_option("inputs", a.inputs, "Input WAVs")->required();
    analyze->add_option("-o,--out", a.out, "Output directory")->required();
    analyze->add_option("--reference", a.reference, "Compare every input against this WAV instead of all pairs");
    analyze->add_option("--window", a.window, "Envelope window, seconds")->check(CLI::PositiveNumber);
    analyze->add_option("--hop", a.hop, "Envelope hop, seconds (default window/2)")->check(CLI::PositiveNumber);
    analyze->add_option("--fft-size", a.fft_size, "FFT size for Bark envelopes and spectrograms");
    analyze->add_option("--spectrogram-hop", a.spec_hop, "Spectrogram hop in samples");
    analyze->add_flag("--spectrograms", a.spectrograms, "Write a PGM image and TSV grid per input");

    auto* info = app.add_subcommand("info", "Print checkpoint metadata");
    info->add_option("--checkpoint", a.checkpoint, "Checkpoint file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        return fail(err, std::string("cli: ") + e.what(), kUsage);
    }

    try {
        if (train->parsed()) return cmd_train(a);
        if (sample->parsed()) return cmd_sample(a);
        if (guided->parsed()) return cmd_guided(a);
        if (variations->parsed()) return cmd_variations(a);
        if (synth->parsed()) return cmd_guide_synth(a);
        if (analyze->parsed()) return cmd_analyze(a, out);
        if (info->parsed()) return cmd_info(a, out);
        return fail(err, "cli: no command", kUsage);
    } catch (const UsageError& e) {
        return fail(err, e.what(), kUsage);
    } catch (const NumericError& e) {
        return fail(err, e.what(), kNumeric);
    } catch (const DataError& e) {
        return fail(err, e.what(), kData);
    } catch (const nlohmann::json::exception& e) {
        return fail(err, std::string("cli: ") + e.what(), kData);
    } catch (const std::exception& e) {
        return fail(err, std::string("internal: ") + e.what(), kInternal);
    }
}

}  // namespace shellac::cli
