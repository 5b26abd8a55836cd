#include "shellac/config.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <set>
#include <sstream>

#include "shellac/error.hpp"

namespace shellac {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw UsageError("config", what); }

std::string join(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

// Typed view of one JSON object that remembers which keys were consumed.
class Section {
public:
    Section(const json& j, std::string path) : j_(j), path_(std::move(path)) {
        if (!j_.is_object()) fail(path_ + ": expected an object");
    }

    bool has(const std::string& key) const { return j_.contains(key); }

    const json* raw(const std::string& key) {
        used_.insert(key);
        auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    std::string where(const std::string& key) const { return join(path_, key); }

    void get(const std::string& key, double& out) {
        if (const json* v = raw(key)) out = as_double(*v, where(key));
    }
    void get(const std::string& key, int& out) {
        if (const json* v = raw(key)) out = static_cast<int>(as_integer(*v, where(key), std::numeric_limits<int>::min(),
                                                                         std::numeric_limits<int>::max()));
    }
    void get(const std::string& key, long& out) {
        if (const json* v = raw(key)) {
            out = static_cast<long>(as_integer(*v, where(key), std::numeric_limits<long>::min(),
                                               std::numeric_limits<long>::max()));
        }
    }
    void get(const std::string& key, std::uint64_t& out) {
        if (const json* v = raw(key)) {
            if (v->is_number_unsigned()) {
                out = v->get<std::uint64_t>();
            } else {
                out = static_cast<std::uint64_t>(as_integer(*v, where(key), 0, std::numeric_limits<long long>::max()));
            }
        }
    }
    void get(const std::string& key, bool& out) {
        if (const json* v = raw(key)) {
            if (!v->is_boolean()) fail(where(key) + ": expected true or false");
            out = v->get<bool>();
        }
    }
    void get(const std::string& key, std::string& out) {
        if (const json* v = raw(key)) {
            if (!v->is_string()) fail(where(key) + ": expected a string");
            out = v->get<std::string>();
        }
    }
    void get(const std::string& key, std::vector<int>& out) {
        if (const json* v = raw(key)) {
            if (!v->is_array()) fail(where(key) + ": expected an array of integers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                out.push_back(static_cast<int>(as_integer((*v)[i], where(key) + "[" + std::to_string(i) + "]",
                                                          std::numeric_limits<int>::min(),
                                                          std::numeric_limits<int>::max())));
            }
        }
    }
    void get(const std::string& key, std::vector<double>& out) {
        if (const json* v = raw(key)) {
            if (!v->is_array()) fail(where(key) + ": expected an array of numbers");
            out.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                out.push_back(as_double((*v)[i], where(key) + "[" + std::to_string(i) + "]"));
            }
        }
    }
    void get(const std::string& key, std::set<int>& out) {
        std::vector<int> v(out.begin(), out.end());
        get(key, v);
        out = {v.begin(), v.end()};
    }
    void get(const std::string& key, std::optional<double>& out) {
        if (const json* v = raw(key)) {
            if (v->is_null()) {
                out.reset();
            } else {
                out = as_double(*v, where(key));
            }
        }
    }

    void finish() const {
        for (auto it = j_.begin(); it != j_.end(); ++it) {
            if (!used_.count(it.key())) fail("unknown key '" + where(it.key()) + "'");
        }
    }

    static double as_double(const json& v, const std::string& where) {
        if (v.is_number()) return v.get<double>();
        if (v.is_string()) {
            const auto s = v.get<std::string>();
            if (s == "-inf") return -std::numeric_limits<double>::infinity();
            if (s == "inf") return std::numeric_limits<double>::infinity();
        }
        fail(where + ": expected a number");
    }

    static long long as_integer(const json& v, const std::string& where, long long lo, long long hi) {
        long long out = 0;
        if (v.is_number_integer()) {
            if (v.is_number_unsigned() && v.get<std::uint64_t>() > static_cast<std::uint64_t>(hi)) {
                fail(where + ": integer out of range");
            }
            out = v.get<long long>();
        } else if (v.is_number_float() && std::nearbyint(v.get<double>()) == v.get<double>() &&
                   std::abs(v.get<double>()) < 9e15) {
            out = static_cast<long long>(v.get<double>());
        } else {
            fail(where + ": expected an integer");
        }
        if (out < lo || out > hi) fail(where + ": integer out of range");
        return out;
    }

private:
    const json& j_;
    std::string path_;
    std::set<std::string> used_;
};

template <typename T, typename Fn>
T validated(const std::string& section, T value, Fn&& check) {
    try {
        check(value);
    } catch (const UsageError& e) {
        fail(section + ": " + e.what());
    }
    return value;
}

std::pair<std::size_t, std::size_t> line_column(const std::string& text, std::size_t byte) {
    std::size_t line = 1, col = 1;
    for (std::size_t i = 0; i + 1 < byte && i < text.size(); ++i) {
        if (text[i] == '\n') {
            ++line;
            col = 1;
        } else {
            ++col;
        }
    }
    return {line, col};
}

json parse_json(const std::string& text, const std::string& origin) {
    try {
        return json::parse(text, nullptr, true, /*ignore_comments=*/true);
    } catch (const json::parse_error& e) {
        const auto [line, col] = line_column(text, e.byte);
        std::string msg = e.what();
        // drop nlohmann's "[json.exception.parse_error.101] parse error at line 1, column 2: " prefix
        if (auto pos = msg.find(": "); pos != std::string::npos && msg.rfind("[json.exception", 0) == 0) {
            msg = msg.substr(pos + 2);
        }
        fail(origin + ":" + std::to_string(line) + ":" + std::to_string(col) + ": " + msg);
    }
}

json shelf_json(const ShelfBand& s) { return {{"corner", s.corner}, {"gain_db", s.gain_db}}; }

ShelfBand shelf_from(const json& j, const std::string& path) {
    Section s(j, path);
    ShelfBand b;
    s.get("corner", b.corner);
    s.get("gain_db", b.gain_db);
    s.finish();
    return b;
}

const char* kind_name(AmplitudeKind k) {
    switch (k) {
        case AmplitudeKind::lognormal: return "lognormal";
        case AmplitudeKind::uniform: return "uniform";
        case AmplitudeKind::constant: return "constant";
    }
    return "lognormal";
}

json thump_json(const ThumpParams& t) {
    return {{"a_tail", t.a_tail},   {"tau_e", t.tau_e},
            {"f_max", t.f_max},     {"f_min", t.f_min},
            {"tau_f", t.tau_f},     {"onset", t.onset},
            {"attack_duration", t.attack_duration}, {"attack_variance", t.attack_variance}};
}

ThumpParams thump_from(const json& j, const std::string& path) {
    Section s(j, path);
    ThumpParams t;
    s.get("a_tail", t.a_tail);
    s.get("tau_e", t.tau_e);
    s.get("f_max", t.f_max);
    s.get("f_min", t.f_min);
    s.get("tau_f", t.tau_f);
    s.get("onset", t.onset);
    s.get("attack_duration", t.attack_duration);
    s.get("attack_variance", t.attack_variance);
    s.finish();
    return t;
}

HissSpec hiss_from(const json& j, const std::string& path, HissSpec h) {
    Section s(j, path);
    if (const json* v = s.raw("eq_bands")) {
        if (!v->is_array()) fail(s.where("eq_bands") + ": expected an array");
        h.eq_bands.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
            Section b((*v)[i], s.where("eq_bands") + "[" + std::to_string(i) + "]");
            EqBand e;
            b.get("center", e.center);
            b.get("gain_db", e.gain_db);
            b.get("q", e.q);
            b.finish();
            h.eq_bands.push_back(e);
        }
    }
    for (const char* key : {"lowshelf", "highshelf"}) {
        if (const json* v = s.raw(key)) {
            auto& slot = std::string(key) == "lowshelf" ? h.lowshelf : h.highshelf;
            if (v->is_null()) {
                slot.reset();
            } else {
                slot = shelf_from(*v, s.where(key));
            }
        }
    }
    s.get("level_db", h.level_db);
    if (const json* v = s.raw("time_variation")) {
        if (v->is_null()) {
            h.time_variation.reset();
        } else {
            Section t(*v, s.where("time_variation"));
            GainModulation g = h.time_variation.value_or(GainModulation{});
            t.get("rate", g.rate);
            t.get("depth_db", g.depth_db);
            t.finish();
            h.time_variation = g;
        }
    }
    s.finish();
    return h;
}

ClickSpec clicks_from(const json& j, const std::string& path, ClickSpec c) {
    Section s(j, path);
    s.get("rate", c.rate);
    s.get("min_duration", c.min_duration);
    s.get("max_duration", c.max_duration);
    s.get("decay", c.decay);
    if (const json* v = s.raw("amplitude")) {
        Section a(*v, s.where("amplitude"));
        std::string kind = kind_name(c.amplitude.kind);
        a.get("kind", kind);
        if (kind == "lognormal") {
            c.amplitude.kind = AmplitudeKind::lognormal;
        } else if (kind == "uniform") {
            c.amplitude.kind = AmplitudeKind::uniform;
        } else if (kind == "constant") {
            c.amplitude.kind = AmplitudeKind::constant;
        } else {
            fail(a.where("kind") + ": expected lognormal, uniform or constant");
        }
        a.get("mu", c.amplitude.mu);
        a.get("sigma", c.amplitude.sigma);
        a.get("low", c.amplitude.low);
        a.get("high", c.amplitude.high);
        a.finish();
    }
    s.finish();
    return c;
}

}  // namespace

void DataConfig::validate() const {
    if (!(fs > 0.0) || !std::isfinite(fs)) throw UsageError("dataset", "fs must be > 0");
    if (!(rpm > 0.0) || !std::isfinite(rpm)) throw UsageError("dataset", "rpm must be > 0");
    normalization.validate();
}

int network_frame_length(const NetworkConfig& c, double fs, double rpm) {
    const int stride = c.total_stride();
    const int l = frame_length(fs, rpm);
    return std::max(stride, l / stride * stride);
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) fail("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    json* node = &doc;
    std::size_t start = 0;
    for (;;) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) fail("override '" + assignment + "' has an empty key component");
        if (!node->is_object()) fail("override '" + key + "': '" + part + "' is inside a non-object value");
        if (dot == std::string::npos) {
            json parsed = json::parse(value, nullptr, false);
            (*node)[part] = parsed.is_discarded() ? json(value) : parsed;
            return;
        }
        json& child = (*node)[part];
        if (child.is_null()) child = json::object();
        node = &child;
        start = dot + 1;
    }
}

json to_json(const NetworkConfig& c) {
    return {{"sample_count", c.sample_count},
            {"depth", c.depth},
            {"channels", c.channels},
            {"downsample_factors", c.downsample_factors},
            {"dilation_pattern", c.dilation_pattern},
            {"kernel_size", c.kernel_size},
            {"attention_stages", std::vector<int>(c.attention_stages.begin(), c.attention_stages.end())},
            {"attention_heads", c.attention_heads},
            {"rff_dim", c.rff_dim},
            {"rff_scale", c.rff_scale},
            {"mlp_dims", c.mlp_dims}};
}

NetworkConfig network_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    NetworkConfig c;
    std::string preset = "full";
    s.get("preset", preset);
    if (preset == "desk") {
        c = NetworkConfig::desk();
    } else if (preset != "full") {
        fail(s.where("preset") + ": expected 'full' or 'desk'");
    }
    s.get("sample_count", c.sample_count);
    s.get("depth", c.depth);
    s.get("channels", c.channels);
    s.get("downsample_factors", c.downsample_factors);
    s.get("dilation_pattern", c.dilation_pattern);
    s.get("kernel_size", c.kernel_size);
    s.get("attention_stages", c.attention_stages);
    s.get("attention_heads", c.attention_heads);
    s.get("rff_dim", c.rff_dim);
    s.get("rff_scale", c.rff_scale);
    s.get("mlp_dims", c.mlp_dims);
    s.finish();
    return c;
}

json to_json(const TrainingConfig& c) {
    return {{"learning_rate", c.learning_rate},
            {"ema_rate", c.ema_rate},
            {"ema_warmup", c.ema_warmup},
            {"batch_size", c.batch_size},
            {"total_iterations", c.total_iterations},
            {"adam_beta1", c.adam_beta1},
            {"adam_beta2", c.adam_beta2},
            {"adam_epsilon", c.adam_epsilon},
            {"seed", c.seed},
            {"checkpoint_interval", c.checkpoint_interval},
            {"grad_clip", c.grad_clip},
            {"tau_min", c.tau_min},
            {"tau_max", c.tau_max},
            {"threads", c.threads}};
}

TrainingConfig training_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    TrainingConfig c;
    s.get("learning_rate", c.learning_rate);
    s.get("ema_rate", c.ema_rate);
    s.get("ema_warmup", c.ema_warmup);
    s.get("batch_size", c.batch_size);
    s.get("total_iterations", c.total_iterations);
    s.get("adam_beta1", c.adam_beta1);
    s.get("adam_beta2", c.adam_beta2);
    s.get("adam_epsilon", c.adam_epsilon);
    s.get("seed", c.seed);
    s.get("checkpoint_interval", c.checkpoint_interval);
    s.get("grad_clip", c.grad_clip);
    s.get("tau_min", c.tau_min);
    s.get("tau_max", c.tau_max);
    s.get("threads", c.threads);
    s.finish();
    return c;
}

json to_json(const DataConfig& c) {
    return {{"manifest", c.manifest},
            {"fs", c.fs},
            {"rpm", c.rpm},
            {"normalization",
             {{"gain_db", c.normalization.gain_db},
              {"b_chi", c.normalization.b_chi},
              {"mode", c.normalization.mode == NormalizationMode::literal ? "literal" : "consistent"}}}};
}

DataConfig data_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    DataConfig c;
    s.get("manifest", c.manifest);
    s.get("fs", c.fs);
    s.get("rpm", c.rpm);
    if (const json* v = s.raw("normalization")) {
        Section n(*v, s.where("normalization"));
        n.get("gain_db", c.normalization.gain_db);
        n.get("b_chi", c.normalization.b_chi);
        std::string mode = "consistent";
        n.get("mode", mode);
        if (mode == "consistent") {
            c.normalization.mode = NormalizationMode::consistent;
        } else if (mode == "literal") {
            c.normalization.mode = NormalizationMode::literal;
        } else {
            fail(n.where("mode") + ": expected 'consistent' or 'literal'");
        }
        n.finish();
    }
    s.finish();
    return c;
}

json to_json(const SamplerRun& c) {
    return {{"steps", c.steps},
            {"tau0", c.tau0},
            {"tau_p", c.tau_p ? json(*c.tau_p) : json(nullptr)},
            {"revolutions", c.revolutions},
            {"seed", c.seed},
            {"threads", c.threads},
            {"clip_denoised", c.clip_denoised ? json(*c.clip_denoised) : json(nullptr)}};
}

SamplerRun sampler_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    SamplerRun c;
    s.get("steps", c.steps);
    s.get("tau0", c.tau0);
    s.get("tau_p", c.tau_p);
    s.get("revolutions", c.revolutions);
    s.get("seed", c.seed);
    s.get("threads", c.threads);
    s.get("clip_denoised", c.clip_denoised);
    s.finish();
    return c;
}

json to_json(const GuideSpec& g) {
    json j{{"fs", g.fs}, {"headroom_db", g.headroom_db}};
    j["length"] = g.length ? json(*g.length) : json(nullptr);
    if (g.hiss) {
        json bands = json::array();
        for (const auto& b : g.hiss->eq_bands) bands.push_back({{"center", b.center}, {"gain_db", b.gain_db}, {"q", b.q}});
        json h{{"eq_bands", bands}, {"level_db", g.hiss->level_db}};
        h["lowshelf"] = g.hiss->lowshelf ? shelf_json(*g.hiss->lowshelf) : json(nullptr);
        h["highshelf"] = g.hiss->highshelf ? shelf_json(*g.hiss->highshelf) : json(nullptr);
        h["time_variation"] = g.hiss->time_variation
                                  ? json{{"rate", g.hiss->time_variation->rate},
                                         {"depth_db", g.hiss->time_variation->depth_db}}
                                  : json(nullptr);
        j["hiss"] = h;
    }
    json thumps = json::array();
    for (const auto& t : g.thumps) thumps.push_back(thump_json(t));
    j["thumps"] = thumps;
    if (g.clicks) {
        const auto& c = *g.clicks;
        j["clicks"] = {{"rate", c.rate},
                       {"min_duration", c.min_duration},
                       {"max_duration", c.max_duration},
                       {"decay", c.decay},
                       {"amplitude",
                        {{"kind", kind_name(c.amplitude.kind)},
                         {"mu", c.amplitude.mu},
                         {"sigma", c.amplitude.sigma},
                         {"low", c.amplitude.low},
                         {"high", c.amplitude.high}}}};
    }
    if (g.hum) {
        j["hum"] = {{"fundamental", g.hum->fundamental},
                    {"harmonic_amplitudes", g.hum->harmonic_amplitudes},
                    {"phase_seed", g.hum->phase_seed}};
    }
    if (g.rumble) {
        const double level = g.rumble->level_db;
        j["rumble"] = {{"cutoff", g.rumble->cutoff},
                       {"level_db", std::isinf(level) ? json(level < 0 ? "-inf" : "inf") : json(level)}};
    }
    return j;
}

GuideSpec guide_from_json(const json& j, const std::string& path) {
    Section s(j, path);
    GuideSpec g;
    s.get("fs", g.fs);
    if (const json* v = s.raw("preset")) {
        if (!v->is_string()) fail(s.where("preset") + ": expected a string");
        try {
            g = GuideSpec::preset(v->get<std::string>(), g.fs);
        } catch (const UsageError& e) {
            fail(s.where("preset") + ": " + e.what());
        }
    }
    s.get("length", g.length);
    s.get("headroom_db", g.headroom_db);
    if (const json* v = s.raw("hiss")) {
        if (v->is_null()) {
            g.hiss.reset();
        } else {
            g.hiss = hiss_from(*v, s.where("hiss"), g.hiss.value_or(HissSpec{}));
        }
    }
    if (const json* v = s.raw("thumps")) {
        if (!v->is_array()) fail(s.where("thumps") + ": expected an array");
        g.thumps.clear();
        for (std::size_t i = 0; i < v->size(); ++i) {
            g.thumps.push_back(thump_from((*v)[i], s.where("thumps") + "[" + std::to_string(i) + "]"));
        }
    }
    if (const json* v = s.raw("clicks")) {
        if (v->is_null()) {
            g.clicks.reset();
        } else {
            g.clicks = clicks_from(*v, s.where("clicks"), g.clicks.value_or(ClickSpec{}));
        }
    }
    if (const json* v = s.raw("hum")) {
        if (v->is_null()) {
            g.hum.reset();
        } else {
            Section h(*v, s.where("hum"));
            HumSpec hum = g.hum.value_or(HumSpec{});
            h.get("fundamental", hum.fundamental);
            h.get("harmonic_amplitudes", hum.harmonic_amplitudes);
            h.get("phase_seed", hum.phase_seed);
            h.finish();
            g.hum = hum;
        }
    }
    if (const json* v = s.raw("rumble")) {
        if (v->is_null()) {
            g.rumble.reset();
        } else {
            Section r(*v, s.where("rumble"));
            RumbleSpec rumble = g.rumble.value_or(RumbleSpec{});
            r.get("cutoff", rumble.cutoff);
            r.get("level_db", rumble.level_db);
            r.finish();
            g.rumble = rumble;
        }
    }
    s.finish();
    return g;
}

ConfigTree parse_config_text(const std::string& text, const std::vector<std::string>& overrides,
                             const std::string& origin) {
    json doc = text.find_first_not_of(" \t\r\n") == std::string::npos ? json::object() : parse_json(text, origin);
    if (!doc.is_object()) fail(origin + ": top level must be an object");
    for (const auto& o : overrides) apply_override(doc, o);

    ConfigTree t;
    Section top(doc, "");
    if (const json* v = top.raw("data")) t.data = data_from_json(*v);
    if (const json* v = top.raw("network")) {
        t.network = network_from_json(*v);
        if (!v->contains("sample_count")) t.network.sample_count = network_frame_length(t.network, t.data.fs, t.data.rpm);
    } else {
        t.network.sample_count = network_frame_length(t.network, t.data.fs, t.data.rpm);
    }
    if (const json* v = top.raw("training")) t.training = training_from_json(*v);
    if (const json* v = top.raw("sampler")) t.sampler = sampler_from_json(*v);
    if (const json* v = top.raw("guide")) {
        json g = *v;
        // a guide inherits the data sample rate unless it sets its own
        if (g.is_object() && !g.contains("fs")) g["fs"] = t.data.fs;
        t.guide = guide_from_json(g);
    }
    top.finish();

    validated("data", t.data, [](const DataConfig& c) { c.validate(); });
    validated("network", t.network, [](const NetworkConfig& c) { c.validate(); });
    validated("training", t.training, [](const TrainingConfig& c) { c.validate(); });
    validated("sampler", t.sampler, [](const SamplerRun& c) { c.validate(); });
    if (t.guide) validated("guide", *t.guide, [](const GuideSpec& c) { c.validate(); });
    return t;
}

ConfigTree parse_config(const std::filesystem::path& path, const std::vector<std::string>& overrides) {
    std::ifstream in(path);
    if (!in) throw IoError("config", "cannot open " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), overrides, path.string());
}

}  // namespace shellac
