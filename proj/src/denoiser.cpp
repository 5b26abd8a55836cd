#include "shellac/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shellac/error.hpp"
#include "shellac/rng.hpp"
#include "shellac/schedule.hpp"

namespace shellac {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError("denoiser", what);
}

}  // namespace

NetworkConfig NetworkConfig::desk(int sample_count) {
    NetworkConfig c;
    c.sample_count = sample_count;
    c.depth = 2;
    c.channels = {8, 16};
    c.downsample_factors = {2, 17};
    c.dilation_pattern = {1, 2, 4};
    c.attention_stages = {2};
    c.attention_heads = 2;
    c.rff_dim = 8;
    c.mlp_dims = {32, 32};
    return c;
}

int NetworkConfig::total_stride() const {
    int p = 1;
    for (int f : downsample_factors) p *= f;
    return p;
}

void NetworkConfig::validate() const {
    require(depth >= 1, "depth must be >= 1");
    require(static_cast<int>(channels.size()) == depth, "channels needs one entry per stage");
    require(static_cast<int>(downsample_factors.size()) == depth,
            "downsample_factors needs one entry per stage");
    for (int c : channels) require(c >= 1, "channel counts must be positive");
    for (int f : downsample_factors) require(f >= 1, "downsample factors must be >= 1");
    require(sample_count >= 1, "sample_count must be positive");
    require(sample_count % total_stride() == 0,
            "sample_count " + std::to_string(sample_count) +
                " is not divisible by the total stride " + std::to_string(total_stride()));
    require(!dilation_pattern.empty(), "dilation_pattern must not be empty");
    for (int d : dilation_pattern) require(d >= 1, "dilations must be >= 1");
    require(kernel_size >= 1 && kernel_size % 2 == 1, "kernel_size must be odd");
    require(attention_heads >= 1, "attention_heads must be >= 1");
    for (int s : attention_stages) {
        require(s >= 1 && s <= depth, "attention stage " + std::to_string(s) + " outside 1..depth");
        require(channels[s - 1] % attention_heads == 0,
                "attention stage " + std::to_string(s) + " channels not divisible by heads");
    }
    require(rff_dim >= 1, "rff_dim must be >= 1");
    require(rff_scale > 0.0, "rff_scale must be positive");
    require(!mlp_dims.empty(), "mlp_dims must not be empty");
    for (int m : mlp_dims) require(m >= 1, "mlp_dims must be positive");
}

// ---------------------------------------------------------------------------

std::size_t ParameterSet::scalar_count() const {
    std::size_t n = 0;
    for (const auto& a : arrays) n += a.data.size();
    return n;
}

const ParamArray& ParameterSet::at(const std::string& name) const {
    for (const auto& a : arrays) {
        if (a.name == name) return a;
    }
    throw UsageError("denoiser", "no parameter named " + name);
}

bool ParameterSet::all_finite() const {
    auto finite = [](const std::vector<double>& v) {
        return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
    };
    return std::all_of(arrays.begin(), arrays.end(), [&](const auto& a) { return finite(a.data); }) &&
           std::all_of(ema.begin(), ema.end(), finite);
}

// ---------------------------------------------------------------------------

std::vector<double> rff_embed(double sigma, std::span<const double> frequencies) {
    require(sigma >= 0.0 && sigma <= 1.0, "noise level outside [0,1]");
    const std::size_t n = frequencies.size();
    std::vector<double> out(2 * n);
    for (std::size_t k = 0; k < n; ++k) {
        const double arg = 2.0 * std::numbers::pi * frequencies[k] * sigma;
        out[k] = std::cos(arg);
        out[n + k] = std::sin(arg);
    }
    return out;
}

std::vector<double> film_modulate(std::span<const double> features, std::span<const double> scale,
                                  std::span<const double> shift) {
    require(scale.size() == shift.size() && !scale.empty(), "film scale/shift size mismatch");
    require(features.size() % scale.size() == 0, "film channel count mismatch");
    const std::size_t ch = scale.size();
    const std::size_t len = features.size() / ch;
    std::vector<double> out(features.size());
    for (std::size_t c = 0; c < ch; ++c) {
        for (std::size_t n = 0; n < len; ++n) {
            out[c * len + n] = scale[c] * features[c * len + n] + shift[c];
        }
    }
    return out;
}

AttentionWeights AttentionWeights::random(int channels, std::uint64_t seed) {
    Rng rng(seed);
    AttentionWeights w;
    w.channels = channels;
    const double bound = 1.0 / std::sqrt(static_cast<double>(channels));
    auto fill = [&](std::vector<double>& v, std::size_t n) {
        v.resize(n);
        for (auto& x : v) x = rng.uniform(-bound, bound);
    };
    const std::size_t cc = static_cast<std::size_t>(channels) * channels;
    fill(w.wq, cc);
    fill(w.bq, channels);
    fill(w.wk, cc);
    fill(w.bk, channels);
    fill(w.wv, cc);
    fill(w.bv, channels);
    fill(w.wo, cc);
    fill(w.bo, channels);
    return w;
}

namespace {

struct Projected {
    ad::Var q, k, v;
};

Projected project_qkv(ad::Tape& t, ad::Var x, const AttentionWeights& w) {
    const int c = w.channels;
    auto proj = [&](const std::vector<double>& wm, const std::vector<double>& b) {
        return ad::conv1d(t, x, t.constant(c, c, wm), t.constant(c, 1, b), 1, 1);
    };
    return {proj(w.wq, w.bq), proj(w.wk, w.bk), proj(w.wv, w.bv)};
}

int frames_of(std::span<const double> features, const AttentionWeights& w) {
    require(w.channels >= 1 && features.size() % w.channels == 0,
            "attention features do not match the channel count");
    return static_cast<int>(features.size() / w.channels);
}

}  // namespace

std::vector<double> self_attention(std::span<const double> features, int heads,
                                   const AttentionWeights& w) {
    const int len = frames_of(features, w);
    require(heads >= 1 && w.channels % heads == 0, "channels not divisible by heads");
    ad::Tape t(false);
    ad::Var x = t.constant(w.channels, len, features);
    auto p = project_qkv(t, x, w);
    ad::Var a = ad::attention(t, p.q, p.k, p.v, heads);
    ad::Var o = ad::conv1d(t, a, t.constant(w.channels, w.channels, w.wo),
                           t.constant(w.channels, 1, w.bo), 1, 1);
    auto out = t.value(o);
    return {out.begin(), out.end()};
}

std::vector<double> self_attention_weights(std::span<const double> features, int heads,
                                           const AttentionWeights& w) {
    const int len = frames_of(features, w);
    require(heads >= 1 && w.channels % heads == 0, "channels not divisible by heads");
    ad::Tape t(false);
    ad::Var x = t.constant(w.channels, len, features);
    auto p = project_qkv(t, x, w);
    return ad::attention_probabilities(t.value(p.q), t.value(p.k), w.channels, len, heads);
}

// ---------------------------------------------------------------------------

UNet::UNet(NetworkConfig config) : config_(std::move(config)) {
    config_.validate();
    const int k = config_.kernel_size;
    auto add = [&](std::string name, int rows, int cols, int fan_in, bool trainable = true,
                   bool rff = false) {
        index_[name] = static_cast<int>(layout_.size());
        layout_.push_back({std::move(name), rows, cols, fan_in, trainable, rff});
    };
    auto add_conv = [&](const std::string& p, int cout, int cin, int kernel) {
        add(p + ".w", cout, cin * kernel, cin * kernel);
        add(p + ".b", cout, 1, cin * kernel);
    };

    add("rff.freq", config_.rff_dim, 1, 1, false, true);
    int in = 2 * config_.rff_dim;
    for (std::size_t i = 0; i < config_.mlp_dims.size(); ++i) {
        const int m = config_.mlp_dims[i];
        add("mlp" + std::to_string(i) + ".w", m, in, in);
        add("mlp" + std::to_string(i) + ".b", m, 1, in);
        in = m;
    }
    const int emb = in;

    auto add_block = [&](const std::string& p, int cin, int cout) {
        add_conv(p + ".proj", cout, cin, 1);
        for (std::size_t j = 0; j < config_.dilation_pattern.size(); ++j) {
            const std::string s = std::to_string(j);
            add_conv(p + ".conv" + s, cout, cout, k);
            add(p + ".film" + s + ".w", 2 * cout, emb, emb);
            add(p + ".film" + s + ".b", 2 * cout, 1, emb);
        }
    };
    auto add_attention = [&](const std::string& p, int c) {
        for (const char* n : {".q", ".k", ".v", ".o"}) add_conv(p + n, c, c, 1);
    };

    const auto& ch = config_.channels;
    add_conv("in", ch[0], 1, k);
    for (int i = 1; i <= config_.depth; ++i) {
        const std::string s = std::to_string(i);
        const int c = ch[i - 1];
        add_block("enc" + s, i == 1 ? ch[0] : ch[i - 2], c);
        const int f = config_.downsample_factors[i - 1];
        if (f > 1) add_conv("down" + s, c, c, f);
        if (config_.attention_stages.contains(i)) add_attention("attn_enc" + s, c);
    }
    add_block("mid", ch.back(), ch.back());
    for (int i = config_.depth; i >= 1; --i) {
        const std::string s = std::to_string(i);
        const int c = ch[i - 1];
        if (config_.attention_stages.contains(i)) add_attention("attn_dec" + s, c);
        const int f = config_.downsample_factors[i - 1];
        if (f > 1) {
            // transposed conv weights are cin x (cout * f)
            add("up" + s + ".w", c, c * f, c);
            add("up" + s + ".b", c, 1, c);
        }
        add_block("dec" + s, 2 * c, i == 1 ? ch[0] : ch[i - 2]);
    }
    add_conv("out", 1, ch[0], k);
}

ParameterSet UNet::init_params(std::uint64_t seed) const {
    Rng rng(seed);
    ParameterSet ps;
    ps.arrays.reserve(layout_.size());
    for (const auto& l : layout_) {
        ParamArray a{l.name, l.rows, l.cols, std::vector<double>(static_cast<std::size_t>(l.rows) * l.cols),
                     l.trainable};
        if (l.rff) {
            for (auto& v : a.data) v = rng.normal(0.0, config_.rff_scale);
        } else {
            const double bound = 1.0 / std::sqrt(static_cast<double>(l.fan_in));
            for (auto& v : a.data) v = rng.uniform(-bound, bound);
        }
        ps.arrays.push_back(std::move(a));
    }
    ps.ema.reserve(ps.arrays.size());
    for (const auto& a : ps.arrays) ps.ema.push_back(a.data);
    return ps;
}

void UNet::check_layout(const ParameterSet& params) const {
    if (params.arrays.size() != layout_.size() || params.ema.size() != layout_.size()) {
        throw DataError("denoiser", "parameter set has " + std::to_string(params.arrays.size()) +
                                        " arrays, network expects " +
                                        std::to_string(layout_.size()));
    }
    for (std::size_t i = 0; i < layout_.size(); ++i) {
        const auto& a = params.arrays[i];
        const auto& l = layout_[i];
        const std::size_t n = static_cast<std::size_t>(l.rows) * l.cols;
        if (a.name != l.name || a.rows != l.rows || a.cols != l.cols || a.data.size() != n ||
            params.ema[i].size() != n) {
            throw DataError("denoiser", "parameter " + l.name + " does not match the layout");
        }
    }
}

ad::Var UNet::forward(ad::Tape& t, const ParameterSet& params, WeightSource source,
                      std::span<const double> z, double sigma, std::vector<ad::Var>* leaves) const {
    require(z.size() == static_cast<std::size_t>(config_.sample_count),
            "frame length " + std::to_string(z.size()) + " != sample_count " +
                std::to_string(config_.sample_count));
    require(sigma >= 0.0 && sigma <= 1.0, "noise level outside [0,1]");

    auto P = [&](const std::string& name) {
        const int idx = index_.at(name);
        const auto& arr = params.arrays[idx];
        std::span<const double> data = source == WeightSource::ema
                                           ? std::span<const double>(params.ema[idx])
                                           : std::span<const double>(arr.data);
        ad::Var v = arr.trainable ? t.parameter(arr.rows, arr.cols, data)
                                  : t.constant(arr.rows, arr.cols, data);
        if (leaves) (*leaves)[idx] = v;
        return v;
    };
    const int k = config_.kernel_size;
    auto conv = [&](ad::Var x, const std::string& p, int kernel, int dilation) {
        ad::Var w = P(p + ".w");
        return ad::conv1d(t, x, w, P(p + ".b"), kernel, dilation);
    };

    // noise-level embedding
    ad::Var freq = P("rff.freq");
    auto fv = t.value(freq);
    const std::vector<double> freqs(fv.begin(), fv.end());
    auto e0 = rff_embed(sigma, freqs);
    const int emb_rows = static_cast<int>(e0.size());
    ad::Var emb = t.constant(emb_rows, 1, std::move(e0));
    for (std::size_t i = 0; i < config_.mlp_dims.size(); ++i) {
        const std::string p = "mlp" + std::to_string(i);
        ad::Var w = P(p + ".w");
        emb = ad::silu(t, ad::linear(t, emb, w, P(p + ".b")));
    }

    auto block = [&](const std::string& p, ad::Var x) {
        ad::Var h = conv(x, p + ".proj", 1, 1);
        for (std::size_t j = 0; j < config_.dilation_pattern.size(); ++j) {
            const std::string s = std::to_string(j);
            ad::Var u = conv(h, p + ".conv" + s, k, config_.dilation_pattern[j]);
            ad::Var fw = P(p + ".film" + s + ".w");
            ad::Var gb = ad::linear(t, emb, fw, P(p + ".film" + s + ".b"));
            u = ad::silu(t, ad::film(t, u, gb));
            h = ad::add(t, h, u);
        }
        return h;
    };
    auto attend = [&](const std::string& p, ad::Var x) {
        ad::Var q = conv(x, p + ".q", 1, 1);
        ad::Var kk = conv(x, p + ".k", 1, 1);
        ad::Var v = conv(x, p + ".v", 1, 1);
        ad::Var a = ad::attention(t, q, kk, v, config_.attention_heads);
        return ad::add(t, x, conv(a, p + ".o", 1, 1));
    };

    ad::Var h = conv(t.constant(1, config_.sample_count, z), "in", k, 1);
    std::vector<ad::Var> skips;
    for (int i = 1; i <= config_.depth; ++i) {
        const std::string s = std::to_string(i);
        h = block("enc" + s, h);
        skips.push_back(h);
        const int f = config_.downsample_factors[i - 1];
        if (f > 1) {
            ad::Var w = P("down" + s + ".w");
            h = ad::conv_down(t, h, w, P("down" + s + ".b"), f);
        }
        if (config_.attention_stages.contains(i)) h = attend("attn_enc" + s, h);
    }
    h = block("mid", h);
    for (int i = config_.depth; i >= 1; --i) {
        const std::string s = std::to_string(i);
        if (config_.attention_stages.contains(i)) h = attend("attn_dec" + s, h);
        const int f = config_.downsample_factors[i - 1];
        if (f > 1) {
            ad::Var w = P("up" + s + ".w");
            h = ad::conv_up(t, h, w, P("up" + s + ".b"), f);
        }
        h = ad::concat_rows(t, h, skips[i - 1]);
        h = block("dec" + s, h);
    }
    return conv(h, "out", k, 1);
}

std::vector<double> UNet::predict_noise(const ParameterSet& params, std::span<const double> z,
                                        double sigma, WeightSource source) const {
    check_layout(params);
    ad::Tape t(false);
    ad::Var out = forward(t, params, source, z, sigma, nullptr);
    auto v = t.value(out);
    for (double x : v) {
        if (!std::isfinite(x)) {
            throw NumericError("denoiser", "non-finite network output at sigma=" +
                                               std::to_string(sigma));
        }
    }
    return {v.begin(), v.end()};
}

double UNet::loss_and_grad(const ParameterSet& params, std::span<const double> z, double sigma,
                           std::span<const double> eps_true, Gradients& grads) const {
    check_layout(params);
    require(eps_true.size() == z.size(), "target length mismatch");
    ad::Tape t(true);
    std::vector<ad::Var> leaves(layout_.size());
    ad::Var out = forward(t, params, WeightSource::raw, z, sigma, &leaves);
    ad::Var loss = ad::mse(t, out, eps_true);
    t.backward(loss);
    grads.resize(layout_.size());
    for (std::size_t i = 0; i < layout_.size(); ++i) {
        auto& g = grads[i];
        g.assign(params.arrays[i].data.size(), 0.0);
        if (params.arrays[i].trainable && t.has_grad(leaves[i])) {
            auto src = t.grad(leaves[i]);
            std::copy(src.begin(), src.end(), g.begin());
        }
    }
    return t.value(loss)[0];
}

// ---------------------------------------------------------------------------

UNetDenoiser::UNetDenoiser(NetworkConfig config, ParameterSet params, WeightSource source)
    : net_(std::move(config)), params_(std::move(params)), source_(source) {
    net_.check_layout(params_);
}

std::size_t UNetDenoiser::frame_length() const {
    return static_cast<std::size_t>(net_.config().sample_count);
}

std::vector<double> UNetDenoiser::predict_noise(std::span<const double> z, double sigma) const {
    return net_.predict_noise(params_, z, sigma, source_);
}

GaussianOracleDenoiser::GaussianOracleDenoiser(std::size_t frame_length, double data_variance)
    : length_(frame_length), variance_(data_variance) {
    require(data_variance > 0.0, "data variance must be positive");
}

std::vector<double> GaussianOracleDenoiser::predict_noise(std::span<const double> z,
                                                          double sigma) const {
    require(z.size() == length_, "frame length mismatch");
    const double a = std::max(std::sqrt(std::max(0.0, 1.0 - sigma * sigma)), schedule::kAlphaMin);
    const double c = sigma / (a * a * variance_ + sigma * sigma);
    std::vector<double> out(z.size());
    for (std::size_t i = 0; i < z.size(); ++i) out[i] = c * z[i];
    return out;
}

}  // namespace shellac
