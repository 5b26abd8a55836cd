#pragma once

#include <cstdint>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "shellac/autodiff.hpp"

namespace shellac {

/// Topology of the time-domain U-Net.
struct NetworkConfig {
    int sample_count = 16960;
    int depth = 6;
    std::vector<int> channels{32, 64, 64, 128, 128, 256};
    std::vector<int> downsample_factors{2, 2, 2, 2, 2, 2};
    std::vector<int> dilation_pattern{1, 2, 4};
    int kernel_size = 3;
    std::set<int> attention_stages{3, 4, 5};
    int attention_heads = 4;
    int rff_dim = 32;
    double rff_scale = 16.0;
    std::vector<int> mlp_dims{128, 128};

    /// Small network for CPU training on 8 kHz frames (6154 = 2 * 17 * 181).
    static NetworkConfig desk(int sample_count = 6154);

    int total_stride() const;

    /// Throws UsageError naming the first violated constraint.
    void validate() const;

    bool operator==(const NetworkConfig&) const = default;
};

/// One named learnable (or frozen) array.
struct ParamArray {
    std::string name;
    int rows = 0;
    int cols = 0;
    std::vector<double> data;
    bool trainable = true;
};

/// All network weights plus their exponential-moving-average shadow.
struct ParameterSet {
    std::vector<ParamArray> arrays;
    std::vector<std::vector<double>> ema;

    std::size_t size() const noexcept { return arrays.size(); }
    std::size_t scalar_count() const;
    const ParamArray& at(const std::string& name) const;
    bool all_finite() const;
};

/// Per-array gradients, same layout as ParameterSet::arrays.
using Gradients = std::vector<std::vector<double>>;

enum class WeightSource { raw, ema };

/// [cos(2 pi f_k sigma)..., sin(2 pi f_k sigma)...], length 2 * frequencies.size().
std::vector<double> rff_embed(double sigma, std::span<const double> frequencies);

/// out[c, t] = scale[c] * features[c, t] + shift[c]; features is channels x frames row-major.
std::vector<double> film_modulate(std::span<const double> features, std::span<const double> scale,
                                  std::span<const double> shift);

struct AttentionWeights {
    int channels = 0;
    std::vector<double> wq, bq, wk, bk, wv, bv, wo, bo;  // channels x channels, channels

    static AttentionWeights random(int channels, std::uint64_t seed);
};

/// Multi-head self-attention over the frame axis (no residual, no positional encoding).
std::vector<double> self_attention(std::span<const double> features, int heads,
                                   const AttentionWeights& w);

/// Softmax weights used by `self_attention`, heads x frames x frames.
std::vector<double> self_attention_weights(std::span<const double> features, int heads,
                                           const AttentionWeights& w);

/// Noise estimator eps_hat(z, sigma).
class Denoiser {
public:
    virtual ~Denoiser() = default;
    virtual std::size_t frame_length() const = 0;
    virtual std::vector<double> predict_noise(std::span<const double> z, double sigma) const = 0;
};

/// Time-domain U-Net with RFF/MLP noise-level embedding, FiLM conditioned
/// residual blocks of dilated circular convolutions, strided down/up sampling
/// with skip connections and self-attention after the configured stages.
class UNet {
public:
    explicit UNet(NetworkConfig config);

    const NetworkConfig& config() const noexcept { return config_; }

    /// Deterministic in (config, seed). EMA shadow starts equal to the weights.
    ParameterSet init_params(std::uint64_t seed) const;

    /// Throws DataError if `params` does not match this network's layout.
    void check_layout(const ParameterSet& params) const;

    std::vector<double> predict_noise(const ParameterSet& params, std::span<const double> z,
                                      double sigma, WeightSource source = WeightSource::raw) const;

    /// MSE between eps_hat(z, sigma) and eps_true; gradients w.r.t. raw weights are
    /// written into `grads` (resized to the layout). Frozen arrays get zero gradient.
    double loss_and_grad(const ParameterSet& params, std::span<const double> z, double sigma,
                         std::span<const double> eps_true, Gradients& grads) const;

private:
    struct Layout {
        std::string name;
        int rows;
        int cols;
        int fan_in;
        bool trainable;
        bool rff;
    };

    ad::Var forward(ad::Tape& tape, const ParameterSet& params, WeightSource source,
                    std::span<const double> z, double sigma, std::vector<ad::Var>* leaves) const;

    NetworkConfig config_;
    std::vector<Layout> layout_;
    std::map<std::string, int> index_;
};

/// U-Net bound to a parameter set.
class UNetDenoiser final : public Denoiser {
public:
    UNetDenoiser(NetworkConfig config, ParameterSet params, WeightSource source = WeightSource::ema);

    std::size_t frame_length() const override;
    std::vector<double> predict_noise(std::span<const double> z, double sigma) const override;

    const UNet& net() const noexcept { return net_; }
    const ParameterSet& params() const noexcept { return params_; }

private:
    UNet net_;
    ParameterSet params_;
    WeightSource source_;
};

/// Closed-form optimal noise estimator for i.i.d. N(0, variance) data:
/// eps_hat = sigma z / (alpha^2 variance + sigma^2).
class GaussianOracleDenoiser final : public Denoiser {
public:
    GaussianOracleDenoiser(std::size_t frame_length, double data_variance);

    std::size_t frame_length() const override { return length_; }
    std::vector<double> predict_noise(std::span<const double> z, double sigma) const override;

private:
    std::size_t length_;
    double variance_;
};

}  // namespace shellac
