#pragma once

#include <optional>
#include <string>
#include <vector>

#include "shellac/rng.hpp"

namespace shellac {

/// Low-frequency pulse: a noisy attack followed by the damped tail of Eqs. (1)-(2).
struct ThumpParams {
    double a_tail = 0.3;
    double tau_e = 0.06;           // envelope time constant, s
    double f_max = 80.0;           // Hz
    double f_min = 25.0;           // Hz
    double tau_f = 0.03;           // frequency decay constant, s
    double onset = 0.1;            // s from frame start
    double attack_duration = 0.002;
    double attack_variance = 0.02;

    void validate(double fs) const;
    bool operator==(const ThumpParams&) const = default;
};

struct EqBand {
    double center = 1000.0;  // Hz
    double gain_db = 0.0;
    double q = 1.0;
    bool operator==(const EqBand&) const = default;
};

struct ShelfBand {
    double corner = 1000.0;  // Hz
    double gain_db = 0.0;
    bool operator==(const ShelfBand&) const = default;
};

/// Slow sinusoidal gain wobble for within-revolution variation.
struct GainModulation {
    double rate = 1.3;  // Hz
    double depth_db = 1.0;
    bool operator==(const GainModulation&) const = default;
};

struct HissSpec {
    std::vector<EqBand> eq_bands;
    std::optional<ShelfBand> lowshelf;
    std::optional<ShelfBand> highshelf;
    double level_db = 0.0;
    std::optional<GainModulation> time_variation;

    void validate(double fs) const;
    bool operator==(const HissSpec&) const = default;
};

enum class AmplitudeKind { lognormal, uniform, constant };

/// Click peak amplitude distribution. lognormal: exp(N(mu, sigma));
/// uniform: U(low, high); constant: low.
struct AmplitudeDistribution {
    AmplitudeKind kind = AmplitudeKind::lognormal;
    double mu = -4.0;
    double sigma = 1.0;
    double low = 0.0;
    double high = 0.0;
    bool operator==(const AmplitudeDistribution&) const = default;
};

struct ClickSpec {
    double rate = 2000.0;  // events per second
    double min_duration = 20e-6;
    double max_duration = 4e-3;
    AmplitudeDistribution amplitude;
    double decay = 5.0;  // e-folds of the kernel window over one duration

    void validate(double fs) const;
    bool operator==(const ClickSpec&) const = default;
};

struct HumSpec {
    double fundamental = 50.0;
    std::vector<double> harmonic_amplitudes{0.01};
    std::uint64_t phase_seed = 0;

    void validate(double fs) const;
    bool operator==(const HumSpec&) const = default;
};

struct RumbleSpec {
    double cutoff = 30.0;  // Hz
    double level_db = -30.0;

    void validate(double fs) const;
    bool operator==(const RumbleSpec&) const = default;
};

struct GuideSpec {
    std::optional<HissSpec> hiss;
    std::vector<ThumpParams> thumps;
    std::optional<ClickSpec> clicks;
    std::optional<HumSpec> hum;
    std::optional<RumbleSpec> rumble;
    double fs = 22050.0;
    std::optional<double> length;  // seconds; one revolution when unset
    double headroom_db = 0.0;

    std::size_t sample_count() const;
    void validate() const;
    bool operator==(const GuideSpec&) const = default;

    /// "filtered-noise-thumps": EQ'd hiss plus two thumps, the guide used for listening tests.
    /// "hiss-clicks": EQ'd hiss plus crackle, the default synthetic training corpus.
    static GuideSpec preset(const std::string& name, double fs);
};

/// Second-order section, a0 normalized to 1.
struct Biquad {
    double b0 = 1.0, b1 = 0.0, b2 = 0.0, a1 = 0.0, a2 = 0.0;

    /// RBJ cookbook designs; throw UsageError for unrealizable parameters.
    static Biquad peaking(double fs, double center, double gain_db, double q);
    static Biquad lowshelf(double fs, double corner, double gain_db);
    static Biquad highshelf(double fs, double corner, double gain_db);
    static Biquad lowpass(double fs, double cutoff, double q);

    bool stable() const;
    /// |H(e^{j 2 pi f / fs})|
    double magnitude(double fs, double f) const;
    /// Direct form II transposed, in place, zero initial state.
    void process(std::vector<double>& x) const;
};

/// Tail of Eq. (1): A e^{-n/(fs tau_e)} sin(2 pi n f_n / fs - pi/4), n counted from onset.
double thump_tail(const ThumpParams& p, double fs, double n);
/// Eq. (2): f_n = (f_max - f_min) e^{-n/(fs tau_f)} + f_min.
double thump_frequency(const ThumpParams& p, double fs, double n);

/// Attack noise over attack_duration, then an equal-power 1 ms crossfade into the tail.
std::vector<double> synth_thump(const ThumpParams& p, double fs, std::size_t length, Rng& rng);

std::vector<double> synth_hiss(const HissSpec& spec, double fs, std::size_t length, Rng& rng);

struct ClickEvent {
    std::size_t onset = 0;   // sample
    double duration = 0.0;   // seconds
    std::size_t samples = 0;
    double amplitude = 0.0;  // signed peak
};

struct ClickRender {
    std::vector<double> frame;
    std::vector<ClickEvent> events;
};

/// Poisson onsets at spec.rate, log-uniform durations, bipolar decaying kernels.
ClickRender render_clicks(const ClickSpec& spec, double fs, std::size_t length, Rng& rng);
std::vector<double> synth_clicks(const ClickSpec& spec, double fs, std::size_t length, Rng& rng);

std::vector<double> synth_hum(const HumSpec& spec, double fs, std::size_t length);

/// White noise through a 4th-order Butterworth low-pass, scaled by level_db.
std::vector<double> synth_rumble(const RumbleSpec& spec, double fs, std::size_t length, Rng& rng);

/// Draws one 64-bit base seed from `rng`; component k then renders with
/// Rng::derive(base, k): hiss 0, thump i 1 + i, clicks 1000, rumble 1001.
/// Hum uses its own phase seed. The sum is scaled by the headroom gain.
std::vector<double> compose_guide(const GuideSpec& spec, Rng& rng);

}  // namespace shellac
