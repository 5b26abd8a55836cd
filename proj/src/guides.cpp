#include "shellac/guides.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

#include "shellac/dataset.hpp"
#include "shellac/error.hpp"

namespace shellac {

namespace {

constexpr double kPi = std::numbers::pi;

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError("guides", what);
}

double db_to_linear(double db) { return std::pow(10.0, db / 20.0); }

std::vector<double> white(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    rng.fill_normal(v);
    return v;
}

// Filters `n` samples of white noise after discarding a warm-up prefix so the
// output is stationary from the first sample.
std::vector<double> filtered_noise(const std::vector<Biquad>& cascade, std::size_t n, std::size_t warmup,
                                   Rng& rng) {
    auto x = white(n + warmup, rng);
    for (const auto& s : cascade) s.process(x);
    return {x.begin() + static_cast<std::ptrdiff_t>(warmup), x.end()};
}

std::vector<Biquad> butterworth4(double fs, double cutoff) {
    return {Biquad::lowpass(fs, cutoff, 1.0 / (2.0 * std::cos(kPi / 8.0))),
            Biquad::lowpass(fs, cutoff, 1.0 / (2.0 * std::cos(3.0 * kPi / 8.0)))};
}

Biquad checked(Biquad b, const std::string& what) {
    require(b.stable() && std::isfinite(b.b0) && std::isfinite(b.b1) && std::isfinite(b.b2),
            what + ": unstable or non-finite filter coefficients");
    return b;
}

}  // namespace

// ---------------------------------------------------------------------------
// Biquad

Biquad Biquad::peaking(double fs, double center, double gain_db, double q) {
    require(fs > 0.0 && center > 0.0 && center < fs / 2.0, "peaking band center must lie in (0, fs/2)");
    require(q > 0.0 && std::isfinite(q), "peaking band Q must be > 0");
    require(std::isfinite(gain_db), "peaking band gain must be finite");
    const double a = std::pow(10.0, gain_db / 40.0);
    const double w0 = 2.0 * kPi * center / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha / a;
    return checked({(1.0 + alpha * a) / a0, -2.0 * c / a0, (1.0 - alpha * a) / a0, -2.0 * c / a0,
                    (1.0 - alpha / a) / a0},
                   "peaking band");
}

Biquad Biquad::lowshelf(double fs, double corner, double gain_db) {
    require(fs > 0.0 && corner > 0.0 && corner < fs / 2.0, "low shelf corner must lie in (0, fs/2)");
    require(std::isfinite(gain_db), "low shelf gain must be finite");
    const double a = std::pow(10.0, gain_db / 40.0);
    const double w0 = 2.0 * kPi * corner / fs;
    const double c = std::cos(w0);
    const double k = 2.0 * std::sqrt(a) * std::sin(w0) / 2.0 * std::numbers::sqrt2;
    const double a0 = (a + 1.0) + (a - 1.0) * c + k;
    return checked({a * ((a + 1.0) - (a - 1.0) * c + k) / a0, 2.0 * a * ((a - 1.0) - (a + 1.0) * c) / a0,
                    a * ((a + 1.0) - (a - 1.0) * c - k) / a0, -2.0 * ((a - 1.0) + (a + 1.0) * c) / a0,
                    ((a + 1.0) + (a - 1.0) * c - k) / a0},
                   "low shelf");
}

Biquad Biquad::highshelf(double fs, double corner, double gain_db) {
    require(fs > 0.0 && corner > 0.0 && corner < fs / 2.0, "high shelf corner must lie in (0, fs/2)");
    require(std::isfinite(gain_db), "high shelf gain must be finite");
    const double a = std::pow(10.0, gain_db / 40.0);
    const double w0 = 2.0 * kPi * corner / fs;
    const double c = std::cos(w0);
    const double k = 2.0 * std::sqrt(a) * std::sin(w0) / 2.0 * std::numbers::sqrt2;
    const double a0 = (a + 1.0) - (a - 1.0) * c + k;
    return checked({a * ((a + 1.0) + (a - 1.0) * c + k) / a0, -2.0 * a * ((a - 1.0) + (a + 1.0) * c) / a0,
                    a * ((a + 1.0) + (a - 1.0) * c - k) / a0, 2.0 * ((a - 1.0) - (a + 1.0) * c) / a0,
                    ((a + 1.0) - (a - 1.0) * c - k) / a0},
                   "high shelf");
}

Biquad Biquad::lowpass(double fs, double cutoff, double q) {
    require(fs > 0.0 && cutoff > 0.0 && cutoff < fs / 2.0, "low-pass cutoff must lie in (0, fs/2)");
    require(q > 0.0, "low-pass Q must be > 0");
    const double w0 = 2.0 * kPi * cutoff / fs;
    const double alpha = std::sin(w0) / (2.0 * q);
    const double c = std::cos(w0);
    const double a0 = 1.0 + alpha;
    return checked({(1.0 - c) / 2.0 / a0, (1.0 - c) / a0, (1.0 - c) / 2.0 / a0, -2.0 * c / a0, (1.0 - alpha) / a0},
                   "low-pass");
}

bool Biquad::stable() const { return std::abs(a2) < 1.0 && std::abs(a1) < 1.0 + a2; }

double Biquad::magnitude(double fs, double f) const {
    const std::complex<double> z1 = std::polar(1.0, -2.0 * kPi * f / fs);
    const std::complex<double> z2 = z1 * z1;
    return std::abs((b0 + b1 * z1 + b2 * z2) / (1.0 + a1 * z1 + a2 * z2));
}

void Biquad::process(std::vector<double>& x) const {
    double s1 = 0.0, s2 = 0.0;
    for (double& v : x) {
        const double in = v;
        const double out = b0 * in + s1;
        s1 = b1 * in - a1 * out + s2;
        s2 = b2 * in - a2 * out;
        v = out;
    }
}

// ---------------------------------------------------------------------------
// Validation

void ThumpParams::validate(double fs) const {
    require(std::isfinite(a_tail), "thump: A_tail must be finite");
    require(tau_e > 0.0 && tau_f > 0.0, "thump: tau_e and tau_f must be > 0");
    require(f_min > 0.0 && f_max >= f_min, "thump: need f_max >= f_min > 0");
    require(f_max < fs / 2.0, "thump: f_max must be below fs/2");
    require(onset >= 0.0, "thump: onset must be >= 0");
    require(attack_duration >= 0.0 && attack_variance >= 0.0, "thump: attack duration/variance must be >= 0");
}

void HissSpec::validate(double fs) const {
    require(std::isfinite(level_db), "hiss: level must be finite");
    for (const auto& b : eq_bands) Biquad::peaking(fs, b.center, b.gain_db, b.q);
    if (lowshelf) Biquad::lowshelf(fs, lowshelf->corner, lowshelf->gain_db);
    if (highshelf) Biquad::highshelf(fs, highshelf->corner, highshelf->gain_db);
    if (time_variation) {
        require(time_variation->rate >= 0.0 && std::isfinite(time_variation->depth_db),
                "hiss: time variation needs rate >= 0 and finite depth");
    }
}

void ClickSpec::validate(double fs) const {
    require(rate >= 0.0 && std::isfinite(rate), "clicks: rate must be >= 0");
    require(min_duration > 0.0 && max_duration >= min_duration, "clicks: need 0 < min_duration <= max_duration");
    require(max_duration * fs < 1e7, "clicks: max_duration is unreasonably long");
    require(decay >= 0.0, "clicks: decay must be >= 0");
    switch (amplitude.kind) {
        case AmplitudeKind::lognormal:
            require(amplitude.sigma >= 0.0 && std::isfinite(amplitude.mu), "clicks: lognormal needs sigma >= 0");
            break;
        case AmplitudeKind::uniform:
            require(amplitude.low <= amplitude.high, "clicks: uniform needs low <= high");
            break;
        case AmplitudeKind::constant:
            require(std::isfinite(amplitude.low), "clicks: constant amplitude must be finite");
            break;
    }
}

void HumSpec::validate(double fs) const {
    require(fundamental > 0.0, "hum: fundamental must be > 0");
    require(fundamental * static_cast<double>(harmonic_amplitudes.size()) < fs / 2.0,
            "hum: highest harmonic aliases (must stay below fs/2)");
}

void RumbleSpec::validate(double fs) const {
    require(cutoff > 0.0 && cutoff < fs / 2.0, "rumble: cutoff must lie in (0, fs/2)");
    require(!std::isnan(level_db) && level_db < 1e3, "rumble: level must be a number");
}

std::size_t GuideSpec::sample_count() const {
    if (length) return static_cast<std::size_t>(std::llround(fs * *length));
    return static_cast<std::size_t>(frame_length(fs));
}

void GuideSpec::validate() const {
    require(fs > 0.0 && std::isfinite(fs), "guide: fs must be > 0");
    require(!length || *length > 0.0, "guide: length must be > 0");
    require(std::isfinite(headroom_db), "guide: headroom must be finite");
    require(hiss || !thumps.empty() || clicks || hum || rumble, "guide: at least one component is required");
    std::string errors;
    auto check = [&](const std::string& name, auto&& fn) {
        try {
            fn();
        } catch (const UsageError& e) {
            errors += (errors.empty() ? "" : "; ") + name + ": " + e.what();
        }
    };
    if (hiss) check("hiss", [&] { hiss->validate(fs); });
    for (std::size_t i = 0; i < thumps.size(); ++i) {
        check("thumps[" + std::to_string(i) + "]", [&] {
            thumps[i].validate(fs);
            require(thumps[i].onset * fs < static_cast<double>(sample_count()), "onset beyond the frame");
        });
    }
    if (clicks) check("clicks", [&] { clicks->validate(fs); });
    if (hum) check("hum", [&] { hum->validate(fs); });
    if (rumble) check("rumble", [&] { rumble->validate(fs); });
    if (!errors.empty()) throw UsageError("guides", errors);
}

GuideSpec GuideSpec::preset(const std::string& name, double fs) {
    GuideSpec g;
    g.fs = fs;
    const double hs = std::min(6000.0, 0.3 * fs);
    if (name == "filtered-noise-thumps") {
        g.hiss = HissSpec{{{250.0, 6.0, 0.7}, {std::min(2500.0, 0.25 * fs), -4.0, 1.0}},
                          std::nullopt,
                          ShelfBand{hs, -6.0},
                          -32.0,
                          std::nullopt};
        ThumpParams a;
        a.onset = 0.12;
        ThumpParams b;
        b.onset = 0.48;
        b.a_tail = 0.18;
        b.f_max = 65.0;
        b.f_min = 22.0;
        b.tau_e = 0.045;
        g.thumps = {a, b};
        g.rumble = RumbleSpec{25.0, -42.0};
    } else if (name == "hiss-clicks") {
        g.hiss = HissSpec{{{400.0, 4.0, 0.8}}, std::nullopt, ShelfBand{hs, -4.0}, -30.0, GainModulation{1.3, 1.0}};
        g.clicks = ClickSpec{};
        g.clicks->amplitude.mu = -4.5;
    } else {
        throw UsageError("guides", "unknown preset '" + name + "' (filtered-noise-thumps, hiss-clicks)");
    }
    return g;
}

// ---------------------------------------------------------------------------
// Components

double thump_frequency(const ThumpParams& p, double fs, double n) {
    return (p.f_max - p.f_min) * std::exp(-n / (fs * p.tau_f)) + p.f_min;
}

double thump_tail(const ThumpParams& p, double fs, double n) {
    const double fn = thump_frequency(p, fs, n);
    return p.a_tail * std::exp(-n / (fs * p.tau_e)) * std::sin(2.0 * kPi * n * fn / fs - kPi / 4.0);
}

std::vector<double> synth_thump(const ThumpParams& p, double fs, std::size_t length, Rng& rng) {
    p.validate(fs);
    const auto onset = static_cast<std::size_t>(std::llround(p.onset * fs));
    if (onset >= length) throw UsageError("guides", "thump onset lies beyond the frame");
    std::vector<double> out(length, 0.0);
    const std::size_t span = length - onset;
    const auto attack = static_cast<std::size_t>(std::llround(p.attack_duration * fs));
    const std::size_t fade = attack > 0 ? static_cast<std::size_t>(std::max<long long>(1, std::llround(1e-3 * fs))) : 0;
    const double sd = std::sqrt(p.attack_variance);
    for (std::size_t n = 0; n < span; ++n) {
        const double tail = thump_tail(p, fs, static_cast<double>(n));
        if (n < attack) {
            out[onset + n] = sd * rng.normal();
        } else if (n < attack + fade) {
            const double u = (static_cast<double>(n - attack) + 0.5) / static_cast<double>(fade);
            out[onset + n] = std::cos(kPi / 2.0 * u) * sd * rng.normal() + std::sin(kPi / 2.0 * u) * tail;
        } else {
            out[onset + n] = tail;
        }
    }
    return out;
}

std::vector<double> synth_hiss(const HissSpec& spec, double fs, std::size_t length, Rng& rng) {
    spec.validate(fs);
    std::vector<Biquad> cascade;
    if (spec.lowshelf) cascade.push_back(Biquad::lowshelf(fs, spec.lowshelf->corner, spec.lowshelf->gain_db));
    for (const auto& b : spec.eq_bands) cascade.push_back(Biquad::peaking(fs, b.center, b.gain_db, b.q));
    if (spec.highshelf) cascade.push_back(Biquad::highshelf(fs, spec.highshelf->corner, spec.highshelf->gain_db));

    double phase = 0.0;
    if (spec.time_variation) phase = rng.uniform(0.0, 2.0 * kPi);
    const std::size_t warmup = cascade.empty() ? 0 : std::max<std::size_t>(1024, static_cast<std::size_t>(0.25 * fs));
    auto x = filtered_noise(cascade, length, warmup, rng);

    const double level = db_to_linear(spec.level_db);
    for (std::size_t n = 0; n < x.size(); ++n) {
        double g = level;
        if (spec.time_variation) {
            const double t = static_cast<double>(n) / fs;
            g *= db_to_linear(spec.time_variation->depth_db * std::sin(2.0 * kPi * spec.time_variation->rate * t + phase));
        }
        x[n] *= g;
    }
    return x;
}

ClickRender render_clicks(const ClickSpec& spec, double fs, std::size_t length, Rng& rng) {
    spec.validate(fs);
    ClickRender r;
    r.frame.assign(length, 0.0);
    if (spec.rate == 0.0) return r;
    const double horizon = static_cast<double>(length) / fs;
    const double log_lo = std::log(spec.min_duration), log_hi = std::log(spec.max_duration);
    double t = 0.0;
    for (;;) {
        t += -std::log(1.0 - rng.uniform()) / spec.rate;
        if (t >= horizon) break;
        ClickEvent e;
        e.onset = std::min(length - 1, static_cast<std::size_t>(t * fs));
        e.duration = std::exp(rng.uniform(log_lo, log_hi));
        e.duration = std::clamp(e.duration, spec.min_duration, spec.max_duration);
        e.samples = static_cast<std::size_t>(std::max<long long>(1, std::llround(e.duration * fs)));
        double a = 0.0;
        switch (spec.amplitude.kind) {
            case AmplitudeKind::lognormal: a = std::exp(rng.normal(spec.amplitude.mu, spec.amplitude.sigma)); break;
            case AmplitudeKind::uniform: a = rng.uniform(spec.amplitude.low, spec.amplitude.high); break;
            case AmplitudeKind::constant: a = spec.amplitude.low; break;
        }
        e.amplitude = rng.uniform() < 0.5 ? -a : a;

        // Bipolar impulse (+1, -1) convolved with an exponential window, truncated to the duration.
        const double D = static_cast<double>(e.samples);
        double prev = 1.0;
        for (std::size_t n = 0; n < e.samples && e.onset + n < length; ++n) {
            const double w = std::exp(-spec.decay * static_cast<double>(n) / D);
            const double k = n == 0 ? 1.0 : w - prev;
            prev = w;
            r.frame[e.onset + n] += e.amplitude * k;
        }
        r.events.push_back(e);
    }
    return r;
}

std::vector<double> synth_clicks(const ClickSpec& spec, double fs, std::size_t length, Rng& rng) {
    return render_clicks(spec, fs, length, rng).frame;
}

std::vector<double> synth_hum(const HumSpec& spec, double fs, std::size_t length) {
    spec.validate(fs);
    Rng phases(spec.phase_seed);
    std::vector<double> phi(spec.harmonic_amplitudes.size());
    for (double& p : phi) p = phases.uniform(0.0, 2.0 * kPi);
    std::vector<double> out(length, 0.0);
    for (std::size_t k = 0; k < phi.size(); ++k) {
        const double w = 2.0 * kPi * static_cast<double>(k + 1) * spec.fundamental / fs;
        const double a = spec.harmonic_amplitudes[k];
        for (std::size_t n = 0; n < length; ++n) out[n] += a * std::sin(w * static_cast<double>(n) + phi[k]);
    }
    return out;
}

std::vector<double> synth_rumble(const RumbleSpec& spec, double fs, std::size_t length, Rng& rng) {
    spec.validate(fs);
    const auto cascade = butterworth4(fs, spec.cutoff);
    const std::size_t settle = std::max<std::size_t>(4096, static_cast<std::size_t>(40.0 * fs / spec.cutoff));

    // Normalize by the noise power gain (impulse-response energy) so level_db is the output RMS.
    std::vector<double> h(settle, 0.0);
    h[0] = 1.0;
    for (const auto& s : cascade) s.process(h);
    double energy = 0.0;
    for (double v : h) energy += v * v;

    auto x = filtered_noise(cascade, length, settle, rng);
    const double g = db_to_linear(spec.level_db) / std::sqrt(energy);
    for (double& v : x) v *= g;
    return x;
}

std::vector<double> compose_guide(const GuideSpec& spec, Rng& rng) {
    spec.validate();
    const std::size_t n = spec.sample_count();
    const std::uint64_t base = rng.engine()();
    std::vector<double> out(n, 0.0);
    auto add = [&](const std::vector<double>& c) {
        for (std::size_t i = 0; i < n; ++i) out[i] += c[i];
    };
    if (spec.hiss) {
        Rng r = Rng::derive(base, 0);
        add(synth_hiss(*spec.hiss, spec.fs, n, r));
    }
    for (std::size_t i = 0; i < spec.thumps.size(); ++i) {
        Rng r = Rng::derive(base, 1 + i);
        add(synth_thump(spec.thumps[i], spec.fs, n, r));
    }
    if (spec.clicks) {
        Rng r = Rng::derive(base, 1000);
        add(synth_clicks(*spec.clicks, spec.fs, n, r));
    }
    if (spec.hum) add(synth_hum(*spec.hum, spec.fs, n));
    if (spec.rumble) {
        Rng r = Rng::derive(base, 1001);
        add(synth_rumble(*spec.rumble, spec.fs, n, r));
    }
    if (spec.headroom_db != 0.0) {
        const double g = db_to_linear(spec.headroom_db);
        for (double& v : out) v *= g;
    }
    return out;
}

}  // namespace shellac
