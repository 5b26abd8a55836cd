#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>

#include "shellac/dataset.hpp"
#include "shellac/error.hpp"
#include "shellac/guides.hpp"
#include "oracles.hpp"

using namespace shellac;
using std::numbers::pi;

namespace {

// Eq. (1)-(2) typed out directly.
double eq1(double a, double tau_e, double fmax, double fmin, double tau_f, double fs, double n) {
    const double fn = (fmax - fmin) * std::exp(-n / (fs * tau_f)) + fmin;
    return a * std::exp(-n / (fs * tau_e)) * std::sin(2.0 * pi * n * fn / fs - pi / 4.0);
}

double max_abs(const std::vector<double>& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

}  // namespace

TEST_CASE("thump tail matches Eq. 1 sample by sample") {
    ThumpParams p;
    const double fs = 22050.0;
    for (double n = 0; n < 4000; n += 7) {
        CHECK(thump_tail(p, fs, n) == doctest::Approx(eq1(p.a_tail, p.tau_e, p.f_max, p.f_min, p.tau_f, fs, n)).epsilon(1e-12));
    }
    CHECK(thump_tail(p, fs, 0.0) == doctest::Approx(-p.a_tail * std::sqrt(2.0) / 2.0).epsilon(1e-12));
}

TEST_CASE("thump frequency decays from f_max to f_min") {
    ThumpParams p;
    const double fs = 16000.0;
    CHECK(thump_frequency(p, fs, 0.0) == doctest::Approx(p.f_max).epsilon(1e-12));
    CHECK(std::abs(thump_frequency(p, fs, 1e7) - p.f_min) < 1e-9);
    // One frequency time constant in: f_min + (f_max - f_min) / e.
    CHECK(thump_frequency(p, fs, fs * p.tau_f) == doctest::Approx(p.f_min + (p.f_max - p.f_min) / std::numbers::e).epsilon(1e-12));
}

TEST_CASE("thump envelope e-folds over tau_e") {
    ThumpParams p;
    const double fs = 22050.0;
    const double n = fs * p.tau_e;
    const double fn = thump_frequency(p, fs, n);
    const double carrier = std::sin(2.0 * pi * n * fn / fs - pi / 4.0);
    CHECK(thump_tail(p, fs, n) / carrier == doctest::Approx(p.a_tail / std::numbers::e).epsilon(1e-12));
}

TEST_CASE("synth_thump without attack starts at -A sqrt(2)/2") {
    ThumpParams p;
    p.attack_duration = 0.0;
    p.onset = 0.05;
    const double fs = 8000.0;
    Rng rng(1);
    const auto x = synth_thump(p, fs, 4000, rng);
    const auto on = static_cast<std::size_t>(std::llround(p.onset * fs));
    for (std::size_t i = 0; i < on; ++i) REQUIRE(x[i] == 0.0);
    CHECK(std::abs(x[on] - (-p.a_tail * std::sqrt(2.0) / 2.0)) < 1e-9);
    CHECK(std::abs(x[on + 100] - thump_tail(p, fs, 100.0)) < 1e-12);
}

TEST_CASE("thump attack noise has the configured variance") {
    ThumpParams p;
    p.onset = 0.0;
    p.attack_duration = 5.0;
    p.attack_variance = 0.02;
    const double fs = 22050.0;
    Rng rng(9);
    const auto x = synth_thump(p, fs, static_cast<std::size_t>(4.0 * fs), rng);
    CHECK(oracle::variance(x) == doctest::Approx(0.02).epsilon(0.02));
}

TEST_CASE("hiss with flat EQ is unit-variance white noise") {
    HissSpec spec;
    Rng rng(3);
    const auto x = synth_hiss(spec, 16000.0, 400000, rng);
    CHECK(oracle::variance(x) == doctest::Approx(1.0).epsilon(0.01));
    CHECK(std::abs(oracle::mean(x)) < 5.0 / std::sqrt(400000.0));
}

TEST_CASE("+12 dB peaking band lifts the hiss PSD by 12 dB at its center") {
    const double fs = 16000.0;
    HissSpec spec;
    spec.eq_bands = {{3000.0, 12.0, 1.0}};
    Rng rng(4);
    const auto x = synth_hiss(spec, fs, static_cast<std::size_t>(60 * fs), rng);
    // Unit white noise through a Hann window: E|X|^2 = sum w^2 = 3/8 * seg.
    const std::size_t seg = 2048;
    const double white = 0.375 * static_cast<double>(seg);
    CHECK(oracle::db(oracle::welch_at(x, fs, 3000.0, seg) / white) == doctest::Approx(12.0).epsilon(1.0 / 12.0));
    CHECK(std::abs(oracle::db(oracle::welch_at(x, fs, 7500.0, seg) / white)) < 1.0);
}

TEST_CASE("biquad magnitude agrees with a measured sine response") {
    const double fs = 16000.0;
    for (const auto& bq : {Biquad::peaking(fs, 3000.0, 12.0, 1.0), Biquad::lowshelf(fs, 500.0, -6.0),
                           Biquad::highshelf(fs, 4000.0, 8.0), Biquad::lowpass(fs, 200.0, 0.7071)}) {
        CHECK(bq.stable());
        for (double f : {100.0, 1000.0, 3000.0, 6000.0}) {
            std::vector<double> s(32000);
            for (std::size_t n = 0; n < s.size(); ++n) s[n] = std::sin(2.0 * pi * f * static_cast<double>(n) / fs);
            auto y = s;
            bq.process(y);
            // Steady-state tail only.
            const std::span<const double> ys(y.data() + 16000, 16000), ss(s.data() + 16000, 16000);
            CHECK(oracle::rms(ys) / oracle::rms(ss) == doctest::Approx(bq.magnitude(fs, f)).epsilon(2e-3));
        }
    }
    CHECK(Biquad::peaking(fs, 3000.0, 12.0, 1.0).magnitude(fs, 3000.0) == doctest::Approx(std::pow(10.0, 0.6)).epsilon(1e-12));
    CHECK(Biquad::lowshelf(fs, 500.0, -6.0).magnitude(fs, 0.0) == doctest::Approx(std::pow(10.0, -0.3)).epsilon(1e-9));
    CHECK(Biquad::highshelf(fs, 4000.0, 8.0).magnitude(fs, fs / 2) == doctest::Approx(std::pow(10.0, 0.4)).epsilon(1e-9));
    CHECK_THROWS_AS(Biquad::peaking(fs, 9000.0, 3.0, 1.0), UsageError);
    CHECK_THROWS_AS(Biquad::peaking(fs, 1000.0, 3.0, 0.0), UsageError);
}

TEST_CASE("hiss level scales the output exactly") {
    HissSpec a;
    a.eq_bands = {{800.0, 5.0, 0.9}};
    HissSpec b = a;
    b.level_db = -20.0;
    Rng ra(5), rb(5);
    const auto xa = synth_hiss(a, 22050.0, 20000, ra);
    const auto xb = synth_hiss(b, 22050.0, 20000, rb);
    for (std::size_t i = 0; i < xa.size(); i += 97) CHECK(xb[i] == doctest::Approx(0.1 * xa[i]).epsilon(1e-12));
}

TEST_CASE("click count follows the Poisson rate") {
    ClickSpec spec;
    const double fs = 44100.0;
    for (std::uint64_t seed : {1, 2, 3}) {
        Rng rng(seed);
        const auto r = render_clicks(spec, fs, static_cast<std::size_t>(fs), rng);
        const double bound = 3.0 * std::sqrt(2000.0);
        CHECK(std::abs(static_cast<double>(r.events.size()) - 2000.0) <= bound);
        std::size_t below_geo = 0;
        for (const auto& e : r.events) {
            REQUIRE(e.duration >= spec.min_duration);
            REQUIRE(e.duration <= spec.max_duration);
            REQUIRE(e.samples >= 1);
            REQUIRE(e.onset < r.frame.size());
            if (e.duration < std::sqrt(spec.min_duration * spec.max_duration)) ++below_geo;
        }
        // Log-uniform durations: half fall below the geometric mean of the range.
        CHECK(static_cast<double>(below_geo) / static_cast<double>(r.events.size()) == doctest::Approx(0.5).epsilon(0.1));
    }
}

TEST_CASE("isolated click has peak amplitude and near-zero DC") {
    ClickSpec spec;
    spec.rate = 20.0;
    spec.amplitude.kind = AmplitudeKind::constant;
    spec.amplitude.low = 0.5;
    const double fs = 22050.0;
    Rng rng(6);
    const auto r = render_clicks(spec, fs, 5 * static_cast<std::size_t>(fs), rng);
    REQUIRE(r.events.size() > 20);
    int checked = 0;
    for (std::size_t i = 0; i + 1 < r.events.size(); ++i) {
        const auto& e = r.events[i];
        if (e.onset + e.samples >= r.events[i + 1].onset) continue;
        if (i > 0 && r.events[i - 1].onset + r.events[i - 1].samples >= e.onset) continue;
        CHECK(std::abs(e.amplitude) == 0.5);
        CHECK(r.frame[e.onset] == e.amplitude);
        double sum = 0.0;
        for (std::size_t n = 0; n < e.samples; ++n) sum += r.frame[e.onset + n];
        const double d = static_cast<double>(e.samples);
        CHECK(sum == doctest::Approx(e.amplitude * std::exp(-spec.decay * (d - 1.0) / d)).epsilon(1e-9));
        ++checked;
    }
    CHECK(checked > 10);
}

TEST_CASE("zero click rate renders silence") {
    ClickSpec spec;
    spec.rate = 0.0;
    Rng rng(1);
    const auto r = render_clicks(spec, 8000.0, 8000, rng);
    CHECK(r.events.empty());
    CHECK(max_abs(r.frame) == 0.0);
}

TEST_CASE("hum RMS and harmonic purity") {
    const double fs = 8000.0;
    HumSpec one{50.0, {1.0}, 7};
    CHECK(oracle::rms(synth_hum(one, fs, 8000)) == doctest::Approx(std::sqrt(2.0) / 2.0).epsilon(1e-9));

    HumSpec three{50.0, {0.5, 0.25, 0.1}, 3};
    const auto x = synth_hum(three, fs, 8000);
    // One-second frame: 1 Hz bins, harmonics fall on bins exactly.
    double harmonic = 0.0, other = 0.0;
    for (int k = 1; k <= 400; ++k) {
        const double p = std::norm(oracle::dft_at(x, k / fs));
        if (k % 50 == 0 && k <= 150) harmonic = std::max(harmonic, p); else other = std::max(other, p);
    }
    CHECK(oracle::db(harmonic / std::max(other, 1e-300)) >= 40.0);
    CHECK(oracle::rms(x) == doctest::Approx(std::sqrt((0.25 + 0.0625 + 0.01) / 2.0)).epsilon(1e-9));

    CHECK(max_abs(synth_hum(HumSpec{50.0, {}, 0}, fs, 1000)) == 0.0);
    CHECK_THROWS_AS(synth_hum(HumSpec{1000.0, {1, 1, 1, 1}, 0}, fs, 100), UsageError);
}

TEST_CASE("rumble: level sets RMS and the slope exceeds 24 dB") {
    const double fs = 8000.0;
    RumbleSpec spec{100.0, 0.0};
    Rng rng(8);
    const auto x = synth_rumble(spec, fs, static_cast<std::size_t>(60 * fs), rng);
    CHECK(oracle::rms(x) == doctest::Approx(1.0).epsilon(0.03));
    const double lo = oracle::welch_at(x, fs, 50.0), hi = oracle::welch_at(x, fs, 400.0);
    CHECK(oracle::db(lo / hi) >= 24.0);

    RumbleSpec quiet{100.0, -6.0};
    Rng r1(2), r2(2);
    const auto a = synth_rumble(spec, fs, 5000, r1);
    const auto b = synth_rumble(quiet, fs, 5000, r2);
    for (std::size_t i = 0; i < a.size(); i += 111) CHECK(b[i] == doctest::Approx(a[i] * std::pow(10.0, -0.3)).epsilon(1e-12));

    Rng r3(2);
    CHECK(max_abs(synth_rumble(RumbleSpec{100.0, -INFINITY}, fs, 1000, r3)) == 0.0);
}

TEST_CASE("compose_guide sums independently seeded components") {
    GuideSpec g;
    g.fs = 8000.0;
    g.length = 1.0;
    g.hiss = HissSpec{{{500.0, 3.0, 1.0}}, std::nullopt, std::nullopt, -20.0, std::nullopt};
    g.thumps = {ThumpParams{}};
    g.hum = HumSpec{60.0, {0.01, 0.005}, 11};

    Rng rng(42);
    const auto mix = compose_guide(g, rng);
    const std::uint64_t base = Rng(42).engine()();
    Rng h = Rng::derive(base, 0), t = Rng::derive(base, 1);
    const auto hiss = synth_hiss(*g.hiss, g.fs, 8000, h);
    const auto thump = synth_thump(g.thumps[0], g.fs, 8000, t);
    const auto hum = synth_hum(*g.hum, g.fs, 8000);
    REQUIRE(mix.size() == 8000);
    for (std::size_t i = 0; i < mix.size(); ++i) REQUIRE(mix[i] == doctest::Approx(hiss[i] + thump[i] + hum[i]).epsilon(1e-12));

    g.headroom_db = -6.0;
    Rng again(42);
    const auto quiet = compose_guide(g, again);
    for (std::size_t i = 0; i < mix.size(); i += 53) CHECK(quiet[i] == doctest::Approx(mix[i] * std::pow(10.0, -0.3)).epsilon(1e-12));
}

TEST_CASE("guide validation aggregates component errors") {
    GuideSpec g;
    g.fs = 8000.0;
    g.hiss = HissSpec{{{5000.0, 3.0, 1.0}}, std::nullopt, std::nullopt, 0.0, std::nullopt};
    ThumpParams bad;
    bad.f_max = 6000.0;
    g.thumps = {bad};
    try {
        g.validate();
        FAIL("expected UsageError");
    } catch (const UsageError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("hiss") != std::string::npos);
        CHECK(msg.find("thumps[0]") != std::string::npos);
    }
    CHECK_THROWS_AS(GuideSpec{}.validate(), UsageError);
    CHECK_THROWS_AS(GuideSpec::preset("vinyl", 8000.0), UsageError);
}

TEST_CASE("guide length defaults to one revolution") {
    GuideSpec g = GuideSpec::preset("hiss-clicks", 22050.0);
    CHECK(g.sample_count() == static_cast<std::size_t>(frame_length(22050.0)));
    g.length = 0.5;
    CHECK(g.sample_count() == 11025);
}

TEST_CASE("presets stay within full scale") {
    for (const char* name : {"filtered-noise-thumps", "hiss-clicks"}) {
        for (double fs : {8000.0, 22050.0, 44100.0}) {
            const auto g = GuideSpec::preset(name, fs);
            REQUIRE_NOTHROW(g.validate());
            for (std::uint64_t seed = 0; seed < 5; ++seed) {
                Rng rng(seed);
                const auto x = compose_guide(g, rng);
                REQUIRE(x.size() == g.sample_count());
                CHECK(std::all_of(x.begin(), x.end(), [](double v) { return std::isfinite(v); }));
                CHECK(max_abs(x) <= 1.0);
                CHECK(max_abs(x) > 0.0);
            }
        }
    }
}
