#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "shellac/dataset.hpp"
#include "shellac/error.hpp"

using namespace shellac;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "shellac_test_dataset";
    fs::create_directories(dir);
    return dir / name;
}

// Hand-assembled RIFF file, independent of write_wav.
void raw_wav(const fs::path& p, std::uint16_t format, std::uint16_t channels, std::uint32_t rate,
             std::uint16_t bits, const std::string& payload, std::uint32_t claimed_data = 0) {
    auto u16 = [](std::string& s, std::uint16_t v) { s.append(reinterpret_cast<const char*>(&v), 2); };
    auto u32 = [](std::string& s, std::uint32_t v) { s.append(reinterpret_cast<const char*>(&v), 4); };
    std::string s = "RIFF";
    u32(s, 36 + static_cast<std::uint32_t>(payload.size()));
    s += "WAVEfmt ";
    u32(s, 16);
    u16(s, format);
    u16(s, channels);
    u32(s, rate);
    u32(s, rate * channels * bits / 8);
    u16(s, static_cast<std::uint16_t>(channels * bits / 8));
    u16(s, bits);
    s += "data";
    u32(s, claimed_data ? claimed_data : static_cast<std::uint32_t>(payload.size()));
    s += payload;
    std::ofstream(p, std::ios::binary).write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string pcm16(const std::vector<std::int16_t>& v) {
    return {reinterpret_cast<const char*>(v.data()), v.size() * 2};
}

std::vector<double> gaussian(std::size_t n, std::uint64_t seed) {
    Rng r(seed);
    std::vector<double> v(n);
    r.fill_normal(v);
    return v;
}

double sample_std(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m += x;
    m /= static_cast<double>(v.size());
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

}  // namespace

TEST_CASE("float wav round trip is bit exact") {
    AudioAsset a;
    a.fs = 8000;
    Rng r(1);
    a.samples.resize(1001);
    r.fill_normal(a.samples);
    a.samples[3] = 1e-38f;
    a.samples[4] = -0.0f;
    const auto p = scratch("float.wav");
    write_wav(p, a);
    const auto b = read_wav(p);
    CHECK(b.fs == 8000);
    REQUIRE(b.samples.size() == a.samples.size());
    CHECK(std::memcmp(a.samples.data(), b.samples.data(), a.samples.size() * sizeof(float)) == 0);
}

TEST_CASE("16-bit full-scale square wave reads as +-32767/32768") {
    const auto p = scratch("square.wav");
    raw_wav(p, 1, 1, 44100, 16, pcm16({32767, 32767, -32767, -32767, 32767, -32767}));
    const auto a = read_wav(p);
    CHECK(a.fs == 44100);
    for (float v : a.samples) CHECK(std::abs(v) == 32767.0f / 32768.0f);
    CHECK(a.samples[2] < 0.0f);
}

TEST_CASE("pcm16 write quantizes and clips") {
    AudioAsset a{{0.5f, -1.0f, 2.0f, 0.25f / 32768.0f}, 16000, "x"};
    const auto p = scratch("pcm.wav");
    write_wav(p, a, WavFormat::pcm16);
    const auto b = read_wav(p);
    CHECK(b.samples[0] == 0.5f);
    CHECK(b.samples[1] == -1.0f);
    CHECK(b.samples[2] == 32767.0f / 32768.0f);
    CHECK(b.samples[3] == 0.0f);
}

TEST_CASE("multichannel input is averaged") {
    const auto p = scratch("stereo.wav");
    raw_wav(p, 1, 2, 8000, 16, pcm16({16384, 0, -16384, -16384, 8192, 24576}));
    const auto a = read_wav(p);
    REQUIRE(a.samples.size() == 3);
    CHECK(a.samples[0] == 0.25f);
    CHECK(a.samples[1] == -0.5f);
    CHECK(a.samples[2] == 0.5f);
}

TEST_CASE("wav errors are distinct") {
    CHECK_THROWS_AS(read_wav(scratch("does_not_exist.wav")), IoError);

    const auto trunc = scratch("truncated.wav");
    raw_wav(trunc, 1, 1, 8000, 16, pcm16({1, 2, 3}), 600);
    CHECK_THROWS_AS(read_wav(trunc), MalformedWavError);

    const auto junk = scratch("junk.wav");
    std::ofstream(junk) << "not a wave file at all";
    CHECK_THROWS_AS(read_wav(junk), MalformedWavError);

    const auto pcm24 = scratch("pcm24.wav");
    raw_wav(pcm24, 1, 1, 8000, 24, std::string(9, '\0'));
    CHECK_THROWS_AS(read_wav(pcm24), UnsupportedCodecError);

    const auto alaw = scratch("alaw.wav");
    raw_wav(alaw, 6, 1, 8000, 8, std::string(4, '\0'));
    CHECK_THROWS_AS(read_wav(alaw), UnsupportedCodecError);

    // UnsupportedCodecError and MalformedWavError are both DataErrors but not each other
    CHECK_THROWS_AS(read_wav(pcm24), DataError);
}

TEST_CASE("frame length") {
    CHECK(frame_length(44100) == 33923);
    CHECK(frame_length(8000) == 6154);
    CHECK(frame_length(1000, 60) == 1000);
    CHECK(frame_length(22050) == 16962);
    CHECK_THROWS_AS(frame_length(0), UsageError);
    CHECK_THROWS_AS(frame_length(8000, -1), UsageError);

    // Above ~2 kHz the rounding error is below the 1 ms window; below it only the
    // rounding bound holds.
    for (int rate = 1000; rate <= 192000; ++rate) {
        const double dur = frame_length(rate) / static_cast<double>(rate);
        if (rate >= 1988) {
            CHECK_MESSAGE((dur >= 0.769 && dur <= 0.770), "fs = " << rate);
        } else {
            CHECK(std::abs(dur - 60.0 / 78.0) <= 0.5 / rate + 1e-15);
        }
    }
}

TEST_CASE("median-rms normalization") {
    NormalizationSettings s;
    s.gain_db = 0.0;

    SUBCASE("gaussian input, consistent mode -> unit std") {
        const auto x = gaussian(1'000'000, 3);
        const auto y = normalize_median_rms(std::span<const double>(x), s);
        CHECK(std::abs(sample_std(y) - 1.0) < 0.02);
    }
    SUBCASE("literal mode applies the printed formula") {
        const auto x = gaussian(1'000'000, 4);
        auto lit = s;
        lit.mode = NormalizationMode::literal;
        const double scale = normalization_scale(x, lit);
        std::vector<double> sq(x.size());
        std::transform(x.begin(), x.end(), sq.begin(), [](double v) { return v * v; });
        std::nth_element(sq.begin(), sq.begin() + sq.size() / 2, sq.end());
        const double upper = sq[sq.size() / 2];
        const double lower = *std::max_element(sq.begin(), sq.begin() + sq.size() / 2);
        const double med = 0.5 * (lower + upper);
        CHECK(scale == doctest::Approx(1.0 / std::sqrt(1.4826 * 1.4826 + med)).epsilon(1e-15));
        // chi^2_1 median 0.4549 gives ~1/1.629
        CHECK(scale == doctest::Approx(1.0 / 1.629).epsilon(2e-3));
        // the two modes disagree by a wide margin on the same data
        CHECK(normalization_scale(x, s) > 1.5 * scale);
    }
    SUBCASE("constant frame") {
        std::vector<double> x(101, 0.3);
        NormalizationSettings g;
        CHECK(normalization_scale(x, g) == doctest::Approx(g.gain_linear() / (1.4826 * 0.3)).epsilon(1e-14));
    }
    SUBCASE("silent frame") {
        std::vector<double> z(64, 0.0);
        CHECK_THROWS_AS(normalize_median_rms(std::span<const double>(z), s), DataError);
        auto lit = s;
        lit.mode = NormalizationMode::literal;
        CHECK_NOTHROW(normalize_median_rms(std::span<const double>(z), lit));
    }
    SUBCASE("equivariance and idempotence") {
        NormalizationSettings g;
        const auto x = gaussian(6154, 5);
        const auto y = normalize_median_rms(std::span<const double>(x), g);
        CHECK(std::abs(median_rms(std::span<const double>(y)) - g.gain_linear()) < 1e-9);
        CHECK(std::abs(normalization_scale(y, g) - 1.0) < 1e-9);
        for (double c : {1e-3, 0.7, 42.0}) {
            std::vector<double> cx(x);
            for (double& v : cx) v *= c;
            const auto cy = normalize_median_rms(std::span<const double>(cx), g);
            double worst = 0.0;
            for (std::size_t i = 0; i < y.size(); ++i) worst = std::max(worst, std::abs(cy[i] - y[i]));
            CHECK(worst < 1e-9);
        }
    }
    SUBCASE("even and odd lengths") {
        std::vector<double> odd{3, -1, 2};  // squares 9 1 4 -> median 4
        CHECK(median_rms(std::span<const double>(odd), 1.0) == 2.0);
        std::vector<double> even{3, -1, 2, 1};  // squares 9 1 4 1 -> median 2.5
        CHECK(median_rms(std::span<const double>(even), 1.0) == doctest::Approx(std::sqrt(2.5)));
    }
    CHECK_THROWS_AS((NormalizationSettings{0.0, 0.0}.validate()), UsageError);
}

TEST_CASE("random chunk") {
    AudioAsset a;
    a.source = "ramp";
    a.fs = 8000;
    for (int i = 0; i < 50; ++i) a.samples.push_back(static_cast<float>(i));

    SUBCASE("whole asset when lengths match") {
        Rng r(1);
        CHECK(random_chunk(a, 50, r) == a.samples);
    }
    SUBCASE("too short names the asset") {
        Rng r(1);
        try {
            random_chunk(a, 51, r);
            FAIL("expected DataError");
        } catch (const DataError& e) {
            CHECK(std::string(e.what()).find("ramp") != std::string::npos);
        }
    }
    SUBCASE("same seed, same chunk; contiguous") {
        Rng r1(9), r2(9);
        const auto c1 = random_chunk(a, 10, r1);
        CHECK(c1 == random_chunk(a, 10, r2));
        for (std::size_t i = 1; i < c1.size(); ++i) CHECK(c1[i] == c1[i - 1] + 1.0f);
    }
    SUBCASE("start offsets are uniform (chi-square, alpha = 0.01)") {
        Rng r(77);
        const int starts = 41;  // 50 - 10 + 1
        std::vector<int> counts(starts, 0);
        const int draws = 100000;
        for (int i = 0; i < draws; ++i) ++counts[static_cast<int>(random_chunk(a, 10, r)[0])];
        const double expect = static_cast<double>(draws) / starts;
        double chi2 = 0.0;
        for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
        CHECK(chi2 < 63.69);  // chi-square 0.99 quantile, 40 dof
    }
}

TEST_CASE("batch iterator") {
    AudioAsset a;
    a.source = "noise";
    a.fs = 8000;
    a.samples.resize(5000);
    Rng r(2);
    r.fill_normal(a.samples);

    NormalizationSettings s;
    BatchIterator it1({a}, 300, 3, s, 11), it2({a}, 300, 3, s, 11);
    for (int k = 0; k < 5; ++k) {
        const auto b1 = it1.next();
        CHECK(b1 == it2.next());
        REQUIRE(b1.size() == 3);
        for (const auto& f : b1) {
            CHECK(f.size() == 300);
            CHECK(std::abs(median_rms(std::span<const double>(f)) - s.gain_linear()) < 1e-9);
        }
    }

    SUBCASE("state round trip") {
        const auto saved = it1.state();
        const auto next = it1.next();
        it2.restore(saved);
        CHECK(it2.next() == next);
    }
    SUBCASE("silent chunks are skipped, not fatal") {
        AudioAsset quiet = a;
        std::fill(quiet.samples.begin(), quiet.samples.begin() + 2500, 0.0f);
        BatchIterator it({quiet}, 1000, 4, s, 5);
        for (int k = 0; k < 20; ++k) {
            for (const auto& f : it.next()) CHECK(median_rms(std::span<const double>(f)) > 0.0);
        }
        CHECK(it.skipped() > 0);
    }
    SUBCASE("preconditions") {
        CHECK_THROWS_AS(BatchIterator({}, 300, 1, s, 1), UsageError);
        CHECK_THROWS_AS(BatchIterator({a}, 6000, 1, s, 1), DataError);
    }
}

TEST_CASE("corpus manifest") {
    const auto dir = scratch("corpus").parent_path() / "corpus";
    fs::create_directories(dir);
    AudioAsset a{std::vector<float>(700, 0.1f), 8000, ""};
    write_wav(dir / "a.wav", a);
    write_wav(dir / "b.wav", a);
    AudioAsset c{std::vector<float>(700, 0.1f), 16000, ""};
    write_wav(dir / "c.wav", c);

    std::ofstream(dir / "ok.txt") << "# corpus\na.wav\n\n  b.wav  \n";
    const auto corpus = load_corpus(dir / "ok.txt", 8000, 600);
    CHECK(corpus.size() == 2);

    std::ofstream(dir / "mixed.txt") << "a.wav\nc.wav\n";
    CHECK_THROWS_AS(load_corpus(dir / "mixed.txt", 8000, 600), DataError);
    CHECK_THROWS_AS(load_corpus(dir / "ok.txt", 8000, 800), DataError);
    std::ofstream(dir / "empty.txt") << "# nothing\n";
    CHECK_THROWS_AS(load_corpus(dir / "empty.txt", 8000, 600), DataError);
    CHECK_THROWS_AS(load_corpus(dir / "missing.txt", 8000, 600), IoError);
}
