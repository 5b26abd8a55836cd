#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <sstream>

#include "shellac/analysis.hpp"
#include "shellac/error.hpp"
#include "shellac/rng.hpp"
#include "oracles.hpp"

using namespace shellac;
using std::numbers::pi;
namespace fs = std::filesystem;

namespace {

std::vector<double> sine(double f, double fs, std::size_t n, double a = 1.0) {
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = a * std::sin(2.0 * pi * f * static_cast<double>(i) / fs);
    return x;
}

std::vector<double> white(std::size_t n, std::uint64_t seed) {
    std::vector<double> x(n);
    Rng(seed).fill_normal(x);
    return x;
}

fs::path scratch(const std::string& name) {
    auto dir = fs::temp_directory_path() / "shellac_test_analysis";
    fs::create_directories(dir);
    return dir / name;
}

}  // namespace

TEST_CASE("envelope of a constant and of silence") {
    const std::vector<double> c(1000, -0.3), z(1000, 0.0);
    const auto e = temporal_envelope(c, 8000.0);
    CHECK(e.hop == doctest::Approx(0.0125));
    CHECK(e.values.size() == 10);  // centers 0, 100, ..., 900
    for (double v : e.values) CHECK(v == doctest::Approx(0.3).epsilon(1e-12));
    for (double v : temporal_envelope(z, 8000.0).values) CHECK(v == 0.0);
}

TEST_CASE("envelope of a sine is A / sqrt(2) over whole periods") {
    const double fs = 8000.0;
    const auto x = sine(200.0, fs, 4000, 0.8);  // 40 samples per period, 200-sample windows
    const auto e = temporal_envelope(x, fs, 0.025);
    // Interior windows span exactly five periods.
    for (std::size_t k = 1; k + 1 < e.values.size(); ++k) {
        CHECK(e.values[k] == doctest::Approx(0.8 / std::sqrt(2.0)).epsilon(1e-9));
    }
}

TEST_CASE("envelope windows are centered and truncated at the edges") {
    std::vector<double> x(100);
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(i);
    const auto e = temporal_envelope(x, 100.0, 0.1, 0.2);  // w = 10, hop = 20
    REQUIRE(e.values.size() == 5);
    const std::span<const double> first(x.data(), 5), third(x.data() + 35, 10);
    CHECK(e.values[0] == doctest::Approx(oracle::rms(first)).epsilon(1e-12));
    CHECK(e.values[2] == doctest::Approx(oracle::rms(third)).epsilon(1e-12));
    CHECK_THROWS_AS(temporal_envelope(x, 100.0, 2.0), UsageError);
}

TEST_CASE("Bark envelope of white noise is flat at 2 / fs") {
    const double fs = 22050.0;
    const auto b = bark_envelope(white(static_cast<std::size_t>(20 * fs), 1), fs);
    // 12-15.5 kHz lies above Nyquist; 9.5 kHz-11.025 kHz is the clipped top band.
    REQUIRE(b.band_db.size() == 23);
    REQUIRE(b.band_edges.size() == 24);
    CHECK(b.band_edges.back() == fs / 2.0);
    const double expect = 10.0 * std::log10(2.0 / fs);
    for (double d : b.band_db) CHECK(std::abs(d - expect) < 2.0);
}

TEST_CASE("Bark bands follow the sample rate") {
    const auto b = bark_envelope(white(16000, 2), 8000.0);
    CHECK(b.band_db.size() == 18);
    CHECK(b.band_edges.back() == 4000.0);
    CHECK_THROWS_AS(bark_envelope(white(4096, 2), 150.0), UsageError);
    CHECK_THROWS_AS(bark_envelope(white(100, 2), 8000.0), UsageError);
}

TEST_CASE("Bark envelope isolates a tone and floors silence") {
    const double fs = 22050.0;
    const auto b = bark_envelope(sine(1000.0, fs, 44100), fs);
    const std::size_t band = 8;  // 920-1080 Hz
    for (std::size_t k = 0; k < b.band_db.size(); ++k) {
        if (k != band) CHECK(b.band_db[band] - b.band_db[k] >= 20.0);
    }
    const auto s = bark_envelope(std::vector<double>(4096, 0.0), fs);
    for (double d : s.band_db) CHECK(d == -120.0);
}

TEST_CASE("deviation against a reference") {
    const std::vector<std::vector<double>> items{{1.0, 5.0}, {2.0, 5.0}, {3.0, 5.0}};
    const std::vector<double> ref{0.0, 5.0};
    const auto d = pairwise_deviation_std(items, DeviationMode::reference, std::span<const double>(ref));
    // differences 1, 2, 3: the systematic offset counts, not just the spread
    CHECK(d[0] == doctest::Approx(std::sqrt(14.0 / 3.0)).epsilon(1e-12));
    CHECK(d[1] == 0.0);
    const std::vector<std::vector<double>> shifted{{2.5}, {2.5}};
    const std::vector<double> zero{0.0};
    CHECK(pairwise_deviation_std(shifted, DeviationMode::reference, std::span<const double>(zero))[0] ==
          doctest::Approx(2.5).epsilon(1e-12));
    CHECK_THROWS_AS(pairwise_deviation_std(items, DeviationMode::reference), UsageError);
}

TEST_CASE("all-pairs deviation") {
    const std::vector<std::vector<double>> two{{1.0}, {4.0}}, three{{0.0}, {1.0}, {2.0}};
    CHECK(pairwise_deviation_std(two, DeviationMode::all_pairs)[0] == doctest::Approx(3.0).epsilon(1e-12));
    CHECK(pairwise_deviation_std(three, DeviationMode::all_pairs)[0] == doctest::Approx(std::sqrt(2.0)).epsilon(1e-12));
    using Items = std::vector<std::vector<double>>;
    CHECK_THROWS_AS(pairwise_deviation_std(Items{{1.0}}, DeviationMode::all_pairs), UsageError);
    CHECK_THROWS_AS(pairwise_deviation_std(Items{{1.0}, {1.0, 2.0}}, DeviationMode::all_pairs), UsageError);

    // iid N(0, v) items: E[(x_i - x_j)^2] = 2 v.
    const double v = 0.5;
    Rng rng(3);
    std::vector<std::vector<double>> items(200, std::vector<double>(40));
    for (auto& it : items) {
        for (auto& x : it) x = rng.normal(0.0, std::sqrt(v));
    }
    const auto d = pairwise_deviation_std(items, DeviationMode::all_pairs);
    CHECK(oracle::mean(d) == doctest::Approx(std::sqrt(2.0 * v)).epsilon(0.03));
}

TEST_CASE("deviation overloads read envelope values and Bark dB") {
    EnvelopeSeries a, b;
    a.values = {1.0, 2.0};
    b.values = {3.0, 2.0};
    const auto d = pairwise_deviation_std(std::vector<EnvelopeSeries>{a, b}, DeviationMode::all_pairs);
    CHECK(d == std::vector<double>{2.0, 0.0});
    BarkEnvelope p, q;
    p.band_db = {-10.0};
    q.band_db = {-16.0};
    CHECK(pairwise_deviation_std(std::vector<BarkEnvelope>{p, q}, DeviationMode::all_pairs)[0] == 6.0);
}

TEST_CASE("spectrogram ridge, impulse stripe and Parseval") {
    const double fs = 8000.0;
    const std::size_t n = 512;
    const auto x = sine(fs * 32.0 / n, fs, 4096);
    const auto s = log_spectrogram(x, fs, n, 128);
    CHECK(s.frames == (4096 - n) / 128 + 1);
    CHECK(s.bins == n / 2 + 1);
    for (std::size_t f = 0; f < s.frames; ++f) {
        std::size_t best = 0;
        for (std::size_t k = 0; k < s.bins; ++k) {
            if (s.power[f * s.bins + k] > s.power[f * s.bins + best]) best = k;
        }
        CHECK(best == 32);
    }

    // Parseval: one-sided power doubled except DC and Nyquist equals n * sum (w x)^2.
    const auto noise = white(n, 5);
    const auto t = log_spectrogram(noise, fs, n, n);
    double spec = 0.0;
    for (std::size_t k = 0; k < t.bins; ++k) spec += (k == 0 || k == n / 2 ? 1.0 : 2.0) * t.power[k];
    double time = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double w = 0.5 - 0.5 * std::cos(2.0 * pi * static_cast<double>(i) / static_cast<double>(n));
        time += w * w * noise[i] * noise[i];
    }
    CHECK(spec == doctest::Approx(time * static_cast<double>(n)).epsilon(0.01));

    // An impulse at sample m of a frame has flat power w[m]^2.
    std::vector<double> imp(n, 0.0);
    imp[200] = 1.0;
    const auto u = log_spectrogram(imp, fs, n, n);
    const double w200 = 0.5 - 0.5 * std::cos(2.0 * pi * 200.0 / static_cast<double>(n));
    for (std::size_t k = 0; k < u.bins; ++k) CHECK(u.power[k] == doctest::Approx(w200 * w200).epsilon(1e-9));

    CHECK_THROWS_AS(log_spectrogram(x, fs, 500, 100), UsageError);
    CHECK_THROWS_AS(log_spectrogram(x, fs, 8192, 100), UsageError);
}

TEST_CASE("image and table writers") {
    const auto s = log_spectrogram(sine(1000.0, 8000.0, 2048), 8000.0, 256, 256);
    const auto pgm = scratch("s.pgm");
    write_pgm(pgm, s);
    std::ifstream in(pgm, std::ios::binary);
    std::string magic;
    std::size_t w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    in.get();
    CHECK(magic == "P5");
    CHECK(w == s.frames);
    CHECK(h == s.bins);
    CHECK(maxv == 255);
    const std::string body((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    CHECK(body.size() == w * h);

    const auto grid = scratch("s.tsv");
    write_grid(grid, s);
    std::ifstream g(grid);
    std::string line;
    std::size_t rows = 0;
    while (std::getline(g, line)) {
        ++rows;
        CHECK(static_cast<std::size_t>(std::count(line.begin(), line.end(), '\t')) == s.bins - 1);
    }
    CHECK(rows == s.frames);

    const auto table = scratch("t.txt");
    write_table(table, {{1.5, 2.5, 3.5}});
    std::ifstream t(table);
    std::stringstream ss;
    ss << t.rdbuf();
    CHECK(ss.str() == "1.5\n2.5\n3.5\n");
    CHECK_THROWS_AS(write_table("/nonexistent/dir/t.txt", {{1.0}}), IoError);
}
