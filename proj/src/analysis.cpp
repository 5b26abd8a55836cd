#include "shellac/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <fstream>
#include <mutex>
#include <numbers>

#include <fftw3.h>

#include "shellac/error.hpp"

namespace shellac {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError("analysis", what);
}

// FFTW planning is not thread-safe; execution with a private plan is.
std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
}

class RealFft {
public:
    explicit RealFft(std::size_t n) : n_(n) {
        in_ = fftw_alloc_real(n);
        out_ = fftw_alloc_complex(n / 2 + 1);
        std::lock_guard lock(planner_mutex());
        plan_ = fftw_plan_dft_r2c_1d(static_cast<int>(n), in_, out_, FFTW_ESTIMATE);
    }
    ~RealFft() {
        {
            std::lock_guard lock(planner_mutex());
            fftw_destroy_plan(plan_);
        }
        fftw_free(in_);
        fftw_free(out_);
    }
    RealFft(const RealFft&) = delete;
    RealFft& operator=(const RealFft&) = delete;

    double* input() { return in_; }

    /// |X_k|^2 for k = 0 .. n/2 after execute().
    void power(std::vector<double>& out) {
        fftw_execute(plan_);
        out.resize(n_ / 2 + 1);
        for (std::size_t k = 0; k < out.size(); ++k) out[k] = out_[k][0] * out_[k][0] + out_[k][1] * out_[k][1];
    }

private:
    std::size_t n_;
    double* in_ = nullptr;
    fftw_complex* out_ = nullptr;
    fftw_plan plan_ = nullptr;
};

std::vector<double> hann(std::size_t n) {
    std::vector<double> w(n);
    for (std::size_t i = 0; i < n; ++i) {
        w[i] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(n));
    }
    return w;
}

bool power_of_two(std::size_t n) { return n >= 2 && (n & (n - 1)) == 0; }

double to_db(double power, double floor_db) {
    if (!(power > 0.0)) return floor_db;
    return std::max(floor_db, 10.0 * std::log10(power));
}

void check_shapes(const std::vector<std::vector<double>>& items, std::size_t want) {
    for (const auto& it : items) require(it.size() == want, "pairwise_deviation_std: shape mismatch between items");
}

}  // namespace

EnvelopeSeries temporal_envelope(std::span<const double> x, double fs, double window, std::optional<double> hop) {
    require(fs > 0.0, "temporal_envelope: fs must be > 0");
    const double hop_s = hop.value_or(window / 2.0);
    const auto w = static_cast<std::size_t>(std::llround(window * fs));
    const auto h = static_cast<std::size_t>(std::llround(hop_s * fs));
    require(w >= 1, "temporal_envelope: window shorter than one sample");
    require(h >= 1, "temporal_envelope: hop shorter than one sample");
    require(w <= x.size(), "temporal_envelope: window longer than the frame");

    EnvelopeSeries e;
    e.window = window;
    e.hop = hop_s;
    const auto n = static_cast<long long>(x.size());
    const auto half = static_cast<long long>(w / 2);
    for (long long c = 0; c < n; c += static_cast<long long>(h)) {
        const auto lo = static_cast<std::size_t>(std::max(0LL, c - half));
        const auto hi = static_cast<std::size_t>(std::min(n, c - half + static_cast<long long>(w)));
        double acc = 0.0;
        for (std::size_t i = lo; i < hi; ++i) acc += x[i] * x[i];
        e.values.push_back(std::sqrt(acc / static_cast<double>(hi - lo)));
    }
    return e;
}

const std::vector<double>& zwicker_band_edges() {
    static const std::vector<double> edges{0,    100,  200,  300,  400,  510,  630,  770,  920,
                                           1080, 1270, 1480, 1720, 2000, 2320, 2700, 3150, 3700,
                                           4400, 5300, 6400, 7700, 9500, 12000, 15500};
    return edges;
}

BarkEnvelope bark_envelope(std::span<const double> x, double fs, const BarkOptions& options) {
    require(fs > 0.0, "bark_envelope: fs must be > 0");
    require(power_of_two(options.fft_size), "bark_envelope: fft_size must be a power of two");
    require(x.size() >= options.fft_size, "bark_envelope: frame shorter than the FFT size");

    BarkEnvelope out;
    const double nyquist = fs / 2.0;
    for (double e : zwicker_band_edges()) {
        if (e < nyquist) out.band_edges.push_back(e);
    }
    out.band_edges.push_back(nyquist);
    const std::size_t bands = out.band_edges.size() - 1;
    if (bands < 2) throw UsageError("analysis", "bark_envelope: fs too low for two Bark bands");

    // Welch PSD, one-sided, density scaling.
    const std::size_t n = options.fft_size;
    const auto w = hann(n);
    double wss = 0.0;
    for (double v : w) wss += v * v;
    RealFft fft(n);
    std::vector<double> psd(n / 2 + 1, 0.0), p;
    std::size_t segments = 0;
    for (std::size_t start = 0; start + n <= x.size(); start += n / 2) {
        for (std::size_t i = 0; i < n; ++i) fft.input()[i] = w[i] * x[start + i];
        fft.power(p);
        for (std::size_t k = 0; k < p.size(); ++k) psd[k] += p[k];
        ++segments;
    }
    for (std::size_t k = 0; k < psd.size(); ++k) {
        const double one_sided = (k == 0 || k == n / 2) ? 1.0 : 2.0;
        psd[k] *= one_sided / (fs * wss * static_cast<double>(segments));
    }

    const double df = fs / static_cast<double>(n);
    for (std::size_t b = 0; b < bands; ++b) {
        const double lo = out.band_edges[b], hi = out.band_edges[b + 1];
        double acc = 0.0;
        std::size_t count = 0;
        for (std::size_t k = 0; k < psd.size(); ++k) {
            const double f = static_cast<double>(k) * df;
            if (f >= lo && (f < hi || (b + 1 == bands && f <= hi))) {
                acc += psd[k];
                ++count;
            }
        }
        if (count == 0) {
            // band narrower than a bin: take the bin nearest its center
            const auto k = std::min(psd.size() - 1, static_cast<std::size_t>(std::llround((lo + hi) / 2.0 / df)));
            acc = psd[k];
            count = 1;
        }
        const double mean = acc / static_cast<double>(count);
        out.band_magnitudes.push_back(mean);
        out.band_db.push_back(to_db(mean, options.floor_db));
    }
    return out;
}

std::vector<double> pairwise_deviation_std(const std::vector<std::vector<double>>& items, DeviationMode mode,
                                           std::optional<std::span<const double>> reference) {
    require(!items.empty(), "pairwise_deviation_std: no items");
    const std::size_t len = items.front().size();
    check_shapes(items, len);
    const std::size_t m = items.size();
    std::vector<double> out(len, 0.0);

    if (mode == DeviationMode::reference) {
        require(reference.has_value(), "pairwise_deviation_std: reference mode needs a reference");
        require(reference->size() == len, "pairwise_deviation_std: reference shape mismatch");
        for (std::size_t t = 0; t < len; ++t) {
            double acc = 0.0;
            for (std::size_t i = 0; i < m; ++i) {
                const double d = items[i][t] - (*reference)[t];
                acc += d * d;
            }
            out[t] = std::sqrt(acc / static_cast<double>(m));
        }
        return out;
    }

    require(m >= 2, "pairwise_deviation_std: need at least two items");
    const double pairs = static_cast<double>(m * (m - 1) / 2);
    for (std::size_t t = 0; t < len; ++t) {
        double acc = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            for (std::size_t j = i + 1; j < m; ++j) {
                const double d = items[i][t] - items[j][t];
                acc += d * d;
            }
        }
        out[t] = std::sqrt(acc / pairs);
    }
    return out;
}

std::vector<double> pairwise_deviation_std(const std::vector<EnvelopeSeries>& items, DeviationMode mode,
                                           const EnvelopeSeries* reference) {
    std::vector<std::vector<double>> v;
    v.reserve(items.size());
    for (const auto& e : items) v.push_back(e.values);
    if (reference) return pairwise_deviation_std(v, mode, std::span<const double>(reference->values));
    return pairwise_deviation_std(v, mode);
}

std::vector<double> pairwise_deviation_std(const std::vector<BarkEnvelope>& items, DeviationMode mode,
                                           const BarkEnvelope* reference) {
    std::vector<std::vector<double>> v;
    v.reserve(items.size());
    for (const auto& e : items) v.push_back(e.band_db);
    if (reference) return pairwise_deviation_std(v, mode, std::span<const double>(reference->band_db));
    return pairwise_deviation_std(v, mode);
}

Spectrogram log_spectrogram(std::span<const double> x, double fs, std::size_t fft_size, std::size_t hop,
                            double floor_db) {
    require(fs > 0.0, "log_spectrogram: fs must be > 0");
    require(power_of_two(fft_size), "log_spectrogram: fft_size must be a power of two");
    require(hop >= 1 && hop <= fft_size, "log_spectrogram: need 1 <= hop <= fft_size");
    require(x.size() >= fft_size, "log_spectrogram: signal shorter than the FFT size");

    Spectrogram s;
    s.fs = fs;
    s.hop = hop;
    s.bins = fft_size / 2 + 1;
    s.frames = (x.size() - fft_size) / hop + 1;
    s.power.resize(s.frames * s.bins);
    s.db.resize(s.frames * s.bins);
    const auto w = hann(fft_size);
    RealFft fft(fft_size);
    std::vector<double> p;
    for (std::size_t f = 0; f < s.frames; ++f) {
        for (std::size_t i = 0; i < fft_size; ++i) fft.input()[i] = w[i] * x[f * hop + i];
        fft.power(p);
        for (std::size_t k = 0; k < s.bins; ++k) {
            s.power[f * s.bins + k] = p[k];
            s.db[f * s.bins + k] = to_db(p[k], floor_db);
        }
    }
    return s;
}

void write_pgm(const std::filesystem::path& path, const Spectrogram& s) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("analysis", "cannot open " + path.string() + " for writing");
    const auto [lo_it, hi_it] = std::minmax_element(s.db.begin(), s.db.end());
    const double lo = s.db.empty() ? 0.0 : *lo_it;
    const double hi = s.db.empty() ? 0.0 : *hi_it;
    out << "P5\n" << s.frames << ' ' << s.bins << "\n255\n";
    for (std::size_t row = 0; row < s.bins; ++row) {
        const std::size_t k = s.bins - 1 - row;
        for (std::size_t f = 0; f < s.frames; ++f) {
            const double u = hi > lo ? (s.at_db(f, k) - lo) / (hi - lo) : 0.0;
            out.put(static_cast<char>(static_cast<unsigned char>(std::lround(255.0 * std::clamp(u, 0.0, 1.0)))));
        }
    }
    if (!out) throw IoError("analysis", "write failure on " + path.string());
}

namespace {

void write_rows(const std::filesystem::path& path, const std::vector<std::vector<double>>& rows, bool column) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("analysis", "cannot open " + path.string() + " for writing");
    out.precision(10);
    for (const auto& r : rows) {
        for (std::size_t i = 0; i < r.size(); ++i) out << (i ? (column ? "\n" : "\t") : "") << r[i];
        out << '\n';
    }
    if (!out) throw IoError("analysis", "write failure on " + path.string());
}

}  // namespace

void write_grid(const std::filesystem::path& path, const Spectrogram& s) {
    std::vector<std::vector<double>> rows(s.frames);
    for (std::size_t f = 0; f < s.frames; ++f) {
        rows[f].assign(s.db.begin() + static_cast<std::ptrdiff_t>(f * s.bins),
                       s.db.begin() + static_cast<std::ptrdiff_t>((f + 1) * s.bins));
    }
    write_rows(path, rows, false);
}

void write_table(const std::filesystem::path& path, const std::vector<std::vector<double>>& rows) {
    write_rows(path, rows, rows.size() == 1);
}

}  // namespace shellac
