#pragma once

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace shellac {

struct EnvelopeSeries {
    std::vector<double> values;
    double hop = 0.0;     // s
    double window = 0.0;  // s
};

/// Sliding RMS with windows centered on multiples of the hop (default window / 2).
/// Windows are truncated at the frame edges.
EnvelopeSeries temporal_envelope(std::span<const double> x, double fs, double window = 0.025,
                                 std::optional<double> hop = std::nullopt);

struct BarkOptions {
    std::size_t fft_size = 1024;
    double floor_db = -120.0;
};

struct BarkEnvelope {
    std::vector<double> band_magnitudes;  // mean power spectral density per band (linear)
    std::vector<double> band_db;          // 10 log10 of the above, floored
    std::vector<double> band_edges;       // Hz, size bands + 1
};

/// Zwicker critical-band edges in Hz (25 edges, 24 bands).
const std::vector<double>& zwicker_band_edges();

/// Welch estimate (Hann window, 50% overlap) averaged within each Bark band.
/// The top band is clipped at fs/2.
BarkEnvelope bark_envelope(std::span<const double> x, double fs, const BarkOptions& options = {});

enum class DeviationMode {
    reference,  // sqrt(mean over items of (item - reference)^2), bias included
    all_pairs,  // sqrt(mean over unordered pairs of (item_i - item_j)^2)
};

/// Per-position deviation profile. Reference mode needs `reference` and at least
/// one item; all-pairs mode needs at least two items.
std::vector<double> pairwise_deviation_std(const std::vector<std::vector<double>>& items, DeviationMode mode,
                                           std::optional<std::span<const double>> reference = std::nullopt);
std::vector<double> pairwise_deviation_std(const std::vector<EnvelopeSeries>& items, DeviationMode mode,
                                           const EnvelopeSeries* reference = nullptr);
std::vector<double> pairwise_deviation_std(const std::vector<BarkEnvelope>& items, DeviationMode mode,
                                           const BarkEnvelope* reference = nullptr);

struct Spectrogram {
    std::size_t frames = 0;
    std::size_t bins = 0;  // fft_size / 2 + 1
    double fs = 0.0;
    std::size_t hop = 0;
    std::vector<double> power;  // frames x bins, |X_k|^2 of the Hann-windowed frame
    std::vector<double> db;     // 10 log10(power), floored

    double at_db(std::size_t frame, std::size_t bin) const { return db[frame * bins + bin]; }
};

/// STFT with a Hann window; frames start at multiples of `hop` and must fit entirely.
Spectrogram log_spectrogram(std::span<const double> x, double fs, std::size_t fft_size, std::size_t hop,
                            double floor_db = -120.0);

/// 8-bit binary PGM, time left to right, frequency bottom to top, mapped over [floor, max].
void write_pgm(const std::filesystem::path& path, const Spectrogram& s);
/// Tab-separated grid, one row per frame.
void write_grid(const std::filesystem::path& path, const Spectrogram& s);
/// One value per line, or a row per item when `rows` has more than one entry.
void write_table(const std::filesystem::path& path, const std::vector<std::vector<double>>& rows);

}  // namespace shellac
