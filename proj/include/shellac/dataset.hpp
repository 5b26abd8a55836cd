#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "shellac/rng.hpp"

namespace shellac {

/// Mono audio with its sample rate and where it came from.
struct AudioAsset {
    std::vector<float> samples;
    double fs = 0.0;
    std::string source;
};

enum class WavFormat { pcm16, float32 };

/// Reads 16-bit PCM or 32-bit float RIFF/WAVE. Multichannel input is averaged to mono.
/// Throws IoError, MalformedWavError or UnsupportedCodecError.
AudioAsset read_wav(const std::filesystem::path& path);

/// Writes mono WAV. float32 round-trips bit-exactly; pcm16 clips to full scale.
void write_wav(const std::filesystem::path& path, const AudioAsset& asset,
               WavFormat format = WavFormat::float32);

/// Samples in one disk revolution: round(fs * 60 / rpm).
int frame_length(double fs, double rpm = 78.0);

enum class NormalizationMode { consistent, literal };

struct NormalizationSettings {
    double gain_db = -10.0;
    double b_chi = 1.4826;
    NormalizationMode mode = NormalizationMode::consistent;

    double gain_linear() const;
    void validate() const;
};

/// Robust RMS estimate b_chi * sqrt(median(x^2)).
double median_rms(std::span<const double> x, double b_chi = 1.4826);
double median_rms(std::span<const float> x, double b_chi = 1.4826);

/// Gain applied by `normalize_median_rms`.
///   consistent: G / (b_chi * sqrt(median(x^2)))
///   literal:    G / sqrt(b_chi^2 + median(x^2))
/// Throws DataError for an all-zero frame in consistent mode.
double normalization_scale(std::span<const double> x, const NormalizationSettings& settings);

std::vector<double> normalize_median_rms(std::span<const double> x,
                                         const NormalizationSettings& settings);
std::vector<double> normalize_median_rms(std::span<const float> x,
                                         const NormalizationSettings& settings);

/// Uniformly positioned contiguous chunk, no wraparound.
std::vector<float> random_chunk(const AudioAsset& asset, std::size_t length, Rng& rng);

/// Reads a manifest (one WAV path per line, '#' comments, relative paths resolved
/// against the manifest directory) and loads every asset. Assets at a different
/// sample rate than `fs` or shorter than `min_length` are rejected.
std::vector<AudioAsset> load_corpus(const std::filesystem::path& manifest, double fs,
                                    std::size_t min_length);

/// Source of training batches whose position in the stream can be saved and restored.
class BatchSource {
public:
    virtual ~BatchSource() = default;
    virtual std::vector<std::vector<double>> next() = 0;
    virtual std::string state() const = 0;
    virtual void restore(const std::string& state) = 0;
};

/// Infinite stream of normalized random chunks drawn from a corpus.
class BatchIterator final : public BatchSource {
public:
    BatchIterator(std::vector<AudioAsset> corpus, std::size_t length, std::size_t batch_size,
                  NormalizationSettings settings, std::uint64_t seed);

    std::vector<std::vector<double>> next() override;
    std::string state() const override { return rng_.state(); }
    void restore(const std::string& state) override { rng_.set_state(state); }

    std::size_t skipped() const noexcept { return skipped_; }

private:
    std::vector<AudioAsset> corpus_;
    std::size_t length_;
    std::size_t batch_size_;
    NormalizationSettings settings_;
    Rng rng_;
    std::size_t skipped_ = 0;
};

}  // namespace shellac
