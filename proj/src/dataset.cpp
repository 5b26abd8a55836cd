#include "shellac/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>

#include <spdlog/spdlog.h>

#include "shellac/error.hpp"

namespace shellac {

static_assert(std::endian::native == std::endian::little, "WAV I/O assumes a little-endian host");

namespace {

constexpr std::uint16_t kFormatPcm = 1;
constexpr std::uint16_t kFormatFloat = 3;
constexpr std::uint16_t kFormatExtensible = 0xFFFE;

template <typename T>
T load(const unsigned char* p) {
    T v;
    std::memcpy(&v, p, sizeof(T));
    return v;
}

template <typename T>
void store(std::string& out, T v) {
    char b[sizeof(T)];
    std::memcpy(b, &v, sizeof(T));
    out.append(b, sizeof(T));
}

struct FmtChunk {
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t rate = 0;
    std::uint16_t bits = 0;
    std::uint16_t block_align = 0;
};

FmtChunk parse_fmt(const unsigned char* p, std::uint32_t size, const std::string& name) {
    if (size < 16) throw MalformedWavError("dataset", name + ": fmt chunk too short");
    FmtChunk f;
    f.format = load<std::uint16_t>(p);
    f.channels = load<std::uint16_t>(p + 2);
    f.rate = load<std::uint32_t>(p + 4);
    f.block_align = load<std::uint16_t>(p + 12);
    f.bits = load<std::uint16_t>(p + 14);
    if (f.format == kFormatExtensible) {
        if (size < 40) throw MalformedWavError("dataset", name + ": extensible fmt chunk too short");
        // first two bytes of the subformat GUID carry the plain format tag
        f.format = load<std::uint16_t>(p + 24);
    }
    if (f.channels == 0) throw MalformedWavError("dataset", name + ": zero channels");
    if (f.rate == 0) throw MalformedWavError("dataset", name + ": zero sample rate");
    return f;
}

double median_of_squares(std::vector<double> sq) {
    if (sq.empty()) throw UsageError("dataset", "median of an empty frame");
    const std::size_t mid = sq.size() / 2;
    std::nth_element(sq.begin(), sq.begin() + mid, sq.end());
    const double upper = sq[mid];
    if (sq.size() % 2 == 1) return upper;
    const double lower = *std::max_element(sq.begin(), sq.begin() + mid);
    return 0.5 * (lower + upper);
}

template <typename T>
std::vector<double> squares(std::span<const T> x) {
    std::vector<double> sq(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double v = static_cast<double>(x[i]);
        sq[i] = v * v;
    }
    return sq;
}

}  // namespace

AudioAsset read_wav(const std::filesystem::path& path) {
    const std::string name = path.string();
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("dataset", "cannot open " + name);
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)),
                                     std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("dataset", "read failure on " + name);

    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw MalformedWavError("dataset", name + ": not a RIFF/WAVE file");
    }

    FmtChunk fmt;
    bool have_fmt = false;
    const unsigned char* data = nullptr;
    std::uint32_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* hdr = bytes.data() + pos;
        const std::uint32_t size = load<std::uint32_t>(hdr + 4);
        if (size > bytes.size() - pos - 8) {
            throw MalformedWavError("dataset", name + ": chunk '" +
                                                   std::string(reinterpret_cast<const char*>(hdr), 4) +
                                                   "' runs past end of file");
        }
        if (std::memcmp(hdr, "fmt ", 4) == 0) {
            fmt = parse_fmt(hdr + 8, size, name);
            have_fmt = true;
        } else if (std::memcmp(hdr, "data", 4) == 0) {
            data = hdr + 8;
            data_size = size;
        }
        pos += 8 + size + (size & 1u);
    }
    if (!have_fmt) throw MalformedWavError("dataset", name + ": missing fmt chunk");
    if (data == nullptr) throw MalformedWavError("dataset", name + ": missing data chunk");

    const bool pcm16 = fmt.format == kFormatPcm && fmt.bits == 16;
    const bool f32 = fmt.format == kFormatFloat && fmt.bits == 32;
    if (!pcm16 && !f32) {
        throw UnsupportedCodecError("dataset", name + ": format tag " + std::to_string(fmt.format) +
                                                   " with " + std::to_string(fmt.bits) +
                                                   " bits (need 16-bit PCM or 32-bit float)");
    }
    const std::size_t width = fmt.bits / 8;
    const std::size_t frame_bytes = width * fmt.channels;
    if (fmt.block_align != frame_bytes) throw MalformedWavError("dataset", name + ": bad block align");
    if (data_size % frame_bytes != 0) {
        throw MalformedWavError("dataset", name + ": data size is not a whole number of frames");
    }

    const std::size_t frames = data_size / frame_bytes;
    AudioAsset asset;
    asset.fs = fmt.rate;
    asset.source = name;
    asset.samples.resize(frames);
    for (std::size_t i = 0; i < frames; ++i) {
        auto sample = [&](std::size_t c) {
            const unsigned char* p = data + i * frame_bytes + c * width;
            return pcm16 ? load<std::int16_t>(p) / 32768.0 : static_cast<double>(load<float>(p));
        };
        if (fmt.channels == 1) {
            asset.samples[i] = static_cast<float>(sample(0));  // keeps -0.0 and every float bit pattern
        } else {
            double acc = 0.0;
            for (std::size_t c = 0; c < fmt.channels; ++c) acc += sample(c);
            asset.samples[i] = static_cast<float>(acc / fmt.channels);
        }
        if (!std::isfinite(asset.samples[i])) {
            throw MalformedWavError("dataset", name + ": non-finite sample at " + std::to_string(i));
        }
    }
    return asset;
}

void write_wav(const std::filesystem::path& path, const AudioAsset& asset, WavFormat format) {
    if (!(asset.fs > 0.0) || asset.fs > 4294967295.0) {
        throw UsageError("dataset", "write_wav: invalid sample rate");
    }
    const bool pcm = format == WavFormat::pcm16;
    const std::uint16_t bits = pcm ? 16 : 32;
    const std::uint32_t rate = static_cast<std::uint32_t>(std::lround(asset.fs));
    const std::uint64_t data_size = asset.samples.size() * (bits / 8);
    if (data_size > 0xFFFFFFF0ull) throw UsageError("dataset", "write_wav: asset too large for RIFF");

    std::string out;
    out.reserve(44 + data_size);
    out += "RIFF";
    store<std::uint32_t>(out, static_cast<std::uint32_t>(36 + data_size));
    out += "WAVEfmt ";
    store<std::uint32_t>(out, 16);
    store<std::uint16_t>(out, pcm ? kFormatPcm : kFormatFloat);
    store<std::uint16_t>(out, 1);
    store<std::uint32_t>(out, rate);
    store<std::uint32_t>(out, rate * (bits / 8));
    store<std::uint16_t>(out, bits / 8);
    store<std::uint16_t>(out, bits);
    out += "data";
    store<std::uint32_t>(out, static_cast<std::uint32_t>(data_size));
    for (float s : asset.samples) {
        if (pcm) {
            const double v = std::clamp(std::round(static_cast<double>(s) * 32768.0), -32768.0, 32767.0);
            store<std::int16_t>(out, static_cast<std::int16_t>(v));
        } else {
            store<float>(out, s);
        }
    }

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("dataset", "cannot open " + path.string() + " for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw IoError("dataset", "write failure on " + path.string());
}

int frame_length(double fs, double rpm) {
    if (!(fs > 0.0) || !(rpm > 0.0)) throw UsageError("dataset", "frame_length needs fs > 0 and rpm > 0");
    return static_cast<int>(std::lround(fs * 60.0 / rpm));
}

double NormalizationSettings::gain_linear() const { return std::pow(10.0, gain_db / 20.0); }

void NormalizationSettings::validate() const {
    if (!(b_chi > 0.0) || !std::isfinite(b_chi)) throw UsageError("dataset", "b_chi must be > 0");
    if (!std::isfinite(gain_db)) throw UsageError("dataset", "gain must be finite");
}

double median_rms(std::span<const double> x, double b_chi) {
    return b_chi * std::sqrt(median_of_squares(squares(x)));
}

double median_rms(std::span<const float> x, double b_chi) {
    return b_chi * std::sqrt(median_of_squares(squares(x)));
}

double normalization_scale(std::span<const double> x, const NormalizationSettings& s) {
    s.validate();
    const double med = median_of_squares(squares(x));
    if (s.mode == NormalizationMode::literal) return s.gain_linear() / std::sqrt(s.b_chi * s.b_chi + med);
    if (!(med > 0.0)) throw DataError("dataset", "cannot normalize a silent frame (median of squares is 0)");
    return s.gain_linear() / (s.b_chi * std::sqrt(med));
}

std::vector<double> normalize_median_rms(std::span<const double> x, const NormalizationSettings& s) {
    const double scale = normalization_scale(x, s);
    std::vector<double> out(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = scale * x[i];
    return out;
}

std::vector<double> normalize_median_rms(std::span<const float> x, const NormalizationSettings& s) {
    std::vector<double> wide(x.begin(), x.end());
    return normalize_median_rms(std::span<const double>(wide), s);
}

std::vector<float> random_chunk(const AudioAsset& asset, std::size_t length, Rng& rng) {
    if (length == 0) throw UsageError("dataset", "chunk length must be positive");
    if (asset.samples.size() < length) {
        throw DataError("dataset", "asset '" + asset.source + "' has " +
                                       std::to_string(asset.samples.size()) +
                                       " samples, shorter than chunk length " + std::to_string(length));
    }
    const std::size_t start = rng.index(asset.samples.size() - length + 1);
    return {asset.samples.begin() + static_cast<std::ptrdiff_t>(start),
            asset.samples.begin() + static_cast<std::ptrdiff_t>(start + length)};
}

std::vector<AudioAsset> load_corpus(const std::filesystem::path& manifest, double fs,
                                    std::size_t min_length) {
    std::ifstream in(manifest);
    if (!in) throw IoError("dataset", "cannot open manifest " + manifest.string());
    const auto base = manifest.parent_path();
    std::vector<AudioAsset> corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto first = line.find_first_not_of(" \t\r");
        if (first == std::string::npos || line[first] == '#') continue;
        const auto last = line.find_last_not_of(" \t\r");
        std::filesystem::path p = line.substr(first, last - first + 1);
        if (p.is_relative()) p = base / p;
        AudioAsset a = read_wav(p);
        if (a.fs != fs) {
            throw DataError("dataset", manifest.string() + ":" + std::to_string(lineno) + ": " + a.source +
                                           " has fs " + std::to_string(a.fs) + " Hz, model expects " +
                                           std::to_string(fs) + " Hz (no resampling)");
        }
        if (a.samples.size() < min_length) {
            throw DataError("dataset", manifest.string() + ":" + std::to_string(lineno) + ": " + a.source +
                                           " is shorter than one frame (" + std::to_string(min_length) +
                                           " samples)");
        }
        corpus.push_back(std::move(a));
    }
    if (corpus.empty()) throw DataError("dataset", "manifest " + manifest.string() + " lists no assets");
    return corpus;
}

BatchIterator::BatchIterator(std::vector<AudioAsset> corpus, std::size_t length, std::size_t batch_size,
                             NormalizationSettings settings, std::uint64_t seed)
    : corpus_(std::move(corpus)), length_(length), batch_size_(batch_size), settings_(settings), rng_(seed) {
    if (corpus_.empty()) throw UsageError("dataset", "batch iterator needs a non-empty corpus");
    if (batch_size_ == 0) throw UsageError("dataset", "batch size must be >= 1");
    settings_.validate();
    for (const auto& a : corpus_) {
        if (a.samples.size() < length_) {
            throw DataError("dataset", "asset '" + a.source + "' is shorter than the frame length");
        }
    }
}

std::vector<std::vector<double>> BatchIterator::next() {
    constexpr std::size_t kMaxConsecutiveSkips = 10000;
    std::vector<std::vector<double>> batch;
    batch.reserve(batch_size_);
    std::size_t misses = 0;
    while (batch.size() < batch_size_) {
        const auto& asset = corpus_[rng_.index(corpus_.size())];
        auto chunk = random_chunk(asset, length_, rng_);
        const std::vector<double> wide(chunk.begin(), chunk.end());
        if (settings_.mode == NormalizationMode::consistent &&
            !(median_of_squares(squares(std::span<const double>(wide))) > 0.0)) {
            if (skipped_++ == 0) {
                spdlog::warn("dataset: skipped silent chunk from '{}' (further skips logged at debug level)",
                             asset.source);
            } else {
                spdlog::debug("dataset: skipped silent chunk from '{}' ({} so far)", asset.source, skipped_);
            }
            if (++misses >= kMaxConsecutiveSkips) {
                throw DataError("dataset", "corpus appears to be silent");
            }
            continue;
        }
        misses = 0;
        batch.push_back(normalize_median_rms(std::span<const double>(wide), settings_));
    }
    return batch;
}

}  // namespace shellac
