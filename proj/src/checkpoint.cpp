#include "shellac/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "shellac/error.hpp"

namespace shellac {

using nlohmann::json;

namespace {

constexpr char kMagic[8] = {'S', 'H', 'L', 'C', 'K', 'P', 'T', '\0'};
constexpr char kTrailer[8] = {'S', 'H', 'L', 'C', 'E', 'N', 'D', '\0'};

class Writer {
public:
    template <typename T>
    void put(T v) {
        char b[sizeof(T)];
        std::memcpy(b, &v, sizeof(T));
        buf_.append(b, sizeof(T));
    }
    void bytes(const char* p, std::size_t n) { buf_.append(p, n); }
    void doubles(const std::vector<double>& v) {
        buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
    }
    const std::string& str() const { return buf_; }

private:
    std::string buf_;
};

class Reader {
public:
    Reader(std::vector<char> data, std::string name) : data_(std::move(data)), name_(std::move(name)) {}

    template <typename T>
    T get() {
        T v;
        std::memcpy(&v, take(sizeof(T)), sizeof(T));
        return v;
    }
    std::string string(std::size_t n) {
        const char* p = take(n);
        return {p, n};
    }
    std::vector<double> doubles(std::size_t n) {
        if (n > data_.size() / sizeof(double) + 1) truncated();
        std::vector<double> v(n);
        std::memcpy(v.data(), take(n * sizeof(double)), n * sizeof(double));
        return v;
    }
    bool done() const { return pos_ == data_.size(); }
    [[noreturn]] void truncated() const {
        throw DataError("checkpoint", name_ + ": truncated or corrupt at byte " + std::to_string(pos_));
    }

private:
    const char* take(std::size_t n) {
        if (n > data_.size() - pos_) truncated();
        const char* p = data_.data() + pos_;
        pos_ += n;
        return p;
    }

    std::vector<char> data_;
    std::string name_;
    std::size_t pos_ = 0;
};

std::vector<char> slurp(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint", "cannot open " + path.string());
    std::vector<char> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("checkpoint", "read failure on " + path.string());
    return data;
}

json read_header(Reader& r, const std::string& name) {
    if (r.string(8) != std::string(kMagic, 8)) throw DataError("checkpoint", name + ": not a checkpoint file");
    const auto version = r.get<std::uint32_t>();
    if (version != kCheckpointVersion) {
        throw DataError("checkpoint", name + ": unsupported version " + std::to_string(version));
    }
    const auto len = r.get<std::uint64_t>();
    const std::string text = r.string(len);
    json meta = json::parse(text, nullptr, false);
    if (meta.is_discarded() || !meta.is_object()) throw DataError("checkpoint", name + ": corrupt metadata");
    return meta;
}

template <typename Fn>
auto as_data_error(const std::string& name, Fn&& fn) {
    try {
        return fn();
    } catch (const UsageError& e) {
        throw DataError("checkpoint", name + ": invalid metadata: " + e.what());
    } catch (const json::exception& e) {
        throw DataError("checkpoint", name + ": invalid metadata: " + e.what());
    }
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    const auto& p = c.state.params;
    if (p.ema.size() != p.size() || c.state.adam.m.size() != p.size() || c.state.adam.v.size() != p.size()) {
        throw UsageError("checkpoint", "inconsistent trainer state");
    }
    json meta{{"format", "shellac-checkpoint"},
              {"network", to_json(c.network)},
              {"training", to_json(c.training)},
              {"data", to_json(c.data)},
              {"iteration", c.state.iteration},
              {"adam_step", c.state.adam.step},
              {"rng_state", c.state.rng.state()},
              {"data_state", c.data_state},
              {"parameter_count", p.scalar_count()}};
    const std::string text = meta.dump();

    Writer w;
    w.bytes(kMagic, 8);
    w.put<std::uint32_t>(kCheckpointVersion);
    w.put<std::uint64_t>(text.size());
    w.bytes(text.data(), text.size());
    w.put<std::uint32_t>(static_cast<std::uint32_t>(p.size()));
    for (std::size_t i = 0; i < p.size(); ++i) {
        const auto& a = p.arrays[i];
        w.put<std::uint32_t>(static_cast<std::uint32_t>(a.name.size()));
        w.bytes(a.name.data(), a.name.size());
        w.put<std::int32_t>(a.rows);
        w.put<std::int32_t>(a.cols);
        w.put<std::uint8_t>(a.trainable ? 1 : 0);
        w.doubles(a.data);
        w.doubles(p.ema[i]);
        w.doubles(c.state.adam.m[i]);
        w.doubles(c.state.adam.v[i]);
    }
    w.bytes(kTrailer, 8);

    // Write to a sibling temp file and rename, so a crash never leaves a half checkpoint.
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("checkpoint", "cannot open " + tmp.string() + " for writing");
        out.write(w.str().data(), static_cast<std::streamsize>(w.str().size()));
        if (!out) throw IoError("checkpoint", "write failure on " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint", "cannot move checkpoint into place at " + path.string() + ": " + ec.message());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::string name = path.string();
    Reader r(slurp(path), name);
    const json meta = read_header(r, name);

    Checkpoint c;
    as_data_error(name, [&] {
        c.network = network_from_json(meta.at("network"));
        c.training = training_from_json(meta.at("training"));
        c.data = data_from_json(meta.at("data"));
        c.state.iteration = meta.at("iteration").get<long>();
        c.state.adam.step = meta.at("adam_step").get<long>();
        c.data_state = meta.at("data_state").get<std::string>();
        c.network.validate();
        return 0;
    });
    try {
        c.state.rng.set_state(meta.at("rng_state").get<std::string>());
    } catch (const json::exception&) {
        throw DataError("checkpoint", name + ": missing generator state");
    }

    const auto count = r.get<std::uint32_t>();
    auto& p = c.state.params;
    for (std::uint32_t i = 0; i < count; ++i) {
        ParamArray a;
        a.name = r.string(r.get<std::uint32_t>());
        a.rows = r.get<std::int32_t>();
        a.cols = r.get<std::int32_t>();
        a.trainable = r.get<std::uint8_t>() != 0;
        if (a.rows < 0 || a.cols < 0) r.truncated();
        const auto n = static_cast<std::size_t>(a.rows) * static_cast<std::size_t>(a.cols);
        a.data = r.doubles(n);
        p.ema.push_back(r.doubles(n));
        c.state.adam.m.push_back(r.doubles(n));
        c.state.adam.v.push_back(r.doubles(n));
        p.arrays.push_back(std::move(a));
    }
    if (r.string(8) != std::string(kTrailer, 8) || !r.done()) r.truncated();

    UNet(c.network).check_layout(p);
    return c;
}

json checkpoint_metadata(const std::filesystem::path& path) {
    Reader r(slurp(path), path.string());
    return read_header(r, path.string());
}

}  // namespace shellac
