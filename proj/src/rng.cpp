#include "shellac/rng.hpp"

#include <sstream>

#include "shellac/error.hpp"

namespace shellac {

Rng::Rng(std::uint64_t seed) : engine_(seed) {}

Rng Rng::derive(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                      0x5eed5eedu};
    Rng r;
    r.engine_.seed(seq);
    return r;
}

double Rng::uniform() { return uniform_(engine_); }

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform_(engine_); }

double Rng::normal() { return normal_(engine_); }

double Rng::normal(double mean, double stddev) { return mean + stddev * normal_(engine_); }

std::size_t Rng::index(std::size_t n) {
    std::uniform_int_distribution<std::size_t> d(0, n - 1);
    return d(engine_);
}

void Rng::fill_normal(std::span<double> out) {
    for (auto& v : out) v = normal_(engine_);
}

void Rng::fill_normal(std::span<float> out) {
    for (auto& v : out) v = static_cast<float>(normal_(engine_));
}

std::string Rng::state() const {
    std::ostringstream os;
    os << engine_ << ' ' << normal_ << ' ' << uniform_;
    return os.str();
}

void Rng::set_state(const std::string& s) {
    std::istringstream is(s);
    is >> engine_ >> normal_ >> uniform_;
    if (!is) throw DataError("rng", "corrupt generator state");
}

}  // namespace shellac
