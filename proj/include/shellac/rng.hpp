#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>

namespace shellac {

/// Seedable random stream with a serializable state.
///
/// Wraps std::mt19937_64 with the standard distributions. The full state
/// (engine plus the cached second Gaussian of the normal distribution) round
/// trips through `state()` / `set_state()`, which is what makes resumed
/// training bit-identical to an uninterrupted run.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    /// Independent stream derived from (seed, stream index).
    static Rng derive(std::uint64_t seed, std::uint64_t stream);

    double uniform();                           // [0, 1)
    double uniform(double lo, double hi);       // [lo, hi)
    double normal();                            // N(0, 1)
    double normal(double mean, double stddev);
    std::size_t index(std::size_t n);           // uniform in [0, n)

    void fill_normal(std::span<double> out);
    void fill_normal(std::span<float> out);

    std::mt19937_64& engine() { return engine_; }

    std::string state() const;
    void set_state(const std::string& s);

private:
    std::mt19937_64 engine_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace shellac
