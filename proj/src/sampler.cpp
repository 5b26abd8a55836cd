#include "shellac/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <thread>

#include "shellac/error.hpp"

namespace shellac {

namespace {

using schedule::DiffusionTime;

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError("sampler", what);
}

DiffusionTime grid(int i, int steps) { return DiffusionTime(static_cast<double>(i) / steps); }

std::vector<double> predict(const Denoiser& d, const LatentState& z, int step) {
    const double sigma = schedule::sigma(z.tau);
    try {
        return d.predict_noise(z.z, sigma);
    } catch (const NumericError& e) {
        throw NumericError("sampler", "step " + std::to_string(step) + ": " + e.what());
    } catch (const DataError& e) {
        throw DataError("sampler", "step " + std::to_string(step) + ": " + e.what());
    } catch (const UsageError& e) {
        throw UsageError("sampler", "step " + std::to_string(step) + ": " + e.what());
    }
}

// Reverse steps from grid index `from` down to `to`; z.tau must equal from / steps.
void descend(const Denoiser& d, LatentState& z, int from, int to, const SamplerRun& run, Rng& rng) {
    std::vector<double> eps(z.z.size());
    for (int i = from - 1; i >= to; --i) {
        const auto eps_hat = predict(d, z, i + 1);
        if (i > 0) {
            rng.fill_normal(eps);
            z = reverse_step(z, eps_hat, grid(i, run.steps), std::span<const double>(eps), run.clip_denoised);
        } else {
            z = reverse_step(z, eps_hat, grid(0, run.steps), std::nullopt, run.clip_denoised);
        }
    }
}

void check_frame(const Denoiser& d, std::size_t n) {
    require(n == d.frame_length(), "frame length " + std::to_string(n) + " does not match the denoiser (" +
                                       std::to_string(d.frame_length()) + ")");
}

std::vector<double> noise(std::size_t n, Rng& rng) {
    std::vector<double> v(n);
    rng.fill_normal(v);
    return v;
}

}  // namespace

void SamplerRun::validate() const {
    require(steps >= 1, "steps must be >= 1");
    require(tau0 >= 0.0 && tau0 <= 1.0, "tau0 must lie in [0, 1]");
    require(revolutions >= 1, "revolutions must be >= 1");
    require(threads >= 1, "threads must be >= 1");
    if (clip_denoised) require(*clip_denoised > 0.0, "clip_denoised must be > 0");
    if (tau_p) {
        require(*tau_p > 0.0 && *tau_p <= 1.0, "tau_p must lie in (0, 1]");
        require(*tau_p < tau0, "tau_p must be below tau0");
        require(branch_index() >= 1, "tau_p rounds to grid index 0; increase steps or tau_p");
        require(branch_index() < start_index(), "tau_p and tau0 round to the same grid step");
    } else {
        require(revolutions == 1, "revolutions > 1 needs tau_p");
    }
}

int SamplerRun::start_index() const { return static_cast<int>(std::lround(tau0 * steps)); }

int SamplerRun::branch_index() const {
    require(tau_p.has_value(), "no bifurcation step set");
    return static_cast<int>(std::lround(*tau_p * steps));
}

LatentState perturb(std::span<const double> x, DiffusionTime tau, std::span<const double> eps) {
    require(x.size() == eps.size(), "perturb: length mismatch");
    const auto p = schedule::point(tau);
    LatentState s{std::vector<double>(x.size()), tau};
    for (std::size_t i = 0; i < x.size(); ++i) s.z[i] = p.alpha * x[i] + p.sigma * eps[i];
    return s;
}

LatentState reverse_step(const LatentState& z, std::span<const double> eps_hat, DiffusionTime s,
                         std::optional<std::span<const double>> eps, std::optional<double> clip_denoised) {
    require(s.value() < z.tau.value(), "reverse_step: s must be below tau");
    require(eps_hat.size() == z.z.size(), "reverse_step: eps_hat length mismatch");
    const bool last = s.value() == 0.0;
    require(last != eps.has_value(), last ? "reverse_step: no noise is injected at s = 0"
                                          : "reverse_step: noise required for s > 0");
    if (eps) require(eps->size() == z.z.size(), "reverse_step: eps length mismatch");
    const auto c = schedule::reverse_coefficients(z.tau, s);
    LatentState out{std::vector<double>(z.z.size()), s};
    if (clip_denoised) {
        // Same mean written as A z + B x_hat, with x_hat = (z - sigma eps_hat) / alpha
        // limited to the data range before it is used.
        const double st = schedule::sigma(z.tau), at = schedule::alpha(z.tau);
        const double a = c.f - c.g / st, b = c.g * at / st, lim = *clip_denoised;
        for (std::size_t i = 0; i < z.z.size(); ++i) {
            const double x_hat = std::clamp((z.z[i] - st * eps_hat[i]) / at, -lim, lim);
            out.z[i] = a * z.z[i] + b * x_hat;
            if (eps) out.z[i] += c.h * (*eps)[i];
        }
        return out;
    }
    for (std::size_t i = 0; i < z.z.size(); ++i) {
        out.z[i] = c.f * z.z[i] - c.g * eps_hat[i];
        if (eps) out.z[i] += c.h * (*eps)[i];
    }
    return out;
}

RevolutionFrame sample_unconditional(const Denoiser& d, const SamplerRun& run) {
    run.validate();
    require(run.tau0 == 1.0, "unconditional sampling starts at tau0 = 1");
    if (run.tau_p) return unconditional_variations(d, run).front();
    Rng rng(run.seed);
    LatentState z{noise(d.frame_length(), rng), DiffusionTime(1.0)};
    descend(d, z, run.steps, 0, run, rng);
    return std::move(z.z);
}

namespace {

LatentState guided_start(std::span<const double> guide, const SamplerRun& run, Rng& rng) {
    const int i0 = run.start_index();
    const auto eps = noise(guide.size(), rng);
    return perturb(guide, grid(i0, run.steps), eps);
}

}  // namespace

RevolutionFrame sample_guided(const Denoiser& d, std::span<const double> guide, const SamplerRun& run) {
    run.validate();
    check_frame(d, guide.size());
    if (run.start_index() == 0) return {guide.begin(), guide.end()};
    if (run.tau_p) return guided_variations(d, guide, run).front();
    Rng rng(run.seed);
    auto z = guided_start(guide, run, rng);
    descend(d, z, run.start_index(), 0, run, rng);
    return std::move(z.z);
}

std::vector<RevolutionFrame> guided_variations(const Denoiser& d, std::span<const double> guide,
                                               const SamplerRun& run) {
    run.validate();
    check_frame(d, guide.size());
    require(run.tau_p.has_value(), "variations need tau_p");
    Rng rng(run.seed);
    const auto start = guided_start(guide, run, rng);
    return sample_variations(d, run, start, rng);
}

std::vector<RevolutionFrame> unconditional_variations(const Denoiser& d, const SamplerRun& run) {
    run.validate();
    require(run.tau0 == 1.0, "unconditional sampling starts at tau0 = 1");
    require(run.tau_p.has_value(), "variations need tau_p");
    Rng rng(run.seed);
    const LatentState start{noise(d.frame_length(), rng), DiffusionTime(1.0)};
    return sample_variations(d, run, start, rng);
}

std::vector<RevolutionFrame> sample_variations(const Denoiser& d, const SamplerRun& run, const LatentState& start,
                                               Rng& rng, const BranchObserver& observe) {
    require(run.steps >= 1 && run.revolutions >= 1 && run.threads >= 1, "invalid sampler run");
    require(run.tau_p.has_value(), "variations need tau_p");
    check_frame(d, start.z.size());
    const int T = run.steps;
    const int from = static_cast<int>(std::lround(start.tau.value() * T));
    require(std::abs(start.tau.value() * T - from) < 1e-9, "start latent is not on the step grid");
    const int p = run.branch_index();
    require(p >= 1, "tau_p rounds to grid index 0");
    require(p < from, "tau_p must be below the start time");

    LatentState shared = start;
    descend(d, shared, from, p, run, rng);

    // Eq. (17): one eps_hat at tau_p, N independent noise draws.
    const auto eps_hat = predict(d, shared, p);
    const auto n = static_cast<std::size_t>(run.revolutions);
    std::vector<RevolutionFrame> out(n);
    auto branch = [&](std::size_t b) {
        Rng r = b == 0 ? rng : Rng::derive(run.seed, b);
        if (observe) observe(b, shared);
        LatentState z;
        if (p - 1 > 0) {
            const auto eps = noise(shared.z.size(), r);
            z = reverse_step(shared, eps_hat, grid(p - 1, T), std::span<const double>(eps), run.clip_denoised);
        } else {
            z = reverse_step(shared, eps_hat, grid(0, T), std::nullopt, run.clip_denoised);
        }
        descend(d, z, p - 1, 0, run, r);
        out[b] = std::move(z.z);
    };

    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(run.threads), n);
    if (workers <= 1) {
        for (std::size_t b = 0; b < n; ++b) branch(b);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (std::size_t b = w; b < n; b += workers) branch(b);
                    } catch (...) {
                        errors[w] = std::current_exception();
                    }
                });
            }
        }
        for (auto& e : errors) {
            if (e) std::rethrow_exception(e);
        }
    }
    return out;
}

std::vector<double> assemble_track(const std::vector<RevolutionFrame>& frames, double fs, double duration, Rng& rng,
                                   double overlap) {
    require(!frames.empty(), "assemble_track: no frames");
    require(fs > 0.0 && duration > 0.0, "assemble_track: fs and duration must be > 0");
    require(overlap >= 0.0, "assemble_track: overlap must be >= 0");
    const auto total = static_cast<std::size_t>(std::llround(fs * duration));
    const auto fade = static_cast<std::size_t>(std::llround(fs * overlap));
    for (const auto& f : frames) {
        require(fade < f.size(), "assemble_track: overlap must be shorter than every frame");
    }

    std::vector<double> out;
    out.reserve(total + frames.front().size());
    while (out.size() < total) {
        const auto& f = frames[rng.index(frames.size())];
        if (out.empty() || fade == 0) {
            out.insert(out.end(), f.begin(), f.end());
            continue;
        }
        const std::size_t start = out.size() - fade;
        for (std::size_t k = 0; k < fade; ++k) {
            const double u = (static_cast<double>(k) + 0.5) / static_cast<double>(fade);
            out[start + k] = out[start + k] * std::cos(std::numbers::pi / 2.0 * u) +
                             f[k] * std::sin(std::numbers::pi / 2.0 * u);
        }
        out.insert(out.end(), f.begin() + static_cast<std::ptrdiff_t>(fade), f.end());
    }
    out.resize(total);
    return out;
}

}  // namespace shellac
