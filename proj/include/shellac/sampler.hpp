#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "shellac/denoiser.hpp"
#include "shellac/rng.hpp"
#include "shellac/schedule.hpp"

namespace shellac {

using RevolutionFrame = std::vector<double>;

/// Clip bound used by the tools for trained models. Normalized training frames
/// peak around 3-6 (clicks), so it only catches clean estimates no training
/// frame could produce, mostly on the first step out of tau = 1.
inline constexpr double kDefaultClipDenoised = 10.0;

/// One reverse-diffusion execution.
struct SamplerRun {
    int steps = 150;
    double tau0 = 1.0;
    std::optional<double> tau_p;
    int revolutions = 1;
    std::uint64_t seed = 0;
    int threads = 1;
    // Bound on the implied clean estimate x_hat = (z - sigma eps_hat) / alpha at
    // every step. Unset keeps the step exactly as derived; with a bound the step
    // is unchanged wherever |x_hat| stays inside it.
    std::optional<double> clip_denoised;

    void validate() const;

    /// Grid index round(tau0 * steps) where the reverse loop starts.
    int start_index() const;
    /// Grid index round(tau_p * steps) where branches split; requires tau_p.
    int branch_index() const;

    bool operator==(const SamplerRun&) const = default;
};

struct LatentState {
    std::vector<double> z;
    schedule::DiffusionTime tau{0.0};
};

/// z = alpha_tau x + sigma_tau eps.
LatentState perturb(std::span<const double> x, schedule::DiffusionTime tau, std::span<const double> eps);

/// z_s = f z_tau - g eps_hat + h eps. `eps` must be given iff s > 0.
/// With `clip_denoised` the mean is computed as A z + B clamp(x_hat).
LatentState reverse_step(const LatentState& z, std::span<const double> eps_hat, schedule::DiffusionTime s,
                         std::optional<std::span<const double>> eps,
                         std::optional<double> clip_denoised = std::nullopt);

/// Alg. 2: z_1 ~ N(0, I), then T reverse steps. Requires run.tau0 == 1.
RevolutionFrame sample_unconditional(const Denoiser& denoiser, const SamplerRun& run);

/// Alg. 3: perturb the guide to tau0 on the step grid, then reverse to 0.
/// tau0 == 0 returns the guide. With tau_p set this returns branch 0 of
/// `guided_variations`.
RevolutionFrame sample_guided(const Denoiser& denoiser, std::span<const double> guide, const SamplerRun& run);

/// Guided start followed by bifurcation into run.revolutions branches.
std::vector<RevolutionFrame> guided_variations(const Denoiser& denoiser, std::span<const double> guide,
                                               const SamplerRun& run);

/// Unconditional start followed by bifurcation into run.revolutions branches.
std::vector<RevolutionFrame> unconditional_variations(const Denoiser& denoiser, const SamplerRun& run);

/// Observes the latent each branch starts from (instrumentation hook).
using BranchObserver = std::function<void(std::size_t branch, const LatentState& at_tau_p)>;

/// Shared trajectory from start.tau down to tau_p, where Eq. (17) draws N
/// independent noise instances from one shared eps_hat; each branch then
/// continues to 0. The shared stream is Rng(run.seed) advanced by the caller's
/// draws (`rng`); branch 0 keeps that stream and branch n > 0 uses
/// Rng::derive(run.seed, n), so serial and parallel execution agree.
std::vector<RevolutionFrame> sample_variations(const Denoiser& denoiser, const SamplerRun& run,
                                               const LatentState& start, Rng& rng,
                                               const BranchObserver& observe = {});

/// Concatenates frames drawn uniformly with replacement until `duration`
/// seconds are covered, joining them with an equal-power crossfade of
/// `overlap` seconds. Output length is round(fs * duration).
std::vector<double> assemble_track(const std::vector<RevolutionFrame>& frames, double fs, double duration, Rng& rng,
                                   double overlap = 0.0);

}  // namespace shellac
