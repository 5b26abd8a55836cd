#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <span>
#include <vector>

#include "shellac/dataset.hpp"
#include "shellac/denoiser.hpp"
#include "shellac/rng.hpp"

namespace shellac {

struct TrainingConfig {
    double learning_rate = 2e-4;
    double ema_rate = 0.999;
    // Use min(ema_rate, (1 + t) / (10 + t)) after t updates so that short runs
    // are not dominated by the initial weights.
    bool ema_warmup = true;
    int batch_size = 16;
    long total_iterations = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_epsilon = 1e-8;
    std::uint64_t seed = 0;
    long checkpoint_interval = 0;  // 0 = only the final checkpoint
    double grad_clip = 0.0;        // global L2 norm bound, 0 = off
    // Range of the uniform diffusion-time draw; [0, 1] reproduces Alg. 1.
    double tau_min = 0.0;
    double tau_max = 1.0;
    int threads = 1;

    void validate() const;

    bool operator==(const TrainingConfig&) const = default;
};

struct LossReport {
    long iteration = 0;
    double loss = 0.0;
    double grad_norm = 0.0;
    std::chrono::duration<double> wall_time{0.0};
};

/// Mean squared difference with constant weighting.
double diffusion_loss(std::span<const double> eps_true, std::span<const double> eps_pred);

/// rate * shadow + (1 - rate) * current, element-wise.
std::vector<double> ema_update(std::span<const double> shadow, std::span<const double> current, double rate);

/// Rate applied at the update following `completed` updates.
double effective_ema_rate(const TrainingConfig& config, long completed);

/// Relaxes params.ema toward params.arrays in place.
void ema_update(ParameterSet& params, double rate);

/// Anything the trainer can fit: a noise predictor with an analytic gradient.
class TrainableModel {
public:
    virtual ~TrainableModel() = default;
    virtual std::size_t frame_length() const = 0;
    virtual double loss_and_grad(const ParameterSet& params, std::span<const double> z, double sigma,
                                 std::span<const double> eps_true, Gradients& grads) const = 0;
};

class UNetModel final : public TrainableModel {
public:
    explicit UNetModel(const UNet& net) : net_(net) {}

    std::size_t frame_length() const override;
    double loss_and_grad(const ParameterSet& params, std::span<const double> z, double sigma,
                         std::span<const double> eps_true, Gradients& grads) const override;

private:
    const UNet& net_;
};

struct AdamState {
    std::vector<std::vector<double>> m;
    std::vector<std::vector<double>> v;
    long step = 0;

    static AdamState zeros_like(const ParameterSet& params);
};

/// One bias-corrected Adam update of the trainable arrays.
void adam_update(ParameterSet& params, const Gradients& grads, AdamState& state, const TrainingConfig& config);

/// Everything that evolves during training; checkpointing this (plus the batch
/// source position) makes a resumed run bit-identical to an uninterrupted one.
struct TrainerState {
    ParameterSet params;
    AdamState adam;
    Rng rng;
    long iteration = 0;

    static TrainerState fresh(ParameterSet params, std::uint64_t seed);
};

/// Independent streams for one training run, all derived from TrainingConfig::seed
/// so that a single integer reproduces the run.
struct TrainingSeeds {
    std::uint64_t init = 0;     // weight initialization
    std::uint64_t trainer = 0;  // tau and eps draws
    std::uint64_t data = 0;     // chunk positions

    static TrainingSeeds from(std::uint64_t seed);
};

/// One step of Alg. 1 over `batch`. Draws tau and eps per item from state.rng,
/// averages loss and gradient over the batch in item order, applies Adam then EMA.
/// A non-finite loss or gradient throws NumericError before any weight changes.
LossReport training_step(const TrainableModel& model, TrainerState& state,
                         const std::vector<std::vector<double>>& batch, const TrainingConfig& config);

using CheckpointSink = std::function<void(const TrainerState& state, const BatchSource& data)>;
using ProgressSink = std::function<void(const LossReport&)>;

/// Runs steps until state.iteration reaches config.total_iterations. The sink is
/// called every checkpoint_interval iterations and always at the end.
void train(const TrainableModel& model, const TrainingConfig& config, TrainerState& state, BatchSource& data,
           const CheckpointSink& checkpoint, const ProgressSink& progress = {});

/// One JSON record per line: iteration, loss, grad_norm, wall_time, timestamp.
void write_progress(std::ostream& out, const LossReport& report);

}  // namespace shellac
