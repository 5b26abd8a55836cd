#include "shellac/trainer.hpp"

#include <algorithm>

#include <cmath>
#include <ostream>
#include <thread>

#include <json.hpp>

#include "shellac/error.hpp"
#include "shellac/schedule.hpp"

namespace shellac {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw UsageError("trainer", what);
}

bool finite_all(const std::vector<double>& v) {
    for (double x : v) {
        if (!std::isfinite(x)) return false;
    }
    return true;
}

}  // namespace

void TrainingConfig::validate() const {
    require(learning_rate >= 0.0 && std::isfinite(learning_rate), "learning_rate must be >= 0");
    require(ema_rate > 0.0 && ema_rate < 1.0, "ema_rate must lie in (0, 1)");
    require(batch_size >= 1, "batch_size must be >= 1");
    require(total_iterations >= 0, "total_iterations must be >= 0");
    require(adam_beta1 >= 0.0 && adam_beta1 < 1.0, "adam_beta1 must lie in [0, 1)");
    require(adam_beta2 >= 0.0 && adam_beta2 < 1.0, "adam_beta2 must lie in [0, 1)");
    require(adam_epsilon > 0.0, "adam_epsilon must be > 0");
    require(checkpoint_interval >= 0, "checkpoint_interval must be >= 0");
    require(grad_clip >= 0.0, "grad_clip must be >= 0");
    require(tau_min >= 0.0 && tau_max <= 1.0 && tau_min <= tau_max, "need 0 <= tau_min <= tau_max <= 1");
    require(threads >= 1, "threads must be >= 1");
}

double diffusion_loss(std::span<const double> eps_true, std::span<const double> eps_pred) {
    require(eps_true.size() == eps_pred.size(), "diffusion_loss: length mismatch");
    require(!eps_true.empty(), "diffusion_loss: empty frames");
    double acc = 0.0;
    for (std::size_t i = 0; i < eps_true.size(); ++i) {
        const double d = eps_pred[i] - eps_true[i];
        acc += d * d;
    }
    return acc / static_cast<double>(eps_true.size());
}

std::vector<double> ema_update(std::span<const double> shadow, std::span<const double> current, double rate) {
    require(shadow.size() == current.size(), "ema_update: shape mismatch");
    require(rate > 0.0 && rate < 1.0, "ema_update: rate must lie in (0, 1)");
    std::vector<double> out(shadow.size());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = rate * shadow[i] + (1.0 - rate) * current[i];
    return out;
}

double effective_ema_rate(const TrainingConfig& config, long completed) {
    if (!config.ema_warmup) return config.ema_rate;
    const double t = static_cast<double>(completed);
    return std::min(config.ema_rate, (1.0 + t) / (10.0 + t));
}

void ema_update(ParameterSet& params, double rate) {
    require(params.ema.size() == params.arrays.size(), "ema_update: shadow/array count mismatch");
    for (std::size_t a = 0; a < params.arrays.size(); ++a) {
        params.ema[a] = ema_update(params.ema[a], params.arrays[a].data, rate);
    }
}

std::size_t UNetModel::frame_length() const { return static_cast<std::size_t>(net_.config().sample_count); }

double UNetModel::loss_and_grad(const ParameterSet& params, std::span<const double> z, double sigma,
                                std::span<const double> eps_true, Gradients& grads) const {
    return net_.loss_and_grad(params, z, sigma, eps_true, grads);
}

AdamState AdamState::zeros_like(const ParameterSet& params) {
    AdamState s;
    for (const auto& a : params.arrays) {
        s.m.emplace_back(a.data.size(), 0.0);
        s.v.emplace_back(a.data.size(), 0.0);
    }
    return s;
}

void adam_update(ParameterSet& params, const Gradients& grads, AdamState& s, const TrainingConfig& c) {
    require(grads.size() == params.size() && s.m.size() == params.size() && s.v.size() == params.size(),
            "adam_update: layout mismatch");
    ++s.step;
    const double bc1 = 1.0 - std::pow(c.adam_beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(c.adam_beta2, static_cast<double>(s.step));
    for (std::size_t a = 0; a < params.size(); ++a) {
        auto& w = params.arrays[a];
        if (!w.trainable) continue;
        const auto& g = grads[a];
        require(g.size() == w.data.size(), "adam_update: shape mismatch in " + w.name);
        auto& m = s.m[a];
        auto& v = s.v[a];
        for (std::size_t i = 0; i < g.size(); ++i) {
            m[i] = c.adam_beta1 * m[i] + (1.0 - c.adam_beta1) * g[i];
            v[i] = c.adam_beta2 * v[i] + (1.0 - c.adam_beta2) * g[i] * g[i];
            w.data[i] -= c.learning_rate * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.adam_epsilon);
        }
    }
}

TrainingSeeds TrainingSeeds::from(std::uint64_t seed) {
    return {Rng::derive(seed, 0).engine()(), Rng::derive(seed, 1).engine()(), Rng::derive(seed, 2).engine()()};
}

TrainerState TrainerState::fresh(ParameterSet params, std::uint64_t seed) {
    TrainerState s{std::move(params), {}, Rng(seed), 0};
    s.adam = AdamState::zeros_like(s.params);
    return s;
}

LossReport training_step(const TrainableModel& model, TrainerState& state,
                         const std::vector<std::vector<double>>& batch, const TrainingConfig& config) {
    const auto start = std::chrono::steady_clock::now();
    require(!batch.empty(), "training_step: empty batch");
    const std::size_t n = model.frame_length();
    for (const auto& x : batch) require(x.size() == n, "training_step: frame length mismatch");

    // Noise draws happen up front, in item order, so the stream is independent of threading.
    struct Item {
        double tau = 0.0;
        double sigma = 0.0;
        std::vector<double> z, eps;
        Gradients grads;
        double loss = 0.0;
    };
    std::vector<Item> items(batch.size());
    for (std::size_t b = 0; b < batch.size(); ++b) {
        auto& it = items[b];
        it.tau = config.tau_min + (config.tau_max - config.tau_min) * state.rng.uniform();
        const auto p = schedule::point(schedule::DiffusionTime(it.tau));
        it.sigma = p.sigma;
        it.eps.resize(n);
        state.rng.fill_normal(it.eps);
        it.z.resize(n);
        for (std::size_t i = 0; i < n; ++i) it.z[i] = p.alpha * batch[b][i] + p.sigma * it.eps[i];
    }

    auto run = [&](std::size_t b) {
        auto& it = items[b];
        it.loss = model.loss_and_grad(state.params, it.z, it.sigma, it.eps, it.grads);
    };
    const std::size_t workers = std::min<std::size_t>(static_cast<std::size_t>(config.threads), items.size());
    if (workers <= 1) {
        for (std::size_t b = 0; b < items.size(); ++b) run(b);
    } else {
        std::vector<std::exception_ptr> errors(workers);
        {
            std::vector<std::jthread> pool;
            for (std::size_t w = 0; w < workers; ++w) {
                pool.emplace_back([&, w] {
                    try {
                        for (std::size_t b = w; b < items.size(); b += workers) run(b);
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

    // Fixed-order reduction.
    const double inv = 1.0 / static_cast<double>(items.size());
    Gradients mean = items[0].grads;
    double loss = items[0].loss;
    for (std::size_t b = 1; b < items.size(); ++b) {
        loss += items[b].loss;
        for (std::size_t a = 0; a < mean.size(); ++a) {
            for (std::size_t i = 0; i < mean[a].size(); ++i) mean[a][i] += items[b].grads[a][i];
        }
    }
    loss *= inv;
    double sq = 0.0;
    for (auto& g : mean) {
        for (double& v : g) {
            v *= inv;
            sq += v * v;
        }
    }
    const double norm = std::sqrt(sq);

    bool grads_ok = std::isfinite(norm);
    for (std::size_t a = 0; grads_ok && a < mean.size(); ++a) grads_ok = finite_all(mean[a]);
    if (!std::isfinite(loss) || !grads_ok) {
        std::string taus;
        for (const auto& it : items) taus += (taus.empty() ? "" : ", ") + std::to_string(it.tau);
        throw NumericError("trainer", "non-finite " + std::string(std::isfinite(loss) ? "gradient" : "loss") +
                                          " at iteration " + std::to_string(state.iteration + 1) +
                                          " (tau draws: " + taus + "); parameters left unchanged");
    }

    if (config.grad_clip > 0.0 && norm > config.grad_clip) {
        const double k = config.grad_clip / norm;
        for (auto& g : mean) {
            for (double& v : g) v *= k;
        }
    }

    adam_update(state.params, mean, state.adam, config);
    ema_update(state.params, effective_ema_rate(config, state.iteration));
    ++state.iteration;

    LossReport r;
    r.iteration = state.iteration;
    r.loss = loss;
    r.grad_norm = norm;
    r.wall_time = std::chrono::steady_clock::now() - start;
    return r;
}

void train(const TrainableModel& model, const TrainingConfig& config, TrainerState& state, BatchSource& data,
           const CheckpointSink& checkpoint, const ProgressSink& progress) {
    config.validate();
    require(state.iteration <= config.total_iterations, "state is already past total_iterations");
    auto save = [&] {
        if (!checkpoint) return;
        try {
            checkpoint(state, data);
        } catch (const IoError& e) {
            throw IoError("trainer", "checkpoint at iteration " + std::to_string(state.iteration) +
                                         " failed: " + e.what());
        }
    };
    while (state.iteration < config.total_iterations) {
        const auto batch = data.next();
        const auto report = training_step(model, state, batch, config);
        if (progress) progress(report);
        if (config.checkpoint_interval > 0 && state.iteration % config.checkpoint_interval == 0 &&
            state.iteration != config.total_iterations) {
            save();
        }
    }
    save();
}

void write_progress(std::ostream& out, const LossReport& r) {
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    nlohmann::json j{{"iteration", r.iteration},
                     {"loss", r.loss},
                     {"grad_norm", r.grad_norm},
                     {"wall_time", r.wall_time.count()},
                     {"timestamp", std::chrono::duration<double>(now).count()}};
    out << j.dump() << '\n';
}

}  // namespace shellac
