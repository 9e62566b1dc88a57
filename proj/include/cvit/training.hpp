#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "cvit/autodiff.hpp"
#include "cvit/nn.hpp"
#include "cvit/rng.hpp"
#include "cvit/serialize.hpp"

namespace cvit {

struct TrainConfig {
    std::size_t batch_size = 64;
    std::size_t queries = 1024;
    std::size_t steps = 200000;
    std::size_t warmup = 5000;
    double peak_lr = 1e-3;
    double decay = 0.9;
    std::size_t decay_steps = 5000;
    double weight_decay = 1e-5;
    double clip_norm = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    std::size_t checkpoint_every = 1000;
    std::uint64_t seed = 0;
    std::size_t max_restarts = 5;
    double blowup_factor = 1e3;
    std::size_t median_window = 100;

    void validate() const
    {
        if (batch_size == 0 || queries == 0 || steps == 0 || decay_steps == 0 || checkpoint_every == 0) {
            throw ConfigError("batch_size, queries, steps, decay_steps and checkpoint_every must be positive");
        }
        if (warmup > steps) {
            throw ConfigError("warmup (" + std::to_string(warmup) + ") exceeds total steps (" + std::to_string(steps) +
                              ")");
        }
        if (!(peak_lr > 0) || !(decay > 0) || !(clip_norm > 0) || weight_decay < 0) {
            throw ConfigError("peak_lr, decay and clip_norm must be positive; weight_decay non-negative");
        }
        if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1) || !(adam_eps > 0)) {
            throw ConfigError("Adam betas must lie in [0,1) and eps must be positive");
        }
    }
};

/// Linear warmup from 0 to peak over `warmup` steps, then continuous
/// exponential decay peak * decay^((step - warmup) / decay_steps).
inline double lr_schedule(const TrainConfig& cfg, double step)
{
    if (step < 0) throw ConfigError("lr_schedule: negative step");
    const auto w = static_cast<double>(cfg.warmup);
    if (step < w) return cfg.peak_lr * (step / w);
    return cfg.peak_lr * std::pow(cfg.decay, (step - w) / static_cast<double>(cfg.decay_steps));
}

/// (1/B)(1/Q)(1/D) sum |pred - target|^2 over [B, Q, D].
template <class T>
Var<T> mse_sampled_queries(const Var<T>& pred, const Var<T>& target)
{
    if (pred.shape() != target.shape()) {
        throw DimensionError("mse: prediction " + shape_str(pred.shape()) + " vs target " + shape_str(target.shape()));
    }
    auto diff = sub(pred, target);
    return mean(mul(diff, diff));
}

template <class T>
struct OptimizerState {
    NamedTensors<T> m;
    NamedTensors<T> v;
    std::uint64_t step = 0;
};

/// Decoupled-weight-decay Adam with bias correction:
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * lambda * theta.
template <class T>
void adamw_step(ParamStore<T>& params, const NamedTensors<T>& grads, OptimizerState<T>& state, const TrainConfig& cfg,
                double lr)
{
    state.step += 1;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(cfg.beta1, t);
    const double c2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, theta] : params.tensors()) {
        auto git = grads.find(name);
        if (git == grads.end()) throw ConfigError("adamw: no gradient for " + name);
        const auto& g = git->second;
        if (g.shape() != theta.shape()) {
            throw DimensionError("adamw: gradient shape " + shape_str(g.shape()) + " for " + name + " " +
                                 shape_str(theta.shape()));
        }
        auto& m = state.m.try_emplace(name, Tensor<T>(theta.shape())).first->second;
        auto& v = state.v.try_emplace(name, Tensor<T>(theta.shape())).first->second;
        if (m.shape() != theta.shape() || v.shape() != theta.shape()) {
            throw DimensionError("adamw: moment shape mismatch for " + name);
        }
        auto th = theta.mutable_data();
        auto md = m.mutable_data();
        auto vd = v.mutable_data();
        auto gd = g.data();
        for (std::size_t i = 0; i < th.size(); ++i) {
            const double gi = gd[i];
            const double mi = cfg.beta1 * md[i] + (1.0 - cfg.beta1) * gi;
            const double vi = cfg.beta2 * vd[i] + (1.0 - cfg.beta2) * gi * gi;
            md[i] = static_cast<T>(mi);
            vd[i] = static_cast<T>(vi);
            const double update = (mi / c1) / (std::sqrt(vi / c2) + cfg.adam_eps);
            th[i] = static_cast<T>(th[i] - lr * update - lr * cfg.weight_decay * th[i]);
        }
    }
}

/// Global L2 norm over all gradient tensors, accumulated in double.
template <class T>
double global_norm(const NamedTensors<T>& grads)
{
    double s = 0;
    for (const auto& [_, g] : grads) {
        for (T v : g.data()) s += static_cast<double>(v) * static_cast<double>(v);
    }
    return std::sqrt(s);
}

/// Rescales grads so their global norm is at most max_norm. Returns the
/// norm before clipping.
template <class T>
double clip_global_norm(NamedTensors<T>& grads, double max_norm)
{
    const double norm = global_norm(grads);
    if (std::isfinite(norm) && norm > max_norm) {
        auto scale = [&](double f) {
            for (auto& [_, g] : grads) {
                for (auto& v : g.mutable_data()) v = static_cast<T>(v * f);
            }
        };
        scale(max_norm / norm);
        while (global_norm(grads) > max_norm) scale(1.0 - 2.0 * std::numeric_limits<T>::epsilon());
    }
    return norm;
}

struct StepResult {
    double loss = 0;
    double grad_norm = 0;
    double lr = 0;
    bool blowup = false;
};

template <class T>
using LossFn = std::function<Var<T>(const Bound<T>&)>;

/// forward -> loss -> backward -> clip -> AdamW. A non-finite loss or
/// gradient, or a loss above loss_limit, is reported as a blowup and leaves
/// params and state untouched.
template <class T>
StepResult train_step(ParamStore<T>& params, OptimizerState<T>& state, const TrainConfig& cfg, const LossFn<T>& loss_fn,
                      double loss_limit = std::numeric_limits<double>::infinity())
{
    StepResult r;
    r.lr = lr_schedule(cfg, static_cast<double>(state.step));
    Tape<T> tape;
    Bound<T> p(tape, params);
    auto loss = loss_fn(p);
    if (loss.value().size() != 1) throw DimensionError("loss must be a scalar, got " + shape_str(loss.shape()));
    r.loss = static_cast<double>(loss.value().data()[0]);
    if (!std::isfinite(r.loss) || r.loss > loss_limit) {
        r.blowup = true;
        return r;
    }
    tape.backward(loss);
    auto grads = p.gradients();
    r.grad_norm = clip_global_norm(grads, cfg.clip_norm);
    if (!std::isfinite(r.grad_norm)) {
        r.blowup = true;
        return r;
    }
    adamw_step(params, grads, state, cfg, r.lr);
    return r;
}

// Checkpoint layout: "param.<name>", "adam.m.<name>", "adam.v.<name>" in
// the training precision; "meta.step" (f64 scalar) plus any caller entries.
template <class T>
void store_training_state(Archive& a, const ParamStore<T>& params, const OptimizerState<T>& state)
{
    auto& dst = a.of<T>();
    for (const auto& [name, t] : params) dst.insert_or_assign("param." + name, t);
    for (const auto& [name, t] : state.m) dst.insert_or_assign("adam.m." + name, t);
    for (const auto& [name, t] : state.v) dst.insert_or_assign("adam.v." + name, t);
    a.f64.insert_or_assign("meta.step", Tensor<double>::scalar(static_cast<double>(state.step)));
}

template <class T>
ParamStore<T> load_params(const Archive& a)
{
    ParamStore<T> params;
    for (const auto& [name, t] : a.of<T>()) {
        if (name.starts_with("param.")) params.add(name.substr(6), t);
    }
    if (params.size() == 0) throw FormatError(FormatError::Kind::bad_header, "checkpoint has no parameters");
    return params;
}

template <class T>
OptimizerState<T> load_optimizer_state(const Archive& a)
{
    OptimizerState<T> s;
    for (const auto& [name, t] : a.of<T>()) {
        if (name.starts_with("adam.m.")) s.m.emplace(name.substr(7), t);
        else if (name.starts_with("adam.v.")) s.v.emplace(name.substr(7), t);
    }
    auto it = a.f64.find("meta.step");
    if (it == a.f64.end()) throw FormatError(FormatError::Kind::bad_header, "checkpoint has no meta.step");
    s.step = static_cast<std::uint64_t>(it->second.data()[0]);
    return s;
}

/// Where train_loop keeps its restart point.
class CheckpointStore {
public:
    virtual ~CheckpointStore() = default;
    virtual void save(const Archive& a) = 0;
    [[nodiscard]] virtual Archive load() const = 0;
};

/// Keeps the encoded bytes in memory.
class MemoryCheckpointStore : public CheckpointStore {
public:
    void save(const Archive& a) override { bytes_ = encode_archive(a); }
    [[nodiscard]] Archive load() const override { return decode_archive(bytes_); }

private:
    std::string bytes_;
};

/// Writes <dir>/latest.cvc atomically; restarts read it back from disk.
class FileCheckpointStore : public CheckpointStore {
public:
    explicit FileCheckpointStore(std::filesystem::path dir) : dir_(std::move(dir))
    {
        std::filesystem::create_directories(dir_);
    }
    void save(const Archive& a) override { save_archive(path(), a); }
    [[nodiscard]] Archive load() const override { return load_archive(path()); }
    [[nodiscard]] std::filesystem::path path() const { return dir_ / "latest.cvc"; }

private:
    std::filesystem::path dir_;
};

class TrainingAborted : public NumericError {
public:
    TrainingAborted(const std::string& what, std::vector<double> history)
        : NumericError(what), history_(std::move(history))
    {
    }
    [[nodiscard]] const std::vector<double>& history() const noexcept { return history_; }

private:
    std::vector<double> history_;
};

/// Builds the loss for one step; the Rng is the step's sampling stream.
template <class T>
using BatchLoss = std::function<Var<T>(const Bound<T>&, Rng&)>;

struct LoopHooks {
    std::function<bool(std::size_t step)> inject_nan;
    std::function<void(std::size_t step, const StepResult&)> on_step;
    std::function<void(std::size_t step)> on_restart;
    std::function<void(Archive&)> decorate_checkpoint;  // add caller metadata
};

template <class T>
struct TrainResult {
    ParamStore<T> params;
    OptimizerState<T> state;
    std::vector<double> history;  // loss per completed step
    std::size_t restarts = 0;
};

namespace detail {

inline double trailing_median(const std::vector<double>& h, std::size_t window)
{
    const std::size_t n = std::min(window, h.size());
    std::vector<double> tail(h.end() - static_cast<std::ptrdiff_t>(n), h.end());
    auto mid = tail.begin() + static_cast<std::ptrdiff_t>(n / 2);
    std::nth_element(tail.begin(), mid, tail.end());
    return *mid;
}

}  // namespace detail

/// Runs cfg.steps optimizer steps. The sampling stream of step s after r
/// restarts is Rng(seed).substream(r).substream(s). A blowup (non-finite
/// loss or gradient, or loss above blowup_factor x the trailing median)
/// reloads the last checkpoint, truncates the history to it and continues
/// with the next restart's stream.
template <class T>
TrainResult<T> train_loop(ParamStore<T> params, const TrainConfig& cfg, const BatchLoss<T>& batch_loss,
                          CheckpointStore& store, const LoopHooks& hooks = {})
{
    cfg.validate();
    TrainResult<T> res{std::move(params), {}, {}, 0};
    const Rng root(cfg.seed);

    auto checkpoint = [&] {
        Archive a;
        store_training_state(a, res.params, res.state);
        if (hooks.decorate_checkpoint) hooks.decorate_checkpoint(a);
        store.save(a);
    };
    checkpoint();

    while (res.state.step < cfg.steps) {
        const std::size_t step = res.state.step;
        Rng rng = root.substream(res.restarts).substream(step);
        const bool inject = hooks.inject_nan && hooks.inject_nan(step);
        LossFn<T> loss_fn = [&](const Bound<T>& p) {
            auto loss = batch_loss(p, rng);
            if (inject) loss = add(loss, p.constant(Tensor<T>(loss.shape(), std::numeric_limits<T>::quiet_NaN())));
            return loss;
        };
        double limit = std::numeric_limits<double>::infinity();
        if (res.history.size() >= cfg.median_window) {
            limit = cfg.blowup_factor * detail::trailing_median(res.history, cfg.median_window);
        }
        const auto r = train_step(res.params, res.state, cfg, loss_fn, limit);
        if (hooks.on_step) hooks.on_step(step, r);
        if (r.blowup) {
            if (res.restarts >= cfg.max_restarts) {
                throw TrainingAborted("training blew up at step " + std::to_string(step) + " (loss " +
                                          std::to_string(r.loss) + ", grad norm " + std::to_string(r.grad_norm) +
                                          ") after " + std::to_string(res.restarts) + " restarts",
                                      res.history);
            }
            ++res.restarts;
            const auto a = store.load();
            res.params = load_params<T>(a);
            res.state = load_optimizer_state<T>(a);
            res.history.resize(res.state.step);
            if (hooks.on_restart) hooks.on_restart(res.state.step);
            continue;
        }
        res.history.push_back(r.loss);
        if (res.state.step % cfg.checkpoint_every == 0 || res.state.step == cfg.steps) checkpoint();
    }
    return res;
}

/// k distinct indices from [0, n), via a partial Fisher-Yates shuffle.
inline std::vector<std::size_t> sample_without_replacement(std::size_t n, std::size_t k, Rng& rng)
{
    if (k > n) {
        throw ConfigError("cannot sample " + std::to_string(k) + " distinct points from " + std::to_string(n));
    }
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    for (std::size_t i = 0; i < k; ++i) std::swap(idx[i], idx[i + rng.below(n - i)]);
    idx.resize(k);
    return idx;
}

/// Smoothed loss: means over consecutive non-overlapping windows.
inline std::vector<double> window_means(const std::vector<double>& h, std::size_t window)
{
    std::vector<double> out;
    for (std::size_t i = 0; i + window <= h.size(); i += window) {
        double s = 0;
        for (std::size_t j = i; j < i + window; ++j) s += h[j];
        out.push_back(s / static_cast<double>(window));
    }
    return out;
}

}  // namespace cvit
