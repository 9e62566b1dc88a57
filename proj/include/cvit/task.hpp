#pragma once

#include <vector>

#include "cvit/data.hpp"
#include "cvit/operators/cvit.hpp"
#include "cvit/training.hpp"

namespace cvit {

/// CvitSpec <-> f64 vector stored as "meta.spec" in checkpoints.
inline Tensor<double> encode_spec(const CvitSpec& s)
{
    const std::vector<double> v{double(s.patch_h),   double(s.patch_w),       double(s.frames),  double(s.height),
                                double(s.width),     double(s.channels),      double(s.out_dim), double(s.embed),
                                double(s.depth),     double(s.decoder_depth), double(s.heads),   double(s.mlp_width),
                                double(s.grid_nx),   double(s.grid_ny),       double(s.grid_dim), s.epsilon};
    return Tensor<double>({v.size()}, v);
}

inline CvitSpec decode_spec(const Tensor<double>& t)
{
    if (t.shape() != Shape{16}) throw FormatError(FormatError::Kind::bad_header, "meta.spec must hold 16 values");
    auto d = t.data();
    auto z = [&](std::size_t i) { return static_cast<std::size_t>(d[i]); };
    CvitSpec s;
    s.patch_h = z(0), s.patch_w = z(1), s.frames = z(2), s.height = z(3), s.width = z(4), s.channels = z(5);
    s.out_dim = z(6), s.embed = z(7), s.depth = z(8), s.decoder_depth = z(9), s.heads = z(10), s.mlp_width = z(11);
    s.grid_nx = z(12), s.grid_ny = z(13), s.grid_dim = z(14), s.epsilon = d[15];
    s.validate();
    return s;
}

/// Query coordinate of grid node m of an N-point periodic grid: (m/N, 0).
inline Tensor<float> grid_queries(std::size_t n)
{
    Tensor<float> q({n, 2});
    for (std::size_t m = 0; m < n; ++m) q.at(m, 0) = static_cast<float>(static_cast<double>(m) / static_cast<double>(n));
    return q;
}

/// Single-frame CViT regression u0 -> target on a 1D dataset [n, N, C].
class FieldTask {
public:
    FieldTask(Cvit model, const Dataset& data) : model_(std::move(model)), data_(&data)
    {
        data.validate();
        const auto& s = model_.spec();
        if (s.frames != 1 || s.height != 1 || s.width != data.grid() || s.channels != data.channels()) {
            throw DimensionError("model expects [1,1," + std::to_string(s.width) + "," + std::to_string(s.channels) +
                                 "] frames but the dataset has N=" + std::to_string(data.grid()) +
                                 ", channels=" + std::to_string(data.channels()));
        }
    }

    [[nodiscard]] const Cvit& model() const noexcept { return model_; }

    /// Inputs [B, 1, 1, N, C] for the given samples.
    [[nodiscard]] Tensor<float> inputs(const Tensor<float>& frames, const std::vector<std::size_t>& samples) const
    {
        const std::size_t w = data_->grid() * data_->channels();
        Tensor<float> u({samples.size(), 1, 1, data_->grid(), data_->channels()});
        auto dst = u.mutable_data();
        for (std::size_t b = 0; b < samples.size(); ++b) {
            std::copy_n(frames.data().begin() + static_cast<std::ptrdiff_t>(samples[b] * w), w,
                        dst.begin() + static_cast<std::ptrdiff_t>(b * w));
        }
        return u;
    }

    /// One training batch: B samples and Q grid nodes, both drawn without
    /// replacement; returns the sampled-query MSE.
    Var<float> batch_loss(const Bound<float>& p, Rng& rng, std::size_t batch, std::size_t queries) const
    {
        const std::size_t n = data_->samples(), grid = data_->grid(), ch = data_->channels();
        const auto samples = sample_without_replacement(n, std::min(batch, n), rng);
        const auto nodes = sample_without_replacement(grid, queries, rng);
        Tensor<float> q({nodes.size(), 2});
        Tensor<float> target({samples.size(), nodes.size(), ch});
        for (std::size_t j = 0; j < nodes.size(); ++j) {
            q.at(j, 0) = static_cast<float>(static_cast<double>(nodes[j]) / static_cast<double>(grid));
        }
        auto td = target.mutable_data();
        for (std::size_t b = 0; b < samples.size(); ++b) {
            for (std::size_t j = 0; j < nodes.size(); ++j) {
                for (std::size_t k = 0; k < ch; ++k) {
                    td[(b * nodes.size() + j) * ch + k] = data_->target.at(samples[b], nodes[j], k);
                }
            }
        }
        auto pred = model_.forward(p, inputs(data_->u0, samples), q);
        return mse_sampled_queries(pred, p.constant(std::move(target)));
    }

    [[nodiscard]] BatchLoss<float> loss_fn(std::size_t batch, std::size_t queries) const
    {
        return [this, batch, queries](const Bound<float>& p, Rng& rng) { return batch_loss(p, rng, batch, queries); };
    }

    const Dataset& data() const noexcept { return *data_; }

private:
    Cvit model_;
    const Dataset* data_;
};

/// Gradient-free CViT evaluation of frames [n, N, C] at queries [Q, 2],
/// in chunks of `chunk` samples. Returns [n, Q, out_dim].
inline Tensor<float> cvit_predict(const Cvit& model, const ParamStore<float>& params, const Tensor<float>& frames,
                                  const Tensor<float>& queries, std::size_t chunk = 32)
{
    const auto& s = model.spec();
    if (frames.rank() != 3 || frames.dim(1) != s.width || frames.dim(2) != s.channels) {
        throw DimensionError("prediction frames must be [n," + std::to_string(s.width) + "," +
                             std::to_string(s.channels) + "], got " + shape_str(frames.shape()));
    }
    const std::size_t n = frames.dim(0), q = queries.dim(0), w = s.width * s.channels;
    Tensor<float> out({n, q, s.out_dim});
    auto od = out.mutable_data();
    for (std::size_t b0 = 0; b0 < n; b0 += chunk) {
        const std::size_t b1 = std::min(n, b0 + chunk);
        Tensor<float> u({b1 - b0, 1, 1, s.width, s.channels});
        std::copy_n(frames.data().begin() + static_cast<std::ptrdiff_t>(b0 * w), (b1 - b0) * w,
                    u.mutable_data().begin());
        Tape<float> tape;
        Bound<float> p(tape, params, false);
        const auto pred = model.forward(p, u, queries).value();
        std::copy(pred.data().begin(), pred.data().end(),
                  od.begin() + static_cast<std::ptrdiff_t>(b0 * q * s.out_dim));
    }
    return out;
}

/// Archive holding a trained CViT: parameters, optimizer state, spec.
inline Archive make_model_archive(const CvitSpec& spec, const ParamStore<float>& params,
                                  const OptimizerState<float>& state)
{
    Archive a;
    store_training_state(a, params, state);
    a.f64.insert_or_assign("meta.spec", encode_spec(spec));
    return a;
}

struct LoadedModel {
    Cvit model;
    ParamStore<float> params;
};

inline LoadedModel load_model(const Archive& a)
{
    auto it = a.f64.find("meta.spec");
    if (it == a.f64.end()) throw FormatError(FormatError::Kind::bad_header, "checkpoint has no meta.spec entry");
    return {Cvit(decode_spec(it->second)), load_params<float>(a)};
}

}  // namespace cvit
