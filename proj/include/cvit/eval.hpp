#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <iomanip>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "cvit/errors.hpp"
#include "cvit/tensor.hpp"

namespace cvit {

/// Relative L2 error of one sample with values [N, D] flattened row-major:
/// (1/D) sum_k ||pred_k - truth_k|| / ||truth_k|| over grid points.
template <class T>
double rel_l2_sample(std::span<const T> pred, std::span<const T> truth, std::size_t channels,
                     std::size_t sample_id = 0)
{
    if (pred.size() != truth.size()) {
        throw DimensionError("rel_l2: prediction has " + std::to_string(pred.size()) + " values, truth " +
                             std::to_string(truth.size()));
    }
    if (channels == 0 || truth.size() % channels != 0) throw DimensionError("rel_l2: bad channel count");
    double total = 0;
    for (std::size_t k = 0; k < channels; ++k) {
        double num = 0, den = 0;
        for (std::size_t i = k; i < truth.size(); i += channels) {
            const double e = static_cast<double>(pred[i]) - static_cast<double>(truth[i]);
            num += e * e;
            den += static_cast<double>(truth[i]) * static_cast<double>(truth[i]);
        }
        if (den == 0) {
            throw NumericError("rel_l2: truth of sample " + std::to_string(sample_id) + ", variable " +
                               std::to_string(k) + " has zero norm");
        }
        total += std::sqrt(num) / std::sqrt(den);
    }
    return total / static_cast<double>(channels);
}

/// Per-sample relative L2 over [n, N, D] arrays.
template <class T>
std::vector<double> rel_l2_per_sample(const Tensor<T>& pred, const Tensor<T>& truth)
{
    if (pred.shape() != truth.shape() || pred.rank() != 3) {
        throw DimensionError("rel_l2: expected equal [n,N,D] shapes, got " + shape_str(pred.shape()) + " and " +
                             shape_str(truth.shape()));
    }
    const std::size_t n = pred.dim(0), w = pred.dim(1) * pred.dim(2);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        out[i] = rel_l2_sample<T>(pred.data().subspan(i * w, w), truth.data().subspan(i * w, w), pred.dim(2), i);
    }
    return out;
}

/// Mean of rel_l2_per_sample.
template <class T>
double rel_l2(const Tensor<T>& pred, const Tensor<T>& truth)
{
    const auto v = rel_l2_per_sample(pred, truth);
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// sum_m | |f_{m+1} - f_m| - |g_{m+1} - g_m| | with circular indexing.
template <class T>
double total_variation(std::span<const T> f, std::span<const T> g)
{
    if (f.size() != g.size()) {
        throw DimensionError("total_variation: lengths " + std::to_string(f.size()) + " and " +
                             std::to_string(g.size()) + " differ");
    }
    const std::size_t n = f.size();
    double tv = 0;
    for (std::size_t m = 0; m < n; ++m) {
        const std::size_t next = (m + 1) % n;
        const double df = std::abs(static_cast<double>(f[next]) - static_cast<double>(f[m]));
        const double dg = std::abs(static_cast<double>(g[next]) - static_cast<double>(g[m]));
        tv += std::abs(df - dg);
    }
    return tv;
}

template <class T>
double total_variation(const std::vector<T>& f, const std::vector<T>& g)
{
    return total_variation(std::span<const T>(f), std::span<const T>(g));
}

struct Summary {
    double mean = 0, median = 0, worst = 0;
};

inline Summary summarize(std::vector<double> v)
{
    if (v.empty()) return {};
    Summary s;
    s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    s.median = n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    s.worst = v.back();
    return s;
}

struct MetricsReport {
    std::vector<double> rel_l2;
    std::vector<double> tv;

    [[nodiscard]] Summary rel_l2_summary() const { return summarize(rel_l2); }
    [[nodiscard]] Summary tv_summary() const { return summarize(tv); }

    /// `sample_id,rel_l2,tv` rows, then the rel-L2 aggregates and the TV
    /// aggregates as comment lines.
    [[nodiscard]] std::string to_csv() const
    {
        std::ostringstream os;
        os << std::setprecision(9);
        os << "sample_id,rel_l2,tv\n";
        for (std::size_t i = 0; i < rel_l2.size(); ++i) os << i << ',' << rel_l2[i] << ',' << tv[i] << '\n';
        const auto r = rel_l2_summary(), t = tv_summary();
        os << "# mean=" << r.mean << ", median=" << r.median << ", worst=" << r.worst << '\n';
        os << "# tv mean=" << t.mean << ", median=" << t.median << ", worst=" << t.worst << '\n';
        return os.str();
    }
};

/// rel-L2 and TV for every sample of [n, N, D] arrays. TV is taken per
/// channel and averaged over channels.
template <class T>
MetricsReport evaluate_metrics(const Tensor<T>& pred, const Tensor<T>& truth)
{
    MetricsReport r;
    r.rel_l2 = rel_l2_per_sample(pred, truth);
    const std::size_t n = pred.dim(0), grid = pred.dim(1), ch = pred.dim(2);
    std::vector<T> f(grid), g(grid);
    for (std::size_t i = 0; i < n; ++i) {
        double tv = 0;
        for (std::size_t k = 0; k < ch; ++k) {
            for (std::size_t m = 0; m < grid; ++m) {
                f[m] = pred.data()[(i * grid + m) * ch + k];
                g[m] = truth.data()[(i * grid + m) * ch + k];
            }
            tv += total_variation(f, g);
        }
        r.tv.push_back(tv / static_cast<double>(ch));
    }
    return r;
}

/// Auto-regressive rollout: `step` maps a window of frames (oldest first)
/// to the next frame; the window then drops its oldest frame and appends
/// the prediction. Returns the n_steps predicted frames.
template <class Frame>
std::vector<Frame> rollout(const std::function<Frame(const std::vector<Frame>&)>& step, std::vector<Frame> window,
                           std::size_t n_steps)
{
    if (n_steps == 0) throw ConfigError("rollout needs at least one step");
    if (window.empty()) throw ConfigError("rollout needs a non-empty initial window");
    std::vector<Frame> out;
    out.reserve(n_steps);
    for (std::size_t s = 0; s < n_steps; ++s) {
        Frame next = step(window);
        window.erase(window.begin());
        window.push_back(next);
        out.push_back(std::move(next));
    }
    return out;
}

}  // namespace cvit
