#pragma once

#include <cmath>
#include <complex>
#include <vector>

#include "cvit/autodiff.hpp"
#include "cvit/fields.hpp"
#include "cvit/rng.hpp"
#include "cvit/spectral.hpp"

namespace cvit {

enum class Activation { identity, gelu, relu, tanh };

inline double activate(Activation a, double x)
{
    switch (a) {
    case Activation::identity: return x;
    case Activation::gelu: return x * normal_cdf(x);
    case Activation::relu: return x > 0 ? x : 0.0;
    case Activation::tanh: return std::tanh(x);
    }
    return x;
}

/// One Fourier layer on a periodic uniform grid of N points over [0,1):
/// s(y) = sigma(W u(y) + F_n^{-1}(K F_n(u))(y)).
///
/// Conventions: F_n keeps modes 0..n-1 of u_hat_j = (1/N) sum_m u_m
/// e^{-2 pi i j m / N}; K is a complex n x n matrix mixing those modes and is
/// applied to every channel; W is a real d x d channel map. The inverse
/// completes the retained modes with their conjugates, so a retained mode
/// contributes with weight 2 (weight 1 for the mean and the Nyquist mode).
struct FnoLayer {
    std::size_t grid = 0;   // N
    std::size_t modes = 0;  // n
    std::size_t channels = 1;
    std::vector<spectral::Complex> k;  // n x n, row-major
    Tensor<double> w;                  // [d, d]
    Activation activation = Activation::gelu;

    void validate() const
    {
        if (grid == 0) throw ConfigError("FNO grid size must be positive");
        if (modes == 0 || modes > grid / 2 + 1) {
            throw ConfigError("FNO modes n=" + std::to_string(modes) + " must satisfy 1 <= n <= N/2+1 = " +
                              std::to_string(grid / 2 + 1));
        }
        if (k.size() != modes * modes) throw DimensionError("FNO K must be n x n");
        if (w.shape() != Shape{channels, channels}) throw DimensionError("FNO W must be d x d");
        for (const auto& v : k) {
            if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) throw NumericError("FNO K is not finite");
        }
    }

    /// Random instance: K and W entries standard normal scaled by 1/sqrt(n)
    /// and 1/sqrt(d).
    static FnoLayer random(std::size_t grid, std::size_t modes, std::size_t channels, Rng& rng,
                           Activation act = Activation::gelu)
    {
        FnoLayer layer{grid, modes, channels, {}, Tensor<double>({channels, channels}), act};
        const double sk = 1.0 / std::sqrt(static_cast<double>(modes));
        for (std::size_t i = 0; i < modes * modes; ++i) layer.k.emplace_back(sk * rng.normal(), sk * rng.normal());
        const double sw = 1.0 / std::sqrt(static_cast<double>(channels));
        for (auto& v : layer.w.mutable_data()) v = sw * rng.normal();
        return layer;
    }

    /// Spectral coefficients K * F_n(u) for every channel: [d][n].
    [[nodiscard]] std::vector<std::vector<spectral::Complex>> mixed_modes(const Tensor<double>& u) const
    {
        check_input(u);
        std::vector<std::vector<spectral::Complex>> out(channels);
        std::vector<double> column(grid);
        for (std::size_t c = 0; c < channels; ++c) {
            for (std::size_t m = 0; m < grid; ++m) column[m] = u.at(m, c);
            const auto u_hat = spectral::forward(column);
            auto& z = out[c];
            z.assign(modes, spectral::Complex{});
            for (std::size_t i = 0; i < modes; ++i) {
                for (std::size_t j = 0; j < modes; ++j) z[i] += k[i * modes + j] * u_hat[j];
            }
        }
        return out;
    }

    void check_input(const Tensor<double>& u) const
    {
        validate();
        if (u.shape() != Shape{grid, channels}) {
            throw DimensionError("FNO input must be [" + std::to_string(grid) + "," + std::to_string(channels) +
                                 "], got " + shape_str(u.shape()));
        }
    }
};

/// Grid evaluation: the mixed modes are placed in a full length-N spectrum
/// together with their conjugate mirrors and inverted with an FFT.
inline Tensor<double> fno_layer_grid(const FnoLayer& layer, const Tensor<double>& u)
{
    const auto z = layer.mixed_modes(u);
    const std::size_t n = layer.grid, d = layer.channels;
    Tensor<double> out({n, d});
    for (std::size_t c = 0; c < d; ++c) {
        std::vector<spectral::Complex> full(n);
        for (std::size_t j = 0; j < layer.modes; ++j) {
            full[j] += z[c][j];
            if (j != 0 && 2 * j != n) full[n - j] += std::conj(z[c][j]);
        }
        const auto conv = spectral::inverse_real(full);
        for (std::size_t m = 0; m < n; ++m) {
            double local = 0;
            for (std::size_t b = 0; b < d; ++b) local += layer.w.at(c, b) * u.at(m, b);
            out.at(m, c) = activate(layer.activation, local + conv[m]);
        }
    }
    return out;
}

/// Continuous evaluation at an arbitrary query y: the spectral term is a
/// linear map of the Fourier features [cos(2 pi k y), sin(2 pi k y)]_k whose
/// coefficients come from K F_n(u) (global conditioning), plus the local
/// bias W u~(y) with u~ the band-limited interpolant of u.
struct FnoField {
    const FnoLayer* layer = nullptr;
    std::vector<std::vector<spectral::Complex>> coefficients;  // K F_n(u), [d][n]
    std::vector<std::vector<spectral::Complex>> input_modes;   // F(u), [d][N]

    static FnoField condition(const FnoLayer& layer, const Tensor<double>& u)
    {
        FnoField f{&layer, layer.mixed_modes(u), {}};
        std::vector<double> column(layer.grid);
        for (std::size_t c = 0; c < layer.channels; ++c) {
            for (std::size_t m = 0; m < layer.grid; ++m) column[m] = u.at(m, c);
            f.input_modes.push_back(spectral::forward(column));
        }
        return f;
    }

    [[nodiscard]] std::vector<double> operator()(double y) const
    {
        if (!std::isfinite(y)) throw NumericError("FNO query must be finite");
        const std::size_t d = layer->channels;
        const auto enc = fourier_encode(std::span<const double>(&y, 1),
                                        FourierEncoding::first_modes_1d(layer->modes, 0));
        std::vector<double> local(d);
        for (std::size_t c = 0; c < d; ++c) local[c] = spectral::trig_interpolate(input_modes[c], y);
        std::vector<double> out(d);
        for (std::size_t c = 0; c < d; ++c) {
            double acc = 0;
            for (std::size_t b = 0; b < d; ++b) acc += layer->w.at(c, b) * local[b];
            double conv = 0;
            for (std::size_t j = 0; j < layer->modes; ++j) {
                const double wgt = spectral::mode_weight(j, layer->grid);
                conv += wgt * (coefficients[c][j].real() * enc[2 * j] - coefficients[c][j].imag() * enc[2 * j + 1]);
            }
            out[c] = activate(layer->activation, acc + conv);
        }
        return out;
    }
};

inline std::vector<double> fno_layer_continuous(const FnoLayer& layer, const Tensor<double>& u, double y)
{
    return FnoField::condition(layer, u)(y);
}

/// Largest |continuous - grid| over all grid points and channels, relative
/// to the largest |grid| value.
inline double fno_grid_discrepancy(const FnoLayer& layer, const Tensor<double>& u)
{
    const auto grid_out = fno_layer_grid(layer, u);
    const auto field = FnoField::condition(layer, u);
    double diff = 0, scale = 0;
    for (std::size_t m = 0; m < layer.grid; ++m) {
        const auto cont = field(static_cast<double>(m) / static_cast<double>(layer.grid));
        for (std::size_t c = 0; c < layer.channels; ++c) {
            diff = std::max(diff, std::abs(cont[c] - grid_out.at(m, c)));
            scale = std::max(scale, std::abs(grid_out.at(m, c)));
        }
    }
    return scale > 0 ? diff / scale : diff;
}

}  // namespace cvit
