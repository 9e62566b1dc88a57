#pragma once

#include <cmath>
#include <complex>
#include <numbers>
#include <span>
#include <vector>

namespace cvit::spectral {

using Complex = std::complex<double>;

inline bool is_power_of_two(std::size_t n) { return n && (n & (n - 1)) == 0; }

/// Unnormalized transform X_j = sum_m x_m exp(sign * 2 pi i j m / N).
/// Radix-2 Cooley-Tukey for power-of-two N, direct summation otherwise.
inline std::vector<Complex> dft(std::span<const Complex> x, int sign)
{
    const std::size_t n = x.size();
    std::vector<Complex> a(x.begin(), x.end());
    if (n <= 1) return a;
    if (!is_power_of_two(n)) {
        std::vector<Complex> out(n);
        for (std::size_t j = 0; j < n; ++j) {
            Complex acc = 0;
            for (std::size_t m = 0; m < n; ++m) {
                const double phase = sign * 2.0 * std::numbers::pi * static_cast<double>((j * m) % n) / static_cast<double>(n);
                acc += x[m] * Complex(std::cos(phase), std::sin(phase));
            }
            out[j] = acc;
        }
        return out;
    }
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const std::size_t half = len / 2;
        for (std::size_t i = 0; i < n; i += len) {
            for (std::size_t k = 0; k < half; ++k) {
                // Twiddles from the exact angle rather than a running product.
                const double phase = sign * 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(len);
                const Complex w(std::cos(phase), std::sin(phase));
                const Complex u = a[i + k];
                const Complex v = a[i + k + half] * w;
                a[i + k] = u + v;
                a[i + k + half] = u - v;
            }
        }
    }
    return a;
}

/// Forward coefficients with 1/N normalization:
/// u_hat_j = (1/N) sum_m u_m exp(-2 pi i j m / N).
inline std::vector<Complex> forward(std::span<const double> u)
{
    std::vector<Complex> x(u.begin(), u.end());
    auto out = dft(x, -1);
    const double inv = u.empty() ? 0.0 : 1.0 / static_cast<double>(u.size());
    for (auto& v : out) v *= inv;
    return out;
}

/// Real part of sum_j Z_j exp(+2 pi i j m / N) for a full length-N spectrum.
inline std::vector<double> inverse_real(std::span<const Complex> spectrum)
{
    auto out = dft(spectrum, +1);
    std::vector<double> re(out.size());
    for (std::size_t i = 0; i < out.size(); ++i) re[i] = out[i].real();
    return re;
}

/// Weight of retained mode j in a real reconstruction on an N-grid: 1 for
/// the mean and (even N) the Nyquist mode, 2 for every other mode, which
/// stands in for its conjugate partner.
inline double mode_weight(std::size_t j, std::size_t n_grid)
{
    if (j == 0) return 1.0;
    if (n_grid % 2 == 0 && 2 * j == n_grid) return 1.0;
    return 2.0;
}

/// Band-limited (trigonometric) interpolant of grid samples u_m = u(m/N),
/// evaluated at an arbitrary y. Reproduces u at grid points.
inline double trig_interpolate(std::span<const Complex> u_hat, double y)
{
    const std::size_t n = u_hat.size();
    double acc = 0;
    for (std::size_t j = 0; j <= n / 2; ++j) {
        double phase = static_cast<double>(j) * y;
        phase -= std::floor(phase);
        const double c = std::cos(2 * std::numbers::pi * phase);
        const double s = std::sin(2 * std::numbers::pi * phase);
        acc += mode_weight(j, n) * (u_hat[j].real() * c - u_hat[j].imag() * s);
    }
    return acc;
}

}  // namespace cvit::spectral
