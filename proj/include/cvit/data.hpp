#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include "cvit/io.hpp"
#include "cvit/parallel.hpp"
#include "cvit/rng.hpp"
#include "cvit/spectral.hpp"
#include "cvit/tensor.hpp"

namespace cvit {

/// Mean-zero periodic Gaussian random field on [0,1) with covariance
/// (-Laplacian + tau^2)^(-d), truncated to modes 1..M (M = 0 means N/2).
struct GrfSpec {
    std::size_t grid = 200;
    double tau = 3.0;
    double d = 2.0;
    std::size_t modes = 0;

    [[nodiscard]] std::size_t max_modes() const { return modes ? modes : grid / 2; }

    void validate() const
    {
        if (grid == 0 || grid % 2 != 0) throw ConfigError("GRF grid size must be even and positive");
        if (!(tau > 0) || !(d > 0)) throw ConfigError("GRF tau and d must be positive");
        if (max_modes() > grid / 2) throw ConfigError("GRF modes must not exceed N/2");
    }
};

/// lambda_k = ((2 pi k)^2 + tau^2)^(-d)
inline double grf_eigenvalue(const GrfSpec& s, std::size_t k)
{
    const double w = 2.0 * std::numbers::pi * static_cast<double>(k);
    return std::pow(w * w + s.tau * s.tau, -s.d);
}

/// u(x_m) = sum_{k=1..M} sqrt(lambda_k) (a_k cos 2 pi k x_m + b_k sin 2 pi k x_m),
/// x_m = m/N, a_k and b_k standard normal drawn in the order a_1, b_1, a_2, ...
inline std::vector<double> sample_grf(const GrfSpec& s, Rng& rng)
{
    s.validate();
    const std::size_t n = s.grid, modes = s.max_modes();
    std::vector<double> u(n, 0.0);
    for (std::size_t k = 1; k <= modes; ++k) {
        const double amp = std::sqrt(grf_eigenvalue(s, k));
        const double a = rng.normal(), b = rng.normal();
        for (std::size_t m = 0; m < n; ++m) {
            // reduce k*m mod N first so the phase stays exact for large k*m
            const double phase = 2.0 * std::numbers::pi * static_cast<double>((k * m) % n) / static_cast<double>(n);
            u[m] += amp * (a * std::cos(phase) + b * std::sin(phase));
        }
    }
    return u;
}

/// u0 = -1 + 2 * 1[u >= 0]
inline std::vector<float> sign_threshold(const std::vector<double>& u)
{
    std::vector<float> out(u.size());
    for (std::size_t i = 0; i < u.size(); ++i) out[i] = u[i] >= 0.0 ? 1.0f : -1.0f;
    return out;
}

/// Circular sign changes of a profile.
inline std::size_t discontinuity_count(const std::vector<float>& u)
{
    std::size_t c = 0;
    for (std::size_t m = 0; m < u.size(); ++m) c += u[m] != u[(m + 1) % u.size()];
    return c;
}

/// Samples stored as [n, N, channels] in f32. Metadata is an ordered
/// key=value map written into the file header.
struct Dataset {
    Tensor<float> u0;
    Tensor<float> target;
    std::map<std::string, std::string> metadata;

    [[nodiscard]] std::size_t samples() const { return u0.rank() ? u0.dim(0) : 0; }
    [[nodiscard]] std::size_t grid() const { return u0.rank() ? u0.dim(1) : 0; }
    [[nodiscard]] std::size_t channels() const { return u0.rank() ? u0.dim(2) : 0; }

    [[nodiscard]] std::vector<float> row(const Tensor<float>& t, std::size_t i) const
    {
        const std::size_t w = grid() * channels();
        return {t.data().begin() + static_cast<std::ptrdiff_t>(i * w),
                t.data().begin() + static_cast<std::ptrdiff_t>((i + 1) * w)};
    }

    void validate() const
    {
        if (u0.rank() != 3 || target.shape() != u0.shape()) {
            throw DimensionError("dataset arrays must both be [n,N,channels], got " + shape_str(u0.shape()) + " and " +
                                 shape_str(target.shape()));
        }
    }
};

enum class ShiftMode { exact, bandlimited_fallback };

struct AdvectionOptions {
    double t = 0.5;
    double c = 1.0;
    std::uint64_t seed = 0;
    ShiftMode shift = ShiftMode::exact;
};

/// Band-limited translation of a periodic profile by `shift` periods.
inline std::vector<double> spectral_shift(const std::vector<double>& u, double shift)
{
    const std::size_t n = u.size();
    const auto u_hat = spectral::forward(u);
    std::vector<double> out(n, 0.0);
    for (std::size_t m = 0; m < n; ++m) {
        const double x = static_cast<double>(m) / static_cast<double>(n) - shift;
        out[m] = spectral::trig_interpolate(u_hat, x);
    }
    return out;
}

/// Periodic linear advection u_t + c u_x = 0 from sign-thresholded GRF
/// initial conditions; target(x) = u0(x - c t). Sample i draws from
/// Rng(seed).substream(i).
inline Dataset make_advection_dataset(std::size_t n_samples, const GrfSpec& spec, const AdvectionOptions& opt)
{
    if (n_samples == 0) throw ConfigError("advection dataset needs at least one sample");
    spec.validate();
    const std::size_t n = spec.grid;
    const double cells = opt.c * opt.t * static_cast<double>(n);
    const double rounded = std::round(cells);
    const bool integral = std::abs(cells - rounded) <= 1e-9 * std::max(1.0, std::abs(cells));
    if (!integral && opt.shift == ShiftMode::exact) {
        throw ConfigError("c*t*N = " + std::to_string(cells) +
                          " is not an integer; an exact circular shift is impossible (use the band-limited fallback)");
    }
    const auto nn = static_cast<long long>(n);
    const long long shift = integral ? ((static_cast<long long>(rounded) % nn) + nn) % nn : 0;

    Dataset ds{Tensor<float>({n_samples, n, 1}), Tensor<float>({n_samples, n, 1}), {}};
    auto u0d = ds.u0.mutable_data();
    auto td = ds.target.mutable_data();
    std::vector<std::uint32_t> resampled(n_samples, 0);
    const Rng root(opt.seed);
    parallel_for(n_samples, 16, [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            Rng rng = root.substream(i);
            std::vector<float> u0;
            for (;;) {
                u0 = sign_threshold(sample_grf(spec, rng));
                if (discontinuity_count(u0) > 0) break;
                ++resampled[i];
            }
            std::vector<float> target(n);
            if (integral) {
                for (std::size_t m = 0; m < n; ++m) target[m] = u0[static_cast<std::size_t>((static_cast<long long>(m) - shift + nn) % nn)];
            } else {
                const auto shifted = spectral_shift(std::vector<double>(u0.begin(), u0.end()), opt.c * opt.t);
                for (std::size_t m = 0; m < n; ++m) target[m] = static_cast<float>(shifted[m]);
            }
            std::copy(u0.begin(), u0.end(), u0d.begin() + static_cast<std::ptrdiff_t>(i * n));
            std::copy(target.begin(), target.end(), td.begin() + static_cast<std::ptrdiff_t>(i * n));
        }
    });
    std::size_t total_resampled = 0;
    for (auto r : resampled) total_resampled += r;

    auto fmt = [](double v) {
        std::ostringstream os;
        os.precision(17);
        os << v;
        return os.str();
    };
    ds.metadata = {{"task", "advection"},
                   {"tau", fmt(spec.tau)},
                   {"d", fmt(spec.d)},
                   {"modes", std::to_string(spec.max_modes())},
                   {"t", fmt(opt.t)},
                   {"c", fmt(opt.c)},
                   {"seed", std::to_string(opt.seed)},
                   {"shift", integral ? "exact" : "bandlimited"},
                   {"shift_cells", integral ? std::to_string(shift) : fmt(cells)},
                   {"resampled_constant", std::to_string(total_resampled)}};
    return ds;
}

/// Train/validation/test sample ranges in the ratio 2:1:1 (20k/10k/10k at
/// n = 40k); rounding remainders go to the training split.
struct SplitRanges {
    std::size_t train_end, val_end, test_end;
};

inline SplitRanges split_ranges(std::size_t n)
{
    const std::size_t val = n / 4, test = n / 4;
    const std::size_t train = n - val - test;
    return {train, train + val, n};
}

// DatasetFile: "CVD1", u16 version, u32 n_samples, u32 N, u32 channels,
// u32 metadata length, UTF-8 metadata ("key=value\n" lines), then per sample
// u0 followed by target as little-endian f32.
inline constexpr std::uint16_t dataset_version = 1;

inline std::string encode_dataset(const Dataset& ds)
{
    ds.validate();
    std::string meta;
    for (const auto& [k, v] : ds.metadata) {
        if (k.find_first_of("=\n") != std::string::npos || v.find('\n') != std::string::npos) {
            throw ConfigError("metadata entries may not contain '=' in keys or newlines: " + k);
        }
        meta += k + "=" + v + "\n";
    }
    io::ByteWriter w;
    w.bytes("CVD1");
    w.put<std::uint16_t>(dataset_version);
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.samples()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.grid()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(ds.channels()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    w.bytes(meta);
    const std::size_t width = ds.grid() * ds.channels();
    for (std::size_t i = 0; i < ds.samples(); ++i) {
        for (std::size_t j = 0; j < width; ++j) w.put<float>(ds.u0.data()[i * width + j]);
        for (std::size_t j = 0; j < width; ++j) w.put<float>(ds.target.data()[i * width + j]);
    }
    return w.take();
}

inline Dataset decode_dataset(std::string_view bytes)
{
    if (bytes.size() < 4) throw FormatError(FormatError::Kind::truncated_payload, "dataset file shorter than its magic");
    io::ByteReader r(bytes);
    if (r.bytes(4) != "CVD1") throw FormatError(FormatError::Kind::bad_magic, "bad magic: not a dataset file");
    const auto version = r.get<std::uint16_t>("dataset version");
    if (version != dataset_version) {
        throw FormatError(FormatError::Kind::version_mismatch, "dataset version " + std::to_string(version) +
                                                                   " (expected " + std::to_string(dataset_version) +
                                                                   ")");
    }
    const auto n = r.get<std::uint32_t>("sample count");
    const auto grid = r.get<std::uint32_t>("grid size");
    const auto channels = r.get<std::uint32_t>("channel count");
    const auto meta_len = r.get<std::uint32_t>("metadata length");
    const std::string meta(r.bytes(meta_len, "metadata"));

    Dataset ds{Tensor<float>({n, grid, channels}), Tensor<float>({n, grid, channels}), {}};
    std::istringstream lines(meta);
    for (std::string line; std::getline(lines, line);) {
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw FormatError(FormatError::Kind::bad_header, "malformed metadata line: " + line);
        ds.metadata[line.substr(0, eq)] = line.substr(eq + 1);
    }
    const std::size_t width = std::size_t{grid} * channels;
    if (r.remaining() / 8 / std::max<std::size_t>(width, 1) < n && width > 0) {
        throw FormatError(FormatError::Kind::truncated_payload,
                          "truncated payload: " + std::to_string(r.remaining()) + " bytes for " + std::to_string(n) +
                              " samples of " + std::to_string(width) + " values");
    }
    auto u0 = ds.u0.mutable_data();
    auto tg = ds.target.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < width; ++j) u0[i * width + j] = r.get<float>("sample payload");
        for (std::size_t j = 0; j < width; ++j) tg[i * width + j] = r.get<float>("sample payload");
    }
    if (r.remaining() != 0) throw FormatError(FormatError::Kind::bad_header, "trailing bytes after dataset payload");
    return ds;
}

inline void write_dataset(const std::filesystem::path& path, const Dataset& ds)
{
    io::write_file_atomic(path, encode_dataset(ds));
}

inline Dataset read_dataset(const std::filesystem::path& path) { return decode_dataset(io::read_file(path)); }

}  // namespace cvit
