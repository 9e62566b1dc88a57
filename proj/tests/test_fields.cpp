#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "cvit/fields.hpp"
#include "cvit/grad_check.hpp"
#include "cvit/rng.hpp"

using namespace cvit;

namespace {

// Direct (non-separable, no max-subtraction) weight oracle in long double.
std::vector<long double> direct_weights(double y1, double y2, const GridGeometry& g)
{
    std::vector<long double> w(g.nodes());
    long double total = 0;
    for (std::size_t i = 0; i < g.nx; ++i)
        for (std::size_t j = 0; j < g.ny; ++j) {
            const long double d1 = y1 - GridGeometry::coord(i, g.nx), d2 = y2 - GridGeometry::coord(j, g.ny);
            w[i * g.ny + j] = std::exp(-static_cast<long double>(g.epsilon) * (d1 * d1 + d2 * d2));
            total += w[i * g.ny + j];
        }
    for (auto& v : w) v /= total;
    return w;
}

Tensor<double> random_features(const GridGeometry& g, std::size_t c, Rng& rng)
{
    Tensor<double> f({g.nx, g.ny, c});
    for (auto& v : f.mutable_data()) v = rng.normal();
    return f;
}

std::vector<double> interpolate(const Tensor<double>& f, double y1, double y2, const GridGeometry& g)
{
    Tape<double> tape;
    auto out = grid_interpolate(tape.constant(f), Tensor<double>::from({1, 2}, {y1, y2}), g).value();
    return {out.data().begin(), out.data().end()};
}

}  // namespace

TEST(FourierEncode, OriginIsOnesAndZeros)
{
    const auto e = fourier_encode(std::vector<double>{0.0}, FourierEncoding::first_modes_1d(4));
    ASSERT_EQ(e.size(), 8u);
    for (std::size_t j = 0; j < 4; ++j) {
        EXPECT_EQ(e[2 * j], 1.0);
        EXPECT_EQ(e[2 * j + 1], 0.0);
    }
}

TEST(FourierEncode, QuarterPeriod)
{
    const auto e = fourier_encode(std::vector<double>{0.25}, FourierEncoding::first_modes_1d(1));
    EXPECT_NEAR(e[0], 0.0, 1e-7);
    EXPECT_NEAR(e[1], 1.0, 1e-7);
}

TEST(FourierEncode, PeriodicAndBounded)
{
    FourierEncoding enc{{{1, 2}, {3, -1}, {0, 5}}};
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        const std::vector<double> y{rng.uniform(), rng.uniform()}, y1{y[0] + 1, y[1] + 1};
        const auto a = fourier_encode(y, enc), b = fourier_encode(y1, enc);
        ASSERT_EQ(a.size(), enc.length());
        for (std::size_t i = 0; i < a.size(); ++i) {
            EXPECT_NEAR(a[i], b[i], 1e-12);
            EXPECT_LE(std::abs(a[i]), 1.0);
        }
        // ordering: pair j is (cos, sin) of 2 pi <k_j, y>
        const double ph = 2 * std::numbers::pi * (3 * y[0] - y[1]);
        EXPECT_NEAR(a[2], std::cos(ph), 1e-12);
        EXPECT_NEAR(a[3], std::sin(ph), 1e-12);
    }
}

TEST(FourierEncode, DimensionMismatchThrows)
{
    EXPECT_THROW(fourier_encode(std::vector<double>{0.1, 0.2}, FourierEncoding::first_modes_1d(2)), DimensionError);
}

TEST(NadarayaWatson, WeightsMatchDirectOracleAndSumToOne)
{
    Rng rng(2);
    for (int t = 0; t < 30; ++t) {
        const GridGeometry g{2 + rng.below(30), 2 + rng.below(30), std::pow(10.0, 4 * rng.uniform())};
        const double y1 = rng.uniform(), y2 = rng.uniform();
        const auto w = nadaraya_watson_weights(y1, y2, g);
        const auto oracle = direct_weights(y1, y2, g);
        double total = 0;
        std::vector<double> dense(g.nodes(), 0.0);
        for (std::size_t e = 0; e < w.nodes.size(); ++e) {
            EXPECT_GE(w.weights[e], 0.0);
            dense[w.nodes[e]] = w.weights[e];
            total += w.weights[e];
        }
        EXPECT_NEAR(total, 1.0, 1e-6);
        for (std::size_t i = 0; i < dense.size(); ++i) EXPECT_NEAR(dense[i], static_cast<double>(oracle[i]), 1e-12);
    }
}

TEST(NadarayaWatson, ConstantFeaturesReproduceConstant)
{
    const GridGeometry g{7, 5, 300.0};
    Tensor<double> f({7, 5, 3});
    for (std::size_t i = 0; i < f.size(); ++i) f.mutable_data()[i] = static_cast<double>(i % 3) - 0.5;
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const auto x = interpolate(f, rng.uniform(), rng.uniform(), g);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(x[c], static_cast<double>(c) - 0.5, 1e-12);
    }
}

TEST(NadarayaWatson, ZeroEpsilonIsUniformMean)
{
    const GridGeometry g{4, 6, 0.0};
    Rng rng(4);
    const auto f = random_features(g, 2, rng);
    const auto x = interpolate(f, 0.3, 0.8, g);
    for (std::size_t c = 0; c < 2; ++c) {
        double mean = 0;
        for (std::size_t n = 0; n < g.nodes(); ++n) mean += f.data()[n * 2 + c];
        mean /= static_cast<double>(g.nodes());
        EXPECT_NEAR(x[c], mean, 1e-12);
    }
}

TEST(NadarayaWatson, OnNodeLocalityOnCoarseGrids)
{
    // off-node weight is exp(-eps h^2) relative to the node; below 1e-6 once eps h^2 > ~14
    Rng rng(5);
    for (std::size_t n : {16u, 32u, 64u}) {
        const GridGeometry g{n, n, 1e5};
        const auto f = random_features(g, 3, rng);
        const std::size_t i = rng.below(n), j = rng.below(n);
        const auto x = interpolate(f, GridGeometry::coord(i, n), GridGeometry::coord(j, n), g);
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(x[c], f.at(i, j, c), 1e-6) << "n=" << n;
    }
}

TEST(NadarayaWatson, NeighbourWeightOnFineGridFollowsKernel)
{
    // on a 200-point axis the nearest neighbour keeps exp(-eps h^2) of the node weight
    const GridGeometry g{200, 1, 1e5};
    const auto w = nadaraya_watson_weights(GridGeometry::coord(100, 200), 0.0, g);
    const auto oracle = direct_weights(GridGeometry::coord(100, 200), 0.0, g);
    double node = 0, neighbour = 0;
    for (std::size_t e = 0; e < w.nodes.size(); ++e) {
        if (w.nodes[e] == 100) node = w.weights[e];
        if (w.nodes[e] == 101) neighbour = w.weights[e];
    }
    const double h = 1.0 / 199.0;
    EXPECT_NEAR(neighbour / node, std::exp(-1e5 * h * h), 1e-12);
    EXPECT_NEAR(node, static_cast<double>(oracle[100]), 1e-12);
}

TEST(NadarayaWatson, MonotoneLocality)
{
    const GridGeometry g{9, 9, 500.0};
    const std::size_t node = 4 * 9 + 4;
    auto weight_at = [&](double y1, double y2) {
        const auto w = nadaraya_watson_weights(y1, y2, g);
        for (std::size_t e = 0; e < w.nodes.size(); ++e)
            if (w.nodes[e] == node) return w.weights[e];
        return 0.0;
    };
    const double c = GridGeometry::coord(4, 9);
    double prev = weight_at(c, c);
    for (double d : {0.01, 0.02, 0.04, 0.06}) {
        const double w = weight_at(c + d, c);
        EXPECT_LE(w, prev);
        prev = w;
    }
}

TEST(NadarayaWatson, ClampsOutOfDomainQueries)
{
    const GridGeometry g{5, 5, 50.0};
    Rng rng(6);
    const auto f = random_features(g, 2, rng);
    EXPECT_EQ(interpolate(f, -0.3, 1.7, g), interpolate(f, 0.0, 1.0, g));
}

TEST(NadarayaWatson, NonFiniteQueryThrows)
{
    const GridGeometry g{3, 3, 1.0};
    EXPECT_THROW(nadaraya_watson_weights(std::nan(""), 0.5, g), NumericError);
}

TEST(NadarayaWatson, FeatureShapeMismatchThrows)
{
    Tape<double> tape;
    auto f = tape.constant(Tensor<double>({3, 4, 2}));
    EXPECT_THROW(grid_interpolate(f, Tensor<double>({1, 2}), GridGeometry{4, 3, 1.0}), DimensionError);
}

TEST(NadarayaWatson, GradientIsTheWeightVector)
{
    const GridGeometry g{6, 5, 40.0};
    Rng rng(7);
    const auto f = random_features(g, 1, rng);
    const double y1 = 0.37, y2 = 0.61;
    Tape<double> tape;
    auto fv = tape.leaf(f, true);
    tape.backward(sum(grid_interpolate(fv, Tensor<double>::from({1, 2}, {y1, y2}), g)));
    const auto grad = tape.grad(fv);
    const auto oracle = direct_weights(y1, y2, g);
    for (std::size_t n = 0; n < g.nodes(); ++n) EXPECT_NEAR(grad.data()[n], static_cast<double>(oracle[n]), 1e-12);

    const auto r = grad_check(
        [&](Tape<double>&, const Var<double>& x) {
            return sum(mul(grid_interpolate(x, Tensor<double>::from({2, 2}, {y1, y2, 0.9, 0.1}), g), x.tape().constant(
                                                                                                          Tensor<double>::from({2, 1}, {1.0, -2.0}))));
        },
        f);
    EXPECT_TRUE(r.passed) << r.max_rel_error;
}

TEST(NadarayaWatson, RejectsNegativeEpsilon)
{
    EXPECT_THROW((GridGeometry{3, 3, -1.0}.validate()), ConfigError);
}

TEST(ConditionedField, QueriesAreIndependent)
{
    // latent = mean of the input; base field = z * sin(2 pi y)
    ConditionedField<std::vector<double>, double, double, double> field{
        [](const std::vector<double>& u) {
            double s = 0;
            for (double v : u) s += v;
            return s / static_cast<double>(u.size());
        },
        [](const double& y, const double& z) { return z * std::sin(2 * std::numbers::pi * y); },
        ConditioningKind::global};
    const std::vector<double> u{1, 2, 3};
    const std::vector<double> ys{0.1, 0.25, 0.7};
    const auto batch = field.evaluate(u, ys);
    for (std::size_t i = 0; i < ys.size(); ++i) EXPECT_EQ(batch[i], field(u, ys[i]));
}

TEST(LatentGrid, InterpolateMatchesGridInterpolate)
{
    Rng rng(8);
    LatentGrid<double> grid{{4, 4, 30.0}, random_features({4, 4, 30.0}, 3, rng)};
    EXPECT_EQ(grid.channels(), 3u);
    EXPECT_EQ(grid.interpolate(0.2, 0.9), interpolate(grid.features, 0.2, 0.9, grid.geometry));
}
