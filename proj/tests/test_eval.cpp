#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "cvit/eval.hpp"
#include "cvit/rng.hpp"

using namespace cvit;

namespace {

Tensor<float> randf(Shape s, Rng& rng)
{
    Tensor<float> t(std::move(s));
    for (auto& v : t.mutable_data()) v = static_cast<float>(rng.normal());
    return t;
}

long double rel_l2_oracle(const Tensor<float>& p, const Tensor<float>& t)
{
    const std::size_t n = t.dim(0), g = t.dim(1), d = t.dim(2);
    long double total = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t k = 0; k < d; ++k) {
            long double num = 0, den = 0;
            for (std::size_t m = 0; m < g; ++m) {
                const long double e = static_cast<long double>(p.at(i, m, k)) - t.at(i, m, k);
                num += e * e;
                den += static_cast<long double>(t.at(i, m, k)) * t.at(i, m, k);
            }
            total += std::sqrt(num) / std::sqrt(den);
        }
    return total / static_cast<long double>(n * d);
}

long double tv_oracle(const std::vector<double>& f, const std::vector<double>& g)
{
    long double s = 0;
    const std::size_t n = f.size();
    for (std::size_t m = 0; m < n; ++m) {
        const long double a = std::abs(static_cast<long double>(f[(m + 1) % n]) - f[m]);
        const long double b = std::abs(static_cast<long double>(g[(m + 1) % n]) - g[m]);
        s += std::abs(a - b);
    }
    return s;
}

}  // namespace

TEST(RelL2, ExactMatchIsZero)
{
    Rng rng(1);
    const auto t = randf({3, 20, 2}, rng);
    EXPECT_EQ(rel_l2(t, t), 0.0);
}

TEST(RelL2, TenPercentScaling)
{
    Rng rng(2);
    Tensor<double> t({4, 30, 2});
    for (auto& v : t.mutable_data()) v = rng.normal();
    Tensor<double> p(t.shape());
    for (std::size_t i = 0; i < t.size(); ++i) p.mutable_data()[i] = 1.1 * t.data()[i];
    EXPECT_NEAR(rel_l2(p, t), 0.10, 1e-12);
}

TEST(RelL2, MatchesDirectOracle)
{
    Rng rng(3);
    for (int r = 0; r < 100; ++r) {
        const std::size_t n = 1 + rng.below(4), g = 2 + rng.below(64), d = 1 + rng.below(3);
        const auto t = randf({n, g, d}, rng), p = randf({n, g, d}, rng);
        EXPECT_NEAR(rel_l2(p, t), static_cast<double>(rel_l2_oracle(p, t)), 1e-6);
    }
}

TEST(RelL2, ScaleCovariantInError)
{
    Rng rng(4);
    const auto t = randf({2, 40, 1}, rng), e = randf({2, 40, 1}, rng);
    for (float alpha : {0.5f, -2.0f, 3.0f}) {
        Tensor<float> p1(t.shape()), pa(t.shape());
        for (std::size_t i = 0; i < t.size(); ++i) {
            p1.mutable_data()[i] = t.data()[i] + e.data()[i];
            pa.mutable_data()[i] = t.data()[i] + alpha * e.data()[i];
        }
        EXPECT_NEAR(rel_l2(pa, t), std::abs(alpha) * rel_l2(p1, t), 1e-5);
    }
}

TEST(RelL2, ZeroNormTruthNamesSampleAndVariable)
{
    Tensor<float> t({3, 4, 2}, 1.0f);
    for (std::size_t m = 0; m < 4; ++m) t.at(2, m, 1) = 0;
    try {
        rel_l2(t, t);
        FAIL();
    } catch (const NumericError& e) {
        const std::string w = e.what();
        EXPECT_NE(w.find("sample 2"), std::string::npos) << w;
        EXPECT_NE(w.find("variable 1"), std::string::npos) << w;
    }
    EXPECT_THROW(rel_l2(Tensor<float>({1, 4, 1}), Tensor<float>({1, 5, 1})), DimensionError);
}

TEST(TotalVariation, HandCases)
{
    const std::vector<double> f{-1, -1, 1, 1, 1, -1}, g(6, 0.3);
    EXPECT_EQ(total_variation(f, f), 0.0);
    EXPECT_EQ(total_variation(f, g), 4.0);
    EXPECT_EQ(total_variation(g, f), 4.0);
    EXPECT_THROW(total_variation(f, std::vector<double>(5)), DimensionError);
    // equal gradient magnitudes, different profiles
    const std::vector<double> a{0, 1, 0, 1}, b{1, 0, 1, 0};
    EXPECT_EQ(total_variation(a, b), 0.0);
}

TEST(TotalVariation, MatchesDirectOracleAndIsSymmetric)
{
    Rng rng(5);
    for (int r = 0; r < 100; ++r) {
        const std::size_t n = 2 + rng.below(200);
        std::vector<double> f(n), g(n);
        for (auto& v : f) v = rng.normal();
        for (auto& v : g) v = rng.normal();
        const double tv = total_variation(f, g);
        EXPECT_NEAR(tv, static_cast<double>(tv_oracle(f, g)), 1e-6);
        EXPECT_EQ(tv, total_variation(g, f));
        EXPECT_GE(tv, 0.0);
    }
}

TEST(Summary, MeanMedianWorst)
{
    const auto s = summarize({0.3, 0.1, 0.2, 0.9});
    EXPECT_DOUBLE_EQ(s.mean, 0.375);
    EXPECT_DOUBLE_EQ(s.median, 0.25);
    EXPECT_DOUBLE_EQ(s.worst, 0.9);
    const auto o = summarize({5, 1, 3});
    EXPECT_EQ(o.median, 3);
    EXPECT_GE(o.worst, o.median);
}

TEST(Metrics, CsvLayout)
{
    Tensor<float> t({2, 4, 1}), p({2, 4, 1});
    const float tv[] = {1, -1, 1, -1, 1, 1, -1, -1};
    for (std::size_t i = 0; i < 8; ++i) t.mutable_data()[i] = tv[i], p.mutable_data()[i] = 1.1f * tv[i];
    const auto r = evaluate_metrics(p, t);
    ASSERT_EQ(r.rel_l2.size(), 2u);
    EXPECT_NEAR(r.rel_l2[0], 0.1, 1e-6);
    EXPECT_NEAR(r.tv[0], 4 * 0.2, 1e-6);
    std::istringstream csv(r.to_csv());
    std::string line;
    std::getline(csv, line);
    EXPECT_EQ(line, "sample_id,rel_l2,tv");
    std::getline(csv, line);
    EXPECT_EQ(line.substr(0, 2), "0,");
    std::getline(csv, line);
    EXPECT_EQ(line.substr(0, 2), "1,");
    std::getline(csv, line);
    EXPECT_EQ(line.rfind("# mean=", 0), 0u) << line;
    EXPECT_NE(line.find(", median="), std::string::npos);
    EXPECT_NE(line.find(", worst="), std::string::npos);
}

TEST(Rollout, SingleStepIsOneForwardPass)
{
    using Frame = std::vector<double>;
    const std::function<Frame(const std::vector<Frame>&)> model = [](const std::vector<Frame>& w) {
        Frame out(w.back().size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = 0.5 * w[0][i] + w[1][(i + 1) % out.size()];
        return out;
    };
    const std::vector<Frame> init{{1, 2, 3}, {4, 5, 6}};
    const auto traj = rollout(model, init, 1);
    ASSERT_EQ(traj.size(), 1u);
    EXPECT_EQ(traj[0], model(init));
}

TEST(Rollout, MatchesHandWrittenLoop)
{
    using Frame = std::vector<double>;
    const std::function<Frame(const std::vector<Frame>&)> model = [](const std::vector<Frame>& w) {
        Frame out(w.back().size());
        for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::sin(w[0][i]) + 0.9 * w[1][i];
        return out;
    };
    const Frame a{0.1, 0.2, 0.3, 0.4}, b{1, -1, 2, -2};
    const auto traj = rollout(model, {a, b}, 3);
    ASSERT_EQ(traj.size(), 3u);
    const Frame s1 = model({a, b}), s2 = model({b, s1}), s3 = model({s1, s2});
    const Frame want[] = {s1, s2, s3};
    for (std::size_t k = 0; k < 3; ++k) {
        ASSERT_EQ(traj[k].size(), 4u);
        for (std::size_t i = 0; i < 4; ++i) EXPECT_NEAR(traj[k][i], want[k][i], 1e-7);
    }
}

TEST(Rollout, IdentityModelRepeatsLastFrame)
{
    using Frame = std::vector<float>;
    const std::function<Frame(const std::vector<Frame>&)> id = [](const std::vector<Frame>& w) { return w.back(); };
    const Frame u0{1, -1, 1};
    const auto traj = rollout(id, {u0}, 5);
    ASSERT_EQ(traj.size(), 5u);
    for (const auto& f : traj) EXPECT_EQ(f, u0);
    EXPECT_THROW(rollout(id, {u0}, 0), ConfigError);
}
