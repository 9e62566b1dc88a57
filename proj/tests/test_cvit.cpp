#include <gtest/gtest.h>

#include <cmath>

#include "cvit/operators/cvit.hpp"

using namespace cvit;

namespace {

CvitSpec tiny_spec()
{
    CvitSpec s;
    s.patch_h = s.patch_w = 2;
    s.frames = 2;
    s.height = 4;
    s.width = 6;
    s.channels = 2;
    s.out_dim = 3;
    s.embed = 8;
    s.depth = 2;
    s.decoder_depth = 1;
    s.heads = 2;
    s.mlp_width = 12;
    s.grid_nx = 5;
    s.grid_ny = 6;
    s.grid_dim = 4;
    s.epsilon = 50;
    return s;
}

Tensor<double> randn(Shape s, Rng& rng)
{
    Tensor<double> t(std::move(s));
    for (auto& v : t.mutable_data()) v = rng.normal();
    return t;
}

Tensor<double> rand_queries(std::size_t q, Rng& rng)
{
    Tensor<double> t({q, 2});
    for (auto& v : t.mutable_data()) v = rng.uniform();
    return t;
}

void zero(ParamStore<double>& store, const std::string& name)
{
    for (auto& v : store.get(name).mutable_data()) v = 0;
}

Tensor<double> predict(const Cvit& model, const ParamStore<double>& store, const Tensor<double>& u, const Tensor<double>& q)
{
    Tape<double> tape;
    Bound<double> p(tape, store, false);
    return model.forward(p, u, q).value();
}

}  // namespace

TEST(Cvit, PatchifyLayout)
{
    const Cvit model(tiny_spec());
    const auto& s = model.spec();
    Rng rng(1);
    const auto u = randn({2, s.frames, s.height, s.width, s.channels}, rng);
    const auto rows = model.patchify(u);
    ASSERT_EQ(rows.shape(), (Shape{2, s.frames, 6, 8}));
    for (std::size_t b = 0; b < 2; ++b)
        for (std::size_t t = 0; t < s.frames; ++t)
            for (std::size_t ti = 0; ti < 2; ++ti)
                for (std::size_t tj = 0; tj < 3; ++tj)
                    for (std::size_t a = 0; a < 2; ++a)
                        for (std::size_t c = 0; c < 2; ++c)
                            for (std::size_t ch = 0; ch < 2; ++ch)
                                EXPECT_EQ(rows.at(b, t, ti * 3 + tj, (a * 2 + c) * 2 + ch), u.at(b, t, ti * 2 + a, tj * 2 + c, ch));
}

TEST(Cvit, TokenCountsAndShapes)
{
    const Cvit model(tiny_spec());
    const auto& s = model.spec();
    EXPECT_EQ(s.frames * s.spatial_tokens(), 2u * (4 / 2) * (6 / 2));
    Rng rng(2);
    auto store = model.init<double>(rng);
    Tape<double> tape;
    Bound<double> p(tape, store, false);
    const auto u = randn({3, 2, 4, 6, 2}, rng);
    const auto z = model.encode(p, u);
    EXPECT_EQ(z.shape(), (Shape{3, 6, 8}));
    const auto out = model.decode(p, z, rand_queries(5, rng));
    EXPECT_EQ(out.shape(), (Shape{3, 5, 3}));
    for (double v : out.value().data()) EXPECT_TRUE(std::isfinite(v));
}

TEST(Cvit, PerceiverShapeAndZeroWeightPassthrough)
{
    const Cvit model(tiny_spec());
    Rng rng(3);
    auto store = model.init<double>(rng);
    const auto agg = model.aggregator();
    zero(store, agg.attn().wo().name + ".w");
    zero(store, agg.attn().wo().name + ".b");
    const auto last = agg.ffn().mlp().layer(1);
    zero(store, last.name + ".w");
    zero(store, last.name + ".b");
    Tape<double> tape;
    Bound<double> p(tape, store, false);
    const auto out = model.perceiver_aggregate(p, tape.constant(randn({7, 2, 8}, rng))).value();
    ASSERT_EQ(out.shape(), (Shape{7, 1, 8}));
    const auto& zq = store.get("latent_query");
    for (std::size_t n = 0; n < 7; ++n)
        for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(out.at(n, 0, c), zq.at(0, c));
}

TEST(Cvit, PerceiverSingleFrameComposition)
{
    // one key: softmax weight is 1, so attention returns W_o(W_v LN(u))
    auto spec = tiny_spec();
    spec.frames = 1;
    const Cvit model(spec);
    Rng rng(4);
    auto store = model.init<double>(rng);
    const auto agg = model.aggregator();
    const auto tokens = randn({3, 1, 8}, rng);
    Tape<double> tape;
    Bound<double> p(tape, store, false);
    const auto got = model.perceiver_aggregate(p, tape.constant(tokens)).value();

    const auto& g = store.get(agg.ln_kv().name + ".gain");
    const auto& bi = store.get(agg.ln_kv().name + ".bias");
    auto dense = [&](const std::string& name, const std::vector<double>& x) {
        const auto& w = store.get(name + ".w");
        const auto& b = store.get(name + ".b");
        std::vector<double> y(w.dim(1));
        for (std::size_t j = 0; j < y.size(); ++j) {
            y[j] = b.at(j);
            for (std::size_t i = 0; i < x.size(); ++i) y[j] += x[i] * w.at(i, j);
        }
        return y;
    };
    auto ln = [](const std::vector<double>& x, const Tensor<double>& gain, const Tensor<double>& bias) {
        double mu = 0, var = 0;
        for (double v : x) mu += v;
        mu /= double(x.size());
        for (double v : x) var += (v - mu) * (v - mu);
        var /= double(x.size());
        std::vector<double> y(x.size());
        for (std::size_t i = 0; i < x.size(); ++i) y[i] = (x[i] - mu) / std::sqrt(var + 1e-5) * gain.at(i) + bias.at(i);
        return y;
    };
    auto gelu = [](double x) { return 0.5 * x * std::erfc(-x / std::sqrt(2.0)); };
    const auto& zq = store.get("latent_query");
    std::vector<double> q(zq.data().begin(), zq.data().end());
    for (std::size_t n = 0; n < 3; ++n) {
        std::vector<double> u(tokens.data().begin() + 8 * n, tokens.data().begin() + 8 * (n + 1));
        const auto attn = dense(agg.attn().wo().name, dense(agg.attn().wv().name, ln(u, g, bi)));
        std::vector<double> h(8);
        for (std::size_t c = 0; c < 8; ++c) h[c] = q[c] + attn[c];
        auto hid = dense(agg.ffn().mlp().layer(0).name,
                         ln(h, store.get(agg.ffn().norm().name + ".gain"), store.get(agg.ffn().norm().name + ".bias")));
        for (auto& v : hid) v = gelu(v);
        const auto m = dense(agg.ffn().mlp().layer(1).name, hid);
        for (std::size_t c = 0; c < 8; ++c) EXPECT_NEAR(got.at(n, 0, c), h[c] + m[c], 1e-10);
    }
}

TEST(Cvit, DeterministicInitAndForward)
{
    const Cvit model(tiny_spec());
    Rng r1(5), r2(5);
    const auto s1 = model.init<double>(r1), s2 = model.init<double>(r2);
    for (const auto& [name, t] : s1) EXPECT_EQ(t.data()[0], s2.get(name).data()[0]) << name;
    Rng rng(6);
    const auto u = randn({2, 2, 4, 6, 2}, rng);
    const auto q = rand_queries(9, rng);
    const auto a = predict(model, s1, u, q), b = predict(model, s2, u, q);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(a.data()[i], b.data()[i]);
}

TEST(Cvit, QueriesAreIndependent)
{
    const Cvit model(tiny_spec());
    Rng rng(7);
    const auto store = model.init<double>(rng);
    const auto u = randn({2, 2, 4, 6, 2}, rng);
    const auto q = rand_queries(11, rng);
    const auto all = predict(model, store, u, q);
    for (std::size_t i = 0; i < 11; ++i) {
        const auto one = predict(model, store, u, Tensor<double>::from({1, 2}, {q.at(i, 0), q.at(i, 1)}));
        for (std::size_t b = 0; b < 2; ++b)
            for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(one.at(b, 0, c), all.at(b, i, c), 1e-7);
    }
}

TEST(Cvit, PermutingQueriesPermutesOutputs)
{
    const Cvit model(tiny_spec());
    Rng rng(8);
    const auto store = model.init<double>(rng);
    const auto u = randn({1, 2, 4, 6, 2}, rng);
    const auto q = rand_queries(6, rng);
    const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    Tensor<double> qp({6, 2});
    for (std::size_t i = 0; i < 6; ++i) qp.at(i, 0) = q.at(perm[i], 0), qp.at(i, 1) = q.at(perm[i], 1);
    const auto a = predict(model, store, u, q), b = predict(model, store, u, qp);
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(b.at(0, i, c), a.at(0, perm[i], c), 1e-12);
}

TEST(Cvit, NoQueriesGivesEmptyOutput)
{
    const Cvit model(tiny_spec());
    Rng rng(9);
    const auto store = model.init<double>(rng);
    const auto out = predict(model, store, randn({2, 2, 4, 6, 2}, rng), Tensor<double>({0, 2}));
    EXPECT_EQ(out.shape(), (Shape{2, 0, 3}));
}

TEST(Cvit, EveryParameterReceivesGradient)
{
    const Cvit model(tiny_spec());
    Rng rng(10);
    const auto store = model.init<double>(rng);
    Tape<double> tape;
    Bound<double> p(tape, store);
    const auto out = model.forward(p, randn({2, 2, 4, 6, 2}, rng), rand_queries(16, rng));
    tape.backward(sum(mul(out, tape.constant(randn(out.shape(), rng)))));
    for (const auto& [name, g] : p.gradients()) {
        double norm = 0;
        for (double v : g.data()) norm += v * v;
        EXPECT_GT(norm, 0.0) << name;
        EXPECT_TRUE(std::isfinite(norm)) << name;
    }
}

TEST(Cvit, InvalidConfigurationsRejected)
{
    auto s = tiny_spec();
    s.width = 7;
    EXPECT_THROW(Cvit{s}, ConfigError);
    s = tiny_spec();
    s.heads = 3;
    EXPECT_THROW(Cvit{s}, ConfigError);
    s = tiny_spec();
    s.epsilon = -1;
    EXPECT_THROW(Cvit{s}, ConfigError);
    EXPECT_THROW(cvit_preset("XL"), ConfigError);
}

TEST(Cvit, WrongInputShapeRejected)
{
    const Cvit model(tiny_spec());
    Rng rng(11);
    const auto store = model.init<double>(rng);
    EXPECT_THROW(predict(model, store, randn({1, 2, 4, 4, 2}, rng), rand_queries(2, rng)), DimensionError);
}

TEST(Cvit, SmallPresetParameterCount)
{
    CvitSpec s;
    s = apply_preset(s, "S");
    EXPECT_EQ(s.depth, 5u);
    EXPECT_EQ(s.embed, 384u);
    EXPECT_EQ(s.heads, 6u);
    Rng rng(12);
    const auto count = Cvit(s).init<float>(rng).parameter_count();
    EXPECT_GE(count, 0.75 * 13e6);
    EXPECT_LE(count, 1.25 * 13e6);
}
