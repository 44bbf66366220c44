#include <doctest.h>

#include <cmath>

#include "ccodec/decoder.hpp"
#include "ccodec/errors.hpp"
#include "test_util.hpp"

using namespace ccodec;
using nn::FeatureMap;

namespace {

std::int64_t hand_count(const CodecConfig& c, const DecoderConfig& d) {
    std::int64_t per_ch2 = 0, per_ch = 0;
    for (int k : d.mrf_kernels)
        for (int b = 0; b < d.mrf_blocks_per_kernel; ++b)
            for (std::size_t i = 0; i < d.mrf_dilations.size(); ++i) {
                per_ch2 += k;
                per_ch += 1;
            }
    std::int64_t n = std::int64_t(c.rep_dim) * d.top_initial_channels * d.pre_kernel + d.top_initial_channels;
    std::int64_t ch = d.top_initial_channels;
    for (int k : d.top_filter_sizes) {
        n += ch * (ch / 2) * k + ch / 2;
        ch /= 2;
        n += per_ch2 * ch * ch + per_ch * ch;
    }
    n += (ch + c.rep_dim) * d.lower_initial_channels * d.lookahead_short_frames + d.lower_initial_channels;
    ch = d.lower_initial_channels;
    for (int k : d.lower_filter_sizes) {
        n += ch * (ch / 2) * k + ch / 2;
        ch /= 2;
        n += per_ch2 * ch * ch + per_ch * ch;
    }
    n += ch * d.post_kernel + 1;
    return n;
}

RepresentationSequence random_seq(Level level, int dim, int frames, std::uint64_t seed) {
    const auto m = test_util::random_map<float>(frames, dim, seed);
    RepresentationSequence s{level, dim, level == Level::short_term ? 160 : 1280,
                             level == Level::short_term ? 160 : 1280, m.data};
    return s;
}

DecoderConfig small_decoder() {
    auto d = tiny_decoder_config();
    d.top_initial_channels = 16;
    d.lower_initial_channels = 32;
    return d;
}

} // namespace

TEST_CASE("decoder parameter count") {
    const CodecConfig c;
    const DecoderConfig d;
    const Decoder dec(c, d, 1);
    CHECK(dec.parameter_count() == hand_count(c, d));
    CHECK(decoder_parameter_formula(c, d) == hand_count(c, d));
    CHECK(dec.parameter_count() >= 5'350'000);
    CHECK(dec.parameter_count() <= 7'250'000);
    const auto t = tiny_decoder_config();
    const auto tc = tiny_codec_config();
    CHECK(Decoder(tc, t).parameter_count() == hand_count(tc, t));
}

TEST_CASE("synthesis length law and boundedness") {
    const Decoder dec(CodecConfig{}, DecoderConfig{}, 2);
    const auto w = dec.synthesize(random_seq(Level::long_term, 64, 12, 1), random_seq(Level::short_term, 64, 96, 2));
    CHECK(w.samples.size() == 15360);
    for (float v : w.samples) CHECK(std::abs(v) <= 1.0f);

    const auto one = dec.synthesize(random_seq(Level::long_term, 64, 1, 3), random_seq(Level::short_term, 64, 8, 4));
    CHECK(one.samples.size() == 1280);

    RepresentationSequence zl{Level::long_term, 64, 1280, 1280, std::vector<float>(64 * 2, 0.0f)};
    RepresentationSequence zs{Level::short_term, 64, 160, 160, std::vector<float>(64 * 16, 0.0f)};
    const auto z = dec.synthesize(zl, zs);
    CHECK(z.samples.size() == 2560);
    for (float v : z.samples) {
        CHECK(std::isfinite(v));
        CHECK(std::abs(v) <= 1.0f);
    }
    CHECK_THROWS_AS(dec.synthesize(random_seq(Level::long_term, 64, 2, 1), random_seq(Level::short_term, 64, 15, 1)),
                    InputError);
}

TEST_CASE("mrf with zero residual weights multiplies by the branch count") {
    Mrf<double> mrf("m", 4, {3, 7, 11}, 3, {1, 3, 5});
    const auto x = test_util::random_map<double>(4, 50, 3);
    const auto y = mrf_apply(mrf, x);
    REQUIRE(y.frames == 50);
    REQUIRE(y.channels == 4);
    for (std::size_t i = 0; i < x.data.size(); ++i) CHECK(y.data[i] == doctest::Approx(3.0 * x.data[i]));
    for (int L : {1, 2, 17, 100}) CHECK(mrf_apply(mrf, test_util::random_map<double>(4, L, L)).frames == L);
}

TEST_CASE("mrf single kernel matches a hand-written causal conv plus residual") {
    Mrf<double> mrf("m", 1, {3}, 1, {1});
    auto& conv = mrf.branches[0][0];
    conv.weight.value = {0.5, -1.0, 2.0};
    conv.bias.value = {0.25};
    FeatureMap<double> x(1, 5);
    x.data = {1.0, -2.0, 3.0, 0.5, -1.0};
    const auto y = mrf_apply(mrf, x);
    auto lrelu = [](double v) { return v > 0 ? v : 0.1 * v; };
    for (int t = 0; t < 5; ++t) {
        double acc = 0.25;
        for (int k = 0; k < 3; ++k) {
            const int idx = t - 2 + k;
            if (idx >= 0) acc += conv.weight.value[k] * lrelu(x.data[idx]);
        }
        CHECK(y.data[t] == doctest::Approx(x.data[t] + acc));
    }
}

TEST_CASE("streaming synthesis starts after two short-term frames and matches one-shot") {
    const auto cfg = tiny_codec_config();
    const Decoder dec(cfg, small_decoder(), 4);
    const auto cl = random_seq(Level::long_term, 8, 4, 10);
    const auto cs = random_seq(Level::short_term, 8, 32, 11);
    const auto ref = dec.synthesize(cl, cs);

    StreamingSynthesizer st(dec);
    std::vector<float> out;
    for (int j = 0; j < 4; ++j) {
        for (int f = 8 * j; f < 8 * j + 8; ++f) {
            const auto y = st.push_short(cs.frame(f));
            if (f == 0) CHECK(y.empty());
            if (f >= 1) CHECK(y.size() == 160);
            out.insert(out.end(), y.begin(), y.end());
        }
        st.push_long(cl.frame(j));
    }
    const auto tail = st.finish();
    CHECK(tail.size() == 160);
    out.insert(out.end(), tail.begin(), tail.end());
    CHECK(out == ref.samples);
}

TEST_CASE("streaming rejects frames that arrive out of order") {
    const auto cfg = tiny_codec_config();
    const Decoder dec(cfg, small_decoder(), 4);
    const auto cs = random_seq(Level::short_term, 8, 16, 1);
    StreamingSynthesizer st(dec);
    for (int f = 0; f < 8; ++f) st.push_short(cs.frame(f));
    CHECK_THROWS_AS(st.push_short(cs.frame(8)), InputError);

    StreamingSynthesizer st2(dec);
    auto skip = random_seq(Level::short_term, 8, 2, 2);
    skip.start_sample = 480;
    CHECK_THROWS_AS(st2.push(skip), InputError);
    auto ok = random_seq(Level::short_term, 8, 2, 2);
    CHECK(st2.push(ok).size() == 160);
    CHECK_THROWS_AS(st2.push(ok), InputError);
}

TEST_CASE("generator gradients agree with finite differences at float64") {
    auto cfg = tiny_codec_config();
    cfg.rep_dim = 3;
    auto d = tiny_decoder_config();
    d.top_initial_channels = 8;
    d.lower_initial_channels = 16;
    d.mrf_kernels = {3, 5};
    d.mrf_dilations = {1, 2};
    BasicGenerator<double> gen(cfg, d, 6);
    // Move biases and residual weights off zero so every path carries signal.
    std::mt19937_64 rng(1);
    std::normal_distribution<double> nd(0.0, 0.2);
    for (auto* p : gen.params())
        for (auto& v : p->value) v += nd(rng);
    const auto cl = test_util::random_map<double>(3, 2, 2);
    const auto cs = test_util::random_map<double>(3, 16, 3);
    const auto w = test_util::random_map<double>(1, 2560, 4);
    auto loss = [&] {
        const auto y = gen.forward(cl, cs);
        double s = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
        return s;
    };
    GeneratorTrace<double> tr;
    gen.forward(cl, cs, &tr);
    for (auto* p : gen.params()) p->zero_grad();
    gen.backward(tr, w);
    double worst = 0.0;
    int idx = 0;
    for (auto* p : gen.params())
        worst = std::max(worst, test_util::fd_check(p->value, p->grad, loss,
                                                    test_util::probe_indices(p->size(), 2, idx++), 1e-6, 1e-6));
    CHECK(worst < 5e-4);
}
