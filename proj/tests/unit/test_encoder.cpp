#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccodec/encoder.hpp"
#include "ccodec/errors.hpp"
#include "test_util.hpp"

using namespace ccodec;

namespace {

// Independent per-layer parameter arithmetic.
std::int64_t hand_count(const CodecConfig& c) {
    std::int64_t n = 0;
    int in = 1;
    for (int k : c.lower_filter_sizes) {
        n += std::int64_t(c.conv_hidden) * in * k + c.conv_hidden;
        in = c.conv_hidden;
    }
    for (int k : c.upper_filter_sizes) n += std::int64_t(c.conv_hidden) * c.conv_hidden * k + c.conv_hidden;
    for (int level = 0; level < 2; ++level) {
        const std::int64_t gates = 3 * std::int64_t(c.rep_dim);
        n += gates * c.conv_hidden + gates * c.rep_dim + 2 * gates;
    }
    n += std::int64_t(c.nce_horizon_lower) * c.conv_hidden * c.rep_dim;
    n += std::int64_t(c.nce_horizon_upper) * c.conv_hidden * c.rep_dim;
    return n;
}

const Encoder& default_encoder() {
    static const Encoder enc(CodecConfig{}, 11);
    return enc;
}

} // namespace

TEST_CASE("default encoder shape law on one second") {
    const auto& enc = default_encoder();
    Waveform w;
    w.samples = test_util::random_signal(16000, 1);
    const auto r = enc.encode(w);
    CHECK(r.c_short.frames() == 100);
    CHECK(r.c_long.frames() == 12);
    CHECK(r.c_short.dim == 64);
    CHECK(r.c_long.dim == 64);
    CHECK(r.c_short.start_sample == 160);
    CHECK(r.c_long.start_sample == 1280);
    for (float v : r.c_short.values) CHECK(std::isfinite(v));
}

TEST_CASE("shape law holds for arbitrary lengths") {
    const Encoder enc(tiny_codec_config(), 3);
    for (int n : {0, 1, 159, 160, 161, 1279, 1280, 2559, 2560, 7777}) {
        const auto r = enc.encode(Waveform{16000, test_util::random_signal(n, n)});
        CHECK(r.c_short.frames() == n / 160);
        CHECK(r.c_long.frames() == (n / 160) / 8);
    }
}

TEST_CASE("empty input leaves the state untouched") {
    const Encoder enc(tiny_codec_config(), 3);
    auto st = enc.initial_state();
    enc.encode(std::span<const float>(test_util::random_signal(500, 2)), st);
    const auto before_h = st.h_lower;
    const auto before_n = st.samples_consumed;
    const auto r = enc.encode(std::span<const float>(), st);
    CHECK(r.c_short.frames() == 0);
    CHECK(r.c_long.frames() == 0);
    CHECK(st.h_lower == before_h);
    CHECK(st.samples_consumed == before_n);
}

TEST_CASE("future samples never change past frames") {
    const auto& enc = default_encoder();
    auto a = test_util::random_signal(16000, 5);
    auto b = a;
    for (std::size_t i = 8000; i < b.size(); ++i) b[i] = -b[i] + 0.1f;
    const auto ra = enc.encode(Waveform{16000, a});
    const auto rb = enc.encode(Waveform{16000, b});
    for (int t = 0; t < 50; ++t) CHECK(std::ranges::equal(ra.c_short.frame(t), rb.c_short.frame(t)));
    for (int t = 0; t < 6; ++t) CHECK(std::ranges::equal(ra.c_long.frame(t), rb.c_long.frame(t)));
    CHECK_FALSE(std::ranges::equal(ra.c_short.frame(50), rb.c_short.frame(50)));
}

TEST_CASE("chunked encode equals the full-sequence forward pass") {
    const Encoder enc(tiny_codec_config(), 9);
    const auto x = test_util::random_signal(6000, 6);
    const auto full = enc.forward(std::span<const float>(x), false);
    std::mt19937_64 rng(7);
    for (int trial = 0; trial < 5; ++trial) {
        auto st = enc.initial_state();
        RepresentationSequence cs{Level::short_term, 8, 160, 160, {}}, cl{Level::long_term, 8, 1280, 1280, {}};
        std::size_t pos = 0;
        while (pos < x.size()) {
            const std::size_t w = std::min<std::size_t>(x.size() - pos, 1 + rng() % 700);
            const auto r = enc.encode(std::span<const float>(x).subspan(pos, w), st);
            cs.append(r.c_short);
            cl.append(r.c_long);
            pos += w;
        }
        CHECK(cs == from_feature_map(full.c_short, Level::short_term, 160, 160));
        CHECK(cl == from_feature_map(full.c_long, Level::long_term, 1280, 1280));
    }
}

TEST_CASE("encoder input validation") {
    const Encoder enc(tiny_codec_config(), 1);
    CHECK_THROWS_AS(enc.encode(Waveform{8000, std::vector<float>(100)}), ConfigError);
    std::vector<float> bad(400, 0.0f);
    bad[10] = std::numeric_limits<float>::quiet_NaN();
    CHECK_THROWS_AS(enc.encode(Waveform{16000, bad}), InputError);
}

TEST_CASE("encoder parameter count") {
    const CodecConfig def;
    CHECK(default_encoder().parameter_count() == hand_count(def));
    CHECK(encoder_parameter_formula(def) == hand_count(def));
    CHECK(default_encoder().parameter_count() >= 8'300'000);
    CHECK(default_encoder().parameter_count() <= 11'300'000);
    const auto tiny = tiny_codec_config();
    CHECK(Encoder(tiny).parameter_count() == hand_count(tiny));
}

TEST_CASE("info nce term on equal scores is log 2") {
    const double neg[] = {0.7};
    CHECK(info_nce_term(0.7, neg) == doctest::Approx(std::log(2.0)));
    const double many[] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
    CHECK(info_nce_term(0.0, many) == doctest::Approx(std::log(8.0)));
}

TEST_CASE("untrained contrastive accuracy sits near chance") {
    auto cfg = tiny_codec_config();
    cfg.negatives_per_positive = 7;
    BasicEncoder<float> enc(cfg, 21);
    std::vector<std::vector<float>> batch;
    for (int b = 0; b < 4; ++b) batch.push_back(test_util::random_signal(16000, 30 + b));
    std::mt19937_64 rng(3);
    const auto r = nce_forward_backward(enc, batch, rng, false);
    CHECK(r.anchors > 1000);
    CHECK(r.accuracy > 0.125 - 0.06);
    CHECK(r.accuracy < 0.125 + 0.06);
    CHECK(r.loss > 0.0);
}

TEST_CASE("short segments are skipped and empty batches rejected") {
    BasicEncoder<float> enc(tiny_codec_config(), 2);
    std::mt19937_64 rng(1);
    std::vector<std::vector<float>> empty;
    CHECK_THROWS_AS(nce_forward_backward(enc, empty, rng, false), InputError);
    std::vector<std::vector<float>> batch{test_util::random_signal(100, 1), test_util::random_signal(6000, 2)};
    const auto r = nce_forward_backward(enc, batch, rng, false);
    CHECK(r.skipped == 1);
    CHECK(r.anchors > 0);
}

TEST_CASE("contrastive gradients agree with finite differences at float64") {
    auto cfg = tiny_codec_config();
    cfg.conv_hidden = 6;
    cfg.rep_dim = 4;
    BasicEncoder<double> enc(cfg, 5);
    std::vector<std::vector<double>> batch(2);
    for (int b = 0; b < 2; ++b) {
        const auto x = test_util::random_signal(nce_min_segment(cfg) + 800, 40 + b);
        batch[b].assign(x.begin(), x.end());
    }
    auto loss = [&] {
        std::mt19937_64 rng(99);
        return nce_forward_backward(enc, batch, rng, false).loss;
    };
    for (auto* p : enc.params()) p->zero_grad();
    std::mt19937_64 rng(99);
    nce_forward_backward(enc, batch, rng, true);
    double worst = 0.0;
    int idx = 0;
    for (auto* p : enc.params())
        worst = std::max(worst, test_util::fd_check(p->value, p->grad, loss,
                                                    test_util::probe_indices(p->size(), 4, idx++), 1e-6, 1e-7));
    CHECK(worst < 1e-3);
}

TEST_CASE("data gradient through the encoder matches finite differences") {
    auto cfg = tiny_codec_config();
    cfg.conv_hidden = 5;
    cfg.rep_dim = 3;
    BasicEncoder<double> enc(cfg, 8);
    const auto xf = test_util::random_signal(2600, 4);
    std::vector<double> x(xf.begin(), xf.end());
    const auto ws = test_util::random_map<double>(3, 16, 1);
    const auto wl = test_util::random_map<double>(3, 2, 2);
    auto loss = [&] {
        const auto tr = enc.forward(std::span<const double>(x), false);
        double s = 0;
        for (std::size_t i = 0; i < ws.data.size(); ++i) s += tr.c_short.data[i] * ws.data[i];
        for (std::size_t i = 0; i < wl.data.size(); ++i) s += tr.c_long.data[i] * wl.data[i];
        return s;
    };
    const auto tr = enc.forward(std::span<const double>(x), true);
    EncoderGrads<double> g;
    g.c_short = ws;
    g.c_long = wl;
    const auto before = enc.params()[0]->grad;
    const auto dx = enc.backward(tr, g, true, false);
    CHECK(enc.params()[0]->grad == before);
    CHECK(test_util::fd_check(x, dx, loss, test_util::probe_indices(2560, 30, 3), 1e-6, 1e-8) < 1e-4);
}
