#include <doctest.h>

#include <algorithm>
#include <set>

#include "ccodec/discriminators.hpp"
#include "ccodec/errors.hpp"
#include "test_util.hpp"

using namespace ccodec;
using nn::FeatureMap;

TEST_CASE("mpd reshape layout") {
    std::vector<double> x(12);
    for (int i = 0; i < 12; ++i) x[i] = i;
    const auto g = mpd_reshape<double>(x, 3);
    REQUIRE(g.channels == 3);
    REQUIRE(g.frames == 4);
    CHECK(std::vector<double>(g.row(0), g.row(0) + 4) == std::vector<double>{0, 3, 6, 9});
    CHECK(std::vector<double>(g.row(1), g.row(1) + 4) == std::vector<double>{1, 4, 7, 10});
    CHECK(std::vector<double>(g.row(2), g.row(2) + 4) == std::vector<double>{2, 5, 8, 11});

    const auto one = mpd_reshape<double>(x, 1);
    CHECK(one.data == x);

    // 10 samples, p = 4: two reflected samples x[8], x[7].
    std::vector<double> y(10);
    for (int i = 0; i < 10; ++i) y[i] = i;
    const auto r = mpd_reshape<double>(y, 4);
    CHECK(r.frames == 3);
    CHECK(r.at(2, 2) == 8.0);
    CHECK(r.at(3, 2) == 7.0);
}

TEST_CASE("mpd reshape is a permutation when the period divides the length") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 100; ++trial) {
        const int p = std::vector<int>{2, 3, 5, 7, 11}[trial % 5];
        const int n = p * (1 + static_cast<int>(rng() % 50));
        std::vector<double> x(n);
        for (int i = 0; i < n; ++i) x[i] = i + 0.5;
        const auto g = mpd_reshape<double>(x, p);
        std::multiset<double> seen(g.data.begin(), g.data.end());
        CHECK(seen == std::multiset<double>(x.begin(), x.end()));
    }
}

TEST_CASE("average pooling equals a direct pairwise mean") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        const auto x = test_util::random_signal(1 + rng() % 300, trial);
        const auto y = average_pool2<float>(x);
        REQUIRE(y.size() == x.size() / 2);
        for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == 0.5f * (x[2 * i] + x[2 * i + 1]));
    }
}

TEST_CASE("ensemble structure and block input lengths") {
    Discriminators<float> d(DiscriminatorConfig{}, 1);
    const auto x = test_util::random_signal(16384, 3);
    DiscriminatorTrace<float> tr;
    const auto out = d.forward(x, &tr);
    REQUIRE(out.size() == 8);
    CHECK(tr.msd.inputs[0].size() == 16384);
    CHECK(tr.msd.inputs[1].size() == 8192);
    CHECK(tr.msd.inputs[2].size() == 4096);
    for (int b = 0; b < 3; ++b) CHECK(out[b].features.size() == 4);
    const int periods[] = {2, 3, 5, 7, 11};
    for (int b = 0; b < 5; ++b) {
        CHECK(out[3 + b].features.size() == 5);
        CHECK(out[3 + b].rows == periods[b]);
    }
    CHECK(d.mpd.periods() == std::vector<int>{2, 3, 5, 7, 11});
}

TEST_CASE("output shapes depend on input length only") {
    Discriminators<float> d(tiny_discriminator_config(), 1);
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 10; ++trial) {
        const int n = d.min_length() + static_cast<int>(rng() % 3000);
        const auto a = d.forward(test_util::random_signal(n, trial));
        const auto b = d.forward(test_util::random_signal(n, trial + 100));
        for (std::size_t k = 0; k < a.size(); ++k) {
            CHECK(a[k].score.frames == b[k].score.frames);
            for (std::size_t l = 0; l < a[k].features.size(); ++l) {
                CHECK(a[k].features[l].channels == b[k].features[l].channels);
                CHECK(a[k].features[l].frames == b[k].features[l].frames);
            }
        }
    }
}

TEST_CASE("zero weights give zero scores") {
    Discriminators<float> d(tiny_discriminator_config(), 1);
    for (auto* p : d.params()) std::fill(p->value.begin(), p->value.end(), 0.0f);
    for (const auto& o : d.forward(test_util::random_signal(4000, 1)))
        for (float v : o.score.data) CHECK(v == 0.0f);
}

TEST_CASE("too-short input is rejected") {
    Discriminators<float> d(DiscriminatorConfig{}, 1);
    CHECK_THROWS_AS(d.forward(std::vector<float>(100, 0.0f)), InputError);
}

TEST_CASE("discriminator gradients agree with finite differences at float64") {
    DiscriminatorConfig cfg = tiny_discriminator_config();
    cfg.msd_channels = {3, 4, 4, 4};
    cfg.mpd_channels = {3, 4, 4, 4, 4};
    Discriminators<double> d(cfg, 3);
    const auto xf = test_util::random_signal(d.min_length() + 37, 9);
    std::vector<double> x(xf.begin(), xf.end());
    const auto ref = d.forward(x);
    // Random linear functional of every score and feature map.
    std::vector<DiscriminatorGrad<double>> w(ref.size());
    std::uint64_t seed = 50;
    for (std::size_t b = 0; b < ref.size(); ++b) {
        w[b].score = test_util::random_map<double>(ref[b].score.channels, ref[b].score.frames, seed++);
        for (const auto& f : ref[b].features) w[b].features.push_back(test_util::random_map<double>(f.channels, f.frames, seed++));
    }
    auto loss = [&] {
        const auto o = d.forward(x);
        double s = 0;
        for (std::size_t b = 0; b < o.size(); ++b) {
            for (std::size_t i = 0; i < o[b].score.data.size(); ++i) s += o[b].score.data[i] * w[b].score.data[i];
            for (std::size_t l = 0; l < o[b].features.size(); ++l)
                for (std::size_t i = 0; i < o[b].features[l].data.size(); ++i)
                    s += o[b].features[l].data[i] * w[b].features[l].data[i];
        }
        return s;
    };
    DiscriminatorTrace<double> tr;
    d.forward(x, &tr);
    for (auto* p : d.params()) p->zero_grad();
    const auto dx = d.backward(tr, w, true, true);
    CHECK(test_util::fd_check(x, dx, loss, test_util::probe_indices(x.size(), 40, 1)) < 1e-5);
    double worst = 0.0;
    int idx = 0;
    // Small step: one period-11 pre-activation sits within 1e-6 of the LeakyReLU corner.
    for (auto* p : d.params())
        worst = std::max(worst, test_util::fd_check(p->value, p->grad, loss,
                                                    test_util::probe_indices(p->size(), 2, idx++), 1e-7, 1e-6));
    CHECK(worst < 1e-4);
}
