#include <doctest.h>

#include <algorithm>
#include <random>

#include "ccodec/errors.hpp"
#include "ccodec/quantizer.hpp"

using namespace ccodec;

namespace {

RepresentationSequence seq1(std::vector<float> v) {
    return {Level::short_term, 1, 160, 160, std::move(v)};
}

// Plain re-statement of the update rule, one feature at a time.
std::pair<std::vector<std::uint8_t>, std::vector<float>> trace_oracle(const std::vector<float>& x, float step,
                                                                      float init) {
    std::vector<std::uint8_t> bits;
    std::vector<float> recon;
    float r = init;
    for (float v : x) {
        const bool up = !(v < r);
        bits.push_back(up);
        r = up ? r + step : r - step;
        recon.push_back(r);
    }
    return {bits, recon};
}

} // namespace

TEST_CASE("delta modulation worked examples") {
    auto e = delta_encode(seq1({0.6f, 0.2f, 1.1f}), 0.5f, 0.0f);
    CHECK(e.bits.bits == std::vector<std::uint8_t>{1, 0, 1});
    CHECK(e.recon.values == std::vector<float>{0.5f, 0.0f, 0.5f});

    e = delta_encode(seq1({0, 0, 0, 0}), 0.5f, 0.0f);
    CHECK(e.bits.bits == std::vector<std::uint8_t>{1, 0, 1, 0});
    CHECK(e.recon.values == std::vector<float>{0.5f, 0.0f, 0.5f, 0.0f});

    const std::uint8_t bits[] = {1, 0, 1};
    CHECK(delta_decode(bits, 1, 0.5f, 0.0f).values == std::vector<float>{0.5f, 0.0f, 0.5f});
    CHECK(delta_decode({}, 1, 0.5f, 0.0f).frames() == 0);
}

TEST_CASE("delta modulation errors") {
    CHECK_THROWS_AS(delta_encode(seq1({1.0f}), 0.0f, 0.0f), ConfigError);
    CHECK_THROWS_AS(delta_encode(seq1({1.0f}), -1.0f, 0.0f), ConfigError);
    CHECK_THROWS_AS(delta_encode(seq1({std::nanf("")}), 0.5f, 0.0f), InputError);
    const std::uint8_t bits[] = {1, 0, 1};
    CHECK_THROWS_AS(delta_decode(bits, 2, 0.5f, 0.0f), StreamError);
}

TEST_CASE("decoder reconstruction equals encoder tracking on random multi-feature sequences") {
    std::mt19937_64 rng(1);
    for (int trial = 0; trial < 200; ++trial) {
        const int dim = 1 + static_cast<int>(rng() % 8), frames = static_cast<int>(rng() % 60);
        std::normal_distribution<float> d(0.0f, 2.0f);
        RepresentationSequence s{Level::long_term, dim, 1280, 1280, {}};
        for (int i = 0; i < dim * frames; ++i) s.values.push_back(d(rng));
        const float step = 0.01f + static_cast<float>(rng() % 100) / 50.0f;
        const auto e = delta_encode(s, step, 0.0f);
        const auto r = delta_decode(e.bits.bits, dim, step, 0.0f, Level::long_term, 1280, 1280);
        CHECK(r == e.recon);
        for (int f = 0; f < dim; ++f) {
            std::vector<float> col;
            for (int t = 0; t < frames; ++t) col.push_back(s.values[t * dim + f]);
            const auto [ob, orec] = trace_oracle(col, step, 0.0f);
            for (int t = 0; t < frames; ++t) {
                CHECK(e.bits.bits[t * dim + f] == ob[t]);
                CHECK(e.recon.values[t * dim + f] == orec[t]);
            }
        }
    }
}

TEST_CASE("streaming modulator equals one-shot") {
    std::mt19937_64 rng(4);
    std::normal_distribution<float> d;
    RepresentationSequence s{Level::short_term, 3, 160, 160, {}};
    for (int i = 0; i < 3 * 50; ++i) s.values.push_back(d(rng));
    const auto one = delta_encode(s, 0.3f, 0.0f);
    DeltaModulator mod(3, 0.3f, 0.0f);
    std::vector<std::uint8_t> bits;
    for (int t = 0; t < 50; t += 7) {
        RepresentationSequence part{Level::short_term, 3, 160, 160 * (t + 1), {}};
        part.values.assign(s.values.begin() + 3 * t, s.values.begin() + 3 * std::min(50, t + 7));
        const auto e = mod.push(part);
        bits.insert(bits.end(), e.bits.bits.begin(), e.bits.bits.end());
    }
    CHECK(bits == one.bits.bits);
}

TEST_CASE("tracking error stays within one step on slope-limited input") {
    std::mt19937_64 rng(2);
    for (int trial = 0; trial < 300; ++trial) {
        const float step = 0.05f + static_cast<float>(rng() % 100) / 100.0f;
        std::uniform_real_distribution<float> slope(-step, step);
        std::vector<float> x;
        float v = slope(rng);
        for (int t = 0; t < 200; ++t) {
            x.push_back(v);
            v += slope(rng);
        }
        const auto e = delta_encode(seq1(x), step, 0.0f);
        float worst = 0.0f;
        for (std::size_t t = 0; t < x.size(); ++t) worst = std::max(worst, std::abs(x[t] - e.recon.values[t]));
        CHECK(worst <= step * (1.0f + 1e-5f));
    }
}

TEST_CASE("step calibration") {
    SUBCASE("constant corpus hits the floor") {
        std::vector<RepresentationSequence> c{seq1({2, 2, 2, 2})};
        const auto q = calibrate_steps(c, c);
        CHECK(q.step_short == kMinStep);
        CHECK(q.step_long == kMinStep);
    }
    SUBCASE("constant magnitude differences") {
        std::vector<RepresentationSequence> c{seq1({0.0f, 0.2f, 0.0f, -0.2f, 0.0f})};
        CHECK(calibrate_steps(c, c).step_short == doctest::Approx(0.2f));
        CHECK(calibrate_steps(c, c, 2.0).step_long == doctest::Approx(0.4f));
    }
    SUBCASE("random corpus matches a sorted-median oracle") {
        std::mt19937_64 rng(5);
        std::normal_distribution<float> d(0.0f, 0.3f);
        std::vector<RepresentationSequence> s, l;
        std::vector<double> diffs_s, diffs_l;
        for (int k = 0; k < 3; ++k) {
            for (auto* pair : {&s, &l}) {
                RepresentationSequence q{Level::short_term, 4, 160, 160, {}};
                float acc[4] = {0, 0, 0, 0};
                const int frames = 10 + k * 7 + (pair == &l ? 1 : 0);
                for (int t = 0; t < frames; ++t)
                    for (int f = 0; f < 4; ++f) q.values.push_back(acc[f] += d(rng));
                auto& diffs = pair == &s ? diffs_s : diffs_l;
                for (int t = 1; t < frames; ++t)
                    for (int f = 0; f < 4; ++f) diffs.push_back(std::abs(q.values[t * 4 + f] - q.values[(t - 1) * 4 + f]));
                pair->push_back(q);
            }
        }
        auto median = [](std::vector<double> v) {
            std::sort(v.begin(), v.end());
            const std::size_t n = v.size();
            return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
        };
        const auto q = calibrate_steps(s, l);
        CHECK(q.step_short == doctest::Approx(median(diffs_s)).epsilon(1e-6));
        CHECK(q.step_long == doctest::Approx(median(diffs_l)).epsilon(1e-6));
    }
    SUBCASE("empty corpus is rejected") {
        std::vector<RepresentationSequence> none, c{seq1({1, 2})};
        CHECK_THROWS_AS(calibrate_steps(none, c), InputError);
        CHECK_THROWS_AS(calibrate_steps(c, none), InputError);
    }
}
