#include <doctest.h>

#include <random>

#include "ccodec/gemm.hpp"
#include "ccodec/nn.hpp"
#include "test_util.hpp"

using namespace ccodec;
using nn::FeatureMap;

namespace {

template <class T>
std::vector<T> naive_gemm(int m, int n, int k, const std::vector<T>& a, const std::vector<T>& b) {
    std::vector<T> c(static_cast<std::size_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) {
            T acc = 0;
            for (int p = 0; p < k; ++p) acc = std::fma(a[i * k + p], b[p * n + j], acc);
            c[i * n + j] = acc;
        }
    return c;
}

// Direct convolution with explicit zero padding.
template <class T>
FeatureMap<T> naive_conv(const nn::Conv1d<T>& conv, const FeatureMap<T>& x) {
    const auto& s = conv.spec();
    const int n_out = s.output_length(x.frames);
    FeatureMap<T> y(s.out, n_out);
    for (int o = 0; o < s.out; ++o)
        for (int t = 0; t < n_out; ++t) {
            double acc = conv.bias.value[o];
            for (int c = 0; c < s.in; ++c)
                for (int k = 0; k < s.kernel; ++k) {
                    const int idx = t * s.stride + k * s.dilation - s.pad_left;
                    if (idx >= 0 && idx < x.frames)
                        acc += double(conv.weight.value[(o * s.in + c) * s.kernel + k]) * x.at(c, idx);
                }
            y.at(o, t) = static_cast<T>(acc);
        }
    return y;
}

template <class T>
void randomize(nn::Param<T>& p, std::uint64_t seed, double scale = 0.3) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> d(0.0, scale);
    for (auto& v : p.value) v = static_cast<T>(d(rng));
}

} // namespace

TEST_CASE("gemm matches a naive fma chain bit for bit and is chunk invariant") {
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> dim(1, 150);
    for (int trial = 0; trial < 30; ++trial) {
        const int m = dim(rng), n = dim(rng), k = dim(rng) * 2;
        std::normal_distribution<float> d;
        std::vector<float> a(static_cast<std::size_t>(m) * k), b(static_cast<std::size_t>(k) * n);
        for (auto& v : a) v = d(rng);
        for (auto& v : b) v = d(rng);
        std::vector<float> c(static_cast<std::size_t>(m) * n, 0.0f);
        nn::gemm_acc<float>(m, n, k, a.data(), k, b.data(), n, c.data(), n);
        CHECK(c == naive_gemm(m, n, k, a, b));

        // Column chunks written into the same output must agree exactly.
        std::vector<float> chunked(c.size(), 0.0f);
        for (int j0 = 0; j0 < n; j0 += 7) {
            const int w = std::min(7, n - j0);
            nn::gemm_acc<float>(m, w, k, a.data(), k, b.data() + j0, n, chunked.data() + j0, n);
        }
        CHECK(chunked == c);
    }
}

TEST_CASE("transposed gemm variants agree with the plain one") {
    const int m = 37, n = 53, k = 71;
    std::mt19937_64 rng(2);
    std::normal_distribution<double> d;
    std::vector<double> a(m * k), b(k * n), at(k * m), bt(n * k);
    for (int i = 0; i < m; ++i)
        for (int p = 0; p < k; ++p) at[p * m + i] = a[i * k + p] = d(rng);
    for (int p = 0; p < k; ++p)
        for (int j = 0; j < n; ++j) bt[j * k + p] = b[p * n + j] = d(rng);
    std::vector<double> c1(m * n), c2(m * n), c3(m * n);
    nn::gemm_acc<double>(m, n, k, a.data(), k, b.data(), n, c1.data(), n);
    nn::gemm_acc_at<double>(m, n, k, at.data(), m, b.data(), n, c2.data(), n);
    nn::gemm_acc_bt<double>(m, n, k, a.data(), k, bt.data(), k, c3.data(), n);
    CHECK(c1 == c2);
    CHECK(c1 == c3);
}

TEST_CASE("conv1d parameter arithmetic") {
    nn::Conv1dSpec s;
    s.kernel = 10;
    CHECK(s.parameter_count() == 11);
    nn::ConvTransposeSpec t{64, 32, 4, 2};
    CHECK(t.parameter_count() == 8224);
}

TEST_CASE("conv1d forward matches direct convolution") {
    for (int trial = 0; trial < 10; ++trial) {
        nn::Conv1dSpec s{3, 5, 1 + trial % 5, 1 + trial % 3, 1 + trial % 2, trial % 4, trial % 3};
        nn::Conv1d<double> conv("c", s);
        randomize(conv.weight, trial);
        randomize(conv.bias, trial + 100);
        const auto x = test_util::random_map<double>(3, 40 + trial, trial + 7);
        const auto y = conv.forward(x);
        const auto ref = naive_conv(conv, x);
        REQUIRE(y.frames == ref.frames);
        for (std::size_t i = 0; i < y.data.size(); ++i) CHECK(y.data[i] == doctest::Approx(ref.data[i]).epsilon(1e-12));
    }
}

TEST_CASE("conv1d stream equals one-shot causal conv for any chunking") {
    nn::Conv1dSpec s{2, 4, 4, 2, 1, 2, 0};
    nn::Conv1d<float> conv("c", s);
    randomize(conv.weight, 3);
    randomize(conv.bias, 4);
    const auto x = test_util::random_map<float>(2, 101, 5);
    const auto ref = conv.forward(x);
    std::mt19937_64 rng(6);
    for (int trial = 0; trial < 10; ++trial) {
        nn::Conv1dStream<float> st(s);
        FeatureMap<float> acc(4, 0);
        int pos = 0;
        while (pos < x.frames) {
            const int w = std::min<int>(x.frames - pos, 1 + static_cast<int>(rng() % 9));
            acc = nn::concat_frames(acc, st.push(conv, nn::slice_frames(x, pos, pos + w)));
            pos += w;
        }
        acc = nn::concat_frames(acc, st.finish(conv));
        CHECK(acc == ref);
    }
}

TEST_CASE("transposed conv stream equals one-shot") {
    nn::ConvTranspose1d<float> up("u", {3, 2, 10, 5});
    randomize(up.weight, 8);
    randomize(up.bias, 9);
    const auto x = test_util::random_map<float>(3, 33, 10);
    const auto ref = up.forward(x);
    CHECK(ref.frames == 33 * 5);
    nn::ConvTransposeStream<float> st(up);
    FeatureMap<float> acc(2, 0);
    for (int t = 0; t < 33; t += 4) acc = nn::concat_frames(acc, st.push(up, nn::slice_frames(x, t, std::min(33, t + 4))));
    CHECK(acc == ref);
}

TEST_CASE("layer gradients agree with finite differences at float64") {
    SUBCASE("conv1d") {
        nn::Conv1d<double> conv("c", {2, 3, 3, 2, 2, 3, 1});
        randomize(conv.weight, 1);
        randomize(conv.bias, 2);
        auto x = test_util::random_map<double>(2, 17, 3);
        const auto w = test_util::random_map<double>(3, conv.spec().output_length(17), 4);
        auto loss = [&] {
            const auto y = conv.forward(x);
            double s = 0;
            for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
            return s;
        };
        conv.weight.zero_grad();
        conv.bias.zero_grad();
        const auto dx = conv.backward(x, w, true, true);
        CHECK(test_util::fd_check(x.data, dx.data, loss, test_util::probe_indices(x.data.size(), 20, 5)) < 1e-6);
        CHECK(test_util::fd_check(conv.weight.value, conv.weight.grad, loss,
                                  test_util::probe_indices(conv.weight.size(), 20, 6)) < 1e-6);
        CHECK(test_util::fd_check(conv.bias.value, conv.bias.grad, loss, {0, 1, 2}) < 1e-6);
    }
    SUBCASE("transposed conv") {
        nn::ConvTranspose1d<double> up("u", {3, 2, 8, 4});
        randomize(up.weight, 7);
        randomize(up.bias, 8);
        auto x = test_util::random_map<double>(3, 9, 9);
        const auto w = test_util::random_map<double>(2, 36, 10);
        auto loss = [&] {
            const auto y = up.forward(x);
            double s = 0;
            for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
            return s;
        };
        up.weight.zero_grad();
        up.bias.zero_grad();
        const auto dx = up.backward(x, w, true, true);
        CHECK(test_util::fd_check(x.data, dx.data, loss, test_util::probe_indices(x.data.size(), 20, 11)) < 1e-6);
        CHECK(test_util::fd_check(up.weight.value, up.weight.grad, loss,
                                  test_util::probe_indices(up.weight.size(), 20, 12)) < 1e-6);
        CHECK(test_util::fd_check(up.bias.value, up.bias.grad, loss, {0, 1}) < 1e-6);
    }
    SUBCASE("gru") {
        nn::Gru<double> gru("g", 4, 3);
        for (auto* p : {&gru.w_ih, &gru.w_hh, &gru.b_ih, &gru.b_hh}) randomize(*p, p->size(), 0.5);
        auto x = test_util::random_map<double>(4, 12, 13);
        const auto w = test_util::random_map<double>(3, 12, 14);
        auto loss = [&] {
            std::vector<double> h;
            const auto y = gru.forward(x, h);
            double s = 0;
            for (std::size_t i = 0; i < y.data.size(); ++i) s += y.data[i] * w.data[i];
            return s;
        };
        nn::GruCache<double> cache;
        std::vector<double> h;
        gru.forward(x, h, &cache);
        for (auto* p : {&gru.w_ih, &gru.w_hh, &gru.b_ih, &gru.b_hh}) p->zero_grad();
        const auto dx = gru.backward(cache, w, true, true);
        CHECK(test_util::fd_check(x.data, dx.data, loss, test_util::probe_indices(x.data.size(), 20, 15)) < 1e-6);
        for (auto* p : {&gru.w_ih, &gru.w_hh, &gru.b_ih, &gru.b_hh})
            CHECK(test_util::fd_check(p->value, p->grad, loss, test_util::probe_indices(p->size(), 10, 16)) < 1e-6);
    }
}

TEST_CASE("gru uses a linear candidate") {
    // With all gates driven shut (z = 0, r = 1) the unit reduces to h = W_in x + b.
    nn::Gru<double> gru("g", 1, 1);
    gru.b_ih.value = {50.0, -50.0, 0.0}; // r, z, n
    gru.w_ih.value = {0.0, 0.0, 3.0};
    FeatureMap<double> x(1, 3);
    x.data = {1.0, 2.0, -4.0};
    std::vector<double> h;
    const auto y = gru.forward(x, h);
    CHECK(y.data[0] == doctest::Approx(3.0));
    CHECK(y.data[1] == doctest::Approx(6.0));
    CHECK(y.data[2] == doctest::Approx(-12.0));
}

TEST_CASE("adam follows the bias-corrected update") {
    nn::Param<double> p("p", {1});
    p.value = {1.0};
    nn::Adam<double> opt({&p}, {});
    p.grad = {0.5};
    opt.step();
    // First step: m_hat = g, v_hat = g^2, so the move is lr * g / (|g| + eps).
    CHECK(p.value[0] == doctest::Approx(1.0 - 2e-4 * 0.5 / (0.5 + 1e-8)).epsilon(1e-12));
    CHECK(opt.steps() == 1);
}
