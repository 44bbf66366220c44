#include "ccodec/discriminators.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "ccodec/errors.hpp"

namespace ccodec {

using nn::FeatureMap;

namespace {

template <class T>
FeatureMap<T> rowwise_forward(const nn::Conv1d<T>& conv, const FeatureMap<T>& x, int rows) {
    const int len = x.frames / rows;
    const int out_len = conv.spec().output_length(len);
    FeatureMap<T> y(conv.spec().out, out_len * rows);
    for (int r = 0; r < rows; ++r) {
        const auto yr = conv.forward(rows == 1 ? x : nn::slice_frames(x, r * len, (r + 1) * len));
        for (int c = 0; c < y.channels; ++c) std::copy(yr.row(c), yr.row(c) + out_len, y.row(c) + r * out_len);
    }
    return y;
}

template <class T>
FeatureMap<T> rowwise_backward(nn::Conv1d<T>& conv, const FeatureMap<T>& x, const FeatureMap<T>& dy, int rows,
                               bool want_dx, bool weight_grads) {
    if (rows == 1) return conv.backward(x, dy, want_dx, weight_grads);
    const int len = x.frames / rows;
    const int out_len = dy.frames / rows;
    FeatureMap<T> dx(want_dx ? x.channels : 0, want_dx ? x.frames : 0);
    for (int r = 0; r < rows; ++r) {
        const auto dxr = conv.backward(nn::slice_frames(x, r * len, (r + 1) * len),
                                       nn::slice_frames(dy, r * out_len, (r + 1) * out_len), want_dx, weight_grads);
        if (want_dx)
            for (int c = 0; c < x.channels; ++c) std::copy(dxr.row(c), dxr.row(c) + len, dx.row(c) + r * len);
    }
    return dx;
}

nn::Conv1dSpec same_spec(int in, int out, int kernel, int stride) {
    nn::Conv1dSpec s;
    s.in = in;
    s.out = out;
    s.kernel = kernel;
    s.stride = stride;
    s.pad_left = (kernel - 1) / 2;
    s.pad_right = kernel - 1 - s.pad_left;
    return s;
}

} // namespace

template <class T>
ConvStack<T>::ConvStack(const std::string& name, const std::vector<int>& channels, const std::vector<int>& kernels,
                        const std::vector<int>& strides, int post_kernel, std::mt19937_64& rng) {
    int in = 1;
    for (std::size_t i = 0; i < channels.size(); ++i) {
        auto& c = layers.emplace_back(name + ".conv" + std::to_string(i),
                                      same_spec(in, channels[i], kernels[i], strides[i]));
        nn::init_normal(c.weight, in * kernels[i], 1.0, rng);
        in = channels[i];
    }
    post = nn::Conv1d<T>(name + ".post", same_spec(in, 1, post_kernel, 1));
    nn::init_normal(post.weight, in * post_kernel, 1.0, rng);
}

template <class T>
void ConvStack<T>::append_params(std::vector<nn::Param<T>*>& out) {
    for (auto& c : layers) out.insert(out.end(), {&c.weight, &c.bias});
    out.insert(out.end(), {&post.weight, &post.bias});
}

template <class T>
DiscriminatorOutput<T> ConvStack<T>::forward(const FeatureMap<T>& x, int rows, StackCache<T>* cache) const {
    DiscriminatorOutput<T> out;
    out.rows = rows;
    FeatureMap<T> h = x;
    for (const auto& conv : layers) {
        auto z = rowwise_forward(conv, h, rows);
        if (cache) {
            cache->inputs.push_back(std::move(h));
            cache->pre.push_back(z);
        }
        h = nn::leaky_relu(z);
        out.features.push_back(h);
    }
    out.score = rowwise_forward(post, h, rows);
    if (cache) cache->inputs.push_back(std::move(h));
    return out;
}

template <class T>
FeatureMap<T> ConvStack<T>::backward(const StackCache<T>& cache, int rows, const DiscriminatorGrad<T>& grad,
                                     bool want_dx, bool weight_grads) {
    const auto& last_in = cache.inputs.back();
    FeatureMap<T> d(last_in.channels, last_in.frames);
    if (!grad.score.empty()) d = rowwise_backward(post, last_in, grad.score, rows, true, weight_grads);
    for (int i = static_cast<int>(layers.size()) - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        if (ui < grad.features.size() && !grad.features[ui].empty()) nn::add_inplace(d, grad.features[ui]);
        nn::leaky_relu_backward(cache.pre[ui], d);
        const bool need = i > 0 || want_dx;
        d = rowwise_backward(layers[ui], cache.inputs[ui], d, rows, need, weight_grads);
        if (!need) break;
    }
    return want_dx ? d : FeatureMap<T>();
}

template <class T>
std::vector<T> average_pool2(std::span<const T> x) {
    std::vector<T> y(x.size() / 2);
    for (std::size_t i = 0; i < y.size(); ++i) y[i] = (x[2 * i] + x[2 * i + 1]) * T(0.5);
    return y;
}

template <class T>
FeatureMap<T> mpd_reshape(std::span<const T> x, int p) {
    if (p <= 0) throw InputError("period must be positive");
    const int n = static_cast<int>(x.size());
    const int pad = (p - n % p) % p;
    if (pad > 0 && n <= pad) throw InputError("signal too short to reflect-pad to period " + std::to_string(p));
    const int len = (n + pad) / p;
    FeatureMap<T> y(p, len);
    for (int idx = 0; idx < n + pad; ++idx) {
        const int src = idx < n ? idx : 2 * (n - 1) - idx;
        y.at(idx % p, idx / p) = x[static_cast<std::size_t>(src)];
    }
    return y;
}

template <class T>
void mpd_reshape_backward(const FeatureMap<T>& d, int n, std::span<T> dx) {
    const int p = d.channels;
    for (int idx = 0; idx < p * d.frames; ++idx) {
        const int src = idx < n ? idx : 2 * (n - 1) - idx;
        dx[static_cast<std::size_t>(src)] += d.at(idx % p, idx / p);
    }
}

// ─── MSD ─────────────────────────────────────────────────────────────────────

template <class T>
MultiScaleDiscriminator<T>::MultiScaleDiscriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng) {
    for (int b = 0; b < 3; ++b)
        blocks.emplace_back("msd" + std::to_string(b), cfg.msd_channels, cfg.msd_kernels, cfg.msd_strides,
                            cfg.post_kernel, rng);
    min_length_ = 4 * std::accumulate(cfg.msd_strides.begin(), cfg.msd_strides.end(), 1, std::multiplies<>());
}

template <class T>
void MultiScaleDiscriminator<T>::append_params(std::vector<nn::Param<T>*>& out) {
    for (auto& b : blocks) b.append_params(out);
}

template <class T>
std::vector<DiscriminatorOutput<T>> MultiScaleDiscriminator<T>::forward(std::span<const T> x,
                                                                        EnsembleTrace<T>* trace) const {
    if (static_cast<int>(x.size()) < min_length_)
        throw InputError("discriminator input of " + std::to_string(x.size()) + " samples is shorter than " +
                         std::to_string(min_length_));
    std::vector<DiscriminatorOutput<T>> out;
    std::vector<T> sig(x.begin(), x.end());
    if (trace) {
        trace->n = static_cast<int>(x.size());
        trace->stacks.assign(blocks.size(), {});
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        if (b > 0) sig = average_pool2<T>(sig);
        FeatureMap<T> in(1, static_cast<int>(sig.size()));
        std::copy(sig.begin(), sig.end(), in.data.begin());
        out.push_back(blocks[b].forward(in, 1, trace ? &trace->stacks[b] : nullptr));
        if (trace) trace->inputs.push_back(sig);
    }
    return out;
}

template <class T>
std::vector<T> MultiScaleDiscriminator<T>::backward(const EnsembleTrace<T>& trace,
                                                    const std::vector<DiscriminatorGrad<T>>& grads, bool want_dx,
                                                    bool weight_grads) {
    std::vector<T> carry;
    for (int b = static_cast<int>(blocks.size()) - 1; b >= 0; --b) {
        const auto ub = static_cast<std::size_t>(b);
        auto d = blocks[ub].backward(trace.stacks[ub], 1, grads[ub], want_dx, weight_grads);
        if (!want_dx) continue;
        std::vector<T> g = std::move(d.data);
        if (!carry.empty())
            for (std::size_t i = 0; i < carry.size(); ++i) {
                g[2 * i] += carry[i] * T(0.5);
                g[2 * i + 1] += carry[i] * T(0.5);
            }
        carry = std::move(g);
    }
    return carry;
}

// ─── MPD ─────────────────────────────────────────────────────────────────────

template <class T>
MultiPeriodDiscriminator<T>::MultiPeriodDiscriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng)
    : periods_(cfg.mpd_periods) {
    std::vector<int> kernels(cfg.mpd_channels.size(), cfg.mpd_kernel);
    std::vector<int> strides(cfg.mpd_channels.size(), cfg.mpd_stride);
    strides.back() = 1;
    for (int p : periods_)
        blocks.emplace_back("mpd" + std::to_string(p), cfg.mpd_channels, kernels, strides, cfg.post_kernel, rng);
    const int max_p = *std::max_element(periods_.begin(), periods_.end());
    min_length_ = max_p * std::accumulate(strides.begin(), strides.end(), 1, std::multiplies<>());
}

template <class T>
void MultiPeriodDiscriminator<T>::append_params(std::vector<nn::Param<T>*>& out) {
    for (auto& b : blocks) b.append_params(out);
}

template <class T>
std::vector<DiscriminatorOutput<T>> MultiPeriodDiscriminator<T>::forward(std::span<const T> x,
                                                                         EnsembleTrace<T>* trace) const {
    if (static_cast<int>(x.size()) < min_length_)
        throw InputError("discriminator input of " + std::to_string(x.size()) + " samples is shorter than " +
                         std::to_string(min_length_));
    std::vector<DiscriminatorOutput<T>> out;
    if (trace) {
        trace->n = static_cast<int>(x.size());
        trace->stacks.assign(blocks.size(), {});
    }
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const int p = periods_[b];
        auto grid = mpd_reshape(x, p);
        FeatureMap<T> in(1, grid.channels * grid.frames);
        in.data = std::move(grid.data);
        out.push_back(blocks[b].forward(in, p, trace ? &trace->stacks[b] : nullptr));
    }
    return out;
}

template <class T>
std::vector<T> MultiPeriodDiscriminator<T>::backward(const EnsembleTrace<T>& trace,
                                                     const std::vector<DiscriminatorGrad<T>>& grads, bool want_dx,
                                                     bool weight_grads) {
    std::vector<T> dx(want_dx ? static_cast<std::size_t>(trace.n) : 0, T(0));
    for (std::size_t b = 0; b < blocks.size(); ++b) {
        const int p = periods_[b];
        auto d = blocks[b].backward(trace.stacks[b], p, grads[b], want_dx, weight_grads);
        if (!want_dx) continue;
        FeatureMap<T> grid(p, d.frames / p);
        grid.data = std::move(d.data);
        mpd_reshape_backward(grid, trace.n, std::span<T>(dx));
    }
    return dx;
}

// ─── Both ensembles ──────────────────────────────────────────────────────────

template <class T>
Discriminators<T>::Discriminators(const DiscriminatorConfig& cfg, std::uint64_t seed)
    : cfg_((cfg.validate(), cfg)), init_rng_(seed), msd(cfg_, init_rng_), mpd(cfg_, init_rng_) {}

template <class T>
std::vector<DiscriminatorOutput<T>> Discriminators<T>::forward(std::span<const T> x,
                                                               DiscriminatorTrace<T>* trace) const {
    for (T v : x)
        if (!std::isfinite(static_cast<double>(v))) throw InputError("discriminator input contains non-finite values");
    auto out = msd.forward(x, trace ? &trace->msd : nullptr);
    auto p = mpd.forward(x, trace ? &trace->mpd : nullptr);
    for (auto& o : p) out.push_back(std::move(o));
    return out;
}

template <class T>
std::vector<T> Discriminators<T>::backward(const DiscriminatorTrace<T>& trace,
                                           const std::vector<DiscriminatorGrad<T>>& grads, bool want_dx,
                                           bool weight_grads) {
    if (grads.size() != block_count()) throw InputError("discriminator gradient count mismatch");
    const auto split = grads.begin() + static_cast<std::ptrdiff_t>(msd.blocks.size());
    auto a = msd.backward(trace.msd, std::vector<DiscriminatorGrad<T>>(grads.begin(), split), want_dx, weight_grads);
    auto b = mpd.backward(trace.mpd, std::vector<DiscriminatorGrad<T>>(split, grads.end()), want_dx, weight_grads);
    if (!want_dx) return {};
    for (std::size_t i = 0; i < a.size(); ++i) a[i] += b[i];
    return a;
}

template <class T>
std::vector<nn::Param<T>*> Discriminators<T>::params() {
    std::vector<nn::Param<T>*> out;
    msd.append_params(out);
    mpd.append_params(out);
    return out;
}

template <class T>
std::int64_t Discriminators<T>::parameter_count() {
    return nn::count_parameters(params());
}

template <class T>
int Discriminators<T>::min_length() const {
    return std::max(msd.min_length(), mpd.min_length());
}

#define CCODEC_DISC_INSTANTIATE(T)                                                                                     \
    template class ConvStack<T>;                                                                                     \
    template class MultiScaleDiscriminator<T>;                                                                       \
    template class MultiPeriodDiscriminator<T>;                                                                      \
    template class Discriminators<T>;                                                                                \
    template std::vector<T> average_pool2(std::span<const T>);                                                       \
    template FeatureMap<T> mpd_reshape(std::span<const T>, int);                                                     \
    template void mpd_reshape_backward(const FeatureMap<T>&, int, std::span<T>);

CCODEC_DISC_INSTANTIATE(float)
CCODEC_DISC_INSTANTIATE(double)

} // namespace ccodec
