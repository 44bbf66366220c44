#include "ccodec/nn.hpp"

#include <algorithm>
#include <cassert>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "ccodec/gemm.hpp"

namespace ccodec::nn {

template <class T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b) {
    if (a.frames != b.frames) throw std::invalid_argument("concat_channels: frame count mismatch");
    FeatureMap<T> out(a.channels + b.channels, a.frames);
    std::copy(a.data.begin(), a.data.end(), out.data.begin());
    std::copy(b.data.begin(), b.data.end(), out.data.begin() + static_cast<std::ptrdiff_t>(a.data.size()));
    return out;
}

template <class T>
FeatureMap<T> concat_frames(const FeatureMap<T>& a, const FeatureMap<T>& b) {
    if (a.frames == 0) return b;
    if (b.frames == 0) return a;
    if (a.channels != b.channels) throw std::invalid_argument("concat_frames: channel mismatch");
    FeatureMap<T> out(a.channels, a.frames + b.frames);
    for (int c = 0; c < a.channels; ++c) {
        std::copy(a.row(c), a.row(c) + a.frames, out.row(c));
        std::copy(b.row(c), b.row(c) + b.frames, out.row(c) + a.frames);
    }
    return out;
}

template <class T>
FeatureMap<T> slice_frames(const FeatureMap<T>& x, int begin, int end) {
    begin = std::clamp(begin, 0, x.frames);
    end = std::clamp(end, begin, x.frames);
    FeatureMap<T> out(x.channels, end - begin);
    for (int c = 0; c < x.channels; ++c) std::copy(x.row(c) + begin, x.row(c) + end, out.row(c));
    return out;
}

template <class U, class T>
FeatureMap<U> cast(const FeatureMap<T>& x) {
    FeatureMap<U> out(x.channels, x.frames);
    std::transform(x.data.begin(), x.data.end(), out.data.begin(), [](T v) { return static_cast<U>(v); });
    return out;
}

template <class T>
Param<T>::Param(std::string n, std::vector<int> s) : name(std::move(n)), shape(std::move(s)) {
    std::size_t total = 1;
    for (int d : shape) total *= static_cast<std::size_t>(d);
    value.assign(total, T(0));
    grad.assign(total, T(0));
}

template <class T>
void init_normal(Param<T>& p, int fan_in, double gain, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, gain / std::sqrt(static_cast<double>(std::max(fan_in, 1))));
    for (auto& v : p.value) v = static_cast<T>(dist(rng));
}

// ─── Conv1d ──────────────────────────────────────────────────────────────────

int Conv1dSpec::output_length(int n) const {
    const int padded = n + pad_left + pad_right;
    if (padded < span()) return 0;
    return (padded - span()) / stride + 1;
}

template <class T>
Conv1d<T>::Conv1d(const std::string& name, Conv1dSpec spec)
    : weight(name + ".weight", {spec.out, spec.in, spec.kernel}), bias(name + ".bias", {spec.out}), spec_(spec) {
    if (spec.in <= 0 || spec.out <= 0 || spec.kernel <= 0 || spec.stride <= 0 || spec.dilation <= 0 ||
        spec.pad_left < 0 || spec.pad_right < 0)
        throw std::invalid_argument("Conv1d " + name + ": invalid geometry");
}

namespace {

// col[(c*K + k), t] = x[c, t*s + k*d - pad_left], zero outside [0, n).
template <class T>
std::vector<T> im2col(const FeatureMap<T>& x, const Conv1dSpec& s, int pad_left, int out_len) {
    const int rows = s.in * s.kernel;
    std::vector<T> col(static_cast<std::size_t>(rows) * out_len, T(0));
    for (int c = 0; c < s.in; ++c) {
        const T* xr = x.row(c);
        for (int k = 0; k < s.kernel; ++k) {
            T* dst = col.data() + static_cast<std::size_t>(c * s.kernel + k) * out_len;
            const int offset = k * s.dilation - pad_left;
            for (int t = 0; t < out_len; ++t) {
                const int idx = t * s.stride + offset;
                if (idx >= 0 && idx < x.frames) dst[t] = xr[idx];
            }
        }
    }
    return col;
}

template <class T>
void col2im(const std::vector<T>& col, const Conv1dSpec& s, int pad_left, int out_len, FeatureMap<T>& dx) {
    for (int c = 0; c < s.in; ++c) {
        T* xr = dx.row(c);
        for (int k = 0; k < s.kernel; ++k) {
            const T* src = col.data() + static_cast<std::size_t>(c * s.kernel + k) * out_len;
            const int offset = k * s.dilation - pad_left;
            for (int t = 0; t < out_len; ++t) {
                const int idx = t * s.stride + offset;
                if (idx >= 0 && idx < dx.frames) xr[idx] += src[t];
            }
        }
    }
}

} // namespace

template <class T>
FeatureMap<T> Conv1d<T>::run(const FeatureMap<T>& x, int pad_left, int pad_right) const {
    if (x.channels != spec_.in) throw std::invalid_argument("Conv1d " + weight.name + ": channel mismatch");
    Conv1dSpec s = spec_;
    s.pad_left = pad_left;
    s.pad_right = pad_right;
    const int out_len = s.output_length(x.frames);
    FeatureMap<T> y(spec_.out, out_len);
    if (out_len == 0) return y;
    for (int o = 0; o < spec_.out; ++o) std::fill(y.row(o), y.row(o) + out_len, bias.value[o]);
    const int kdim = spec_.in * spec_.kernel;
    if (spec_.kernel == 1 && spec_.stride == 1 && pad_left == 0) {
        gemm_acc<T>(spec_.out, out_len, kdim, weight.value.data(), kdim, x.data.data(), x.frames, y.data.data(),
                    out_len);
        return y;
    }
    const auto col = im2col(x, s, pad_left, out_len);
    gemm_acc<T>(spec_.out, out_len, kdim, weight.value.data(), kdim, col.data(), out_len, y.data.data(), out_len);
    return y;
}

template <class T>
FeatureMap<T> Conv1d<T>::forward(const FeatureMap<T>& x) const {
    return run(x, spec_.pad_left, spec_.pad_right);
}

template <class T>
FeatureMap<T> Conv1d<T>::forward_valid(const FeatureMap<T>& x) const {
    return run(x, 0, 0);
}

template <class T>
FeatureMap<T> Conv1d<T>::backward(const FeatureMap<T>& x, const FeatureMap<T>& dy, bool want_dx, bool weight_grads) {
    const int out_len = spec_.output_length(x.frames);
    if (dy.channels != spec_.out || dy.frames != out_len)
        throw std::invalid_argument("Conv1d " + weight.name + ": gradient shape mismatch");
    FeatureMap<T> dx;
    if (want_dx) dx = FeatureMap<T>(spec_.in, x.frames);
    if (out_len == 0) return dx;
    const int kdim = spec_.in * spec_.kernel;
    const bool pointwise = spec_.kernel == 1 && spec_.stride == 1 && spec_.pad_left == 0;
    std::vector<T> col;
    if (weight_grads) {
        if (!pointwise) col = im2col(x, spec_, spec_.pad_left, out_len);
        const T* cp = pointwise ? x.data.data() : col.data();
        gemm_acc_bt<T>(spec_.out, kdim, out_len, dy.data.data(), out_len, cp, out_len, weight.grad.data(), kdim);
        for (int o = 0; o < spec_.out; ++o) {
            const T* r = dy.row(o);
            T acc = 0;
            for (int t = 0; t < out_len; ++t) acc += r[t];
            bias.grad[o] += acc;
        }
    }
    if (want_dx) {
        if (pointwise) {
            gemm_acc_at<T>(kdim, out_len, spec_.out, weight.value.data(), kdim, dy.data.data(), out_len,
                           dx.data.data(), out_len);
        } else {
            std::vector<T> dcol(static_cast<std::size_t>(kdim) * out_len, T(0));
            gemm_acc_at<T>(kdim, out_len, spec_.out, weight.value.data(), kdim, dy.data.data(), out_len, dcol.data(),
                           out_len);
            col2im(dcol, spec_, spec_.pad_left, out_len, dx);
        }
    }
    return dx;
}

template <class T>
Conv1dStream<T>::Conv1dStream(const Conv1dSpec& spec) : spec_(spec) {
    reset();
}

template <class T>
void Conv1dStream<T>::reset() {
    buffer_ = FeatureMap<T>(spec_.in, spec_.pad_left);
}

template <class T>
FeatureMap<T> Conv1dStream<T>::push(const Conv1d<T>& conv, const FeatureMap<T>& chunk) {
    if (chunk.frames == 0) return FeatureMap<T>(spec_.out, 0);
    FeatureMap<T> full = concat_frames(buffer_, chunk);
    const int n_out = full.frames >= spec_.span() ? (full.frames - spec_.span()) / spec_.stride + 1 : 0;
    if (n_out == 0) {
        buffer_ = std::move(full);
        return FeatureMap<T>(spec_.out, 0);
    }
    const int needed = (n_out - 1) * spec_.stride + spec_.span();
    FeatureMap<T> y = conv.forward_valid(slice_frames(full, 0, needed));
    buffer_ = slice_frames(full, n_out * spec_.stride, full.frames);
    return y;
}

template <class T>
FeatureMap<T> Conv1dStream<T>::finish(const Conv1d<T>& conv) {
    return push(conv, FeatureMap<T>(spec_.in, spec_.pad_right));
}

// ─── ConvTranspose1d ─────────────────────────────────────────────────────────

template <class T>
ConvTranspose1d<T>::ConvTranspose1d(const std::string& name, ConvTransposeSpec spec)
    : weight(name + ".weight", {spec.in, spec.out, spec.kernel}), bias(name + ".bias", {spec.out}), spec_(spec) {
    if (spec.in <= 0 || spec.out <= 0 || spec.kernel < spec.stride || spec.stride <= 0)
        throw std::invalid_argument("ConvTranspose1d " + name + ": invalid geometry");
}

template <class T>
FeatureMap<T> ConvTranspose1d<T>::columns(const FeatureMap<T>& x) const {
    if (x.channels != spec_.in) throw std::invalid_argument("ConvTranspose1d " + weight.name + ": channel mismatch");
    const int rows = spec_.out * spec_.kernel;
    FeatureMap<T> cols(rows, x.frames);
    gemm_acc_at<T>(rows, x.frames, spec_.in, weight.value.data(), rows, x.data.data(), x.frames, cols.data.data(),
                   x.frames);
    return cols;
}

template <class T>
void ConvTranspose1d<T>::overlap_add(const FeatureMap<T>& cols, FeatureMap<T>& acc) const {
    const int K = spec_.kernel, S = spec_.stride;
    for (int o = 0; o < spec_.out; ++o) {
        T* dst = acc.row(o);
        for (int t = 0; t < cols.frames; ++t) {
            for (int k = 0; k < K; ++k) dst[t * S + k] += cols.at(o * K + k, t);
        }
    }
}

template <class T>
FeatureMap<T> ConvTranspose1d<T>::forward(const FeatureMap<T>& x) const {
    const int S = spec_.stride, K = spec_.kernel;
    const auto cols = columns(x);
    FeatureMap<T> acc(spec_.out, x.frames * S + K - S);
    for (int o = 0; o < spec_.out; ++o) std::fill(acc.row(o), acc.row(o) + acc.frames, bias.value[o]);
    overlap_add(cols, acc);
    return slice_frames(acc, 0, x.frames * S);
}

template <class T>
FeatureMap<T> ConvTranspose1d<T>::backward(const FeatureMap<T>& x, const FeatureMap<T>& dy, bool want_dx,
                                           bool weight_grads) {
    const int S = spec_.stride, K = spec_.kernel, n = x.frames;
    if (dy.channels != spec_.out || dy.frames != n * S)
        throw std::invalid_argument("ConvTranspose1d " + weight.name + ": gradient shape mismatch");
    const int rows = spec_.out * K;
    FeatureMap<T> dcol(rows, n);
    for (int o = 0; o < spec_.out; ++o) {
        const T* g = dy.row(o);
        for (int k = 0; k < K; ++k) {
            T* dst = dcol.row(o * K + k);
            for (int t = 0; t < n; ++t) {
                const int idx = t * S + k;
                dst[t] = idx < n * S ? g[idx] : T(0);
            }
        }
    }
    if (weight_grads) {
        gemm_acc_bt<T>(spec_.in, rows, n, x.data.data(), n, dcol.data.data(), n, weight.grad.data(), rows);
        for (int o = 0; o < spec_.out; ++o) {
            T acc = 0;
            for (int t = 0; t < dy.frames; ++t) acc += dy.at(o, t);
            bias.grad[o] += acc;
        }
    }
    FeatureMap<T> dx;
    if (want_dx) {
        dx = FeatureMap<T>(spec_.in, n);
        gemm_acc<T>(spec_.in, n, rows, weight.value.data(), rows, dcol.data.data(), n, dx.data.data(), n);
    }
    return dx;
}

template <class T>
ConvTransposeStream<T>::ConvTransposeStream(const ConvTranspose1d<T>& layer) {
    const auto& s = layer.spec();
    pending_ = FeatureMap<T>(s.out, s.kernel - s.stride);
    for (int o = 0; o < s.out; ++o) std::fill(pending_.row(o), pending_.row(o) + pending_.frames, layer.bias.value[o]);
}

template <class T>
FeatureMap<T> ConvTransposeStream<T>::push(const ConvTranspose1d<T>& layer, const FeatureMap<T>& chunk) {
    const auto& s = layer.spec();
    if (chunk.frames == 0) return FeatureMap<T>(s.out, 0);
    const int tail = s.kernel - s.stride;
    FeatureMap<T> acc(s.out, chunk.frames * s.stride + tail);
    for (int o = 0; o < s.out; ++o) {
        T* dst = acc.row(o);
        std::copy(pending_.row(o), pending_.row(o) + tail, dst);
        std::fill(dst + tail, dst + acc.frames, layer.bias.value[o]);
    }
    layer.overlap_add(layer.columns(chunk), acc);
    pending_ = slice_frames(acc, chunk.frames * s.stride, acc.frames);
    return slice_frames(acc, 0, chunk.frames * s.stride);
}

// ─── GRU ─────────────────────────────────────────────────────────────────────

template <class T>
Gru<T>::Gru(const std::string& name, int input, int hidden)
    : w_ih(name + ".w_ih", {3 * hidden, input}),
      w_hh(name + ".w_hh", {3 * hidden, hidden}),
      b_ih(name + ".b_ih", {3 * hidden}),
      b_hh(name + ".b_hh", {3 * hidden}),
      input_(input),
      hidden_(hidden) {}

template <class T>
std::int64_t Gru<T>::parameter_count() const {
    return static_cast<std::int64_t>(w_ih.size() + w_hh.size() + b_ih.size() + b_hh.size());
}

namespace {
template <class T>
T sigmoid(T v) {
    return T(1) / (T(1) + std::exp(-v));
}
} // namespace

template <class T>
FeatureMap<T> Gru<T>::forward(const FeatureMap<T>& x, std::vector<T>& h, GruCache<T>* cache) const {
    const int H = hidden_, n = x.frames;
    if (x.channels != input_) throw std::invalid_argument("Gru " + w_ih.name + ": input size mismatch");
    if (static_cast<int>(h.size()) != H) h.assign(H, T(0));
    FeatureMap<T> gi(3 * H, n);
    for (int j = 0; j < 3 * H; ++j) std::fill(gi.row(j), gi.row(j) + n, b_ih.value[j]);
    gemm_acc<T>(3 * H, n, input_, w_ih.value.data(), input_, x.data.data(), n, gi.data.data(), n);

    FeatureMap<T> out(H, n);
    if (cache) {
        cache->x = x;
        cache->h_prev = FeatureMap<T>(H, n);
        cache->r = FeatureMap<T>(H, n);
        cache->z = FeatureMap<T>(H, n);
        cache->n = FeatureMap<T>(H, n);
        cache->gh_n = FeatureMap<T>(H, n);
    }
    std::vector<T> gh(3 * H);
    for (int t = 0; t < n; ++t) {
        std::copy(b_hh.value.begin(), b_hh.value.end(), gh.begin());
        gemm_acc<T>(3 * H, 1, H, w_hh.value.data(), H, h.data(), 1, gh.data(), 1);
        for (int j = 0; j < H; ++j) {
            const T r = sigmoid(gi.at(j, t) + gh[j]);
            const T z = sigmoid(gi.at(H + j, t) + gh[H + j]);
            const T cand = gi.at(2 * H + j, t) + r * gh[2 * H + j];
            const T hn = (T(1) - z) * cand + z * h[j];
            if (cache) {
                cache->h_prev.at(j, t) = h[j];
                cache->r.at(j, t) = r;
                cache->z.at(j, t) = z;
                cache->n.at(j, t) = cand;
                cache->gh_n.at(j, t) = gh[2 * H + j];
            }
            out.at(j, t) = hn;
        }
        for (int j = 0; j < H; ++j) h[j] = out.at(j, t);
    }
    return out;
}

template <class T>
FeatureMap<T> Gru<T>::backward(const GruCache<T>& cache, const FeatureMap<T>& dh_out, bool want_dx,
                               bool weight_grads) {
    const int H = hidden_, n = cache.x.frames;
    FeatureMap<T> dgi(3 * H, n), dgh(3 * H, n);
    std::vector<T> dh_next(H, T(0)), dh_prev(H);
    for (int t = n - 1; t >= 0; --t) {
        for (int j = 0; j < H; ++j) {
            const T dh = dh_out.at(j, t) + dh_next[j];
            const T r = cache.r.at(j, t), z = cache.z.at(j, t), cand = cache.n.at(j, t);
            const T hp = cache.h_prev.at(j, t);
            const T dn = dh * (T(1) - z);
            const T dz = dh * (hp - cand);
            const T dr = dn * cache.gh_n.at(j, t);
            const T dpr = dr * r * (T(1) - r);
            const T dpz = dz * z * (T(1) - z);
            dgi.at(j, t) = dpr;
            dgi.at(H + j, t) = dpz;
            dgi.at(2 * H + j, t) = dn;
            dgh.at(j, t) = dpr;
            dgh.at(H + j, t) = dpz;
            dgh.at(2 * H + j, t) = dn * r;
            dh_prev[j] = dh * z;
        }
        // dh_prev += W_hh^T dgh[:, t]
        for (int i = 0; i < 3 * H; ++i) {
            const T g = dgh.at(i, t);
            if (g == T(0)) continue;
            const T* w = w_hh.value.data() + static_cast<std::size_t>(i) * H;
            for (int j = 0; j < H; ++j) dh_prev[j] += w[j] * g;
        }
        dh_next = dh_prev;
    }
    if (weight_grads) {
        gemm_acc_bt<T>(3 * H, input_, n, dgi.data.data(), n, cache.x.data.data(), n, w_ih.grad.data(), input_);
        gemm_acc_bt<T>(3 * H, H, n, dgh.data.data(), n, cache.h_prev.data.data(), n, w_hh.grad.data(), H);
        for (int i = 0; i < 3 * H; ++i) {
            T si = 0, sh = 0;
            for (int t = 0; t < n; ++t) {
                si += dgi.at(i, t);
                sh += dgh.at(i, t);
            }
            b_ih.grad[i] += si;
            b_hh.grad[i] += sh;
        }
    }
    FeatureMap<T> dx;
    if (want_dx) {
        dx = FeatureMap<T>(input_, n);
        gemm_acc_at<T>(input_, n, 3 * H, w_ih.value.data(), input_, dgi.data.data(), n, dx.data.data(), n);
    }
    return dx;
}

// ─── Elementwise ─────────────────────────────────────────────────────────────

template <class T>
void relu_inplace(FeatureMap<T>& x) {
    for (auto& v : x.data) v = v > T(0) ? v : T(0);
}

template <class T>
void relu_backward(const FeatureMap<T>& y, FeatureMap<T>& dy) {
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        if (!(y.data[i] > T(0))) dy.data[i] = T(0);
}

template <class T>
FeatureMap<T> leaky_relu(const FeatureMap<T>& x) {
    FeatureMap<T> y(x.channels, x.frames);
    const T slope = static_cast<T>(kLeakySlope);
    for (std::size_t i = 0; i < x.data.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : slope * x.data[i];
    return y;
}

template <class T>
void leaky_relu_backward(const FeatureMap<T>& x, FeatureMap<T>& dy) {
    const T slope = static_cast<T>(kLeakySlope);
    for (std::size_t i = 0; i < dy.data.size(); ++i)
        if (!(x.data[i] > T(0))) dy.data[i] *= slope;
}

template <class T>
void add_inplace(FeatureMap<T>& acc, const FeatureMap<T>& x) {
    if (acc.data.size() != x.data.size()) throw std::invalid_argument("add_inplace: shape mismatch");
    for (std::size_t i = 0; i < x.data.size(); ++i) acc.data[i] += x.data[i];
}

template <class T>
void scale_inplace(FeatureMap<T>& x, T s) {
    for (auto& v : x.data) v *= s;
}

// ─── Adam ────────────────────────────────────────────────────────────────────

template <class T>
Adam<T>::Adam(std::vector<Param<T>*> params, AdamConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    for (auto* p : params_) {
        m_.emplace_back(p->size(), T(0));
        v_.emplace_back(p->size(), T(0));
    }
}

template <class T>
void Adam<T>::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
    const T step = static_cast<T>(cfg_.lr / bc1);
    const T inv_bc2 = static_cast<T>(1.0 / bc2);
    const T eps = static_cast<T>(cfg_.eps);
    for (std::size_t k = 0; k < params_.size(); ++k) {
        auto& p = *params_[k];
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < p.size(); ++i) {
            const T g = p.grad[i];
            m[i] = b1 * m[i] + (T(1) - b1) * g;
            v[i] = b2 * v[i] + (T(1) - b2) * g * g;
            p.value[i] -= step * m[i] / (std::sqrt(v[i] * inv_bc2) + eps);
        }
    }
}

template <class T>
void Adam<T>::zero_grad() {
    for (auto* p : params_) p->zero_grad();
}

template <class T>
std::int64_t count_parameters(const std::vector<Param<T>*>& params) {
    std::int64_t n = 0;
    for (auto* p : params) n += static_cast<std::int64_t>(p->size());
    return n;
}

#define CCODEC_INSTANTIATE(T)                                                                                        \
    template FeatureMap<T> concat_channels(const FeatureMap<T>&, const FeatureMap<T>&);                              \
    template FeatureMap<T> concat_frames(const FeatureMap<T>&, const FeatureMap<T>&);                                \
    template FeatureMap<T> slice_frames(const FeatureMap<T>&, int, int);                                             \
    template struct Param<T>;                                                                                        \
    template void init_normal(Param<T>&, int, double, std::mt19937_64&);                                             \
    template class Conv1d<T>;                                                                                        \
    template class Conv1dStream<T>;                                                                                  \
    template class ConvTranspose1d<T>;                                                                               \
    template class ConvTransposeStream<T>;                                                                           \
    template class Gru<T>;                                                                                           \
    template void relu_inplace(FeatureMap<T>&);                                                                      \
    template void relu_backward(const FeatureMap<T>&, FeatureMap<T>&);                                               \
    template FeatureMap<T> leaky_relu(const FeatureMap<T>&);                                                         \
    template void leaky_relu_backward(const FeatureMap<T>&, FeatureMap<T>&);                                         \
    template void add_inplace(FeatureMap<T>&, const FeatureMap<T>&);                                                 \
    template void scale_inplace(FeatureMap<T>&, T);                                                                  \
    template class Adam<T>;                                                                                          \
    template std::int64_t count_parameters(const std::vector<Param<T>*>&);

CCODEC_INSTANTIATE(float)
CCODEC_INSTANTIATE(double)
#undef CCODEC_INSTANTIATE

template FeatureMap<double> cast(const FeatureMap<float>&);
template FeatureMap<float> cast(const FeatureMap<double>&);
template FeatureMap<float> cast(const FeatureMap<float>&);
template FeatureMap<double> cast(const FeatureMap<double>&);

} // namespace ccodec::nn
