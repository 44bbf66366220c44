#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace ccodec::nn {

// Channel-major 2D activation: channels x frames, row-major.
template <class T>
struct FeatureMap {
    int channels = 0;
    int frames = 0;
    std::vector<T> data;

    FeatureMap() = default;
    FeatureMap(int c, int t, T fill = T(0)) : channels(c), frames(t), data(static_cast<std::size_t>(c) * t, fill) {}

    T* row(int c) { return data.data() + static_cast<std::size_t>(c) * frames; }
    const T* row(int c) const { return data.data() + static_cast<std::size_t>(c) * frames; }
    T& at(int c, int t) { return data[static_cast<std::size_t>(c) * frames + t]; }
    T at(int c, int t) const { return data[static_cast<std::size_t>(c) * frames + t]; }
    bool empty() const { return frames == 0 || channels == 0; }

    bool operator==(const FeatureMap&) const = default;
};

template <class T>
FeatureMap<T> concat_channels(const FeatureMap<T>& a, const FeatureMap<T>& b);
template <class T>
FeatureMap<T> concat_frames(const FeatureMap<T>& a, const FeatureMap<T>& b);
template <class T>
FeatureMap<T> slice_frames(const FeatureMap<T>& x, int begin, int end);
template <class U, class T>
FeatureMap<U> cast(const FeatureMap<T>& x);

template <class T>
struct Param {
    std::string name;
    std::vector<int> shape;
    std::vector<T> value;
    std::vector<T> grad;

    Param() = default;
    Param(std::string n, std::vector<int> s);
    std::size_t size() const { return value.size(); }
    void zero_grad() { std::fill(grad.begin(), grad.end(), T(0)); }
};

// Seeded fan-in scaled normal init: std = gain / sqrt(fan_in).
template <class T>
void init_normal(Param<T>& p, int fan_in, double gain, std::mt19937_64& rng);

// ─── Conv1d ──────────────────────────────────────────────────────────────────

struct Conv1dSpec {
    int in = 1;
    int out = 1;
    int kernel = 1;
    int stride = 1;
    int dilation = 1;
    int pad_left = 0;
    int pad_right = 0;

    int output_length(int n) const;
    std::int64_t parameter_count() const { return std::int64_t(out) * in * kernel + out; }
    int span() const { return dilation * (kernel - 1) + 1; }
};

template <class T>
class Conv1d {
  public:
    Conv1d() = default;
    Conv1d(const std::string& name, Conv1dSpec spec);

    const Conv1dSpec& spec() const { return spec_; }
    FeatureMap<T> forward(const FeatureMap<T>& x) const;
    // Convolution over an already-padded input (no implicit padding).
    FeatureMap<T> forward_valid(const FeatureMap<T>& x) const;
    // Accumulates weight gradients when `weight_grads`; returns dL/dx when `want_dx`.
    FeatureMap<T> backward(const FeatureMap<T>& x, const FeatureMap<T>& dy, bool want_dx, bool weight_grads);

    Param<T> weight;
    Param<T> bias;

  private:
    FeatureMap<T> run(const FeatureMap<T>& x, int pad_left, int pad_right) const;
    Conv1dSpec spec_;
};

// Stream wrapper: carries trailing input context between chunks. The stream starts
// with pad_left zero frames; finish() appends the pad_right zero frames.
template <class T>
class Conv1dStream {
  public:
    Conv1dStream() = default;
    explicit Conv1dStream(const Conv1dSpec& spec);
    FeatureMap<T> push(const Conv1d<T>& conv, const FeatureMap<T>& chunk);
    FeatureMap<T> finish(const Conv1d<T>& conv);
    void reset();
    const FeatureMap<T>& buffer() const { return buffer_; }

  private:
    Conv1dSpec spec_;
    FeatureMap<T> buffer_;
};

// ─── ConvTranspose1d (no padding, tail beyond T*stride is dropped) ────────────

struct ConvTransposeSpec {
    int in = 1;
    int out = 1;
    int kernel = 1;
    int stride = 1;
    std::int64_t parameter_count() const { return std::int64_t(in) * out * kernel + out; }
};

template <class T>
class ConvTranspose1d {
  public:
    ConvTranspose1d() = default;
    ConvTranspose1d(const std::string& name, ConvTransposeSpec spec);

    const ConvTransposeSpec& spec() const { return spec_; }
    // Output length frames * stride; samples are final once their inputs are seen.
    FeatureMap<T> forward(const FeatureMap<T>& x) const;
    FeatureMap<T> backward(const FeatureMap<T>& x, const FeatureMap<T>& dy, bool want_dx, bool weight_grads);

    // Column products W^T x, (out*kernel) x frames.
    FeatureMap<T> columns(const FeatureMap<T>& x) const;
    // Overlap-adds columns into `acc` (out x (frames*stride + kernel - stride)), in frame order.
    void overlap_add(const FeatureMap<T>& cols, FeatureMap<T>& acc) const;

    Param<T> weight;
    Param<T> bias;

  private:
    ConvTransposeSpec spec_;
};

template <class T>
class ConvTransposeStream {
  public:
    ConvTransposeStream() = default;
    explicit ConvTransposeStream(const ConvTranspose1d<T>& layer);
    FeatureMap<T> push(const ConvTranspose1d<T>& layer, const FeatureMap<T>& chunk);

  private:
    FeatureMap<T> pending_;
};

// ─── GRU with identity candidate activation ──────────────────────────────────

template <class T>
struct GruCache {
    FeatureMap<T> x;      // I x T input
    FeatureMap<T> h_prev; // H x T
    FeatureMap<T> r, z, n, gh_n;
};

template <class T>
class Gru {
  public:
    Gru() = default;
    Gru(const std::string& name, int input, int hidden);

    int input_size() const { return input_; }
    int hidden_size() const { return hidden_; }
    std::int64_t parameter_count() const;

    // x: I x T; h is the carried state (size H), updated in place. Returns H x T.
    FeatureMap<T> forward(const FeatureMap<T>& x, std::vector<T>& h, GruCache<T>* cache = nullptr) const;
    // dh_out: H x T gradient on every output. Returns dL/dx.
    FeatureMap<T> backward(const GruCache<T>& cache, const FeatureMap<T>& dh_out, bool want_dx, bool weight_grads);

    Param<T> w_ih, w_hh, b_ih, b_hh;

  private:
    int input_ = 0;
    int hidden_ = 0;
};

// ─── Elementwise ─────────────────────────────────────────────────────────────

template <class T>
void relu_inplace(FeatureMap<T>& x);
// dy *= (y > 0), where y is the activation output.
template <class T>
void relu_backward(const FeatureMap<T>& y, FeatureMap<T>& dy);

inline constexpr double kLeakySlope = 0.1;
template <class T>
FeatureMap<T> leaky_relu(const FeatureMap<T>& x);
template <class T>
void leaky_relu_backward(const FeatureMap<T>& x, FeatureMap<T>& dy);

template <class T>
void add_inplace(FeatureMap<T>& acc, const FeatureMap<T>& x);
template <class T>
void scale_inplace(FeatureMap<T>& x, T s);

// ─── Optimizer ───────────────────────────────────────────────────────────────

struct AdamConfig {
    double lr = 2e-4;
    double beta1 = 0.8;
    double beta2 = 0.99;
    double eps = 1e-8;
};

template <class T>
class Adam {
  public:
    Adam() = default;
    Adam(std::vector<Param<T>*> params, AdamConfig cfg);
    void step();
    void zero_grad();
    std::int64_t steps() const { return t_; }

    // Optimizer moments, in parameter order; used for checkpointing.
    std::vector<std::vector<T>>& first_moments() { return m_; }
    std::vector<std::vector<T>>& second_moments() { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }

  private:
    std::vector<Param<T>*> params_;
    AdamConfig cfg_;
    std::vector<std::vector<T>> m_, v_;
    std::int64_t t_ = 0;
};

template <class T>
std::int64_t count_parameters(const std::vector<Param<T>*>& params);

} // namespace ccodec::nn
