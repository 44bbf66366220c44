#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ccodec/config.hpp"
#include "ccodec/nn.hpp"

namespace ccodec {

// One block's result. Maps hold `rows` independent sequences laid end to end
// along the frame axis (rows == 1 for the multi-scale blocks, rows == period for
// the multi-period blocks).
template <class T>
struct DiscriminatorOutput {
    nn::FeatureMap<T> score;
    std::vector<nn::FeatureMap<T>> features;
    int rows = 1;
};

// Gradient w.r.t. one block's outputs; empty maps mean "no gradient".
template <class T>
struct DiscriminatorGrad {
    nn::FeatureMap<T> score;
    std::vector<nn::FeatureMap<T>> features;
};

template <class T>
struct StackCache {
    std::vector<nn::FeatureMap<T>> inputs; // input to each conv, [0] = block input
    std::vector<nn::FeatureMap<T>> pre;    // conv outputs before lrelu
};

// Convolutions with LeakyReLU between them and a final 1-channel score conv.
// Each row is convolved on its own with "same"-style symmetric padding.
template <class T>
class ConvStack {
  public:
    ConvStack() = default;
    ConvStack(const std::string& name, const std::vector<int>& channels, const std::vector<int>& kernels,
              const std::vector<int>& strides, int post_kernel, std::mt19937_64& rng);

    DiscriminatorOutput<T> forward(const nn::FeatureMap<T>& x, int rows, StackCache<T>* cache) const;
    nn::FeatureMap<T> backward(const StackCache<T>& cache, int rows, const DiscriminatorGrad<T>& grad, bool want_dx,
                               bool weight_grads);
    void append_params(std::vector<nn::Param<T>*>& out);

    std::vector<nn::Conv1d<T>> layers;
    nn::Conv1d<T> post;
};

// Mean of non-overlapping pairs; an odd trailing sample is dropped.
template <class T>
std::vector<T> average_pool2(std::span<const T> x);

// Row i holds samples i, i+p, i+2p, ... of x, reflect-padded on the right to a
// multiple of p. Returned as p channels x ceil(T / p) frames.
template <class T>
nn::FeatureMap<T> mpd_reshape(std::span<const T> x, int p);
// Adjoint of mpd_reshape: scatters row gradients back onto the n input samples.
template <class T>
void mpd_reshape_backward(const nn::FeatureMap<T>& d, int n, std::span<T> dx);

template <class T>
struct EnsembleTrace {
    std::vector<std::vector<T>> inputs; // per-block input signal (pooled or raw)
    std::vector<StackCache<T>> stacks;
    int n = 0;
};

// Three blocks on x, pool2(x) and pool2(pool2(x)).
template <class T>
class MultiScaleDiscriminator {
  public:
    MultiScaleDiscriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng);
    std::vector<DiscriminatorOutput<T>> forward(std::span<const T> x, EnsembleTrace<T>* trace = nullptr) const;
    std::vector<T> backward(const EnsembleTrace<T>& trace, const std::vector<DiscriminatorGrad<T>>& grads,
                            bool want_dx, bool weight_grads);
    void append_params(std::vector<nn::Param<T>*>& out);
    int min_length() const { return min_length_; }

    std::vector<ConvStack<T>> blocks;

  private:
    int min_length_ = 1;
};

// One block per period on the periodic 2D rearrangement of x.
template <class T>
class MultiPeriodDiscriminator {
  public:
    MultiPeriodDiscriminator(const DiscriminatorConfig& cfg, std::mt19937_64& rng);
    std::vector<DiscriminatorOutput<T>> forward(std::span<const T> x, EnsembleTrace<T>* trace = nullptr) const;
    std::vector<T> backward(const EnsembleTrace<T>& trace, const std::vector<DiscriminatorGrad<T>>& grads,
                            bool want_dx, bool weight_grads);
    void append_params(std::vector<nn::Param<T>*>& out);
    const std::vector<int>& periods() const { return periods_; }
    int min_length() const { return min_length_; }

    std::vector<ConvStack<T>> blocks;

  private:
    std::vector<int> periods_;
    int min_length_ = 1;
};

template <class T>
struct DiscriminatorTrace {
    EnsembleTrace<T> msd, mpd;
};

// Both ensembles. Outputs are ordered MSD blocks first, then MPD blocks.
template <class T>
class Discriminators {
    DiscriminatorConfig cfg_;
    std::mt19937_64 init_rng_;

  public:
    explicit Discriminators(const DiscriminatorConfig& cfg, std::uint64_t seed = 0);

    const DiscriminatorConfig& config() const { return cfg_; }
    std::vector<DiscriminatorOutput<T>> forward(std::span<const T> x, DiscriminatorTrace<T>* trace = nullptr) const;
    std::vector<T> backward(const DiscriminatorTrace<T>& trace, const std::vector<DiscriminatorGrad<T>>& grads,
                            bool want_dx, bool weight_grads);
    std::vector<nn::Param<T>*> params();
    std::int64_t parameter_count();
    int min_length() const;
    std::size_t block_count() const { return msd.blocks.size() + mpd.blocks.size(); }

    MultiScaleDiscriminator<T> msd;
    MultiPeriodDiscriminator<T> mpd;
};

} // namespace ccodec
