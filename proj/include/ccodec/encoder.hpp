#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <vector>

#include "ccodec/audio.hpp"
#include "ccodec/config.hpp"
#include "ccodec/nn.hpp"
#include "ccodec/representation.hpp"

namespace ccodec {

// Activations kept by a full-sequence forward pass for backpropagation.
template <class T>
struct EncoderTrace {
    std::vector<nn::FeatureMap<T>> lower_acts; // [0] = waveform (1 x n), [i+1] = relu(conv_i)
    std::vector<nn::FeatureMap<T>> upper_acts; // [0] = short-term latent
    nn::GruCache<T> lower_gru, upper_gru;
    nn::FeatureMap<T> c_short, c_long;

    const nn::FeatureMap<T>& z_short() const { return lower_acts.back(); }
    const nn::FeatureMap<T>& z_long() const { return upper_acts.back(); }
};

// Gradients flowing into an encoder trace. Empty maps mean "no gradient".
template <class T>
struct EncoderGrads {
    nn::FeatureMap<T> c_short, c_long, z_short, z_long;
};

// Two-level causal contrastive encoder:
//   waveform -> causal strided convs (ReLU) -> z_s -> GRU -> C_s      (every lower_hop samples)
//   z_s      -> causal strided convs (ReLU) -> z_l -> GRU -> C_l      (every upper_hop samples)
// GRU candidates use an identity activation. Prediction heads (one per NCE horizon)
// map a context vector to a predicted latent.
template <class T>
class BasicEncoder {
  public:
    explicit BasicEncoder(const CodecConfig& cfg, std::uint64_t seed = 0);

    const CodecConfig& config() const { return cfg_; }
    std::vector<nn::Param<T>*> params();
    std::vector<const nn::Param<T>*> params() const;
    std::int64_t parameter_count() const;

    EncoderTrace<T> forward(std::span<const T> x, bool keep_cache) const;
    // Backpropagates `grads` through the trace. Returns dL/dx when want_dx.
    std::vector<T> backward(const EncoderTrace<T>& trace, const EncoderGrads<T>& grads, bool want_dx,
                            bool weight_grads);

    std::vector<nn::Conv1d<T>> lower_convs;
    std::vector<nn::Conv1d<T>> upper_convs;
    nn::Gru<T> lower_gru;
    nn::Gru<T> upper_gru;
    std::vector<nn::Param<T>> lower_heads; // hidden x rep_dim, horizon k = index + 1
    std::vector<nn::Param<T>> upper_heads;

  private:
    CodecConfig cfg_;
};

// Per-stream inference state: conv context buffers and GRU hidden vectors.
struct EncoderState {
    std::vector<nn::Conv1dStream<float>> lower;
    std::vector<nn::Conv1dStream<float>> upper;
    std::vector<float> h_lower, h_upper;
    std::int64_t samples_consumed = 0;
    std::int64_t short_frames = 0;
    std::int64_t long_frames = 0;
};

struct EncodeResult {
    RepresentationSequence c_short;
    RepresentationSequence c_long;
};

class Encoder : public BasicEncoder<float> {
  public:
    using BasicEncoder<float>::BasicEncoder;

    EncoderState initial_state() const;
    // Streaming encode: consumes x, emits every frame whose causal window has closed.
    EncodeResult encode(std::span<const float> x, EncoderState& state) const;
    // Checks sample rate and finiteness, then streams.
    EncodeResult encode(const Waveform& wav, EncoderState& state) const;
    EncodeResult encode(const Waveform& wav) const;
};

// Per-layer parameter arithmetic, independent of any weight storage.
std::int64_t encoder_parameter_formula(const CodecConfig& cfg);

// ─── Contrastive pretraining ─────────────────────────────────────────────────

struct NceResult {
    double loss = 0.0;     // lower + upper InfoNCE
    double accuracy = 0.0; // fraction of anchors whose positive outranks every negative
    double loss_lower = 0.0, loss_upper = 0.0;
    double accuracy_lower = 0.0, accuracy_upper = 0.0;
    std::int64_t anchors = 0;
    int skipped = 0; // segments too short to provide any anchor
};

// InfoNCE over both levels for one batch; accumulates weight gradients when
// `compute_grads`. Negatives are sampled uniformly from all latent frames in the batch.
template <class T>
NceResult nce_forward_backward(BasicEncoder<T>& enc, const std::vector<std::vector<T>>& batch, std::mt19937_64& rng,
                               bool compute_grads);

// One optimizer step of contrastive pretraining.
NceResult nce_pretrain_step(Encoder& enc, nn::Adam<float>& opt, const std::vector<std::vector<float>>& batch,
                            std::mt19937_64& rng);

// Minimum segment length (samples) that yields at least one anchor at every horizon.
int nce_min_segment(const CodecConfig& cfg);

// InfoNCE term for one anchor: -log softmax(positive) over {positive, negatives}.
double info_nce_term(double positive, std::span<const double> negatives);

} // namespace ccodec
