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

// Multi-receptive-field fusion: one residual stack per kernel size, run in
// parallel on the same input, outputs summed. Each stack is
// mrf_blocks_per_kernel blocks of dilated steps x <- x + conv(lrelu(x)).
// Convolutions are causal so the stack keeps the input length with no lookahead.
template <class T>
struct MrfCache {
    std::vector<std::vector<nn::FeatureMap<T>>> steps; // [branch][step] = input to that step
};

template <class T>
class Mrf {
  public:
    Mrf() = default;
    Mrf(const std::string& name, int channels, const std::vector<int>& kernels, int blocks,
        const std::vector<int>& dilations);

    int channels() const { return channels_; }
    std::size_t branch_count() const { return branches.size(); }
    nn::FeatureMap<T> forward(const nn::FeatureMap<T>& x, MrfCache<T>* cache = nullptr) const;
    nn::FeatureMap<T> backward(const MrfCache<T>& cache, const nn::FeatureMap<T>& dy, bool weight_grads);
    void append_params(std::vector<nn::Param<T>*>& out);

    std::vector<std::vector<nn::Conv1d<T>>> branches; // [kernel][block * dilations + d]

  private:
    int channels_ = 0;
};

// Sum over branches of each residual stack's output.
template <class T>
nn::FeatureMap<T> mrf_apply(const Mrf<T>& mrf, const nn::FeatureMap<T>& x);

template <class T>
struct UpStageCache {
    std::vector<nn::FeatureMap<T>> h;  // input to each layer (before lrelu)
    std::vector<nn::FeatureMap<T>> up; // transposed conv outputs
    std::vector<MrfCache<T>> mrf;
};

template <class T>
struct GeneratorTrace {
    nn::FeatureMap<T> u;        // lagged long-term input
    nn::FeatureMap<T> top_in;   // conv_pre output
    UpStageCache<T> top;
    nn::FeatureMap<T> mixed;    // [top output ; short-term codes]
    nn::FeatureMap<T> lower_in; // combine output
    UpStageCache<T> lower;
    nn::FeatureMap<T> post_in;  // last MRF output (before lrelu)
    nn::FeatureMap<T> out;      // tanh output, 1 x samples
};

// Two-stage generator. The top stage upsamples the long-term codes to the
// short-term frame rate; block j of 8 short-term frames sees long-term frame
// j - 1 (zeros for j = 0). The result is concatenated with the short-term codes,
// mixed by a conv that looks lookahead_short_frames - 1 frames ahead, and
// upsampled to the waveform rate.
template <class T>
class BasicGenerator {
  public:
    BasicGenerator(const CodecConfig& codec, const DecoderConfig& cfg, std::uint64_t seed = 0);

    const CodecConfig& codec_config() const { return codec_; }
    const DecoderConfig& config() const { return cfg_; }
    std::vector<nn::Param<T>*> params();
    std::vector<const nn::Param<T>*> params() const;
    std::int64_t parameter_count() const;

    // c_long: rep x L, c_short: rep x (8 L). Returns 1 x (lower_hop * 8 L).
    nn::FeatureMap<T> forward(const nn::FeatureMap<T>& c_long, const nn::FeatureMap<T>& c_short,
                              GeneratorTrace<T>* trace = nullptr) const;
    // Accumulates weight gradients from dL/d(out).
    void backward(const GeneratorTrace<T>& trace, const nn::FeatureMap<T>& dout);

    // Long-term input seen by each top-stage block.
    static nn::FeatureMap<T> lag_long(const nn::FeatureMap<T>& c_long);

    nn::Conv1d<T> conv_pre;
    std::vector<nn::ConvTranspose1d<T>> top_ups;
    std::vector<Mrf<T>> top_mrfs;
    nn::Conv1d<T> combine;
    std::vector<nn::ConvTranspose1d<T>> lower_ups;
    std::vector<Mrf<T>> lower_mrfs;
    nn::Conv1d<T> conv_post;

  private:
    nn::FeatureMap<T> up_forward(const std::vector<nn::ConvTranspose1d<T>>& ups, const std::vector<Mrf<T>>& mrfs,
                                 nn::FeatureMap<T> h, UpStageCache<T>* cache) const;
    nn::FeatureMap<T> up_backward(std::vector<nn::ConvTranspose1d<T>>& ups, std::vector<Mrf<T>>& mrfs,
                                  const UpStageCache<T>& cache, nn::FeatureMap<T> d, bool want_dx);

    CodecConfig codec_;
    DecoderConfig cfg_;
};

class Decoder : public BasicGenerator<float> {
  public:
    using BasicGenerator<float>::BasicGenerator;

    // Requires |c_short| == 8 |c_long|; output has lower_hop * |c_short| samples.
    Waveform synthesize(const RepresentationSequence& c_long, const RepresentationSequence& c_short) const;
};

// Frame-by-frame synthesis with a fixed lookahead. A short-term frame is turned
// into audio once lookahead_short_frames - 1 further short-term frames have
// arrived; finish() flushes the rest with zero lookahead.
class StreamingSynthesizer {
  public:
    explicit StreamingSynthesizer(const Decoder& dec);

    // Long-term frame j must arrive before short-term frame 8 (j + 1).
    void push_long(std::span<const float> frame);
    std::vector<float> push_short(std::span<const float> frame);
    // Pushes every frame of `seq`; its start_sample must continue the stream.
    std::vector<float> push(const RepresentationSequence& seq);
    std::vector<float> finish();

    std::int64_t short_frames() const { return short_seen_; }
    std::int64_t long_frames() const { return long_seen_; }
    std::int64_t samples_emitted() const { return emitted_; }

  private:
    void run_top_block(std::span<const float> u);
    std::vector<float> run_lower(const nn::FeatureMap<float>& mixed_out);

    struct MrfStream {
        std::vector<std::vector<nn::Conv1dStream<float>>> convs;
    };
    nn::FeatureMap<float> push_mrf(MrfStream& s, const Mrf<float>& mrf, const nn::FeatureMap<float>& x);

    const Decoder& dec_;
    nn::Conv1dStream<float> pre_;
    std::vector<nn::ConvTransposeStream<float>> top_ups_, lower_ups_;
    std::vector<MrfStream> top_mrfs_, lower_mrfs_;
    nn::Conv1dStream<float> combine_, post_;
    nn::FeatureMap<float> top_queue_; // top-stage frames not yet mixed
    std::int64_t top_frames_ = 0;     // top-stage frames produced so far
    std::int64_t short_seen_ = 0, long_seen_ = 0, emitted_ = 0;
    bool finished_ = false;
};

std::int64_t decoder_parameter_formula(const CodecConfig& codec, const DecoderConfig& cfg);

} // namespace ccodec
