#include "ccodec/decoder.hpp"

#include <algorithm>
#include <cmath>

#include "ccodec/errors.hpp"

namespace ccodec {

using nn::FeatureMap;

namespace {

nn::Conv1dSpec causal(int in, int out, int kernel, int dilation = 1) {
    nn::Conv1dSpec s;
    s.in = in;
    s.out = out;
    s.kernel = kernel;
    s.dilation = dilation;
    s.pad_left = dilation * (kernel - 1);
    return s;
}

constexpr double kResidualGain = 0.3;
constexpr double kGain = 0.5;

} // namespace

// ─── MRF ─────────────────────────────────────────────────────────────────────

template <class T>
Mrf<T>::Mrf(const std::string& name, int channels, const std::vector<int>& kernels, int blocks,
            const std::vector<int>& dilations)
    : channels_(channels) {
    for (int k : kernels) {
        auto& br = branches.emplace_back();
        for (int b = 0; b < blocks; ++b)
            for (int d : dilations)
                br.emplace_back(name + ".k" + std::to_string(k) + ".b" + std::to_string(b) + ".d" + std::to_string(d),
                                causal(channels, channels, k, d));
    }
}

template <class T>
void Mrf<T>::append_params(std::vector<nn::Param<T>*>& out) {
    for (auto& br : branches)
        for (auto& c : br) out.insert(out.end(), {&c.weight, &c.bias});
}

template <class T>
FeatureMap<T> Mrf<T>::forward(const FeatureMap<T>& x, MrfCache<T>* cache) const {
    if (x.channels != channels_) throw InputError("MRF channel mismatch");
    if (cache) cache->steps.assign(branches.size(), {});
    FeatureMap<T> sum;
    for (std::size_t b = 0; b < branches.size(); ++b) {
        FeatureMap<T> h = x;
        for (const auto& conv : branches[b]) {
            if (cache) cache->steps[b].push_back(h);
            nn::add_inplace(h, conv.forward(nn::leaky_relu(h)));
        }
        if (b == 0)
            sum = std::move(h);
        else
            nn::add_inplace(sum, h);
    }
    return sum;
}

template <class T>
FeatureMap<T> Mrf<T>::backward(const MrfCache<T>& cache, const FeatureMap<T>& dy, bool weight_grads) {
    FeatureMap<T> dx(dy.channels, dy.frames);
    for (std::size_t b = 0; b < branches.size(); ++b) {
        FeatureMap<T> d = dy;
        for (int i = static_cast<int>(branches[b].size()) - 1; i >= 0; --i) {
            const auto& h = cache.steps[b][static_cast<std::size_t>(i)];
            auto da = branches[b][static_cast<std::size_t>(i)].backward(nn::leaky_relu(h), d, true, weight_grads);
            nn::leaky_relu_backward(h, da);
            nn::add_inplace(d, da);
        }
        nn::add_inplace(dx, d);
    }
    return dx;
}

template <class T>
FeatureMap<T> mrf_apply(const Mrf<T>& mrf, const FeatureMap<T>& x) {
    return mrf.forward(x);
}

// ─── Generator ───────────────────────────────────────────────────────────────

template <class T>
BasicGenerator<T>::BasicGenerator(const CodecConfig& codec, const DecoderConfig& cfg, std::uint64_t seed)
    : codec_(codec), cfg_(cfg) {
    codec_.validate();
    cfg_.validate(codec_);
    std::mt19937_64 rng(seed);
    const int rep = codec.rep_dim;

    conv_pre = nn::Conv1d<T>("decoder.pre", causal(rep, cfg.top_initial_channels, cfg.pre_kernel));
    nn::init_normal(conv_pre.weight, rep * cfg.pre_kernel, kGain, rng);

    auto build = [&](const char* stage, int ch, const std::vector<int>& kernels, const std::vector<int>& strides,
                     std::vector<nn::ConvTranspose1d<T>>& ups, std::vector<Mrf<T>>& mrfs) {
        for (std::size_t i = 0; i < strides.size(); ++i) {
            const std::string base = std::string("decoder.") + stage + std::to_string(i);
            auto& up = ups.emplace_back(base + ".up", nn::ConvTransposeSpec{ch, ch / 2, kernels[i], strides[i]});
            nn::init_normal(up.weight, ch * kernels[i] / strides[i], kGain, rng);
            ch /= 2;
            auto& m = mrfs.emplace_back(base + ".mrf", ch, cfg.mrf_kernels, cfg.mrf_blocks_per_kernel,
                                        cfg.mrf_dilations);
            for (auto& br : m.branches)
                for (auto& c : br) nn::init_normal(c.weight, ch * c.spec().kernel, kResidualGain, rng);
        }
        return ch;
    };
    const int top_out = build("top", cfg.top_initial_channels, cfg.top_filter_sizes, cfg.top_upsample, top_ups,
                              top_mrfs);

    nn::Conv1dSpec mix;
    mix.in = top_out + rep;
    mix.out = cfg.lower_initial_channels;
    mix.kernel = cfg.lookahead_short_frames;
    mix.pad_right = cfg.lookahead_short_frames - 1;
    combine = nn::Conv1d<T>("decoder.combine", mix);
    nn::init_normal(combine.weight, mix.in * mix.kernel, kGain, rng);

    const int last = build("lower", cfg.lower_initial_channels, cfg.lower_filter_sizes, cfg.lower_upsample,
                           lower_ups, lower_mrfs);
    conv_post = nn::Conv1d<T>("decoder.post", causal(last, 1, cfg.post_kernel));
    nn::init_normal(conv_post.weight, last * cfg.post_kernel, kGain, rng);
}

template <class T>
std::vector<nn::Param<T>*> BasicGenerator<T>::params() {
    std::vector<nn::Param<T>*> out{&conv_pre.weight, &conv_pre.bias};
    for (std::size_t i = 0; i < top_ups.size(); ++i) {
        out.insert(out.end(), {&top_ups[i].weight, &top_ups[i].bias});
        top_mrfs[i].append_params(out);
    }
    out.insert(out.end(), {&combine.weight, &combine.bias});
    for (std::size_t i = 0; i < lower_ups.size(); ++i) {
        out.insert(out.end(), {&lower_ups[i].weight, &lower_ups[i].bias});
        lower_mrfs[i].append_params(out);
    }
    out.insert(out.end(), {&conv_post.weight, &conv_post.bias});
    return out;
}

template <class T>
std::vector<const nn::Param<T>*> BasicGenerator<T>::params() const {
    auto mut = const_cast<BasicGenerator<T>*>(this)->params();
    return {mut.begin(), mut.end()};
}

template <class T>
std::int64_t BasicGenerator<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto* p : params()) n += static_cast<std::int64_t>(p->size());
    return n;
}

template <class T>
FeatureMap<T> BasicGenerator<T>::lag_long(const FeatureMap<T>& c_long) {
    FeatureMap<T> u(c_long.channels, c_long.frames);
    for (int c = 0; c < c_long.channels; ++c)
        for (int t = 1; t < c_long.frames; ++t) u.at(c, t) = c_long.at(c, t - 1);
    return u;
}

template <class T>
FeatureMap<T> BasicGenerator<T>::up_forward(const std::vector<nn::ConvTranspose1d<T>>& ups,
                                            const std::vector<Mrf<T>>& mrfs, FeatureMap<T> h,
                                            UpStageCache<T>* cache) const {
    const T scale = T(1) / static_cast<T>(cfg_.mrf_kernels.size());
    for (std::size_t i = 0; i < ups.size(); ++i) {
        auto u = ups[i].forward(nn::leaky_relu(h));
        if (cache) {
            cache->h.push_back(std::move(h));
            cache->mrf.emplace_back();
        }
        h = mrfs[i].forward(u, cache ? &cache->mrf.back() : nullptr);
        nn::scale_inplace(h, scale);
        if (cache) cache->up.push_back(std::move(u));
    }
    return h;
}

template <class T>
FeatureMap<T> BasicGenerator<T>::up_backward(std::vector<nn::ConvTranspose1d<T>>& ups, std::vector<Mrf<T>>& mrfs,
                                             const UpStageCache<T>& cache, FeatureMap<T> d, bool want_dx) {
    const T scale = T(1) / static_cast<T>(cfg_.mrf_kernels.size());
    for (int i = static_cast<int>(ups.size()) - 1; i >= 0; --i) {
        const auto ui = static_cast<std::size_t>(i);
        nn::scale_inplace(d, scale);
        d = mrfs[ui].backward(cache.mrf[ui], d, true);
        d = ups[ui].backward(nn::leaky_relu(cache.h[ui]), d, i > 0 || want_dx, true);
        if (i > 0 || want_dx) nn::leaky_relu_backward(cache.h[ui], d);
    }
    return d;
}

template <class T>
FeatureMap<T> BasicGenerator<T>::forward(const FeatureMap<T>& c_long, const FeatureMap<T>& c_short,
                                         GeneratorTrace<T>* tr) const {
    const int rep = codec_.rep_dim;
    if (c_long.channels != rep || c_short.channels != rep)
        throw InputError("decoder input must have " + std::to_string(rep) + " features per frame");
    if (c_short.frames != c_long.frames * codec_.frames_per_superframe())
        throw InputError("decoder needs complete superframes: " + std::to_string(c_short.frames) +
                         " short-term frames for " + std::to_string(c_long.frames) + " long-term frames");
    GeneratorTrace<T> local;
    GeneratorTrace<T>& t = tr ? *tr : local;
    const bool keep = tr != nullptr;

    t.u = lag_long(c_long);
    auto h = conv_pre.forward(t.u);
    if (keep) t.top_in = h;
    auto top = up_forward(top_ups, top_mrfs, std::move(h), keep ? &t.top : nullptr);
    auto mixed = nn::concat_channels(top, c_short);
    auto low = combine.forward(mixed);
    if (keep) {
        t.mixed = std::move(mixed);
        t.lower_in = low;
    }
    auto post = up_forward(lower_ups, lower_mrfs, std::move(low), keep ? &t.lower : nullptr);
    auto y = conv_post.forward(nn::leaky_relu(post));
    for (auto& v : y.data) v = std::tanh(v);
    if (keep) {
        t.post_in = std::move(post);
        t.out = y;
    }
    return y;
}

template <class T>
void BasicGenerator<T>::backward(const GeneratorTrace<T>& t, const FeatureMap<T>& dout) {
    if (dout.channels != 1 || dout.frames != t.out.frames) throw InputError("generator gradient shape mismatch");
    FeatureMap<T> d = dout;
    for (std::size_t i = 0; i < d.data.size(); ++i) d.data[i] *= T(1) - t.out.data[i] * t.out.data[i];
    d = conv_post.backward(nn::leaky_relu(t.post_in), d, true, true);
    nn::leaky_relu_backward(t.post_in, d);
    d = up_backward(lower_ups, lower_mrfs, t.lower, std::move(d), true);
    d = combine.backward(t.mixed, d, true, true);
    const int top_ch = top_mrfs.empty() ? cfg_.top_initial_channels : top_mrfs.back().channels();
    FeatureMap<T> dtop(top_ch, d.frames);
    std::copy(d.data.begin(), d.data.begin() + static_cast<std::ptrdiff_t>(dtop.data.size()), dtop.data.begin());
    d = up_backward(top_ups, top_mrfs, t.top, std::move(dtop), true);
    conv_pre.backward(t.u, d, false, true);
}

template class Mrf<float>;
template class Mrf<double>;
template FeatureMap<float> mrf_apply(const Mrf<float>&, const FeatureMap<float>&);
template FeatureMap<double> mrf_apply(const Mrf<double>&, const FeatureMap<double>&);
template class BasicGenerator<float>;
template class BasicGenerator<double>;

// ─── Decoder ─────────────────────────────────────────────────────────────────

Waveform Decoder::synthesize(const RepresentationSequence& c_long, const RepresentationSequence& c_short) const {
    const int rep = codec_config().rep_dim;
    if ((c_long.frames() > 0 && c_long.dim != rep) || (c_short.frames() > 0 && c_short.dim != rep))
        throw InputError("decoder input must have " + std::to_string(rep) + " features per frame");
    for (const auto* s : {&c_long, &c_short})
        for (float v : s->values)
            if (!std::isfinite(v)) throw InputError("decoder input contains non-finite values");
    auto cl = to_feature_map(c_long);
    auto cs = to_feature_map(c_short);
    cl.channels = cs.channels = rep;
    Waveform w;
    w.sample_rate = codec_config().sample_rate;
    w.samples = forward(cl, cs).data;
    return w;
}

std::int64_t decoder_parameter_formula(const CodecConfig& codec, const DecoderConfig& cfg) {
    auto conv = [](std::int64_t in, std::int64_t out, std::int64_t k) { return in * out * k + out; };
    std::int64_t mrf_per_channel_sq = 0, mrf_bias = 0;
    for (int k : cfg.mrf_kernels) {
        mrf_per_channel_sq += std::int64_t(k) * cfg.mrf_blocks_per_kernel * std::int64_t(cfg.mrf_dilations.size());
        mrf_bias += std::int64_t(cfg.mrf_blocks_per_kernel) * std::int64_t(cfg.mrf_dilations.size());
    }
    auto stage = [&](std::int64_t ch, const std::vector<int>& kernels, std::int64_t& n) {
        for (int k : kernels) {
            n += conv(ch, ch / 2, k);
            ch /= 2;
            n += mrf_per_channel_sq * ch * ch + mrf_bias * ch;
        }
        return ch;
    };
    std::int64_t n = conv(codec.rep_dim, cfg.top_initial_channels, cfg.pre_kernel);
    const std::int64_t top = stage(cfg.top_initial_channels, cfg.top_filter_sizes, n);
    n += conv(top + codec.rep_dim, cfg.lower_initial_channels, cfg.lookahead_short_frames);
    const std::int64_t last = stage(cfg.lower_initial_channels, cfg.lower_filter_sizes, n);
    n += conv(last, 1, cfg.post_kernel);
    return n;
}

// ─── Streaming ───────────────────────────────────────────────────────────────

StreamingSynthesizer::StreamingSynthesizer(const Decoder& dec)
    : dec_(dec), pre_(dec.conv_pre.spec()), combine_(dec.combine.spec()), post_(dec.conv_post.spec()) {
    auto init = [](const std::vector<nn::ConvTranspose1d<float>>& ups, const std::vector<Mrf<float>>& mrfs,
                   std::vector<nn::ConvTransposeStream<float>>& up_s, std::vector<MrfStream>& mrf_s) {
        for (const auto& u : ups) up_s.emplace_back(u);
        for (const auto& m : mrfs) {
            auto& s = mrf_s.emplace_back();
            for (const auto& br : m.branches) {
                auto& v = s.convs.emplace_back();
                for (const auto& c : br) v.emplace_back(c.spec());
            }
        }
    };
    init(dec.top_ups, dec.top_mrfs, top_ups_, top_mrfs_);
    init(dec.lower_ups, dec.lower_mrfs, lower_ups_, lower_mrfs_);
    top_queue_ = FeatureMap<float>(dec.top_mrfs.empty() ? dec.config().top_initial_channels
                                                        : dec.top_mrfs.back().channels(),
                                   0);
    const std::vector<float> zero(static_cast<std::size_t>(dec.codec_config().rep_dim), 0.0f);
    run_top_block(zero);
}

FeatureMap<float> StreamingSynthesizer::push_mrf(MrfStream& s, const Mrf<float>& mrf, const FeatureMap<float>& x) {
    FeatureMap<float> sum;
    for (std::size_t b = 0; b < mrf.branches.size(); ++b) {
        FeatureMap<float> h = x;
        for (std::size_t i = 0; i < mrf.branches[b].size(); ++i)
            nn::add_inplace(h, s.convs[b][i].push(mrf.branches[b][i], nn::leaky_relu(h)));
        if (b == 0)
            sum = std::move(h);
        else
            nn::add_inplace(sum, h);
    }
    return sum;
}

void StreamingSynthesizer::run_top_block(std::span<const float> u) {
    FeatureMap<float> x(static_cast<int>(u.size()), 1);
    std::copy(u.begin(), u.end(), x.data.begin());
    auto h = pre_.push(dec_.conv_pre, x);
    const float scale = 1.0f / static_cast<float>(dec_.config().mrf_kernels.size());
    for (std::size_t i = 0; i < dec_.top_ups.size(); ++i) {
        auto up = top_ups_[i].push(dec_.top_ups[i], nn::leaky_relu(h));
        h = push_mrf(top_mrfs_[i], dec_.top_mrfs[i], up);
        nn::scale_inplace(h, scale);
    }
    top_queue_ = nn::concat_frames(top_queue_, h);
    top_frames_ += h.frames;
}

std::vector<float> StreamingSynthesizer::run_lower(const FeatureMap<float>& mixed_out) {
    if (mixed_out.frames == 0) return {};
    const float scale = 1.0f / static_cast<float>(dec_.config().mrf_kernels.size());
    FeatureMap<float> h = mixed_out;
    for (std::size_t i = 0; i < dec_.lower_ups.size(); ++i) {
        auto up = lower_ups_[i].push(dec_.lower_ups[i], nn::leaky_relu(h));
        h = push_mrf(lower_mrfs_[i], dec_.lower_mrfs[i], up);
        nn::scale_inplace(h, scale);
    }
    auto y = post_.push(dec_.conv_post, nn::leaky_relu(h));
    for (auto& v : y.data) v = std::tanh(v);
    emitted_ += y.frames;
    return std::move(y.data);
}

void StreamingSynthesizer::push_long(std::span<const float> frame) {
    if (finished_) throw InputError("stream already finished");
    if (static_cast<int>(frame.size()) != dec_.codec_config().rep_dim)
        throw InputError("long-term frame has the wrong dimension");
    ++long_seen_;
    run_top_block(frame);
}

std::vector<float> StreamingSynthesizer::push_short(std::span<const float> frame) {
    if (finished_) throw InputError("stream already finished");
    const int rep = dec_.codec_config().rep_dim;
    if (static_cast<int>(frame.size()) != rep) throw InputError("short-term frame has the wrong dimension");
    const std::int64_t consumed = top_frames_ - top_queue_.frames;
    if (short_seen_ >= top_frames_)
        throw InputError("short-term frame " + std::to_string(short_seen_) +
                         " arrived before the long-term frame it depends on");
    const int row = static_cast<int>(short_seen_ - consumed);
    FeatureMap<float> mixed(top_queue_.channels + rep, 1);
    for (int c = 0; c < top_queue_.channels; ++c) mixed.at(c, 0) = top_queue_.at(c, row);
    for (int c = 0; c < rep; ++c) mixed.at(top_queue_.channels + c, 0) = frame[static_cast<std::size_t>(c)];
    top_queue_ = nn::slice_frames(top_queue_, row + 1, top_queue_.frames);
    ++short_seen_;
    return run_lower(combine_.push(dec_.combine, mixed));
}

std::vector<float> StreamingSynthesizer::push(const RepresentationSequence& seq) {
    const auto& cc = dec_.codec_config();
    const bool is_short = seq.level == Level::short_term;
    const std::int64_t seen = is_short ? short_seen_ : long_seen_;
    const int hop = is_short ? cc.lower_hop : cc.upper_hop;
    if (seq.frames() == 0) return {};
    if (seq.hop != hop || seq.start_sample != (seen + 1) * hop)
        throw InputError(std::string("out-of-order ") + level_name(seq.level) + " frames: expected start sample " +
                         std::to_string((seen + 1) * hop) + ", got " + std::to_string(seq.start_sample));
    std::vector<float> out;
    for (int t = 0; t < seq.frames(); ++t) {
        if (is_short) {
            auto y = push_short(seq.frame(t));
            out.insert(out.end(), y.begin(), y.end());
        } else {
            push_long(seq.frame(t));
        }
    }
    return out;
}

std::vector<float> StreamingSynthesizer::finish() {
    if (finished_) return {};
    finished_ = true;
    return run_lower(combine_.finish(dec_.combine));
}

} // namespace ccodec
