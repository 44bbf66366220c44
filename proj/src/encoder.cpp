#include "ccodec/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "ccodec/errors.hpp"
#include "ccodec/gemm.hpp"

namespace ccodec {

using nn::FeatureMap;

namespace {

nn::Conv1dSpec causal_spec(int in, int out, int kernel, int stride) {
    nn::Conv1dSpec s;
    s.in = in;
    s.out = out;
    s.kernel = kernel;
    s.stride = stride;
    s.pad_left = kernel - stride;
    return s;
}

} // namespace

template <class T>
BasicEncoder<T>::BasicEncoder(const CodecConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    cfg_.validate();
    std::mt19937_64 rng(seed);
    const int hidden = cfg.conv_hidden;
    for (std::size_t i = 0; i < cfg.lower_strides.size(); ++i) {
        const int in = i == 0 ? 1 : hidden;
        auto& conv = lower_convs.emplace_back("encoder.lower.conv" + std::to_string(i),
                                              causal_spec(in, hidden, cfg.lower_filter_sizes[i], cfg.lower_strides[i]));
        nn::init_normal(conv.weight, in * cfg.lower_filter_sizes[i], std::sqrt(2.0), rng);
    }
    for (std::size_t i = 0; i < cfg.upper_strides.size(); ++i) {
        auto& conv = upper_convs.emplace_back(
            "encoder.upper.conv" + std::to_string(i),
            causal_spec(hidden, hidden, cfg.upper_filter_sizes[i], cfg.upper_strides[i]));
        nn::init_normal(conv.weight, hidden * cfg.upper_filter_sizes[i], std::sqrt(2.0), rng);
    }
    lower_gru = nn::Gru<T>("encoder.lower.gru", hidden, cfg.rep_dim);
    upper_gru = nn::Gru<T>("encoder.upper.gru", hidden, cfg.rep_dim);
    for (auto* gru : {&lower_gru, &upper_gru}) {
        nn::init_normal(gru->w_ih, hidden, 1.0, rng);
        nn::init_normal(gru->w_hh, cfg.rep_dim, 1.0, rng);
    }
    for (int k = 1; k <= cfg.nce_horizon_lower; ++k) {
        auto& head = lower_heads.emplace_back("encoder.lower.head" + std::to_string(k),
                                              std::vector<int>{hidden, cfg.rep_dim});
        nn::init_normal(head, cfg.rep_dim, 1.0, rng);
    }
    for (int k = 1; k <= cfg.nce_horizon_upper; ++k) {
        auto& head = upper_heads.emplace_back("encoder.upper.head" + std::to_string(k),
                                              std::vector<int>{hidden, cfg.rep_dim});
        nn::init_normal(head, cfg.rep_dim, 1.0, rng);
    }
}

template <class T>
std::vector<nn::Param<T>*> BasicEncoder<T>::params() {
    std::vector<nn::Param<T>*> out;
    for (auto& c : lower_convs) out.insert(out.end(), {&c.weight, &c.bias});
    out.insert(out.end(), {&lower_gru.w_ih, &lower_gru.w_hh, &lower_gru.b_ih, &lower_gru.b_hh});
    for (auto& c : upper_convs) out.insert(out.end(), {&c.weight, &c.bias});
    out.insert(out.end(), {&upper_gru.w_ih, &upper_gru.w_hh, &upper_gru.b_ih, &upper_gru.b_hh});
    for (auto& h : lower_heads) out.push_back(&h);
    for (auto& h : upper_heads) out.push_back(&h);
    return out;
}

template <class T>
std::vector<const nn::Param<T>*> BasicEncoder<T>::params() const {
    auto mut = const_cast<BasicEncoder<T>*>(this)->params();
    return {mut.begin(), mut.end()};
}

template <class T>
std::int64_t BasicEncoder<T>::parameter_count() const {
    std::int64_t n = 0;
    for (const auto* p : params()) n += static_cast<std::int64_t>(p->size());
    return n;
}

template <class T>
EncoderTrace<T> BasicEncoder<T>::forward(std::span<const T> x, bool keep_cache) const {
    EncoderTrace<T> tr;
    FeatureMap<T> in(1, static_cast<int>(x.size()));
    std::copy(x.begin(), x.end(), in.data.begin());
    tr.lower_acts.push_back(std::move(in));
    for (const auto& conv : lower_convs) {
        auto y = conv.forward(tr.lower_acts.back());
        nn::relu_inplace(y);
        tr.lower_acts.push_back(std::move(y));
    }
    std::vector<T> h;
    tr.c_short = lower_gru.forward(tr.z_short(), h, keep_cache ? &tr.lower_gru : nullptr);
    tr.upper_acts.push_back(tr.z_short());
    for (const auto& conv : upper_convs) {
        auto y = conv.forward(tr.upper_acts.back());
        nn::relu_inplace(y);
        tr.upper_acts.push_back(std::move(y));
    }
    h.clear();
    tr.c_long = upper_gru.forward(tr.z_long(), h, keep_cache ? &tr.upper_gru : nullptr);
    return tr;
}

template <class T>
std::vector<T> BasicEncoder<T>::backward(const EncoderTrace<T>& tr, const EncoderGrads<T>& g, bool want_dx,
                                         bool weight_grads) {
    const int hidden = cfg_.conv_hidden;
    FeatureMap<T> dz_short(hidden, tr.z_short().frames);
    if (!g.z_short.empty()) nn::add_inplace(dz_short, g.z_short);

    const bool upper_grad = !g.c_long.empty() || !g.z_long.empty();
    if (upper_grad && tr.z_long().frames > 0) {
        FeatureMap<T> d(hidden, tr.z_long().frames);
        if (!g.z_long.empty()) nn::add_inplace(d, g.z_long);
        if (!g.c_long.empty()) nn::add_inplace(d, upper_gru.backward(tr.upper_gru, g.c_long, true, weight_grads));
        for (int i = static_cast<int>(upper_convs.size()) - 1; i >= 0; --i) {
            nn::relu_backward(tr.upper_acts[i + 1], d);
            d = upper_convs[i].backward(tr.upper_acts[i], d, true, weight_grads);
        }
        nn::add_inplace(dz_short, d);
    }
    if (!g.c_short.empty() && tr.z_short().frames > 0)
        nn::add_inplace(dz_short, lower_gru.backward(tr.lower_gru, g.c_short, true, weight_grads));

    FeatureMap<T> d = std::move(dz_short);
    for (int i = static_cast<int>(lower_convs.size()) - 1; i >= 0; --i) {
        nn::relu_backward(tr.lower_acts[i + 1], d);
        const bool need_dx = i > 0 || want_dx;
        d = lower_convs[i].backward(tr.lower_acts[i], d, need_dx, weight_grads);
        if (!need_dx) break;
    }
    if (!want_dx) return {};
    return d.data;
}

EncoderState Encoder::initial_state() const {
    EncoderState s;
    for (const auto& c : lower_convs) s.lower.emplace_back(c.spec());
    for (const auto& c : upper_convs) s.upper.emplace_back(c.spec());
    s.h_lower.assign(config().rep_dim, 0.0f);
    s.h_upper.assign(config().rep_dim, 0.0f);
    return s;
}

EncodeResult Encoder::encode(std::span<const float> x, EncoderState& state) const {
    const auto& cfg = config();
    if (state.lower.size() != lower_convs.size() || state.upper.size() != upper_convs.size())
        throw InputError("encoder state does not match this encoder");
    FeatureMap<float> y(1, static_cast<int>(x.size()));
    std::copy(x.begin(), x.end(), y.data.begin());
    for (std::size_t i = 0; i < lower_convs.size(); ++i) {
        y = state.lower[i].push(lower_convs[i], y);
        nn::relu_inplace(y);
    }
    EncodeResult out;
    auto c_short = lower_gru.forward(y, state.h_lower);
    out.c_short = from_feature_map(c_short, Level::short_term, cfg.lower_hop,
                                   (state.short_frames + 1) * static_cast<std::int64_t>(cfg.lower_hop));
    if (y.frames == 0) out.c_short.dim = cfg.rep_dim;
    for (std::size_t i = 0; i < upper_convs.size(); ++i) {
        y = state.upper[i].push(upper_convs[i], y);
        nn::relu_inplace(y);
    }
    auto c_long = upper_gru.forward(y, state.h_upper);
    out.c_long = from_feature_map(c_long, Level::long_term, cfg.upper_hop,
                                  (state.long_frames + 1) * static_cast<std::int64_t>(cfg.upper_hop));
    if (y.frames == 0) out.c_long.dim = cfg.rep_dim;
    state.samples_consumed += static_cast<std::int64_t>(x.size());
    state.short_frames += c_short.frames;
    state.long_frames += c_long.frames;
    return out;
}

EncodeResult Encoder::encode(const Waveform& wav, EncoderState& state) const {
    if (wav.sample_rate != config().sample_rate)
        throw ConfigError("sample rate " + std::to_string(wav.sample_rate) + " Hz does not match encoder rate " +
                          std::to_string(config().sample_rate) + " Hz");
    check_finite(wav);
    return encode(std::span<const float>(wav.samples), state);
}

EncodeResult Encoder::encode(const Waveform& wav) const {
    auto state = initial_state();
    return encode(wav, state);
}

std::int64_t encoder_parameter_formula(const CodecConfig& cfg) {
    const std::int64_t h = cfg.conv_hidden, r = cfg.rep_dim;
    std::int64_t n = 0;
    for (std::size_t i = 0; i < cfg.lower_filter_sizes.size(); ++i) {
        const std::int64_t in = i == 0 ? 1 : h;
        n += in * h * cfg.lower_filter_sizes[i] + h;
    }
    for (int k : cfg.upper_filter_sizes) n += h * h * k + h;
    const std::int64_t gru = 3 * (r * h + r * r + 2 * r);
    n += 2 * gru;
    n += static_cast<std::int64_t>(cfg.nce_horizon_lower + cfg.nce_horizon_upper) * h * r;
    return n;
}

// ─── InfoNCE ─────────────────────────────────────────────────────────────────

double info_nce_term(double positive, std::span<const double> negatives) {
    double m = positive;
    for (double s : negatives) m = std::max(m, s);
    double sum = std::exp(positive - m);
    for (double s : negatives) sum += std::exp(s - m);
    return m + std::log(sum) - positive;
}

int nce_min_segment(const CodecConfig& cfg) {
    return std::max((cfg.nce_horizon_lower + 1) * cfg.lower_hop, (cfg.nce_horizon_upper + 1) * cfg.upper_hop);
}

namespace {

struct LevelStats {
    double loss = 0.0;
    std::int64_t correct = 0;
    std::int64_t anchors = 0;
};

template <class T>
LevelStats nce_level(std::vector<nn::Param<T>>& heads, const std::vector<const FeatureMap<T>*>& z,
                     const std::vector<const FeatureMap<T>*>& c, std::vector<FeatureMap<T>>& dz,
                     std::vector<FeatureMap<T>>& dc, int negatives, std::mt19937_64& rng, bool grads) {
    LevelStats st;
    const int items = static_cast<int>(z.size());
    const int horizons = static_cast<int>(heads.size());
    if (items == 0) return st;
    const int hidden = z[0]->channels, rep = c[0]->channels;

    std::vector<std::pair<int, int>> pool;
    for (int b = 0; b < items; ++b)
        for (int t = 0; t < z[b]->frames; ++t) pool.emplace_back(b, t);
    for (int b = 0; b < items; ++b)
        for (int k = 1; k <= horizons; ++k) st.anchors += std::max(0, z[b]->frames - k);
    if (st.anchors == 0 || pool.size() < 2) {
        st.anchors = 0;
        return st;
    }
    const double inv = 1.0 / static_cast<double>(st.anchors);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);

    std::vector<double> scores(static_cast<std::size_t>(negatives) + 1), probs(scores.size());
    std::vector<std::pair<int, int>> targets(scores.size());
    for (int k = 1; k <= horizons; ++k) {
        auto& head = heads[static_cast<std::size_t>(k - 1)];
        for (int b = 0; b < items; ++b) {
            const int frames = z[b]->frames;
            if (frames - k <= 0) continue;
            FeatureMap<T> pred(hidden, frames);
            nn::gemm_acc<T>(hidden, frames, rep, head.value.data(), rep, c[b]->data.data(), frames, pred.data.data(),
                            frames);
            FeatureMap<T> dpred(hidden, grads ? frames : 0);
            for (int t = 0; t + k < frames; ++t) {
                targets[0] = {b, t + k};
                for (int j = 1; j <= negatives; ++j) {
                    std::pair<int, int> cand;
                    do {
                        cand = pool[pick(rng)];
                    } while (cand == targets[0]);
                    targets[static_cast<std::size_t>(j)] = cand;
                }
                double best_neg = -std::numeric_limits<double>::infinity();
                for (std::size_t j = 0; j < targets.size(); ++j) {
                    const auto& zt = *z[targets[j].first];
                    double s = 0.0;
                    for (int h = 0; h < hidden; ++h) s += double(pred.at(h, t)) * double(zt.at(h, targets[j].second));
                    scores[j] = s;
                    if (j > 0) best_neg = std::max(best_neg, s);
                }
                st.loss += info_nce_term(scores[0], std::span<const double>(scores).subspan(1)) * inv;
                if (scores[0] > best_neg) ++st.correct;
                if (!grads) continue;
                double m = *std::max_element(scores.begin(), scores.end()), sum = 0.0;
                for (std::size_t j = 0; j < scores.size(); ++j) sum += (probs[j] = std::exp(scores[j] - m));
                for (std::size_t j = 0; j < scores.size(); ++j) {
                    const T g = static_cast<T>((probs[j] / sum - (j == 0 ? 1.0 : 0.0)) * inv);
                    const auto [tb, tt] = targets[j];
                    const auto& zt = *z[tb];
                    auto& dzt = dz[static_cast<std::size_t>(tb)];
                    for (int h = 0; h < hidden; ++h) {
                        dpred.at(h, t) += g * zt.at(h, tt);
                        dzt.at(h, tt) += g * pred.at(h, t);
                    }
                }
            }
            if (grads) {
                nn::gemm_acc_bt<T>(hidden, rep, frames, dpred.data.data(), frames, c[b]->data.data(), frames,
                                   head.grad.data(), rep);
                nn::gemm_acc_at<T>(rep, frames, hidden, head.value.data(), rep, dpred.data.data(), frames,
                                   dc[static_cast<std::size_t>(b)].data.data(), frames);
            }
        }
    }
    return st;
}

} // namespace

template <class T>
NceResult nce_forward_backward(BasicEncoder<T>& enc, const std::vector<std::vector<T>>& batch, std::mt19937_64& rng,
                               bool compute_grads) {
    if (batch.empty()) throw InputError("NCE batch is empty");
    const auto& cfg = enc.config();
    NceResult res;
    std::vector<EncoderTrace<T>> traces;
    for (const auto& seg : batch) {
        if (static_cast<int>(seg.size()) < nce_min_segment(cfg)) {
            ++res.skipped;
            continue;
        }
        traces.push_back(enc.forward(std::span<const T>(seg), compute_grads));
    }
    if (traces.empty()) return res;

    std::vector<const FeatureMap<T>*> zs, cs, zl, cl;
    std::vector<EncoderGrads<T>> grads(traces.size());
    std::vector<FeatureMap<T>> dzs, dcs, dzl, dcl;
    for (auto& tr : traces) {
        zs.push_back(&tr.z_short());
        cs.push_back(&tr.c_short);
        zl.push_back(&tr.z_long());
        cl.push_back(&tr.c_long);
        dzs.emplace_back(tr.z_short().channels, compute_grads ? tr.z_short().frames : 0);
        dcs.emplace_back(tr.c_short.channels, compute_grads ? tr.c_short.frames : 0);
        dzl.emplace_back(tr.z_long().channels, compute_grads ? tr.z_long().frames : 0);
        dcl.emplace_back(tr.c_long.channels, compute_grads ? tr.c_long.frames : 0);
    }
    const auto lo = nce_level(enc.lower_heads, zs, cs, dzs, dcs, cfg.negatives_per_positive, rng, compute_grads);
    const auto up = nce_level(enc.upper_heads, zl, cl, dzl, dcl, cfg.negatives_per_positive, rng, compute_grads);
    res.loss_lower = lo.loss;
    res.loss_upper = up.loss;
    res.loss = lo.loss + up.loss;
    res.anchors = lo.anchors + up.anchors;
    res.accuracy_lower = lo.anchors ? double(lo.correct) / lo.anchors : 0.0;
    res.accuracy_upper = up.anchors ? double(up.correct) / up.anchors : 0.0;
    res.accuracy = res.anchors ? double(lo.correct + up.correct) / res.anchors : 0.0;

    if (compute_grads) {
        for (std::size_t b = 0; b < traces.size(); ++b) {
            EncoderGrads<T> g{std::move(dcs[b]), std::move(dcl[b]), std::move(dzs[b]), std::move(dzl[b])};
            enc.backward(traces[b], g, false, true);
        }
    }
    return res;
}

NceResult nce_pretrain_step(Encoder& enc, nn::Adam<float>& opt, const std::vector<std::vector<float>>& batch,
                            std::mt19937_64& rng) {
    opt.zero_grad();
    auto res = nce_forward_backward<float>(enc, batch, rng, true);
    if (!std::isfinite(res.loss)) throw TrainingError("InfoNCE loss is not finite");
    if (res.anchors > 0) opt.step();
    return res;
}

template class BasicEncoder<float>;
template class BasicEncoder<double>;
template NceResult nce_forward_backward<float>(BasicEncoder<float>&, const std::vector<std::vector<float>>&,
                                               std::mt19937_64&, bool);
template NceResult nce_forward_backward<double>(BasicEncoder<double>&, const std::vector<std::vector<double>>&,
                                                std::mt19937_64&, bool);

} // namespace ccodec
