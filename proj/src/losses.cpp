#include "ccodec/losses.hpp"

#include <cmath>
#include <numbers>

#include "ccodec/errors.hpp"
#include "ccodec/gemm.hpp"

namespace ccodec {

using nn::FeatureMap;

namespace {

template <class T>
T sign_of(T v) {
    return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0));
}

template <class T>
void check_blocks(const std::vector<DiscriminatorOutput<T>>& a, const std::vector<DiscriminatorOutput<T>>& b) {
    if (a.size() != b.size()) throw InputError("discriminator outputs have different block counts");
}

template <class T>
double mean_sq_offset(const FeatureMap<T>& s, double target) {
    if (s.data.empty()) return 0.0;
    double acc = 0.0;
    for (T v : s.data) acc += (double(v) - target) * (double(v) - target);
    return acc / static_cast<double>(s.data.size());
}

template <class T>
FeatureMap<T> sq_offset_grad(const FeatureMap<T>& s, double target, double scale) {
    FeatureMap<T> g(s.channels, s.frames);
    if (s.data.empty()) return g;
    const double k = 2.0 * scale / static_cast<double>(s.data.size());
    for (std::size_t i = 0; i < s.data.size(); ++i) g.data[i] = static_cast<T>(k * (double(s.data[i]) - target));
    return g;
}

} // namespace

void LossWeights::validate() const {
    for (double w : {adv, cc_short, cc_long, mel, fm})
        if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and non-negative");
}

double total_generator_loss(double adv, double cc_short, double cc_long, double mel, double fm, const LossWeights& w) {
    return w.adv * adv + w.cc_short * cc_short + w.cc_long * cc_long + w.mel * mel + w.fm * fm;
}

template <class T>
double lsgan_d_loss(const std::vector<DiscriminatorOutput<T>>& real, const std::vector<DiscriminatorOutput<T>>& fake,
                    std::vector<DiscriminatorGrad<T>>* d_real, std::vector<DiscriminatorGrad<T>>* d_fake) {
    check_blocks(real, fake);
    if (real.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(real.size());
    double loss = 0.0;
    if (d_real) d_real->assign(real.size(), {});
    if (d_fake) d_fake->assign(fake.size(), {});
    for (std::size_t b = 0; b < real.size(); ++b) {
        loss += (mean_sq_offset(real[b].score, 1.0) + mean_sq_offset(fake[b].score, 0.0)) * inv;
        if (d_real) (*d_real)[b].score = sq_offset_grad(real[b].score, 1.0, inv);
        if (d_fake) (*d_fake)[b].score = sq_offset_grad(fake[b].score, 0.0, inv);
    }
    return loss;
}

template <class T>
double lsgan_g_loss(const std::vector<DiscriminatorOutput<T>>& fake, std::vector<DiscriminatorGrad<T>>* d_fake) {
    if (fake.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(fake.size());
    double loss = 0.0;
    if (d_fake) d_fake->assign(fake.size(), {});
    for (std::size_t b = 0; b < fake.size(); ++b) {
        loss += mean_sq_offset(fake[b].score, 1.0) * inv;
        if (d_fake) (*d_fake)[b].score = sq_offset_grad(fake[b].score, 1.0, inv);
    }
    return loss;
}

template <class T>
double feature_matching(const std::vector<DiscriminatorOutput<T>>& real,
                        const std::vector<DiscriminatorOutput<T>>& fake, std::vector<DiscriminatorGrad<T>>* d_fake) {
    check_blocks(real, fake);
    if (real.empty()) return 0.0;
    if (d_fake && d_fake->empty()) d_fake->assign(fake.size(), {});
    if (d_fake && d_fake->size() != fake.size()) throw InputError("feature gradient block count mismatch");
    const double inv_blocks = 1.0 / static_cast<double>(real.size());
    double loss = 0.0;
    for (std::size_t b = 0; b < real.size(); ++b) {
        const auto& fr = real[b].features;
        const auto& ff = fake[b].features;
        if (fr.size() != ff.size()) throw InputError("feature lists differ in length");
        if (d_fake) (*d_fake)[b].features.resize(ff.size());
        for (std::size_t l = 0; l < fr.size(); ++l) {
            if (fr[l].channels != ff[l].channels || fr[l].frames != ff[l].frames)
                throw InputError("feature maps differ in shape at layer " + std::to_string(l));
            const std::size_t n = fr[l].data.size();
            if (n == 0) continue;
            double acc = 0.0;
            for (std::size_t i = 0; i < n; ++i) acc += std::abs(double(fr[l].data[i]) - double(ff[l].data[i]));
            loss += acc / static_cast<double>(n) * inv_blocks;
            if (!d_fake) continue;
            auto& g = (*d_fake)[b].features[l];
            if (g.empty()) g = FeatureMap<T>(ff[l].channels, ff[l].frames);
            const T k = static_cast<T>(inv_blocks / static_cast<double>(n));
            for (std::size_t i = 0; i < n; ++i) g.data[i] += k * sign_of(ff[l].data[i] - fr[l].data[i]);
        }
    }
    return loss;
}

double lsgan_d_loss(std::span<const double> real, std::span<const double> fake) {
    std::vector<DiscriminatorOutput<double>> r(1), f(1);
    r[0].score = FeatureMap<double>(1, static_cast<int>(real.size()));
    r[0].score.data.assign(real.begin(), real.end());
    f[0].score = FeatureMap<double>(1, static_cast<int>(fake.size()));
    f[0].score.data.assign(fake.begin(), fake.end());
    return lsgan_d_loss(r, f);
}

double lsgan_g_loss(std::span<const double> fake) {
    std::vector<DiscriminatorOutput<double>> f(1);
    f[0].score = FeatureMap<double>(1, static_cast<int>(fake.size()));
    f[0].score.data.assign(fake.begin(), fake.end());
    return lsgan_g_loss(f);
}

// ─── Mel ─────────────────────────────────────────────────────────────────────

void MelSpec::validate() const {
    if (sample_rate <= 0 || hop <= 0 || mel_bands <= 0) throw ConfigError("mel spec sizes must be positive");
    if (!(hop <= window && window <= fft_size)) throw ConfigError("mel spec needs hop <= window <= fft_size");
    if (!(fmin >= 0.0 && fmin < fmax && fmax <= sample_rate / 2.0)) throw ConfigError("mel spec band edges invalid");
    if (!(log_floor > 0.0)) throw ConfigError("mel log floor must be positive");
}

int MelSpec::frames(int n) const {
    const int padded = n + 2 * padding();
    return padded < fft_size ? 0 : (padded - fft_size) / hop + 1;
}

double hz_to_mel(double hz) {
    return 2595.0 * std::log10(1.0 + hz / 700.0);
}

double mel_to_hz(double mel) {
    return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0);
}

std::vector<double> mel_filterbank(const MelSpec& s) {
    const int bins = s.fft_size / 2 + 1;
    std::vector<double> fb(static_cast<std::size_t>(s.mel_bands) * bins, 0.0);
    const double lo = hz_to_mel(s.fmin), hi = hz_to_mel(s.fmax);
    std::vector<double> edges(static_cast<std::size_t>(s.mel_bands) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(s.mel_bands + 1));
    for (int m = 0; m < s.mel_bands; ++m) {
        const double left = edges[static_cast<std::size_t>(m)], centre = edges[static_cast<std::size_t>(m) + 1],
                     right = edges[static_cast<std::size_t>(m) + 2];
        for (int k = 0; k < bins; ++k) {
            const double f = static_cast<double>(k) * s.sample_rate / s.fft_size;
            double w = 0.0;
            if (f > left && f <= centre)
                w = (f - left) / (centre - left);
            else if (f > centre && f < right)
                w = (right - f) / (right - centre);
            fb[static_cast<std::size_t>(m) * bins + k] = w;
        }
    }
    return fb;
}

std::vector<double> analysis_window(const MelSpec& s) {
    std::vector<double> w(static_cast<std::size_t>(s.fft_size), 0.0);
    const int offset = (s.fft_size - s.window) / 2;
    for (int i = 0; i < s.window; ++i)
        w[static_cast<std::size_t>(offset + i)] = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * i / s.window);
    return w;
}

template <class T>
MelAnalyzer<T>::MelAnalyzer(const MelSpec& spec) : spec_(spec) {
    spec_.validate();
    const int n = spec_.fft_size;
    bins_ = n / 2 + 1;
    for (double v : analysis_window(spec_)) window_.push_back(static_cast<T>(v));
    for (double v : mel_filterbank(spec_)) fbank_.push_back(static_cast<T>(v));
    cos_.resize(static_cast<std::size_t>(bins_) * n);
    sin_.resize(cos_.size());
    for (int k = 0; k < bins_; ++k)
        for (int j = 0; j < n; ++j) {
            const long long r = (static_cast<long long>(k) * j) % n;
            const double a = 2.0 * std::numbers::pi * static_cast<double>(r) / n;
            cos_[static_cast<std::size_t>(k) * n + j] = static_cast<T>(std::cos(a));
            sin_[static_cast<std::size_t>(k) * n + j] = static_cast<T>(std::sin(a));
        }
}

template <class T>
typename MelAnalyzer<T>::Spectrum MelAnalyzer<T>::analyze(std::span<const T> x) const {
    const int n = static_cast<int>(x.size());
    const int frames = spec_.frames(n), fft = spec_.fft_size, pad = spec_.padding();
    FeatureMap<T> f(fft, frames);
    for (int j = 0; j < fft; ++j)
        for (int t = 0; t < frames; ++t) {
            const int idx = t * spec_.hop + j - pad;
            f.at(j, t) = idx >= 0 && idx < n ? window_[static_cast<std::size_t>(j)] * x[static_cast<std::size_t>(idx)]
                                             : T(0);
        }
    Spectrum s{FeatureMap<T>(bins_, frames), FeatureMap<T>(bins_, frames), FeatureMap<T>(bins_, frames),
               FeatureMap<T>(spec_.mel_bands, frames)};
    if (frames == 0) return s;
    nn::gemm_acc<T>(bins_, frames, fft, cos_.data(), fft, f.data.data(), frames, s.re.data.data(), frames);
    nn::gemm_acc<T>(bins_, frames, fft, sin_.data(), fft, f.data.data(), frames, s.im.data.data(), frames);
    for (std::size_t i = 0; i < s.mag.data.size(); ++i)
        s.mag.data[i] = std::sqrt(s.re.data[i] * s.re.data[i] + s.im.data[i] * s.im.data[i] + T(1e-9));
    nn::gemm_acc<T>(spec_.mel_bands, frames, bins_, fbank_.data(), bins_, s.mag.data.data(), frames,
                    s.mel.data.data(), frames);
    return s;
}

template <class T>
FeatureMap<T> MelAnalyzer<T>::log_mel(std::span<const T> x) const {
    auto s = analyze(x);
    const T floor = static_cast<T>(spec_.log_floor);
    for (auto& v : s.mel.data) v = std::log(std::max(v, floor));
    return std::move(s.mel);
}

template <class T>
double MelAnalyzer<T>::distance(std::span<const T> x, std::span<const T> x_hat, std::vector<T>* grad) const {
    if (x.size() != x_hat.size()) throw InputError("mel distance needs equal-length signals");
    return distance_to(log_mel(x), x_hat, grad);
}

template <class T>
double MelAnalyzer<T>::distance_to(const FeatureMap<T>& ref, std::span<const T> x_hat, std::vector<T>* grad) const {
    const int n = static_cast<int>(x_hat.size());
    const int frames = spec_.frames(n);
    if (ref.channels != spec_.mel_bands || ref.frames != frames)
        throw InputError("mel distance needs equal-length signals");
    if (grad) grad->assign(x_hat.size(), T(0));
    if (frames == 0) return 0.0;
    auto s = analyze(x_hat);
    const T floor = static_cast<T>(spec_.log_floor);
    const double count = static_cast<double>(ref.data.size());
    double loss = 0.0;
    FeatureMap<T> dmel(spec_.mel_bands, frames);
    for (std::size_t i = 0; i < s.mel.data.size(); ++i) {
        const T m = s.mel.data[i];
        const T diff = std::log(std::max(m, floor)) - ref.data[i];
        loss += std::abs(double(diff));
        if (m > floor) dmel.data[i] = static_cast<T>(double(sign_of(diff)) / count) / m;
    }
    loss /= count;
    if (!grad) return loss;

    FeatureMap<T> dmag(bins_, frames);
    nn::gemm_acc_at<T>(bins_, frames, spec_.mel_bands, fbank_.data(), bins_, dmel.data.data(), frames,
                       dmag.data.data(), frames);
    FeatureMap<T> dre(bins_, frames), dim(bins_, frames);
    for (std::size_t i = 0; i < dmag.data.size(); ++i) {
        dre.data[i] = dmag.data[i] * s.re.data[i] / s.mag.data[i];
        dim.data[i] = dmag.data[i] * s.im.data[i] / s.mag.data[i];
    }
    const int fft = spec_.fft_size, pad = spec_.padding();
    FeatureMap<T> df(fft, frames);
    nn::gemm_acc_at<T>(fft, frames, bins_, cos_.data(), fft, dre.data.data(), frames, df.data.data(), frames);
    nn::gemm_acc_at<T>(fft, frames, bins_, sin_.data(), fft, dim.data.data(), frames, df.data.data(), frames);
    for (int j = 0; j < fft; ++j)
        for (int t = 0; t < frames; ++t) {
            const int idx = t * spec_.hop + j - pad;
            if (idx >= 0 && idx < n)
                (*grad)[static_cast<std::size_t>(idx)] += window_[static_cast<std::size_t>(j)] * df.at(j, t);
        }
    return loss;
}

template <class T>
double mel_distance(std::span<const T> x, std::span<const T> x_hat, const MelSpec& spec) {
    return MelAnalyzer<T>(spec).distance(x, x_hat);
}

// ─── CC distance ─────────────────────────────────────────────────────────────

namespace {

template <class T>
double mean_abs_diff(const FeatureMap<T>& a, const FeatureMap<T>& b, FeatureMap<T>* grad, double weight) {
    if (a.channels != b.channels || a.frames != b.frames) throw InputError("representation shapes differ");
    if (a.data.empty()) return 0.0;
    const double inv = 1.0 / static_cast<double>(a.data.size());
    double acc = 0.0;
    if (grad) *grad = FeatureMap<T>(b.channels, b.frames);
    for (std::size_t i = 0; i < a.data.size(); ++i) {
        const T d = b.data[i] - a.data[i];
        acc += std::abs(double(d));
        if (grad) grad->data[i] = static_cast<T>(weight * inv) * sign_of(d);
    }
    return acc * inv;
}

} // namespace

template <class T>
double cc_distance(Level level, std::span<const T> x, std::span<const T> x_hat, const BasicEncoder<T>& enc) {
    if (x.size() != x_hat.size()) throw InputError("cc distance needs equal-length signals");
    const auto a = enc.forward(x, false);
    const auto b = enc.forward(x_hat, false);
    return level == Level::short_term ? mean_abs_diff<T>(a.c_short, b.c_short, nullptr, 0.0)
                                      : mean_abs_diff<T>(a.c_long, b.c_long, nullptr, 0.0);
}

template <class T>
CcResult<T> cc_distances(BasicEncoder<T>& enc, const FeatureMap<T>& ref_short, const FeatureMap<T>& ref_long,
                         std::span<const T> x_hat, double w_short, double w_long, bool want_grad) {
    CcResult<T> res;
    const auto tr = enc.forward(x_hat, want_grad);
    EncoderGrads<T> g;
    res.short_term = mean_abs_diff(ref_short, tr.c_short, want_grad ? &g.c_short : nullptr, w_short);
    res.long_term = mean_abs_diff(ref_long, tr.c_long, want_grad ? &g.c_long : nullptr, w_long);
    if (want_grad) {
        res.grad = enc.backward(tr, g, true, false);
        if (res.grad.empty()) res.grad.assign(x_hat.size(), T(0));
    }
    return res;
}

#define CCODEC_LOSS_INSTANTIATE(T)                                                                                     \
    template double lsgan_d_loss(const std::vector<DiscriminatorOutput<T>>&,                                         \
                                 const std::vector<DiscriminatorOutput<T>>&, std::vector<DiscriminatorGrad<T>>*,      \
                                 std::vector<DiscriminatorGrad<T>>*);                                                 \
    template double lsgan_g_loss(const std::vector<DiscriminatorOutput<T>>&, std::vector<DiscriminatorGrad<T>>*);     \
    template double feature_matching(const std::vector<DiscriminatorOutput<T>>&,                                     \
                                     const std::vector<DiscriminatorOutput<T>>&, std::vector<DiscriminatorGrad<T>>*); \
    template class MelAnalyzer<T>;                                                                                   \
    template double mel_distance(std::span<const T>, std::span<const T>, const MelSpec&);                            \
    template double cc_distance(Level, std::span<const T>, std::span<const T>, const BasicEncoder<T>&);              \
    template CcResult<T> cc_distances(BasicEncoder<T>&, const FeatureMap<T>&, const FeatureMap<T>&,                  \
                                      std::span<const T>, double, double, bool);

CCODEC_LOSS_INSTANTIATE(float)
CCODEC_LOSS_INSTANTIATE(double)

} // namespace ccodec
