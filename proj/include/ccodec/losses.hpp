#pragma once

#include <span>
#include <vector>

#include "ccodec/discriminators.hpp"
#include "ccodec/encoder.hpp"
#include "ccodec/nn.hpp"

namespace ccodec {

struct LossWeights {
    double adv = 1.0;
    double cc_short = 10.0;
    double cc_long = 10.0;
    double mel = 50.0;
    double fm = 2.0;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

double total_generator_loss(double adv, double cc_short, double cc_long, double mel, double fm,
                            const LossWeights& w = {});

// ─── Adversarial terms ───────────────────────────────────────────────────────
// Score maps are reduced by a mean over elements, then a mean over blocks.
// Gradient outputs (when non-null) are overwritten with one entry per block.

template <class T>
double lsgan_d_loss(const std::vector<DiscriminatorOutput<T>>& real, const std::vector<DiscriminatorOutput<T>>& fake,
                    std::vector<DiscriminatorGrad<T>>* d_real = nullptr,
                    std::vector<DiscriminatorGrad<T>>* d_fake = nullptr);
template <class T>
double lsgan_g_loss(const std::vector<DiscriminatorOutput<T>>& fake, std::vector<DiscriminatorGrad<T>>* d_fake = nullptr);

// Per block: sum over layers of the mean absolute feature difference; then the
// mean over blocks. Gradient is taken w.r.t. the fake features only and added
// to *d_fake (which must already hold one entry per block, or be empty).
template <class T>
double feature_matching(const std::vector<DiscriminatorOutput<T>>& real,
                        const std::vector<DiscriminatorOutput<T>>& fake,
                        std::vector<DiscriminatorGrad<T>>* d_fake = nullptr);

// Scalar conveniences on flat score lists (one block).
double lsgan_d_loss(std::span<const double> real, std::span<const double> fake);
double lsgan_g_loss(std::span<const double> fake);

// ─── Mel distance ────────────────────────────────────────────────────────────

struct MelSpec {
    int sample_rate = 16000;
    int fft_size = 1024;
    int hop = 160;
    int window = 1024;
    int mel_bands = 80;
    double fmin = 0.0;
    double fmax = 8000.0;
    double log_floor = 1e-5;

    void validate() const;
    // Zero padding applied to both ends before framing.
    int padding() const { return (fft_size - hop) / 2; }
    int frames(int n) const;
};

// HTK mel scale.
double hz_to_mel(double hz);
double mel_to_hz(double mel);
// Triangular filters, bands x (fft_size / 2 + 1), row-major.
std::vector<double> mel_filterbank(const MelSpec& spec);
// Periodic Hann window of `window` samples, centred in fft_size.
std::vector<double> analysis_window(const MelSpec& spec);

template <class T>
class MelAnalyzer {
  public:
    explicit MelAnalyzer(const MelSpec& spec = {});
    const MelSpec& spec() const { return spec_; }

    // log(max(mel, floor)), bands x frames.
    nn::FeatureMap<T> log_mel(std::span<const T> x) const;
    // Mean |log_mel(x) - log_mel(x_hat)|; writes d/dx_hat when grad is non-null.
    double distance(std::span<const T> x, std::span<const T> x_hat, std::vector<T>* grad = nullptr) const;
    // Same with a precomputed reference spectrogram.
    double distance_to(const nn::FeatureMap<T>& ref, std::span<const T> x_hat, std::vector<T>* grad = nullptr) const;

  private:
    struct Spectrum {
        nn::FeatureMap<T> re, im, mag, mel;
    };
    Spectrum analyze(std::span<const T> x) const;

    MelSpec spec_;
    int bins_ = 0;
    std::vector<T> window_;
    std::vector<T> cos_, sin_; // bins x fft_size
    std::vector<T> fbank_;     // bands x bins
};

template <class T>
double mel_distance(std::span<const T> x, std::span<const T> x_hat, const MelSpec& spec = {});

// ─── Latent (cognitive-coding) distance ──────────────────────────────────────

// Mean |xi(x) - xi(x_hat)| on one level's unquantized representation.
template <class T>
double cc_distance(Level level, std::span<const T> x, std::span<const T> x_hat, const BasicEncoder<T>& enc);

template <class T>
struct CcResult {
    double short_term = 0.0;
    double long_term = 0.0;
    std::vector<T> grad; // d(w_short * short + w_long * long) / d x_hat
};

// Both levels against precomputed reference representations. Only data
// gradients are formed; encoder weights and their gradients are untouched.
template <class T>
CcResult<T> cc_distances(BasicEncoder<T>& enc, const nn::FeatureMap<T>& ref_short, const nn::FeatureMap<T>& ref_long,
                         std::span<const T> x_hat, double w_short, double w_long, bool want_grad);

} // namespace ccodec
