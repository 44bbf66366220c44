#include "ccodec/quantizer.hpp"

#include <algorithm>
#include <cmath>

#include "ccodec/errors.hpp"

namespace ccodec {

void QuantizerSpec::validate() const {
    for (float s : {step_short, step_long})
        if (!(std::isfinite(s) && s > 0.0f)) throw ConfigError("quantizer steps must be positive and finite");
    if (!std::isfinite(init_value)) throw ConfigError("quantizer init value must be finite");
}

DeltaModulator::DeltaModulator(int dim, float step, float init) : step_(step), track_(static_cast<std::size_t>(dim), init) {
    if (!(std::isfinite(step) && step > 0.0f)) throw ConfigError("delta modulation step must be positive");
}

DeltaEncoded DeltaModulator::push(const RepresentationSequence& frames) {
    const int dim = static_cast<int>(track_.size());
    if (frames.frames() > 0 && frames.dim != dim) throw InputError("delta_encode: frame dimension mismatch");
    DeltaEncoded out;
    out.bits.dim = dim;
    out.recon = frames;
    out.bits.bits.resize(frames.values.size());
    for (std::size_t i = 0; i < frames.values.size(); ++i) {
        const float x = frames.values[i];
        if (!std::isfinite(x)) throw InputError("delta_encode: non-finite feature value");
        float& r = track_[i % static_cast<std::size_t>(dim)];
        const bool up = x - r >= 0.0f;
        r = up ? r + step_ : r - step_;
        out.bits.bits[i] = up ? 1 : 0;
        out.recon.values[i] = r;
    }
    return out;
}

DeltaDemodulator::DeltaDemodulator(int dim, float step, float init)
    : step_(step), track_(static_cast<std::size_t>(dim), init) {
    if (!(std::isfinite(step) && step > 0.0f)) throw ConfigError("delta modulation step must be positive");
}

std::vector<float> DeltaDemodulator::push(std::span<const std::uint8_t> bits) {
    const std::size_t dim = track_.size();
    if (dim == 0 || bits.size() % dim != 0)
        throw StreamError("bit count " + std::to_string(bits.size()) + " is not a multiple of dimension " +
                              std::to_string(dim),
                          0);
    std::vector<float> out(bits.size());
    for (std::size_t i = 0; i < bits.size(); ++i) {
        float& r = track_[i % dim];
        r = bits[i] ? r + step_ : r - step_;
        out[i] = r;
    }
    return out;
}

DeltaEncoded delta_encode(const RepresentationSequence& frames, float step, float init) {
    DeltaModulator mod(frames.dim, step, init);
    return mod.push(frames);
}

RepresentationSequence delta_decode(std::span<const std::uint8_t> bits, int dim, float step, float init, Level level,
                                    int hop, std::int64_t start_sample) {
    if (dim <= 0) throw StreamError("delta_decode: dimension must be positive", 0);
    DeltaDemodulator demod(dim, step, init);
    RepresentationSequence seq;
    seq.level = level;
    seq.dim = dim;
    seq.hop = hop;
    seq.start_sample = start_sample;
    seq.values = demod.push(bits);
    return seq;
}

namespace {

float median_abs_diff(const std::vector<RepresentationSequence>& corpus, double multiplier, const char* what) {
    if (corpus.empty()) throw InputError(std::string("calibration corpus is empty for the ") + what + " level");
    std::vector<float> diffs;
    bool any_frames = false;
    for (const auto& seq : corpus) {
        const int n = seq.frames();
        any_frames = any_frames || n > 0;
        for (int t = 1; t < n; ++t) {
            const auto cur = seq.frame(t), prev = seq.frame(t - 1);
            for (int f = 0; f < seq.dim; ++f) diffs.push_back(std::abs(cur[f] - prev[f]));
        }
    }
    if (!any_frames) throw InputError(std::string("calibration corpus has no frames for the ") + what + " level");
    if (diffs.empty()) return kMinStep;
    const std::size_t mid = diffs.size() / 2;
    std::nth_element(diffs.begin(), diffs.begin() + static_cast<std::ptrdiff_t>(mid), diffs.end());
    double med = diffs[mid];
    if (diffs.size() % 2 == 0) {
        const float lower = *std::max_element(diffs.begin(), diffs.begin() + static_cast<std::ptrdiff_t>(mid));
        med = 0.5 * (double(lower) + double(diffs[mid]));
    }
    const double step = med * multiplier;
    return static_cast<float>(std::max(step, double(kMinStep)));
}

} // namespace

QuantizerSpec calibrate_steps(const std::vector<RepresentationSequence>& short_corpus,
                              const std::vector<RepresentationSequence>& long_corpus, double multiplier) {
    if (!(multiplier > 0.0)) throw ConfigError("calibration multiplier must be positive");
    QuantizerSpec spec;
    spec.step_short = median_abs_diff(short_corpus, multiplier, "short-term");
    spec.step_long = median_abs_diff(long_corpus, multiplier, "long-term");
    return spec;
}

} // namespace ccodec
