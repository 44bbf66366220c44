#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccodec/representation.hpp"

namespace ccodec {

// Step sizes for the two single-bit delta modulators, one per level and shared
// across all features. Ties (zero difference) always code as +step.
struct QuantizerSpec {
    float step_short = 1.0f;
    float step_long = 1.0f;
    float init_value = 0.0f;

    float step(Level level) const { return level == Level::short_term ? step_short : step_long; }
    void validate() const;
    bool operator==(const QuantizerSpec&) const = default;
};

// One bit per feature per frame, frame-major. 1 = up, 0 = down.
struct DeltaBits {
    int dim = 0;
    std::vector<std::uint8_t> bits;

    int frames() const { return dim == 0 ? 0 : static_cast<int>(bits.size() / static_cast<std::size_t>(dim)); }
    bool operator==(const DeltaBits&) const = default;
};

struct DeltaEncoded {
    DeltaBits bits;
    RepresentationSequence recon; // exactly what a decoder reconstructs from `bits`
};

// Stateful modulator; the running reconstruction starts at init for every stream.
class DeltaModulator {
  public:
    DeltaModulator(int dim, float step, float init);
    DeltaEncoded push(const RepresentationSequence& frames);
    std::span<const float> state() const { return track_; }

  private:
    float step_;
    std::vector<float> track_;
};

class DeltaDemodulator {
  public:
    DeltaDemodulator(int dim, float step, float init);
    // bits.size() must be a multiple of dim.
    std::vector<float> push(std::span<const std::uint8_t> bits);

  private:
    float step_;
    std::vector<float> track_;
};

DeltaEncoded delta_encode(const RepresentationSequence& frames, float step, float init);
// Throws StreamError when bits.size() is not a multiple of dim.
RepresentationSequence delta_decode(std::span<const std::uint8_t> bits, int dim, float step, float init,
                                    Level level = Level::short_term, int hop = 0, std::int64_t start_sample = 0);

inline constexpr float kMinStep = 1e-6f;

// Median of |x_t - x_{t-1}| over every feature and time step of each level's
// corpus, times `multiplier`, floored at kMinStep.
QuantizerSpec calibrate_steps(const std::vector<RepresentationSequence>& short_corpus,
                              const std::vector<RepresentationSequence>& long_corpus, double multiplier = 1.0);

} // namespace ccodec
