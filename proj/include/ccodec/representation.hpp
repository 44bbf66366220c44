#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccodec/nn.hpp"

namespace ccodec {

enum class Level { short_term, long_term };

const char* level_name(Level level);

// Time-indexed sequence of fixed-size feature vectors at one abstraction level,
// stored frame-major. Frame t depends only on samples < start_sample + t * hop.
struct RepresentationSequence {
    Level level = Level::short_term;
    int dim = 0;
    int hop = 0;
    std::int64_t start_sample = 0;
    std::vector<float> values;

    int frames() const { return dim == 0 ? 0 : static_cast<int>(values.size() / static_cast<std::size_t>(dim)); }
    std::span<const float> frame(int t) const {
        return {values.data() + static_cast<std::size_t>(t) * dim, static_cast<std::size_t>(dim)};
    }
    std::span<float> frame(int t) {
        return {values.data() + static_cast<std::size_t>(t) * dim, static_cast<std::size_t>(dim)};
    }
    void append(const RepresentationSequence& other);

    bool operator==(const RepresentationSequence&) const = default;
};

// Conversions to the channel-major layout used by the networks.
nn::FeatureMap<float> to_feature_map(const RepresentationSequence& seq);
RepresentationSequence from_feature_map(const nn::FeatureMap<float>& map, Level level, int hop,
                                        std::int64_t start_sample);

} // namespace ccodec
