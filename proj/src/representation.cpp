#include "ccodec/representation.hpp"

#include <stdexcept>

namespace ccodec {

const char* level_name(Level level) {
    return level == Level::short_term ? "short" : "long";
}

void RepresentationSequence::append(const RepresentationSequence& other) {
    if (other.frames() == 0) return;
    if (frames() == 0) {
        *this = other;
        return;
    }
    if (other.dim != dim || other.level != level) throw std::invalid_argument("append: incompatible sequences");
    values.insert(values.end(), other.values.begin(), other.values.end());
}

nn::FeatureMap<float> to_feature_map(const RepresentationSequence& seq) {
    nn::FeatureMap<float> map(seq.dim, seq.frames());
    for (int t = 0; t < map.frames; ++t)
        for (int c = 0; c < map.channels; ++c) map.at(c, t) = seq.values[static_cast<std::size_t>(t) * seq.dim + c];
    return map;
}

RepresentationSequence from_feature_map(const nn::FeatureMap<float>& map, Level level, int hop,
                                        std::int64_t start_sample) {
    RepresentationSequence seq;
    seq.level = level;
    seq.dim = map.channels;
    seq.hop = hop;
    seq.start_sample = start_sample;
    seq.values.resize(map.data.size());
    for (int t = 0; t < map.frames; ++t)
        for (int c = 0; c < map.channels; ++c) seq.values[static_cast<std::size_t>(t) * seq.dim + c] = map.at(c, t);
    return seq;
}

} // namespace ccodec
