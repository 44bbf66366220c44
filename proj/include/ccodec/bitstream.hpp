#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "ccodec/config.hpp"
#include "ccodec/quantizer.hpp"

namespace ccodec {

// Coded stream layout (all header integers little-endian):
//
//   offset  size  field
//   0       4     magic "CCB1"
//   4       2     frame layout version (1)
//   6       4     sample rate (Hz)
//   10      2     rep_dim
//   12      2     short-term frames per superframe
//   14      4     step_short (IEEE-754 binary32)
//   18      4     step_long  (IEEE-754 binary32)
//   22      ...   payload
//
// The payload is a sequence of superframes packed MSB-first with no gaps. Each
// superframe holds the long-term bits (features 0..rep_dim-1) followed by the
// short-term bits of its frames (frame-major, feature order). The final byte is
// zero-padded. Ties in the delta modulator code as 1. Reconstruction starts at
// 0.0 for every stream.
inline constexpr char kStreamMagic[4] = {'C', 'C', 'B', '1'};
inline constexpr std::uint16_t kFrameLayoutVersion = 1;
inline constexpr std::size_t kStreamHeaderBytes = 22;

struct StreamHeader {
    std::uint16_t version = kFrameLayoutVersion;
    std::uint32_t sample_rate = 16000;
    std::uint16_t rep_dim = 64;
    std::uint16_t frames_per_superframe = 8;
    float step_short = 1.0f;
    float step_long = 1.0f;

    std::size_t superframe_bits() const { return std::size_t(rep_dim) * (1 + frames_per_superframe); }
};

struct UnpackedStream {
    StreamHeader header;
    DeltaBits short_bits;
    DeltaBits long_bits;
    std::size_t superframes = 0;

    QuantizerSpec spec() const { return {header.step_short, header.step_long, 0.0f}; }
};

// Throws FramingError unless 8*|long| <= |short| < 8*(|long|+1); the trailing
// partial superframe of short-term bits is dropped.
std::vector<std::uint8_t> pack_stream(const DeltaBits& short_bits, const DeltaBits& long_bits,
                                      const QuantizerSpec& spec, const CodecConfig& cfg);
// Exact inverse of pack_stream. Throws StreamError with the failing byte offset.
UnpackedStream unpack_stream(std::span<const std::uint8_t> bytes);

// Payload bits per superframe for `cfg`.
std::size_t superframe_bits(const CodecConfig& cfg);
// rep_dim * (short-term rate + long-term rate) * bits per feature.
double payload_bitrate(const CodecConfig& cfg);

} // namespace ccodec
