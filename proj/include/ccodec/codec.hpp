#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ccodec/audio.hpp"
#include "ccodec/bitstream.hpp"
#include "ccodec/decoder.hpp"
#include "ccodec/encoder.hpp"
#include "ccodec/quantizer.hpp"

namespace ccodec {

// Unquantized and delta-modulated codes for one waveform.
struct CodePair {
    RepresentationSequence raw_short, raw_long;
    RepresentationSequence q_short, q_long;
};

CodePair quantized_codes(const Encoder& enc, const QuantizerSpec& quant, const Waveform& wav);

struct EncodedStream {
    std::vector<std::uint8_t> bytes;
    int short_frames = 0; // produced by the encoder
    int long_frames = 0;
    std::size_t superframes = 0; // packed into the stream
    std::vector<std::string> warnings;

    std::size_t payload_bytes() const { return bytes.size() - kStreamHeaderBytes; }
};

// Input at other sample rates is resampled to the codec rate first.
EncodedStream encode_to_stream(const Encoder& enc, const QuantizerSpec& quant, const Waveform& wav);

struct DecodedCodes {
    RepresentationSequence c_short, c_long;
    StreamHeader header;
};

// Throws StreamError on malformed bytes and InputError when the header does not
// fit `cfg`.
DecodedCodes decode_codes(std::span<const std::uint8_t> bytes, const CodecConfig& cfg);
// Output length is lower_hop times the number of short-term frames in the stream.
Waveform decode_stream(const Decoder& dec, std::span<const std::uint8_t> bytes);

// Encoder, both delta modulators and the streaming synthesizer run back to back,
// as a sender and receiver would with a lossless channel.
class StreamingCodec {
  public:
    StreamingCodec(const Encoder& enc, const Decoder& dec, const QuantizerSpec& quant);

    std::vector<float> push(std::span<const float> x);
    std::vector<float> finish();

    std::int64_t samples_in() const { return samples_in_; }
    std::int64_t samples_out() const { return synth_.samples_emitted(); }

  private:
    std::vector<float> drain();

    const Encoder& enc_;
    EncoderState state_;
    DeltaModulator mod_short_, mod_long_;
    StreamingSynthesizer synth_;
    RepresentationSequence pending_short_, pending_long_;
    int short_read_ = 0, long_read_ = 0;
    std::int64_t short_pushed_ = 0, long_pushed_ = 0;
    std::int64_t samples_in_ = 0;
};

// Feeds `probe_samples` of input one sample at a time and records, for each
// output sample n, how many input samples had been consumed when it appeared.
// Returns the largest (consumed - n); throws Error if the lag is not constant.
std::int64_t measure_delay_samples(const Encoder& enc, const Decoder& dec, const QuantizerSpec& quant,
                                   std::span<const float> probe);

} // namespace ccodec
