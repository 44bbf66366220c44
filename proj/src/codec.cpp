#include "ccodec/codec.hpp"

#include "ccodec/errors.hpp"

namespace ccodec {

namespace {

Waveform at_codec_rate(const Waveform& wav, const CodecConfig& cfg) {
    if (wav.sample_rate == cfg.sample_rate) return wav;
    return resample(wav, cfg.sample_rate);
}

RepresentationSequence take_frames(const RepresentationSequence& s, int first, int count) {
    RepresentationSequence out;
    out.level = s.level;
    out.dim = s.dim;
    out.hop = s.hop;
    out.start_sample = s.start_sample + std::int64_t(first) * s.hop;
    out.values.assign(s.values.begin() + std::ptrdiff_t(first) * s.dim,
                      s.values.begin() + std::ptrdiff_t(first + count) * s.dim);
    return out;
}

} // namespace

CodePair quantized_codes(const Encoder& enc, const QuantizerSpec& quant, const Waveform& wav) {
    const auto r = enc.encode(at_codec_rate(wav, enc.config()));
    CodePair p;
    p.raw_short = r.c_short;
    p.raw_long = r.c_long;
    p.q_short = delta_encode(r.c_short, quant.step_short, quant.init_value).recon;
    p.q_long = delta_encode(r.c_long, quant.step_long, quant.init_value).recon;
    return p;
}

EncodedStream encode_to_stream(const Encoder& enc, const QuantizerSpec& quant, const Waveform& wav) {
    const auto& cfg = enc.config();
    quant.validate();
    const auto r = enc.encode(at_codec_rate(wav, cfg));
    EncodedStream out;
    out.short_frames = r.c_short.frames();
    out.long_frames = r.c_long.frames();

    // Only whole superframes are packed.
    const int per = cfg.frames_per_superframe();
    const int whole = out.long_frames;
    const auto s = delta_encode(take_frames(r.c_short, 0, whole * per), quant.step_short, quant.init_value);
    const auto l = delta_encode(r.c_long, quant.step_long, quant.init_value);
    out.bytes = pack_stream(s.bits, l.bits, quant, cfg);
    out.superframes = static_cast<std::size_t>(whole);

    if (whole == 0)
        out.warnings.push_back("input is shorter than one superframe (" + std::to_string(cfg.upper_hop) +
                               " samples); the stream holds the header only");
    else if (out.short_frames > whole * per)
        out.warnings.push_back(std::to_string(out.short_frames - whole * per) +
                               " trailing short-term frames do not fill a superframe and were dropped");
    return out;
}

DecodedCodes decode_codes(std::span<const std::uint8_t> bytes, const CodecConfig& cfg) {
    const auto u = unpack_stream(bytes);
    const auto& h = u.header;
    if (h.sample_rate != std::uint32_t(cfg.sample_rate) || h.rep_dim != cfg.rep_dim ||
        h.frames_per_superframe != cfg.frames_per_superframe())
        throw InputError("stream does not match the checkpoint: stream has " + std::to_string(h.sample_rate) + " Hz, " +
                         std::to_string(h.rep_dim) + " features, " + std::to_string(h.frames_per_superframe) +
                         " frames per superframe; model has " + std::to_string(cfg.sample_rate) + " Hz, " +
                         std::to_string(cfg.rep_dim) + " features, " + std::to_string(cfg.frames_per_superframe()));
    DecodedCodes d;
    d.header = h;
    const auto spec = u.spec();
    d.c_short = delta_decode(u.short_bits.bits, cfg.rep_dim, spec.step_short, spec.init_value, Level::short_term,
                             cfg.lower_hop, cfg.lower_hop);
    d.c_long = delta_decode(u.long_bits.bits, cfg.rep_dim, spec.step_long, spec.init_value, Level::long_term,
                            cfg.upper_hop, cfg.upper_hop);
    return d;
}

Waveform decode_stream(const Decoder& dec, std::span<const std::uint8_t> bytes) {
    const auto d = decode_codes(bytes, dec.codec_config());
    if (d.c_short.frames() == 0) return Waveform{dec.codec_config().sample_rate, {}};
    return dec.synthesize(d.c_long, d.c_short);
}

StreamingCodec::StreamingCodec(const Encoder& enc, const Decoder& dec, const QuantizerSpec& quant)
    : enc_(enc),
      state_(enc.initial_state()),
      mod_short_(enc.config().rep_dim, quant.step_short, quant.init_value),
      mod_long_(enc.config().rep_dim, quant.step_long, quant.init_value),
      synth_(dec) {
    if (!(enc.config() == dec.codec_config())) throw ConfigError("encoder and decoder configurations differ");
    quant.validate();
    pending_short_.dim = pending_long_.dim = enc.config().rep_dim;
    pending_long_.level = Level::long_term;
}

std::vector<float> StreamingCodec::push(std::span<const float> x) {
    samples_in_ += static_cast<std::int64_t>(x.size());
    const auto r = enc_.encode(x, state_);
    pending_short_.values.insert(pending_short_.values.end(), r.c_short.values.begin(), r.c_short.values.end());
    pending_long_.values.insert(pending_long_.values.end(), r.c_long.values.begin(), r.c_long.values.end());
    return drain();
}

std::vector<float> StreamingCodec::drain() {
    const int per = enc_.config().frames_per_superframe();
    std::vector<float> out;
    // Long-term frames are quantized as soon as they exist; the synthesizer only
    // needs frame j before short-term frame per * (j + 1).
    while (long_read_ < pending_long_.frames()) {
        const auto q = mod_long_.push(take_frames(pending_long_, long_read_++, 1));
        synth_.push_long(q.recon.values);
        ++long_pushed_;
    }
    while (short_read_ < pending_short_.frames()) {
        if (short_pushed_ > 0 && short_pushed_ % per == 0 && long_pushed_ < short_pushed_ / per) break;
        const auto q = mod_short_.push(take_frames(pending_short_, short_read_++, 1));
        const auto y = synth_.push_short(q.recon.values);
        out.insert(out.end(), y.begin(), y.end());
        ++short_pushed_;
    }
    // Drop consumed frames so memory stays bounded on long streams.
    if (short_read_ == pending_short_.frames()) {
        pending_short_.values.clear();
        short_read_ = 0;
    }
    if (long_read_ == pending_long_.frames()) {
        pending_long_.values.clear();
        long_read_ = 0;
    }
    return out;
}

std::vector<float> StreamingCodec::finish() { return synth_.finish(); }

std::int64_t measure_delay_samples(const Encoder& enc, const Decoder& dec, const QuantizerSpec& quant,
                                   std::span<const float> probe) {
    StreamingCodec codec(enc, dec, quant);
    std::int64_t lag = -1;
    std::int64_t emitted = 0;
    for (std::size_t i = 0; i < probe.size(); ++i) {
        const auto y = codec.push(probe.subspan(i, 1));
        for (std::size_t k = 0; k < y.size(); ++k, ++emitted) {
            const std::int64_t l = codec.samples_in() - emitted;
            if (lag < 0) lag = l;
            // Samples arrive in blocks of one short-term frame, so the lag inside a
            // block shrinks by one per sample; the block's first sample sets it.
            if (k == 0 && l != lag) throw Error("streaming lag is not constant");
        }
    }
    if (lag < 0) throw Error("probe too short to produce any output");
    return lag;
}

} // namespace ccodec
