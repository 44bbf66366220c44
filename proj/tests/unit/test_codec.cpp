#include <doctest.h>

#include <random>

#include "ccodec/codec.hpp"
#include "ccodec/errors.hpp"
#include "test_util.hpp"

using namespace ccodec;

namespace {

// Full code width so payload sizes match the reference codec, narrow convs for speed.
CodecConfig narrow_codec() {
    auto c = tiny_codec_config();
    c.rep_dim = 64;
    return c;
}

const QuantizerSpec kQuant{0.05f, 0.04f, 0.0f};

Waveform noise(double seconds, std::uint64_t seed, int rate = 16000) {
    return Waveform{rate, test_util::random_signal(static_cast<std::size_t>(seconds * rate), seed, 0.3f)};
}

} // namespace

TEST_CASE("ten seconds encode to a 9000-byte payload") {
    const Encoder enc(narrow_codec(), 1);
    const auto s = encode_to_stream(enc, kQuant, noise(10.0, 1));
    // 160000 samples / 1280 per superframe * 64 features * (1 + 8) bits / 8
    CHECK(s.superframes == 125);
    CHECK(s.payload_bytes() == 125 * 64 * 9 / 8);
    CHECK(s.payload_bytes() == 9000);
    CHECK(s.short_frames == 1000);
    CHECK(s.long_frames == 125);
    CHECK(s.warnings.empty());
}

TEST_CASE("sub-superframe input gives a header-only stream with a warning") {
    const Encoder enc(narrow_codec(), 1);
    const auto s = encode_to_stream(enc, kQuant, noise(0.05, 2));
    CHECK(s.bytes.size() == kStreamHeaderBytes);
    CHECK(s.superframes == 0);
    REQUIRE(s.warnings.size() == 1);
    CHECK(s.warnings[0].find("header only") != std::string::npos);

    const Decoder dec(narrow_codec(), tiny_decoder_config(), 2);
    CHECK(decode_stream(dec, s.bytes).samples.empty());
}

TEST_CASE("decode length law and trailing frame warning") {
    const auto cfg = narrow_codec();
    const Encoder enc(cfg, 3);
    const Decoder dec(cfg, tiny_decoder_config(), 4);
    // 1.3 s: 130 short-term frames, 16 whole superframes.
    const auto s = encode_to_stream(enc, kQuant, noise(1.3, 3));
    CHECK(s.superframes == 16);
    REQUIRE(s.warnings.size() == 1);
    CHECK(s.warnings[0].find("2 trailing") != std::string::npos);
    const auto y = decode_stream(dec, s.bytes);
    CHECK(y.samples.size() == 160u * 8 * 16);
    CHECK(y.sample_rate == 16000);

    // Decoded codes equal the encoder-side delta-modulator tracks.
    const auto codes = decode_codes(s.bytes, cfg);
    const auto pair = quantized_codes(enc, kQuant, noise(1.3, 3));
    CHECK(codes.c_long.values == pair.q_long.values);
    CHECK(std::equal(codes.c_short.values.begin(), codes.c_short.values.end(), pair.q_short.values.begin()));
}

TEST_CASE("other sample rates are resampled before encoding") {
    const Encoder enc(narrow_codec(), 1);
    const auto s = encode_to_stream(enc, kQuant, noise(0.8, 5, 48000));
    CHECK(s.short_frames == 80);
    CHECK(s.long_frames == 10);
}

TEST_CASE("stream and model mismatch is an input error, truncation a stream error") {
    const Encoder enc(narrow_codec(), 1);
    const auto s = encode_to_stream(enc, kQuant, noise(0.5, 6));
    const Decoder small(tiny_codec_config(), tiny_decoder_config(), 1);
    CHECK_THROWS_AS(decode_stream(small, s.bytes), InputError);

    const Decoder dec(narrow_codec(), tiny_decoder_config(), 1);
    auto cut = s.bytes;
    cut.resize(cut.size() - 5);
    CHECK_THROWS_AS(decode_stream(dec, cut), StreamError);
    CHECK_THROWS_AS(decode_stream(dec, std::vector<std::uint8_t>(10, 0)), StreamError);
}

TEST_CASE("streaming codec equals the file path under random chunkings") {
    const auto cfg = tiny_codec_config();
    const Encoder enc(cfg, 7);
    const Decoder dec(cfg, tiny_decoder_config(), 8);
    const auto x = noise(12 * 1280 / 16000.0, 9);
    const auto ref = decode_stream(dec, encode_to_stream(enc, kQuant, x).bytes);
    REQUIRE(ref.samples.size() == x.samples.size());

    std::mt19937_64 rng(10);
    for (int trial = 0; trial < 4; ++trial) {
        std::uniform_int_distribution<std::size_t> len(1, trial % 2 ? 50 : 3000);
        StreamingCodec sc(enc, dec, kQuant);
        std::vector<float> out;
        for (std::size_t i = 0; i < x.samples.size();) {
            const std::size_t n = std::min(len(rng), x.samples.size() - i);
            const auto y = sc.push(std::span<const float>(x.samples).subspan(i, n));
            out.insert(out.end(), y.begin(), y.end());
            i += n;
        }
        const auto tail = sc.finish();
        out.insert(out.end(), tail.begin(), tail.end());
        CHECK(out == ref.samples);
    }
}

TEST_CASE("streaming delay is two short-term frames") {
    const auto cfg = tiny_codec_config();
    const Encoder enc(cfg, 7);
    const Decoder dec(cfg, tiny_decoder_config(), 8);
    const auto x = noise(0.3, 11);
    CHECK(measure_delay_samples(enc, dec, kQuant, x.samples) == 320);
    CHECK_THROWS_AS(measure_delay_samples(enc, dec, kQuant, std::span<const float>(x.samples).first(200)), Error);
}
