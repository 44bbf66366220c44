#include <doctest.h>

#include <random>

#include "ccodec/bitstream.hpp"
#include "ccodec/errors.hpp"

using namespace ccodec;

namespace {

DeltaBits random_bits(int dim, int frames, std::mt19937_64& rng) {
    DeltaBits b{dim, {}};
    for (int i = 0; i < dim * frames; ++i) b.bits.push_back(static_cast<std::uint8_t>(rng() & 1));
    return b;
}

} // namespace

TEST_CASE("payload bitrate arithmetic") {
    CodecConfig c;
    CHECK(payload_bitrate(c) == 7200.0);
    CHECK(superframe_bits(c) == 576);
    c.rep_dim = 1;
    CHECK(payload_bitrate(c) == 112.5);
    c.rep_dim = 128;
    CHECK(payload_bitrate(c) == 14400.0);
}

TEST_CASE("ten seconds of codes pack to 72000 payload bits") {
    std::mt19937_64 rng(1);
    const CodecConfig c;
    const auto s = random_bits(64, 1000, rng), l = random_bits(64, 125, rng);
    const auto bytes = pack_stream(s, l, {0.1f, 0.2f, 0.0f}, c);
    CHECK(bytes.size() == kStreamHeaderBytes + 9000);
    const auto u = unpack_stream(bytes);
    CHECK(u.superframes == 125);
    CHECK(u.short_bits == s);
    CHECK(u.long_bits == l);
    CHECK(u.header.step_short == 0.1f);
    CHECK(u.header.step_long == 0.2f);
    CHECK(u.header.sample_rate == 16000);
}

TEST_CASE("header layout and bit order") {
    CodecConfig c;
    c.rep_dim = 1;
    DeltaBits l{1, {1}}, s{1, {0, 1, 1, 0, 0, 0, 0, 1}};
    const auto b = pack_stream(s, l, {1.0f, 2.0f, 0.0f}, c);
    REQUIRE(b.size() == kStreamHeaderBytes + 2);
    CHECK(std::string(b.begin(), b.begin() + 4) == "CCB1");
    CHECK(b[4] == 1);
    CHECK(b[5] == 0);
    CHECK(b[6] == 0x80); // 16000 = 0x3E80
    CHECK(b[7] == 0x3E);
    CHECK(b[10] == 1);
    CHECK(b[12] == 8);
    CHECK(b[17] == 0x3F); // 1.0f = 0x3F800000
    // Payload bits: 1 | 0 1 1 0 0 0 0 1 -> 1011 0000 1(000 0000)
    CHECK(b[22] == 0xB0);
    CHECK(b[23] == 0x80);
}

TEST_CASE("partial superframes are dropped, inconsistent counts rejected") {
    std::mt19937_64 rng(2);
    const CodecConfig c;
    const auto l = random_bits(64, 3, rng);
    const auto s = random_bits(64, 27, rng);
    const auto u = unpack_stream(pack_stream(s, l, {}, c));
    CHECK(u.short_bits.frames() == 24);
    CHECK(std::equal(u.short_bits.bits.begin(), u.short_bits.bits.end(), s.bits.begin()));
    CHECK_THROWS_AS(pack_stream(random_bits(64, 23, rng), l, {}, c), FramingError);
    CHECK_THROWS_AS(pack_stream(random_bits(64, 32, rng), l, {}, c), FramingError);
    CHECK(pack_stream(DeltaBits{64, {}}, DeltaBits{64, {}}, {}, c).size() == kStreamHeaderBytes);
}

TEST_CASE("malformed streams raise stream errors with offsets") {
    std::mt19937_64 rng(3);
    const CodecConfig c;
    auto good = pack_stream(random_bits(64, 16, rng), random_bits(64, 2, rng), {}, c);

    auto riff = good;
    std::copy_n("RIFF", 4, riff.begin());
    CHECK_THROWS_AS(unpack_stream(riff), StreamError);

    auto ver = good;
    ver[4] = 9;
    try {
        unpack_stream(ver);
        FAIL("expected error");
    } catch (const StreamError& e) {
        CHECK(e.offset() == 4);
    }

    auto cut = good;
    cut.resize(kStreamHeaderBytes + 72 + 30);
    try {
        unpack_stream(cut);
        FAIL("expected error");
    } catch (const StreamError& e) {
        CHECK(e.offset() == kStreamHeaderBytes + 72);
        CHECK(std::string(e.what()).find("byte 94") != std::string::npos);
    }
    CHECK_THROWS_AS(unpack_stream(std::vector<std::uint8_t>(good.begin(), good.begin() + 10)), StreamError);
}

TEST_CASE("fuzzed bytes never crash") {
    std::mt19937_64 rng(4);
    const CodecConfig c;
    const auto good = pack_stream(random_bits(64, 16, rng), random_bits(64, 2, rng), {0.5f, 0.5f, 0.0f}, c);
    int parsed = 0, rejected = 0;
    for (int trial = 0; trial < 3000; ++trial) {
        std::vector<std::uint8_t> b;
        if (trial % 3 == 0) {
            b.resize(rng() % 200);
            for (auto& v : b) v = static_cast<std::uint8_t>(rng());
        } else {
            b = good;
            const int flips = 1 + static_cast<int>(rng() % 4);
            for (int f = 0; f < flips; ++f) b[rng() % b.size()] ^= static_cast<std::uint8_t>(1u << (rng() % 8));
            if (trial % 3 == 2) b.resize(rng() % (b.size() + 1));
        }
        try {
            const auto u = unpack_stream(b);
            CHECK(u.short_bits.bits.size() == u.superframes * u.header.rep_dim * u.header.frames_per_superframe);
            ++parsed;
        } catch (const StreamError&) {
            ++rejected;
        }
    }
    CHECK(parsed + rejected == 3000);
}
