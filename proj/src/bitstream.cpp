#include "ccodec/bitstream.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "ccodec/errors.hpp"

namespace ccodec {

namespace {

class BitWriter {
  public:
    explicit BitWriter(std::vector<std::uint8_t>& out) : out_(out) {}
    void put(bool bit) {
        if (used_ == 0) out_.push_back(0);
        if (bit) out_.back() |= static_cast<std::uint8_t>(0x80u >> used_);
        used_ = (used_ + 1) & 7;
    }

  private:
    std::vector<std::uint8_t>& out_;
    int used_ = 0;
};

class BitReader {
  public:
    BitReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}
    bool get() {
        const bool bit = (bytes_[pos_ >> 3] >> (7 - (pos_ & 7))) & 1u;
        ++pos_;
        return bit;
    }

  private:
    std::span<const std::uint8_t> bytes_;
    std::size_t pos_ = 0;
};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
std::uint16_t get_u16(std::span<const std::uint8_t> b, std::size_t at) {
    return static_cast<std::uint16_t>(b[at] | (b[at + 1] << 8));
}
std::uint32_t get_u32(std::span<const std::uint8_t> b, std::size_t at) {
    return std::uint32_t(b[at]) | (std::uint32_t(b[at + 1]) << 8) | (std::uint32_t(b[at + 2]) << 16) |
           (std::uint32_t(b[at + 3]) << 24);
}

} // namespace

std::size_t superframe_bits(const CodecConfig& cfg) {
    return static_cast<std::size_t>(cfg.rep_dim) * (1 + cfg.frames_per_superframe()) * cfg.quant_bits_per_feature;
}

double payload_bitrate(const CodecConfig& cfg) {
    const double short_rate = double(cfg.sample_rate) / cfg.lower_hop;
    const double long_rate = double(cfg.sample_rate) / cfg.upper_hop;
    return double(cfg.rep_dim) * (short_rate + long_rate) * cfg.quant_bits_per_feature;
}

std::vector<std::uint8_t> pack_stream(const DeltaBits& short_bits, const DeltaBits& long_bits,
                                      const QuantizerSpec& spec, const CodecConfig& cfg) {
    const int dim = cfg.rep_dim;
    const int per = cfg.frames_per_superframe();
    if ((short_bits.frames() > 0 && short_bits.dim != dim) || (long_bits.frames() > 0 && long_bits.dim != dim))
        throw FramingError("bit dimension does not match rep_dim " + std::to_string(dim));
    if (short_bits.bits.size() % static_cast<std::size_t>(dim) != 0 ||
        long_bits.bits.size() % static_cast<std::size_t>(dim) != 0)
        throw FramingError("bit count is not a whole number of frames");
    const int n_long = long_bits.frames();
    const int n_short = short_bits.frames();
    if (n_short < per * n_long || n_short >= per * (n_long + 1))
        throw FramingError("inconsistent frame counts: " + std::to_string(n_short) + " short-term frames for " +
                           std::to_string(n_long) + " long-term frames");
    spec.validate();
    if (cfg.sample_rate <= 0 || dim > std::numeric_limits<std::uint16_t>::max() ||
        per > std::numeric_limits<std::uint16_t>::max())
        throw FramingError("configuration does not fit the stream header");

    std::vector<std::uint8_t> out;
    out.insert(out.end(), kStreamMagic, kStreamMagic + 4);
    put_u16(out, kFrameLayoutVersion);
    put_u32(out, static_cast<std::uint32_t>(cfg.sample_rate));
    put_u16(out, static_cast<std::uint16_t>(dim));
    put_u16(out, static_cast<std::uint16_t>(per));
    put_u32(out, std::bit_cast<std::uint32_t>(spec.step_short));
    put_u32(out, std::bit_cast<std::uint32_t>(spec.step_long));

    BitWriter w(out);
    for (int s = 0; s < n_long; ++s) {
        for (int f = 0; f < dim; ++f) w.put(long_bits.bits[static_cast<std::size_t>(s) * dim + f] != 0);
        for (int t = s * per; t < (s + 1) * per; ++t)
            for (int f = 0; f < dim; ++f) w.put(short_bits.bits[static_cast<std::size_t>(t) * dim + f] != 0);
    }
    return out;
}

UnpackedStream unpack_stream(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4) throw StreamError("stream shorter than magic", bytes.size());
    if (std::memcmp(bytes.data(), kStreamMagic, 4) != 0) throw StreamError("bad magic", 0);
    if (bytes.size() < kStreamHeaderBytes) throw StreamError("truncated header", bytes.size());
    UnpackedStream u;
    auto& h = u.header;
    h.version = get_u16(bytes, 4);
    if (h.version != kFrameLayoutVersion)
        throw StreamError("unknown frame layout version " + std::to_string(h.version), 4);
    h.sample_rate = get_u32(bytes, 6);
    if (h.sample_rate == 0) throw StreamError("sample rate is zero", 6);
    h.rep_dim = get_u16(bytes, 10);
    if (h.rep_dim == 0) throw StreamError("rep_dim is zero", 10);
    h.frames_per_superframe = get_u16(bytes, 12);
    if (h.frames_per_superframe == 0) throw StreamError("frames per superframe is zero", 12);
    h.step_short = std::bit_cast<float>(get_u32(bytes, 14));
    if (!(std::isfinite(h.step_short) && h.step_short > 0.0f)) throw StreamError("invalid short-term step", 14);
    h.step_long = std::bit_cast<float>(get_u32(bytes, 18));
    if (!(std::isfinite(h.step_long) && h.step_long > 0.0f)) throw StreamError("invalid long-term step", 18);

    const auto payload = bytes.subspan(kStreamHeaderBytes);
    const std::size_t sf_bits = h.superframe_bits();
    const std::size_t total_bits = payload.size() * 8;
    const std::size_t n = total_bits / sf_bits;
    const std::size_t used_bits = n * sf_bits;
    const std::size_t used_bytes = (used_bits + 7) / 8;
    if (used_bytes != payload.size())
        throw StreamError("truncated superframe " + std::to_string(n), kStreamHeaderBytes + used_bits / 8);
    if (used_bits % 8 != 0) {
        const std::uint8_t pad_mask = static_cast<std::uint8_t>(0xFFu >> (used_bits % 8));
        if (payload.back() & pad_mask) throw StreamError("non-zero padding bits", bytes.size() - 1);
    }

    const int dim = h.rep_dim, per = h.frames_per_superframe;
    u.superframes = n;
    u.long_bits.dim = dim;
    u.short_bits.dim = dim;
    u.long_bits.bits.reserve(n * dim);
    u.short_bits.bits.reserve(n * dim * per);
    BitReader r(payload);
    for (std::size_t s = 0; s < n; ++s) {
        for (int f = 0; f < dim; ++f) u.long_bits.bits.push_back(r.get() ? 1 : 0);
        for (int t = 0; t < per; ++t)
            for (int f = 0; f < dim; ++f) u.short_bits.bits.push_back(r.get() ? 1 : 0);
    }
    return u;
}

} // namespace ccodec
