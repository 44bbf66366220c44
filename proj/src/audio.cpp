#include "ccodec/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <numbers>

#include "ccodec/errors.hpp"

namespace ccodec {

namespace {

std::uint32_t le32(const unsigned char* p) {
    return std::uint32_t(p[0]) | (std::uint32_t(p[1]) << 8) | (std::uint32_t(p[2]) << 16) | (std::uint32_t(p[3]) << 24);
}
std::uint16_t le16(const unsigned char* p) {
    return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}
void put32(std::ostream& os, std::uint32_t v) {
    const unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}
void put16(std::ostream& os, std::uint16_t v) {
    const unsigned char b[2] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8)};
    os.write(reinterpret_cast<const char*>(b), 2);
}

} // namespace

Waveform read_wav(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path.string() + "'");
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string name = path.string();
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 || std::memcmp(bytes.data() + 8, "WAVE", 4) != 0)
        throw InputError(name + ": not a RIFF/WAVE file");

    int format = 0, channels = 0, rate = 0, bits = 0;
    const unsigned char* data = nullptr;
    std::size_t data_size = 0;
    std::size_t pos = 12;
    while (pos + 8 <= bytes.size()) {
        const unsigned char* chunk = bytes.data() + pos;
        const std::size_t size = le32(chunk + 4);
        const std::size_t body = pos + 8;
        const std::size_t avail = std::min(size, bytes.size() - body);
        if (std::memcmp(chunk, "fmt ", 4) == 0) {
            if (avail < 16) throw InputError(name + ": truncated fmt chunk");
            format = le16(chunk + 8);
            channels = le16(chunk + 10);
            rate = static_cast<int>(le32(chunk + 12));
            bits = le16(chunk + 22);
            if (format == 0xFFFE && avail >= 26) format = le16(chunk + 32);
        } else if (std::memcmp(chunk, "data", 4) == 0) {
            data = bytes.data() + body;
            data_size = avail;
        }
        pos = body + size + (size & 1);
    }
    if (channels == 0) throw InputError(name + ": missing fmt chunk");
    if (!data) throw InputError(name + ": missing data chunk");
    if (channels != 1)
        throw InputError(name + ": expected mono audio, found " + std::to_string(channels) + " channels");
    if (rate <= 0) throw InputError(name + ": invalid sample rate");

    Waveform wav;
    wav.sample_rate = rate;
    const int width = bits / 8;
    if (!((format == 1 && (bits == 8 || bits == 16 || bits == 24 || bits == 32)) || (format == 3 && bits == 32)))
        throw InputError(name + ": unsupported sample format (format " + std::to_string(format) + ", " +
                         std::to_string(bits) + " bits)");
    const std::size_t n = data_size / static_cast<std::size_t>(width);
    wav.samples.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        const unsigned char* s = data + i * width;
        float v = 0.0f;
        if (format == 3) {
            std::uint32_t u = le32(s);
            std::memcpy(&v, &u, 4);
        } else if (bits == 8) {
            v = (static_cast<int>(s[0]) - 128) / 128.0f;
        } else if (bits == 16) {
            v = static_cast<std::int16_t>(le16(s)) / 32768.0f;
        } else if (bits == 24) {
            std::int32_t x = static_cast<std::int32_t>((std::uint32_t(s[0]) << 8) | (std::uint32_t(s[1]) << 16) |
                                                       (std::uint32_t(s[2]) << 24)) >>
                             8;
            v = static_cast<float>(x / 8388608.0);
        } else {
            v = static_cast<float>(static_cast<std::int32_t>(le32(s)) / 2147483648.0);
        }
        wav.samples[i] = v;
    }
    return wav;
}

void write_wav(const std::filesystem::path& path, const Waveform& wav) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw InputError("cannot write '" + path.string() + "'");
    const std::uint32_t data_bytes = static_cast<std::uint32_t>(wav.samples.size() * 2);
    os.write("RIFF", 4);
    put32(os, 36 + data_bytes);
    os.write("WAVEfmt ", 8);
    put32(os, 16);
    put16(os, 1);
    put16(os, 1);
    put32(os, static_cast<std::uint32_t>(wav.sample_rate));
    put32(os, static_cast<std::uint32_t>(wav.sample_rate * 2));
    put16(os, 2);
    put16(os, 16);
    os.write("data", 4);
    put32(os, data_bytes);
    for (float v : wav.samples) {
        const float c = std::clamp(v, -1.0f, 1.0f);
        const auto q = static_cast<std::int16_t>(std::lrint(std::clamp(c * 32768.0f, -32768.0f, 32767.0f)));
        put16(os, static_cast<std::uint16_t>(q));
    }
    if (!os) throw InputError("write failed for '" + path.string() + "'");
}

Waveform resample(const Waveform& in, int target_rate) {
    if (target_rate <= 0 || in.sample_rate <= 0) throw InputError("resample: sample rates must be positive");
    if (target_rate == in.sample_rate) return in;
    constexpr int kZeroCrossings = 16;
    constexpr double kBeta = 8.6;
    const double ratio = double(target_rate) / in.sample_rate;
    const double cutoff = 0.5 * std::min(1.0, ratio) * 0.97; // cycles per input sample
    const double half_width = kZeroCrossings / (2.0 * cutoff);
    const double i0_beta = std::cyl_bessel_i(0.0, kBeta);

    Waveform out;
    out.sample_rate = target_rate;
    const auto n_in = static_cast<std::int64_t>(in.samples.size());
    const auto n_out = static_cast<std::int64_t>(std::llround(n_in * ratio));
    out.samples.resize(static_cast<std::size_t>(n_out));
    for (std::int64_t j = 0; j < n_out; ++j) {
        const double centre = j / ratio;
        const auto lo = static_cast<std::int64_t>(std::ceil(centre - half_width));
        const auto hi = static_cast<std::int64_t>(std::floor(centre + half_width));
        double acc = 0.0;
        for (std::int64_t i = std::max<std::int64_t>(lo, 0); i <= std::min(hi, n_in - 1); ++i) {
            const double d = i - centre;
            const double x = 2.0 * cutoff * d;
            const double sinc = std::abs(x) < 1e-12 ? 1.0 : std::sin(std::numbers::pi * x) / (std::numbers::pi * x);
            const double r = d / half_width;
            const double win = std::cyl_bessel_i(0.0, kBeta * std::sqrt(std::max(0.0, 1.0 - r * r))) / i0_beta;
            acc += in.samples[static_cast<std::size_t>(i)] * 2.0 * cutoff * sinc * win;
        }
        out.samples[static_cast<std::size_t>(j)] = static_cast<float>(acc);
    }
    return out;
}

void check_finite(const Waveform& wav) {
    for (std::size_t i = 0; i < wav.samples.size(); ++i)
        if (!std::isfinite(wav.samples[i]))
            throw InputError("non-finite sample at index " + std::to_string(i));
}

} // namespace ccodec
