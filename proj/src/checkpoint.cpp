#include "ccodec/checkpoint.hpp"

#include <zlib.h>

#include <charconv>
#include <cstring>
#include <fstream>

#include "ccodec/errors.hpp"

namespace ccodec {

namespace {

class ByteWriter {
  public:
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    template <class U>
    void le(U v) {
        for (std::size_t i = 0; i < sizeof(U); ++i) out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    void f32(float v) {
        std::uint32_t u;
        std::memcpy(&u, &v, 4);
        le(u);
    }
    std::vector<std::uint8_t>& bytes() { return out_; }

  private:
    std::vector<std::uint8_t> out_;
};

class ByteReader {
  public:
    explicit ByteReader(std::span<const std::uint8_t> b) : b_(b) {}
    void need(std::size_t n, const char* what) const {
        if (b_.size() - pos_ < n)
            throw CheckpointError(std::string("checkpoint truncated while reading ") + what + " at byte " +
                                  std::to_string(pos_));
    }
    template <class U>
    U le(const char* what) {
        need(sizeof(U), what);
        U v = 0;
        for (std::size_t i = 0; i < sizeof(U); ++i) v |= static_cast<U>(b_[pos_ + i]) << (8 * i);
        pos_ += sizeof(U);
        return v;
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(reinterpret_cast<const char*>(b_.data() + pos_), n);
        pos_ += n;
        return s;
    }
    std::size_t remaining() const { return b_.size() - pos_; }
    const std::uint8_t* here() const { return b_.data() + pos_; }
    void skip(std::size_t n) { pos_ += n; }

  private:
    std::span<const std::uint8_t> b_;
    std::size_t pos_ = 0;
};

std::uint32_t checksum(const std::uint8_t* p, std::size_t n) {
    uLong crc = crc32(0L, Z_NULL, 0);
    while (n > 0) {
        const auto chunk = static_cast<uInt>(std::min<std::size_t>(n, 1u << 30));
        crc = crc32(crc, p, chunk);
        p += chunk;
        n -= chunk;
    }
    return static_cast<std::uint32_t>(crc);
}

} // namespace

bool Checkpoint::has(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return true;
    return false;
}

const NamedArray& Checkpoint::get(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return a;
    throw CheckpointError("checkpoint has no array '" + name + "'");
}

void Checkpoint::put(std::string name, std::vector<float> values) {
    for (auto& a : arrays)
        if (a.name == name) {
            a.values = std::move(values);
            return;
        }
    arrays.push_back({std::move(name), std::move(values)});
}

std::string Checkpoint::meta_or(const std::string& key, const std::string& fallback) const {
    auto it = meta.find(key);
    return it == meta.end() ? fallback : it->second;
}

const std::string& Checkpoint::meta_at(const std::string& key) const {
    auto it = meta.find(key);
    if (it == meta.end()) throw CheckpointError("checkpoint metadata lacks '" + key + "'");
    return it->second;
}

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
    ByteWriter w;
    w.raw(kCheckpointMagic, 4);
    w.le<std::uint32_t>(kCheckpointVersion);
    const std::string meta = format_key_values(ckpt.meta);
    w.le<std::uint32_t>(static_cast<std::uint32_t>(meta.size()));
    w.raw(meta.data(), meta.size());
    w.le<std::uint32_t>(static_cast<std::uint32_t>(ckpt.arrays.size()));
    for (const auto& a : ckpt.arrays) {
        if (a.name.size() > 0xFFFF) throw CheckpointError("array name too long: " + a.name.substr(0, 40));
        w.le<std::uint16_t>(static_cast<std::uint16_t>(a.name.size()));
        w.raw(a.name.data(), a.name.size());
        w.le<std::uint64_t>(a.values.size());
        for (float v : a.values) w.f32(v);
    }
    auto& out = w.bytes();
    const std::uint32_t crc = checksum(out.data(), out.size());
    w.le<std::uint32_t>(crc);
    return std::move(out);
}

Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0)
        throw CheckpointError("not a checkpoint file (bad magic)");
    if (bytes.size() < 12) throw CheckpointError("checkpoint truncated");
    ByteReader r(bytes.first(bytes.size() - 4));
    r.skip(4);
    const auto version = r.le<std::uint32_t>("version");
    if (version != kCheckpointVersion)
        throw CheckpointError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                              std::to_string(kCheckpointVersion) + ")");
    const std::uint8_t* tail = bytes.data() + bytes.size() - 4;
    const std::uint32_t stored = std::uint32_t(tail[0]) | (std::uint32_t(tail[1]) << 8) |
                                 (std::uint32_t(tail[2]) << 16) | (std::uint32_t(tail[3]) << 24);
    if (checksum(bytes.data(), bytes.size() - 4) != stored) throw CheckpointError("checkpoint checksum mismatch");

    Checkpoint ckpt;
    const auto meta_len = r.le<std::uint32_t>("metadata length");
    try {
        ckpt.meta = parse_key_values(r.str(meta_len, "metadata"));
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("bad checkpoint metadata: ") + e.what());
    }
    const auto count = r.le<std::uint32_t>("array count");
    for (std::uint32_t i = 0; i < count; ++i) {
        NamedArray a;
        a.name = r.str(r.le<std::uint16_t>("array name length"), "array name");
        const auto n = r.le<std::uint64_t>("array length");
        if (n > r.remaining() / 4) throw CheckpointError("checkpoint truncated in array '" + a.name + "'");
        a.values.resize(n);
        for (auto& v : a.values) {
            const auto u = r.le<std::uint32_t>("array data");
            std::memcpy(&v, &u, 4);
        }
        ckpt.arrays.push_back(std::move(a));
    }
    if (r.remaining() != 0) throw CheckpointError("trailing bytes after checkpoint arrays");
    return ckpt;
}

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt) {
    const auto bytes = serialize_checkpoint(ckpt);
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw CheckpointError("cannot write '" + tmp.string() + "'");
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw CheckpointError("write failed for '" + tmp.string() + "'");
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw CheckpointError("cannot open checkpoint '" + path.string() + "'");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    try {
        return parse_checkpoint(bytes);
    } catch (const CheckpointError& e) {
        throw CheckpointError(path.string() + ": " + e.what());
    }
}

void store_params(Checkpoint& ckpt, const std::string& prefix, const std::vector<const nn::Param<float>*>& params) {
    for (const auto* p : params) ckpt.put(prefix + p->name, p->value);
}

void store_params(Checkpoint& ckpt, const std::string& prefix, const std::vector<nn::Param<float>*>& params) {
    for (const auto* p : params) ckpt.put(prefix + p->name, p->value);
}

void restore_params(const Checkpoint& ckpt, const std::string& prefix, const std::vector<nn::Param<float>*>& params) {
    for (auto* p : params) {
        const auto& a = ckpt.get(prefix + p->name);
        if (a.values.size() != p->size())
            throw CheckpointError("array '" + a.name + "' has " + std::to_string(a.values.size()) +
                                  " values, model expects " + std::to_string(p->size()));
        p->value = a.values;
    }
}

void store_adam(Checkpoint& ckpt, const std::string& prefix, nn::Adam<float>& opt) {
    ckpt.meta[prefix + "steps"] = std::to_string(opt.steps());
    auto& m = opt.first_moments();
    auto& v = opt.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
        ckpt.put(prefix + "m." + std::to_string(i), m[i]);
        ckpt.put(prefix + "v." + std::to_string(i), v[i]);
    }
}

void restore_adam(const Checkpoint& ckpt, const std::string& prefix, nn::Adam<float>& opt) {
    auto& m = opt.first_moments();
    auto& v = opt.second_moments();
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto& am = ckpt.get(prefix + "m." + std::to_string(i));
        const auto& av = ckpt.get(prefix + "v." + std::to_string(i));
        if (am.values.size() != m[i].size() || av.values.size() != v[i].size())
            throw CheckpointError("optimizer state '" + prefix + "' does not match the model");
        m[i] = am.values;
        v[i] = av.values;
    }
    opt.set_steps(std::stoll(ckpt.meta_at(prefix + "steps")));
}

std::string format_double(double v) {
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

double parse_double(const std::string& s) {
    double v = 0.0;
    const auto r = std::from_chars(s.data(), s.data() + s.size(), v);
    if (r.ec != std::errc() || r.ptr != s.data() + s.size()) throw ConfigError("not a number: '" + s + "'");
    return v;
}

} // namespace ccodec
