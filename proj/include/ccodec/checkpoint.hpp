#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "ccodec/config.hpp"
#include "ccodec/nn.hpp"

namespace ccodec {

// Binary layout (little-endian):
//   "CCKP" | u32 version | u32 meta bytes | meta (key=value text)
//   | u32 array count | per array: u16 name bytes, name, u64 count, f32 x count
//   | u32 crc32 of everything before it
inline constexpr char kCheckpointMagic[4] = {'C', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedArray {
    std::string name;
    std::vector<float> values;

    bool operator==(const NamedArray&) const = default;
};

struct Checkpoint {
    KeyValues meta;
    std::vector<NamedArray> arrays;

    bool has(const std::string& name) const;
    // Throws CheckpointError when missing.
    const NamedArray& get(const std::string& name) const;
    void put(std::string name, std::vector<float> values);

    std::string meta_or(const std::string& key, const std::string& fallback) const;
    // Throws CheckpointError when missing.
    const std::string& meta_at(const std::string& key) const;

    bool operator==(const Checkpoint&) const = default;
};

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
// Throws CheckpointError on bad magic, version mismatch, truncation or checksum failure.
Checkpoint parse_checkpoint(std::span<const std::uint8_t> bytes);

// Writes through a temporary file and renames it into place.
void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Parameters are stored as "<prefix><param name>".
void store_params(Checkpoint& ckpt, const std::string& prefix, const std::vector<const nn::Param<float>*>& params);
void store_params(Checkpoint& ckpt, const std::string& prefix, const std::vector<nn::Param<float>*>& params);
// Throws CheckpointError on a missing array or size mismatch.
void restore_params(const Checkpoint& ckpt, const std::string& prefix, const std::vector<nn::Param<float>*>& params);

void store_adam(Checkpoint& ckpt, const std::string& prefix, nn::Adam<float>& opt);
void restore_adam(const Checkpoint& ckpt, const std::string& prefix, nn::Adam<float>& opt);

// Round-trip exact text forms for metadata.
std::string format_double(double v);
double parse_double(const std::string& s);

} // namespace ccodec
