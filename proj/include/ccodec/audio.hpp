#pragma once

#include <filesystem>
#include <vector>

namespace ccodec {

// Mono PCM audio, float samples nominally in [-1, 1].
struct Waveform {
    int sample_rate = 16000;
    std::vector<float> samples;

    double duration() const { return sample_rate > 0 ? double(samples.size()) / sample_rate : 0.0; }
};

// Reads a RIFF/WAVE file (PCM 8/16/24/32-bit or IEEE float32). Multi-channel files
// are rejected with InputError.
Waveform read_wav(const std::filesystem::path& path);
// Writes 16-bit PCM, clipping to [-1, 1].
void write_wav(const std::filesystem::path& path, const Waveform& wav);

// Band-limited (Kaiser-windowed sinc) sample-rate conversion.
Waveform resample(const Waveform& in, int target_rate);

// Throws InputError on NaN/Inf samples.
void check_finite(const Waveform& wav);

} // namespace ccodec
