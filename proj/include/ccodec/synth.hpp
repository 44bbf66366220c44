#pragma once

#include <cstdint>
#include <filesystem>

#include "ccodec/audio.hpp"

namespace ccodec {

enum class Voice { male, female };

// Source-filter speech-like signal: a band-limited glottal pulse train with a
// drifting pitch contour, shaped by moving formant resonators, interleaved with
// fricative noise bursts and pauses. Deterministic in (seconds, seed, voice).
Waveform synthetic_speech(double seconds, std::uint64_t seed, Voice voice, int sample_rate = 16000);

// Writes `files` WAVs of `seconds_each` into dir, alternating voices.
void write_synthetic_corpus(const std::filesystem::path& dir, int files, double seconds_each, std::uint64_t seed);

} // namespace ccodec
