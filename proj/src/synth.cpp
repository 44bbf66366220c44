#include "ccodec/synth.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <random>

#include "ccodec/errors.hpp"

namespace ccodec {

namespace {

constexpr double kPi = std::numbers::pi;

// Adult male vowel formants (F1, F2, F3) in Hz.
constexpr std::array<std::array<double, 3>, 10> kVowels{{
    {270, 2290, 3010},
    {390, 1990, 2550},
    {530, 1840, 2480},
    {660, 1720, 2410},
    {730, 1090, 2440},
    {570, 840, 2410},
    {440, 1020, 2240},
    {300, 870, 2240},
    {640, 1190, 2390},
    {490, 1350, 1690},
}};

// Two-pole resonator with unity gain at DC; coefficients may change per sample.
struct Resonator {
    double y1 = 0, y2 = 0;
    double step(double x, double freq, double bw, double fs) {
        const double r = std::exp(-kPi * bw / fs);
        const double c = 2.0 * r * std::cos(2.0 * kPi * freq / fs);
        const double g = 1.0 - c + r * r;
        const double y = g * x + c * y1 - r * r * y2;
        y2 = y1;
        y1 = y;
        return y;
    }
};

// Band-pass variant for noise shaping (peak gain about one).
struct BandPass {
    double y1 = 0, y2 = 0, x1 = 0, x2 = 0;
    double step(double x, double freq, double bw, double fs) {
        const double r = std::exp(-kPi * bw / fs);
        const double c = 2.0 * r * std::cos(2.0 * kPi * freq / fs);
        const double y = (1.0 - r) * (x - x2) + c * y1 - r * r * y2;
        x2 = x1;
        x1 = x;
        y2 = y1;
        y1 = y;
        return y;
    }
};

} // namespace

Waveform synthetic_speech(double seconds, std::uint64_t seed, Voice voice, int sample_rate) {
    if (seconds < 0 || !std::isfinite(seconds)) throw InputError("duration must be a non-negative number");
    if (sample_rate < 8000) throw ConfigError("synthetic speech needs a sample rate of at least 8 kHz");
    const double fs = sample_rate;
    const auto n = static_cast<std::size_t>(std::llround(seconds * fs));
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    std::normal_distribution<double> gauss(0.0, 1.0);

    const bool female = voice == Voice::female;
    const double base_f0 = (female ? 200.0 : 115.0) * std::exp(0.1 * gauss(rng));
    const double fscale = (female ? 1.17 : 1.0) * (1.0 + 0.03 * gauss(rng));
    const double nyq = 0.45 * fs;

    Waveform out;
    out.sample_rate = sample_rate;
    out.samples.assign(n, 0.0f);

    std::array<Resonator, 4> tract;
    BandPass fric;
    double phase = 0.0, f0 = base_f0, tilt = 0.0;
    std::array<double, 3> formant = kVowels[4];
    double phrase_pos = 0.0;
    std::size_t t = 0;

    auto emit = [&](std::size_t len, auto&& sample) {
        for (std::size_t i = 0; i < len && t < n; ++i, ++t) out.samples[t] = static_cast<float>(sample(i, len));
    };

    while (t < n) {
        // Pause or phrase break.
        if (uni(rng) < 0.12) {
            emit(static_cast<std::size_t>((0.15 + 0.25 * uni(rng)) * fs), [&](std::size_t, std::size_t) {
                return 0.002 * gauss(rng);
            });
            phrase_pos = 0.0;
        } else {
            emit(static_cast<std::size_t>(0.06 * uni(rng) * fs), [&](std::size_t, std::size_t) {
                return 0.002 * gauss(rng);
            });
        }

        // Consonant onset: fricative noise or a short burst.
        if (uni(rng) < 0.6) {
            const bool burst = uni(rng) < 0.35;
            const double fc = std::min(nyq, (burst ? 1500.0 + 2500.0 * uni(rng) : 2500.0 + 4000.0 * uni(rng)) * fscale);
            const double bw = 600.0 + 900.0 * uni(rng);
            const double amp = burst ? 0.5 : 0.15 + 0.1 * uni(rng);
            const double len = (burst ? 0.01 + 0.015 * uni(rng) : 0.04 + 0.07 * uni(rng)) * fs;
            emit(static_cast<std::size_t>(len), [&](std::size_t i, std::size_t L) {
                const double env = std::sin(kPi * (i + 0.5) / L);
                return amp * env * fric.step(gauss(rng), fc, bw, fs);
            });
        }

        // Voiced nucleus gliding from the current formants to a new vowel target.
        const auto& target = kVowels[rng() % kVowels.size()];
        const std::array<double, 3> from = formant;
        const double f0_target = base_f0 * std::exp(0.12 * gauss(rng)) * (1.0 - 0.15 * std::min(phrase_pos, 1.0));
        const double amp = 0.6 + 0.4 * uni(rng);
        const auto len = static_cast<std::size_t>((0.09 + 0.16 * uni(rng)) * fs);
        const double attack = 0.015 * fs, release = 0.025 * fs;
        emit(len, [&](std::size_t i, std::size_t L) {
            const double glide = std::min(1.0, i / (0.4 * L));
            const double w = 0.5 - 0.5 * std::cos(kPi * glide);
            for (int k = 0; k < 3; ++k) formant[k] = from[k] + w * (target[k] - from[k]);
            f0 += (f0_target - f0) * (1.0 / (0.03 * fs));
            const double f0_now = f0 * (1.0 + 0.005 * std::sin(2 * kPi * 5.5 * t / fs));

            // Band-limited impulse train (closed-form harmonic sum), then spectral tilt.
            phase += 2.0 * kPi * f0_now / fs;
            if (phase > 2.0 * kPi) phase -= 2.0 * kPi;
            const int harmonics = std::max(1, static_cast<int>(nyq / f0_now));
            const double half = 0.5 * phase;
            const double den = std::sin(half);
            const double blit = std::abs(den) < 1e-9 ? harmonics
                                                     : std::sin((harmonics + 0.5) * phase) / (2.0 * den) - 0.5;
            tilt = 0.93 * tilt + blit / harmonics;
            const double source = tilt + 0.03 * gauss(rng);

            double y = source;
            const double bws[4] = {60.0, 90.0, 120.0, 200.0};
            for (int k = 0; k < 3; ++k) y = tract[k].step(y, std::min(nyq, formant[k] * fscale), bws[k], fs);
            y = tract[3].step(y, std::min(nyq, 3500.0 * fscale), bws[3], fs);

            double env = 1.0;
            if (i < attack) env = 0.5 - 0.5 * std::cos(kPi * i / attack);
            if (L - i < release) env = std::min(env, 0.5 - 0.5 * std::cos(kPi * (L - i) / release));
            return amp * env * y;
        });
        phrase_pos += static_cast<double>(len) / fs;
    }

    // DC block, then peak-normalize to 0.9.
    double x1 = 0.0, y1 = 0.0, peak = 0.0;
    const double a = std::exp(-2.0 * kPi * 60.0 / fs);
    for (auto& v : out.samples) {
        const double y = v - x1 + a * y1;
        x1 = v;
        y1 = y;
        v = static_cast<float>(y);
        peak = std::max(peak, std::abs(y));
    }
    if (peak > 0)
        for (auto& v : out.samples) v = static_cast<float>(v * (0.9 / peak));
    return out;
}

void write_synthetic_corpus(const std::filesystem::path& dir, int files, double seconds_each, std::uint64_t seed) {
    std::filesystem::create_directories(dir);
    for (int i = 0; i < files; ++i) {
        const auto voice = i % 2 == 0 ? Voice::male : Voice::female;
        char name[32];
        std::snprintf(name, sizeof name, "synth_%03d.wav", i);
        write_wav(dir / name, synthetic_speech(seconds_each, seed * 1000003u + static_cast<std::uint64_t>(i), voice));
    }
}

} // namespace ccodec
