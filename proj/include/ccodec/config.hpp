#pragma once

#include <map>
#include <string>
#include <vector>

namespace ccodec {

// Encoder + quantizer hyperparameters. Defaults are the reference codec.
struct CodecConfig {
    int sample_rate = 16000;
    std::vector<int> lower_filter_sizes{10, 8, 4, 4, 4};
    std::vector<int> lower_strides{5, 4, 2, 2, 2};
    std::vector<int> upper_filter_sizes{4, 4, 4};
    std::vector<int> upper_strides{2, 2, 2};
    int conv_hidden = 512;
    int rep_dim = 64;
    int lower_hop = 160;   // samples per short-term frame (10 ms)
    int upper_hop = 1280;  // samples per long-term frame (80 ms)
    int quant_bits_per_feature = 1;
    int nce_horizon_lower = 12;
    int nce_horizon_upper = 4;
    int negatives_per_positive = 7;

    // Short-term frames per long-term frame.
    int frames_per_superframe() const { return upper_hop / lower_hop; }
    // Throws ConfigError on a structurally invalid configuration.
    void validate() const;
    // True when the widths match the reference codec (512 hidden, 64-dim codes).
    bool is_reference_width() const { return conv_hidden == 512 && rep_dim == 64; }

    bool operator==(const CodecConfig&) const = default;
};

struct DecoderConfig {
    std::vector<int> top_filter_sizes{4, 4, 4};
    std::vector<int> top_upsample{2, 2, 2};
    int top_initial_channels = 256;
    std::vector<int> lower_filter_sizes{10, 8, 8, 4};
    std::vector<int> lower_upsample{5, 4, 4, 2};
    int lower_initial_channels = 128;
    std::vector<int> mrf_kernels{3, 7, 11};
    int mrf_blocks_per_kernel = 3;
    std::vector<int> mrf_dilations{1, 3, 5};
    int lookahead_short_frames = 2;
    int pre_kernel = 7;
    int post_kernel = 7;

    // Channels after the top stage (initial / 2^layers).
    int top_output_channels() const;
    void validate(const CodecConfig& codec) const;

    bool operator==(const DecoderConfig&) const = default;
};

// Concrete discriminator widths (reduced from the public MelGAN/HiFi-GAN sizes).
struct DiscriminatorConfig {
    std::vector<int> msd_channels{16, 32, 64, 128};
    std::vector<int> msd_kernels{15, 21, 21, 21};
    std::vector<int> msd_strides{2, 4, 4, 4};
    std::vector<int> mpd_periods{2, 3, 5, 7, 11};
    std::vector<int> mpd_channels{16, 32, 64, 128, 128};
    int mpd_kernel = 5;
    int mpd_stride = 3;
    int post_kernel = 3;

    void validate() const;
    bool operator==(const DiscriminatorConfig&) const = default;
};

// key=value text used by config files and checkpoint snapshots.
using KeyValues = std::map<std::string, std::string>;

KeyValues parse_key_values(const std::string& text);
std::string format_key_values(const KeyValues& kv);

void to_key_values(const CodecConfig& cfg, KeyValues& kv);
void to_key_values(const DecoderConfig& cfg, KeyValues& kv);
void to_key_values(const DiscriminatorConfig& cfg, KeyValues& kv);
// Unknown keys are ignored; missing keys keep their defaults.
CodecConfig codec_config_from(const KeyValues& kv);
DecoderConfig decoder_config_from(const KeyValues& kv);
DiscriminatorConfig discriminator_config_from(const KeyValues& kv);

// A small codec for tests and quick experiments (same strides, narrow widths).
CodecConfig tiny_codec_config();
DecoderConfig tiny_decoder_config();
DiscriminatorConfig tiny_discriminator_config();

} // namespace ccodec
