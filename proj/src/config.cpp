#include "ccodec/config.hpp"

#include <functional>
#include <numeric>
#include <sstream>

#include "ccodec/errors.hpp"

namespace ccodec {

namespace {

int product(const std::vector<int>& v) {
    return std::accumulate(v.begin(), v.end(), 1, std::multiplies<>());
}

void check_stack(const std::vector<int>& filters, const std::vector<int>& strides, const char* what) {
    if (filters.size() != strides.size() || filters.empty())
        throw ConfigError(std::string(what) + ": filter and stride lists must be non-empty and equal length");
    for (std::size_t i = 0; i < filters.size(); ++i) {
        if (filters[i] <= 0 || strides[i] <= 0)
            throw ConfigError(std::string(what) + ": filter sizes and strides must be positive");
        if (filters[i] < strides[i])
            throw ConfigError(std::string(what) + ": filter size must be >= stride at layer " + std::to_string(i));
    }
}

std::string join(const std::vector<int>& v) {
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (i) s += ',';
        s += std::to_string(v[i]);
    }
    return s;
}

std::vector<int> split_ints(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ConfigError("not an integer list: '" + s + "'");
        }
    }
    return out;
}

void read_int(const KeyValues& kv, const std::string& key, int& dst) {
    if (auto it = kv.find(key); it != kv.end()) {
        try {
            std::size_t pos = 0;
            dst = std::stoi(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(key);
        } catch (const std::exception&) {
            throw ConfigError("bad integer for '" + key + "': '" + it->second + "'");
        }
    }
}

void read_ints(const KeyValues& kv, const std::string& key, std::vector<int>& dst) {
    if (auto it = kv.find(key); it != kv.end()) dst = split_ints(it->second);
}

} // namespace

void CodecConfig::validate() const {
    if (sample_rate <= 0) throw ConfigError("sample_rate must be positive");
    check_stack(lower_filter_sizes, lower_strides, "lower level");
    check_stack(upper_filter_sizes, upper_strides, "upper level");
    if (lower_hop <= 0 || upper_hop <= 0 || upper_hop % lower_hop != 0)
        throw ConfigError("upper_hop must be a positive multiple of lower_hop");
    if (product(lower_strides) != lower_hop)
        throw ConfigError("product of lower strides (" + std::to_string(product(lower_strides)) +
                          ") must equal lower_hop (" + std::to_string(lower_hop) + ")");
    if (product(upper_strides) != upper_hop / lower_hop)
        throw ConfigError("product of upper strides must equal upper_hop / lower_hop");
    if (conv_hidden <= 0 || rep_dim <= 0) throw ConfigError("conv_hidden and rep_dim must be positive");
    if (quant_bits_per_feature != 1) throw ConfigError("only single-bit quantization is supported");
    if (nce_horizon_lower <= 0 || nce_horizon_upper <= 0 || negatives_per_positive <= 0)
        throw ConfigError("NCE horizons and negatives must be positive");
}

int DecoderConfig::top_output_channels() const {
    int c = top_initial_channels;
    for (std::size_t i = 0; i < top_upsample.size(); ++i) c /= 2;
    return c;
}

void DecoderConfig::validate(const CodecConfig& codec) const {
    check_stack(top_filter_sizes, top_upsample, "decoder top stage");
    check_stack(lower_filter_sizes, lower_upsample, "decoder lower stage");
    if (product(top_upsample) != codec.frames_per_superframe())
        throw ConfigError("product of top upsample factors must equal frames per superframe");
    if (product(lower_upsample) != codec.lower_hop)
        throw ConfigError("product of lower upsample factors must equal lower_hop");
    auto halvable = [](int c, std::size_t n) {
        for (std::size_t i = 0; i < n; ++i) {
            if (c % 2 != 0 || c < 2) return false;
            c /= 2;
        }
        return true;
    };
    if (!halvable(top_initial_channels, top_upsample.size()) || !halvable(lower_initial_channels, lower_upsample.size()))
        throw ConfigError("decoder channels must halve cleanly after every upsample layer");
    if (mrf_kernels.empty() || mrf_dilations.empty() || mrf_blocks_per_kernel <= 0)
        throw ConfigError("MRF needs kernels, dilations and at least one block");
    for (int k : mrf_kernels)
        if (k <= 0) throw ConfigError("MRF kernels must be positive");
    for (int d : mrf_dilations)
        if (d <= 0) throw ConfigError("MRF dilations must be positive");
    if (lookahead_short_frames < 1) throw ConfigError("lookahead_short_frames must be >= 1");
    if (pre_kernel <= 0 || post_kernel <= 0) throw ConfigError("pre/post kernels must be positive");
}

void DiscriminatorConfig::validate() const {
    if (msd_channels.size() != msd_kernels.size() || msd_channels.size() != msd_strides.size() || msd_channels.empty())
        throw ConfigError("MSD layer lists must be non-empty and equal length");
    if (mpd_periods.empty() || mpd_channels.empty()) throw ConfigError("MPD needs periods and channels");
    for (int p : mpd_periods)
        if (p <= 0) throw ConfigError("MPD periods must be positive");
    if (mpd_kernel <= 0 || mpd_stride <= 0 || post_kernel <= 0) throw ConfigError("MPD geometry must be positive");
}

KeyValues parse_key_values(const std::string& text) {
    KeyValues kv;
    std::stringstream ss(text);
    std::string line;
    int lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        auto trim = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            const auto e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
        kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
    }
    return kv;
}

std::string format_key_values(const KeyValues& kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += k + "=" + v + "\n";
    return out;
}

void to_key_values(const CodecConfig& c, KeyValues& kv) {
    kv["codec.sample_rate"] = std::to_string(c.sample_rate);
    kv["codec.lower_filter_sizes"] = join(c.lower_filter_sizes);
    kv["codec.lower_strides"] = join(c.lower_strides);
    kv["codec.upper_filter_sizes"] = join(c.upper_filter_sizes);
    kv["codec.upper_strides"] = join(c.upper_strides);
    kv["codec.conv_hidden"] = std::to_string(c.conv_hidden);
    kv["codec.rep_dim"] = std::to_string(c.rep_dim);
    kv["codec.lower_hop"] = std::to_string(c.lower_hop);
    kv["codec.upper_hop"] = std::to_string(c.upper_hop);
    kv["codec.quant_bits_per_feature"] = std::to_string(c.quant_bits_per_feature);
    kv["codec.nce_horizon_lower"] = std::to_string(c.nce_horizon_lower);
    kv["codec.nce_horizon_upper"] = std::to_string(c.nce_horizon_upper);
    kv["codec.negatives_per_positive"] = std::to_string(c.negatives_per_positive);
}

void to_key_values(const DecoderConfig& c, KeyValues& kv) {
    kv["decoder.top_filter_sizes"] = join(c.top_filter_sizes);
    kv["decoder.top_upsample"] = join(c.top_upsample);
    kv["decoder.top_initial_channels"] = std::to_string(c.top_initial_channels);
    kv["decoder.lower_filter_sizes"] = join(c.lower_filter_sizes);
    kv["decoder.lower_upsample"] = join(c.lower_upsample);
    kv["decoder.lower_initial_channels"] = std::to_string(c.lower_initial_channels);
    kv["decoder.mrf_kernels"] = join(c.mrf_kernels);
    kv["decoder.mrf_blocks_per_kernel"] = std::to_string(c.mrf_blocks_per_kernel);
    kv["decoder.mrf_dilations"] = join(c.mrf_dilations);
    kv["decoder.lookahead_short_frames"] = std::to_string(c.lookahead_short_frames);
    kv["decoder.pre_kernel"] = std::to_string(c.pre_kernel);
    kv["decoder.post_kernel"] = std::to_string(c.post_kernel);
}

void to_key_values(const DiscriminatorConfig& c, KeyValues& kv) {
    kv["disc.msd_channels"] = join(c.msd_channels);
    kv["disc.msd_kernels"] = join(c.msd_kernels);
    kv["disc.msd_strides"] = join(c.msd_strides);
    kv["disc.mpd_periods"] = join(c.mpd_periods);
    kv["disc.mpd_channels"] = join(c.mpd_channels);
    kv["disc.mpd_kernel"] = std::to_string(c.mpd_kernel);
    kv["disc.mpd_stride"] = std::to_string(c.mpd_stride);
    kv["disc.post_kernel"] = std::to_string(c.post_kernel);
}

CodecConfig codec_config_from(const KeyValues& kv) {
    CodecConfig c;
    read_int(kv, "codec.sample_rate", c.sample_rate);
    read_ints(kv, "codec.lower_filter_sizes", c.lower_filter_sizes);
    read_ints(kv, "codec.lower_strides", c.lower_strides);
    read_ints(kv, "codec.upper_filter_sizes", c.upper_filter_sizes);
    read_ints(kv, "codec.upper_strides", c.upper_strides);
    read_int(kv, "codec.conv_hidden", c.conv_hidden);
    read_int(kv, "codec.rep_dim", c.rep_dim);
    read_int(kv, "codec.lower_hop", c.lower_hop);
    read_int(kv, "codec.upper_hop", c.upper_hop);
    read_int(kv, "codec.quant_bits_per_feature", c.quant_bits_per_feature);
    read_int(kv, "codec.nce_horizon_lower", c.nce_horizon_lower);
    read_int(kv, "codec.nce_horizon_upper", c.nce_horizon_upper);
    read_int(kv, "codec.negatives_per_positive", c.negatives_per_positive);
    return c;
}

DecoderConfig decoder_config_from(const KeyValues& kv) {
    DecoderConfig c;
    read_ints(kv, "decoder.top_filter_sizes", c.top_filter_sizes);
    read_ints(kv, "decoder.top_upsample", c.top_upsample);
    read_int(kv, "decoder.top_initial_channels", c.top_initial_channels);
    read_ints(kv, "decoder.lower_filter_sizes", c.lower_filter_sizes);
    read_ints(kv, "decoder.lower_upsample", c.lower_upsample);
    read_int(kv, "decoder.lower_initial_channels", c.lower_initial_channels);
    read_ints(kv, "decoder.mrf_kernels", c.mrf_kernels);
    read_int(kv, "decoder.mrf_blocks_per_kernel", c.mrf_blocks_per_kernel);
    read_ints(kv, "decoder.mrf_dilations", c.mrf_dilations);
    read_int(kv, "decoder.lookahead_short_frames", c.lookahead_short_frames);
    read_int(kv, "decoder.pre_kernel", c.pre_kernel);
    read_int(kv, "decoder.post_kernel", c.post_kernel);
    return c;
}

DiscriminatorConfig discriminator_config_from(const KeyValues& kv) {
    DiscriminatorConfig c;
    read_ints(kv, "disc.msd_channels", c.msd_channels);
    read_ints(kv, "disc.msd_kernels", c.msd_kernels);
    read_ints(kv, "disc.msd_strides", c.msd_strides);
    read_ints(kv, "disc.mpd_periods", c.mpd_periods);
    read_ints(kv, "disc.mpd_channels", c.mpd_channels);
    read_int(kv, "disc.mpd_kernel", c.mpd_kernel);
    read_int(kv, "disc.mpd_stride", c.mpd_stride);
    read_int(kv, "disc.post_kernel", c.post_kernel);
    return c;
}

CodecConfig tiny_codec_config() {
    CodecConfig c;
    c.conv_hidden = 16;
    c.rep_dim = 8;
    c.nce_horizon_lower = 3;
    c.nce_horizon_upper = 2;
    c.negatives_per_positive = 3;
    return c;
}

DecoderConfig tiny_decoder_config() {
    DecoderConfig d;
    d.top_initial_channels = 32;
    d.lower_initial_channels = 32;
    d.mrf_kernels = {3, 5};
    d.mrf_blocks_per_kernel = 1;
    d.mrf_dilations = {1, 3};
    d.pre_kernel = 3;
    d.post_kernel = 3;
    return d;
}

DiscriminatorConfig tiny_discriminator_config() {
    DiscriminatorConfig c;
    c.msd_channels = {4, 8, 8, 8};
    c.msd_kernels = {5, 5, 5, 5};
    c.mpd_channels = {4, 8, 8, 8, 8};
    return c;
}

} // namespace ccodec
