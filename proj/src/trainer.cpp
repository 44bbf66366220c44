#include "ccodec/trainer.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include "ccodec/errors.hpp"

namespace ccodec {

using nn::FeatureMap;

namespace {

constexpr int kCorpusRate = 16000;

template <class Int>
void read_integer(const KeyValues& kv, const std::string& key, Int& dst) {
    if (auto it = kv.find(key); it != kv.end()) {
        try {
            std::size_t pos = 0;
            const auto v = std::stoll(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument(key);
            dst = static_cast<Int>(v);
        } catch (const std::exception&) {
            throw ConfigError("bad integer for '" + key + "': '" + it->second + "'");
        }
    }
}

void read_real(const KeyValues& kv, const std::string& key, double& dst) {
    if (auto it = kv.find(key); it != kv.end()) {
        try {
            dst = parse_double(it->second);
        } catch (const ConfigError&) {
            throw ConfigError("bad number for '" + key + "': '" + it->second + "'");
        }
    }
}

std::string rng_state(const std::mt19937_64& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

void set_rng_state(std::mt19937_64& rng, const std::string& s) {
    std::istringstream is(s);
    is >> rng;
    if (!is) throw CheckpointError("corrupt random generator state");
}

void scale_grads(std::vector<DiscriminatorGrad<float>>& g, float k) {
    for (auto& b : g) {
        for (auto& v : b.score.data) v *= k;
        for (auto& f : b.features)
            for (auto& v : f.data) v *= k;
    }
}

// a += k * b, block by block; empty maps in b are skipped.
void add_scaled(std::vector<DiscriminatorGrad<float>>& a, const std::vector<DiscriminatorGrad<float>>& b, float k) {
    for (std::size_t i = 0; i < b.size(); ++i) {
        auto& dst = a[i];
        if (!b[i].score.empty()) {
            if (dst.score.empty()) dst.score = FeatureMap<float>(b[i].score.channels, b[i].score.frames);
            for (std::size_t j = 0; j < dst.score.data.size(); ++j) dst.score.data[j] += k * b[i].score.data[j];
        }
        if (dst.features.size() < b[i].features.size()) dst.features.resize(b[i].features.size());
        for (std::size_t l = 0; l < b[i].features.size(); ++l) {
            const auto& src = b[i].features[l];
            if (src.empty()) continue;
            auto& d = dst.features[l];
            if (d.empty()) d = FeatureMap<float>(src.channels, src.frames);
            for (std::size_t j = 0; j < d.data.size(); ++j) d.data[j] += k * src.data[j];
        }
    }
}

FeatureMap<float> quantized(const FeatureMap<float>& c, Level level, int hop, float step, float init) {
    const auto seq = from_feature_map(c, level, hop, hop);
    return to_feature_map(delta_encode(seq, step, init).recon);
}

} // namespace

// ─── Configuration ───────────────────────────────────────────────────────────

void TrainConfig::validate(const CodecConfig& codec) const {
    if (segment_length <= 0 || segment_length % codec.upper_hop != 0)
        throw ConfigError("segment_length must be a positive multiple of " + std::to_string(codec.upper_hop) +
                          " samples");
    if (batch_size <= 0 || pretrain_batch_size <= 0) throw ConfigError("batch sizes must be positive");
    for (double lr : {generator_lr, discriminator_lr, encoder_lr})
        if (!(lr >= 0.0) || !std::isfinite(lr)) throw ConfigError("learning rates must be finite and >= 0");
    if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0 && adam_beta2 >= 0.0 && adam_beta2 < 1.0))
        throw ConfigError("adam betas must lie in [0, 1)");
    if (pretrain_steps < 0 || total_steps < 0 || checkpoint_interval < 0 || calibration_segments <= 0)
        throw ConfigError("step counts must be non-negative");
    if (!(quant_step_multiplier > 0.0)) throw ConfigError("quant_step_multiplier must be positive");
    weights.validate();
}

void to_key_values(const TrainConfig& c, KeyValues& kv) {
    kv["train.corpus_path"] = c.corpus_path;
    kv["train.segment_length"] = std::to_string(c.segment_length);
    kv["train.batch_size"] = std::to_string(c.batch_size);
    kv["train.pretrain_batch_size"] = std::to_string(c.pretrain_batch_size);
    kv["train.generator_lr"] = format_double(c.generator_lr);
    kv["train.discriminator_lr"] = format_double(c.discriminator_lr);
    kv["train.encoder_lr"] = format_double(c.encoder_lr);
    kv["train.adam_beta1"] = format_double(c.adam_beta1);
    kv["train.adam_beta2"] = format_double(c.adam_beta2);
    kv["train.pretrain_steps"] = std::to_string(c.pretrain_steps);
    kv["train.total_steps"] = std::to_string(c.total_steps);
    kv["train.checkpoint_interval"] = std::to_string(c.checkpoint_interval);
    kv["train.seed"] = std::to_string(c.seed);
    kv["train.quant_step_multiplier"] = format_double(c.quant_step_multiplier);
    kv["train.calibration_segments"] = std::to_string(c.calibration_segments);
    kv["loss.adv"] = format_double(c.weights.adv);
    kv["loss.cc_short"] = format_double(c.weights.cc_short);
    kv["loss.cc_long"] = format_double(c.weights.cc_long);
    kv["loss.mel"] = format_double(c.weights.mel);
    kv["loss.fm"] = format_double(c.weights.fm);
}

TrainConfig train_config_from(const KeyValues& kv) {
    TrainConfig c;
    if (auto it = kv.find("train.corpus_path"); it != kv.end()) c.corpus_path = it->second;
    read_integer(kv, "train.segment_length", c.segment_length);
    read_integer(kv, "train.batch_size", c.batch_size);
    read_integer(kv, "train.pretrain_batch_size", c.pretrain_batch_size);
    read_real(kv, "train.generator_lr", c.generator_lr);
    read_real(kv, "train.discriminator_lr", c.discriminator_lr);
    read_real(kv, "train.encoder_lr", c.encoder_lr);
    read_real(kv, "train.adam_beta1", c.adam_beta1);
    read_real(kv, "train.adam_beta2", c.adam_beta2);
    read_integer(kv, "train.pretrain_steps", c.pretrain_steps);
    read_integer(kv, "train.total_steps", c.total_steps);
    read_integer(kv, "train.checkpoint_interval", c.checkpoint_interval);
    if (auto it = kv.find("train.seed"); it != kv.end()) {
        try {
            c.seed = std::stoull(it->second);
        } catch (const std::exception&) {
            throw ConfigError("bad seed: '" + it->second + "'");
        }
    }
    read_real(kv, "train.quant_step_multiplier", c.quant_step_multiplier);
    read_integer(kv, "train.calibration_segments", c.calibration_segments);
    read_real(kv, "loss.adv", c.weights.adv);
    read_real(kv, "loss.cc_short", c.weights.cc_short);
    read_real(kv, "loss.cc_long", c.weights.cc_long);
    read_real(kv, "loss.mel", c.weights.mel);
    read_real(kv, "loss.fm", c.weights.fm);
    return c;
}

ExperimentConfig experiment_config_from(const KeyValues& kv) {
    ExperimentConfig e;
    e.codec = codec_config_from(kv);
    e.decoder = decoder_config_from(kv);
    e.disc = discriminator_config_from(kv);
    e.train = train_config_from(kv);
    e.codec.validate();
    e.decoder.validate(e.codec);
    e.disc.validate();
    e.train.validate(e.codec);
    return e;
}

KeyValues to_key_values(const ExperimentConfig& cfg) {
    KeyValues kv;
    to_key_values(cfg.codec, kv);
    to_key_values(cfg.decoder, kv);
    to_key_values(cfg.disc, kv);
    to_key_values(cfg.train, kv);
    return kv;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return experiment_config_from(parse_key_values(ss.str()));
}

// ─── Corpus ──────────────────────────────────────────────────────────────────

SegmentDataset segment_waveforms(const std::vector<Waveform>& waves, int segment_length, std::uint64_t seed) {
    if (segment_length <= 0) throw ConfigError("segment_length must be positive");
    SegmentDataset ds;
    ds.segment_length = segment_length;
    for (const auto& w : waves) {
        Waveform x = w.sample_rate == kCorpusRate ? w : resample(w, kCorpusRate);
        float peak = 0.0f;
        for (float v : x.samples) peak = std::max(peak, std::abs(v));
        if (peak > 0.0f)
            for (auto& v : x.samples) v /= peak;
        const std::size_t count = x.samples.size() / static_cast<std::size_t>(segment_length);
        for (std::size_t s = 0; s < count; ++s) {
            const auto first = x.samples.begin() + static_cast<std::ptrdiff_t>(s * segment_length);
            ds.segments.emplace_back(first, first + segment_length);
        }
    }
    std::mt19937_64 rng(seed);
    std::shuffle(ds.segments.begin(), ds.segments.end(), rng);
    return ds;
}

SegmentDataset load_corpus(const std::filesystem::path& path, const TrainConfig& cfg) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw InputError("corpus path '" + path.string() + "' does not exist");
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& e : fs::recursive_directory_iterator(path)) {
            if (!e.is_regular_file()) continue;
            auto ext = e.path().extension().string();
            std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
            if (ext == ".wav") files.push_back(e.path());
        }
        std::sort(files.begin(), files.end());
    } else {
        files.push_back(path);
    }
    std::vector<Waveform> waves;
    std::vector<std::string> warnings;
    for (const auto& f : files) {
        try {
            auto w = read_wav(f);
            check_finite(w);
            waves.push_back(std::move(w));
        } catch (const Error& e) {
            warnings.push_back("skipping " + f.string() + ": " + e.what());
        }
    }
    auto ds = segment_waveforms(waves, cfg.segment_length, cfg.seed);
    ds.warnings = std::move(warnings);
    if (ds.empty())
        throw InputError("corpus '" + path.string() + "' yields no segments of " + std::to_string(cfg.segment_length) +
                         " samples (" + std::to_string(files.size()) + " wav files found)");
    return ds;
}

BatchSampler::BatchSampler(std::size_t dataset_size, std::uint64_t seed) : n_(dataset_size), seed_(seed) {
    reshuffle();
}

void BatchSampler::reshuffle() {
    order_.resize(n_);
    std::iota(order_.begin(), order_.end(), std::size_t{0});
    std::mt19937_64 rng(seed_ * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(epoch_));
    std::shuffle(order_.begin(), order_.end(), rng);
}

std::vector<std::size_t> BatchSampler::next(int batch_size) {
    if (n_ == 0) throw InputError("cannot sample from an empty dataset");
    std::vector<std::size_t> out;
    for (int i = 0; i < batch_size; ++i) {
        if (pos_ == n_) {
            ++epoch_;
            pos_ = 0;
            reshuffle();
        }
        out.push_back(order_[pos_++]);
    }
    return out;
}

void BatchSampler::restore(std::int64_t epoch, std::size_t position) {
    if (position > n_) throw CheckpointError("sampler position beyond dataset size");
    epoch_ = epoch;
    pos_ = position;
    reshuffle();
}

std::vector<std::vector<float>> gather(const SegmentDataset& data, const std::vector<std::size_t>& idx) {
    std::vector<std::vector<float>> out;
    out.reserve(idx.size());
    for (auto i : idx) out.push_back(data.segments.at(i));
    return out;
}

// ─── Encoder pretraining ─────────────────────────────────────────────────────

EncoderPretrainer::EncoderPretrainer(Encoder& enc, const TrainConfig& cfg, std::size_t dataset_size)
    : enc_(enc), cfg_(cfg), opt_(enc.params(), cfg.adam(cfg.encoder_lr)), sampler_(dataset_size, cfg.seed),
      rng_(cfg.seed + 17), start_(std::chrono::steady_clock::now()) {
    cfg_.validate(enc.config());
}

PretrainStep EncoderPretrainer::step(const SegmentDataset& data) {
    const auto batch = gather(data, sampler_.next(cfg_.pretrain_batch_size));
    PretrainStep s;
    try {
        s.nce = nce_pretrain_step(enc_, opt_, batch, rng_);
    } catch (const TrainingError& e) {
        throw TrainingError("pretraining diverged at step " + std::to_string(steps_ + 1) + ": " + e.what());
    }
    s.step = ++steps_;
    s.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return s;
}

void EncoderPretrainer::save_state(Checkpoint& ckpt) {
    store_adam(ckpt, "opt.e.", opt_);
    ckpt.meta["pretrain.step"] = std::to_string(steps_);
    ckpt.meta["pretrain.epoch"] = std::to_string(sampler_.epoch());
    ckpt.meta["pretrain.position"] = std::to_string(sampler_.position());
    ckpt.meta["pretrain.rng"] = rng_state(rng_);
}

void EncoderPretrainer::restore_state(const Checkpoint& ckpt) {
    restore_adam(ckpt, "opt.e.", opt_);
    steps_ = std::stoll(ckpt.meta_at("pretrain.step"));
    sampler_.restore(std::stoll(ckpt.meta_at("pretrain.epoch")), std::stoull(ckpt.meta_at("pretrain.position")));
    set_rng_state(rng_, ckpt.meta_at("pretrain.rng"));
}

PretrainReport pretrain_encoder(Encoder& enc, const SegmentDataset& data, const TrainConfig& cfg,
                                const std::function<void(const PretrainStep&)>& on_step) {
    if (data.empty()) throw InputError("pretraining needs a non-empty dataset");
    if (data.segment_length < nce_min_segment(enc.config()))
        throw InputError("pretraining segments of " + std::to_string(data.segment_length) +
                         " samples are shorter than the " + std::to_string(nce_min_segment(enc.config())) +
                         " the contrastive horizons need");
    EncoderPretrainer trainer(enc, cfg, data.size());
    std::vector<NceResult> recent;
    for (int i = 0; i < cfg.pretrain_steps; ++i) {
        const auto s = trainer.step(data);
        recent.push_back(s.nce);
        if (recent.size() > 100) recent.erase(recent.begin());
        if (on_step) on_step(s);
    }
    PretrainReport r;
    r.steps = trainer.steps();
    for (const auto& n : recent) {
        r.loss += n.loss / recent.size();
        r.accuracy_short += n.accuracy_lower / recent.size();
        r.accuracy_long += n.accuracy_upper / recent.size();
    }
    return r;
}

QuantizerSpec calibrate_quantizer(const Encoder& enc, const SegmentDataset& data, const TrainConfig& cfg) {
    const auto& c = enc.config();
    std::vector<RepresentationSequence> shorts, longs;
    const std::size_t n = std::min<std::size_t>(data.size(), static_cast<std::size_t>(cfg.calibration_segments));
    for (std::size_t i = 0; i < n; ++i) {
        const auto tr = enc.forward(std::span<const float>(data.segments[i]), false);
        shorts.push_back(from_feature_map(tr.c_short, Level::short_term, c.lower_hop, c.lower_hop));
        longs.push_back(from_feature_map(tr.c_long, Level::long_term, c.upper_hop, c.upper_hop));
    }
    return calibrate_steps(shorts, longs, cfg.quant_step_multiplier);
}

// ─── Decoder training ────────────────────────────────────────────────────────

std::string TrainMetrics::csv_header() {
    return "step,d_loss,g_adv,cc_s,cc_l,mel,fm,total,wall_time";
}

std::string TrainMetrics::csv_row() const {
    return std::to_string(step) + "," + format_double(d_loss) + "," + format_double(g_adv) + "," +
           format_double(cc_s) + "," + format_double(cc_l) + "," + format_double(mel) + "," + format_double(fm) +
           "," + format_double(total) + "," + format_double(wall_time);
}

bool TrainMetrics::same_losses(const TrainMetrics& o) const {
    return step == o.step && d_loss == o.d_loss && g_adv == o.g_adv && cc_s == o.cc_s && cc_l == o.cc_l &&
           mel == o.mel && fm == o.fm && total == o.total;
}

std::uint32_t weights_crc32(const std::vector<const nn::Param<float>*>& params) {
    uLong crc = crc32(0L, Z_NULL, 0);
    for (const auto* p : params)
        crc = crc32(crc, reinterpret_cast<const Bytef*>(p->value.data()), static_cast<uInt>(p->value.size() * 4));
    return static_cast<std::uint32_t>(crc);
}

DecoderTrainer::DecoderTrainer(const Encoder& encoder, const QuantizerSpec& quant, const DecoderConfig& dcfg,
                               const DiscriminatorConfig& disc, const TrainConfig& cfg, std::size_t dataset_size)
    : enc_(encoder), quant_(quant), cfg_(cfg), gen_(encoder.config(), dcfg, cfg.seed + 1), disc_(disc, cfg.seed + 2),
      opt_g_(gen_.params(), cfg.adam(cfg.generator_lr)), opt_d_(disc_.params(), cfg.adam(cfg.discriminator_lr)),
      sampler_(dataset_size, cfg.seed + 3), start_(std::chrono::steady_clock::now()) {
    cfg_.validate(enc_.config());
    quant_.validate();
    if (cfg_.segment_length < disc_.min_length())
        throw ConfigError("segment_length is shorter than the discriminators' minimum input");
    fingerprint_ = current_fingerprint();
}

std::uint32_t DecoderTrainer::current_fingerprint() const {
    return weights_crc32(enc_.params());
}

TrainMetrics DecoderTrainer::step(const SegmentDataset& data) {
    return step_on(gather(data, sampler_.next(cfg_.batch_size)));
}

TrainMetrics DecoderTrainer::step_on(const std::vector<std::vector<float>>& batch) {
    if (batch.empty()) throw InputError("empty training batch");
    const auto& c = enc_.config();
    const auto& w = cfg_.weights;
    const std::size_t B = batch.size();
    const float inv_b = 1.0f / static_cast<float>(B);

    struct Item {
        FeatureMap<float> ref_short, ref_long;
        GeneratorTrace<float> gtrace;
        std::vector<float> x_hat;
    };
    std::vector<Item> items(B);
    for (std::size_t b = 0; b < B; ++b) {
        const auto& x = batch[b];
        if (x.size() != static_cast<std::size_t>(cfg_.segment_length))
            throw InputError("training segment has " + std::to_string(x.size()) + " samples, expected " +
                             std::to_string(cfg_.segment_length));
        for (float v : x)
            if (!std::isfinite(v)) throw InputError("training segment contains non-finite samples");
        auto& it = items[b];
        const auto tr = enc_.forward(std::span<const float>(x), false);
        it.ref_short = tr.c_short;
        it.ref_long = tr.c_long;
        const auto qs = quantized(tr.c_short, Level::short_term, c.lower_hop, quant_.step_short, quant_.init_value);
        const auto ql = quantized(tr.c_long, Level::long_term, c.upper_hop, quant_.step_long, quant_.init_value);
        const auto out = gen_.forward(ql, qs, &it.gtrace);
        it.x_hat = out.data;
        for (float v : it.x_hat)
            if (!std::isfinite(v))
                throw TrainingError("generator output is not finite at step " + std::to_string(steps_ + 1) +
                                    "; last good checkpoint: " + last_checkpoint_);
    }

    TrainMetrics m;
    m.step = steps_ + 1;

    // Discriminator update on detached generator output.
    opt_d_.zero_grad();
    for (std::size_t b = 0; b < B; ++b) {
        DiscriminatorTrace<float> tr_real, tr_fake;
        const auto real = disc_.forward(batch[b], &tr_real);
        const auto fake = disc_.forward(items[b].x_hat, &tr_fake);
        std::vector<DiscriminatorGrad<float>> g_real, g_fake;
        m.d_loss += lsgan_d_loss(real, fake, &g_real, &g_fake) / B;
        scale_grads(g_real, inv_b);
        scale_grads(g_fake, inv_b);
        disc_.backward(tr_real, g_real, false, true);
        disc_.backward(tr_fake, g_fake, false, true);
    }
    if (!std::isfinite(m.d_loss))
        throw TrainingError("discriminator loss is not finite at step " + std::to_string(m.step) +
                            "; last good checkpoint: " + last_checkpoint_);
    opt_d_.step();

    // Generator update through the refreshed discriminators.
    opt_g_.zero_grad();
    for (std::size_t b = 0; b < B; ++b) {
        auto& it = items[b];
        const auto& x = batch[b];
        DiscriminatorTrace<float> tr_fake;
        const auto fake = disc_.forward(it.x_hat, &tr_fake);
        const auto real = disc_.forward(x);
        std::vector<DiscriminatorGrad<float>> g_adv, g_fm, g;
        const double adv = lsgan_g_loss(fake, &g_adv);
        const double fm = feature_matching(real, fake, &g_fm);
        g.assign(fake.size(), {});
        add_scaled(g, g_adv, static_cast<float>(w.adv) * inv_b);
        add_scaled(g, g_fm, static_cast<float>(w.fm) * inv_b);
        auto dx = disc_.backward(tr_fake, g, true, false);

        std::vector<float> g_mel;
        const double mel = mel_.distance(x, it.x_hat, &g_mel);
        const float k_mel = static_cast<float>(w.mel) * inv_b;
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += k_mel * g_mel[i];

        const auto cc = cc_distances<float>(enc_, it.ref_short, it.ref_long, it.x_hat, w.cc_short * inv_b,
                                            w.cc_long * inv_b, true);
        for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += cc.grad[i];

        FeatureMap<float> dout(1, static_cast<int>(dx.size()));
        dout.data = std::move(dx);
        gen_.backward(it.gtrace, dout);

        m.g_adv += adv / B;
        m.fm += fm / B;
        m.mel += mel / B;
        m.cc_s += cc.short_term / B;
        m.cc_l += cc.long_term / B;
    }
    m.total = total_generator_loss(m.g_adv, m.cc_s, m.cc_l, m.mel, m.fm, w);
    if (!std::isfinite(m.total))
        throw TrainingError("generator loss is not finite at step " + std::to_string(m.step) +
                            "; last good checkpoint: " + last_checkpoint_);
    opt_g_.step();

    if (current_fingerprint() != fingerprint_)
        throw TrainingError("encoder weights changed during decoder training at step " + std::to_string(m.step));
    steps_ = m.step;
    m.wall_time = elapsed_before_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
    return m;
}

Checkpoint DecoderTrainer::checkpoint(const ExperimentConfig& exp) {
    Checkpoint ck = codec_checkpoint(enc_, &gen_, quant_, "train");
    for (const auto& [k, v] : to_key_values(exp)) ck.meta.emplace(k, v);
    to_key_values(cfg_, ck.meta);
    to_key_values(disc_.config(), ck.meta);
    store_params(ck, "disc.", disc_.params());
    store_adam(ck, "opt.g.", opt_g_);
    store_adam(ck, "opt.d.", opt_d_);
    ck.meta["train.step"] = std::to_string(steps_);
    ck.meta["train.epoch"] = std::to_string(sampler_.epoch());
    ck.meta["train.position"] = std::to_string(sampler_.position());
    ck.meta["train.elapsed"] =
        format_double(elapsed_before_ + std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count());
    return ck;
}

void DecoderTrainer::restore(const Checkpoint& ckpt) {
    if (ckpt.meta_or("kind", "") != "train") throw CheckpointError("not a training checkpoint");
    if (codec_config_from(ckpt.meta) != enc_.config() || decoder_config_from(ckpt.meta) != gen_.config() ||
        discriminator_config_from(ckpt.meta) != disc_.config())
        throw CheckpointError("checkpoint model configuration does not match the trainer");
    restore_params(ckpt, "encoder.", enc_.params());
    restore_params(ckpt, "decoder.", gen_.params());
    restore_params(ckpt, "disc.", disc_.params());
    restore_adam(ckpt, "opt.g.", opt_g_);
    restore_adam(ckpt, "opt.d.", opt_d_);
    quant_ = quantizer_from(ckpt);
    steps_ = std::stoll(ckpt.meta_at("train.step"));
    sampler_.restore(std::stoll(ckpt.meta_at("train.epoch")), std::stoull(ckpt.meta_at("train.position")));
    elapsed_before_ = parse_double(ckpt.meta_or("train.elapsed", "0"));
    start_ = std::chrono::steady_clock::now();
    fingerprint_ = current_fingerprint();
}

// ─── Codec bundles ───────────────────────────────────────────────────────────

Checkpoint codec_checkpoint(const Encoder& enc, const Decoder* dec, const QuantizerSpec& quant,
                            const std::string& kind) {
    Checkpoint ck;
    ck.meta["kind"] = kind;
    to_key_values(enc.config(), ck.meta);
    ck.meta["quant.step_short"] = format_double(quant.step_short);
    ck.meta["quant.step_long"] = format_double(quant.step_long);
    ck.meta["quant.init_value"] = format_double(quant.init_value);
    store_params(ck, "encoder.", enc.params());
    if (dec) {
        to_key_values(dec->config(), ck.meta);
        store_params(ck, "decoder.", dec->params());
    }
    return ck;
}

QuantizerSpec quantizer_from(const Checkpoint& ckpt) {
    QuantizerSpec q;
    try {
        q.step_short = static_cast<float>(parse_double(ckpt.meta_at("quant.step_short")));
        q.step_long = static_cast<float>(parse_double(ckpt.meta_at("quant.step_long")));
        q.init_value = static_cast<float>(parse_double(ckpt.meta_or("quant.init_value", "0")));
        q.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("bad quantizer metadata: ") + e.what());
    }
    return q;
}

CodecBundle load_codec(const Checkpoint& ckpt) {
    CodecBundle b;
    try {
        b.codec = codec_config_from(ckpt.meta);
        b.codec.validate();
    } catch (const ConfigError& e) {
        throw CheckpointError(std::string("bad codec configuration in checkpoint: ") + e.what());
    }
    b.quant = quantizer_from(ckpt);
    b.encoder = std::make_unique<Encoder>(b.codec);
    restore_params(ckpt, "encoder.", b.encoder->params());
    const bool has_decoder = std::any_of(ckpt.arrays.begin(), ckpt.arrays.end(),
                                         [](const NamedArray& a) { return a.name.rfind("decoder.", 0) == 0; });
    if (has_decoder) {
        try {
            b.decoder_cfg = decoder_config_from(ckpt.meta);
            b.decoder_cfg.validate(b.codec);
        } catch (const ConfigError& e) {
            throw CheckpointError(std::string("bad decoder configuration in checkpoint: ") + e.what());
        }
        b.decoder = std::make_unique<Decoder>(b.codec, b.decoder_cfg);
        restore_params(ckpt, "decoder.", b.decoder->params());
    }
    return b;
}

} // namespace ccodec
