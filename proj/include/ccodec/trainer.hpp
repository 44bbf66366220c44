#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "ccodec/checkpoint.hpp"
#include "ccodec/config.hpp"
#include "ccodec/decoder.hpp"
#include "ccodec/discriminators.hpp"
#include "ccodec/encoder.hpp"
#include "ccodec/losses.hpp"
#include "ccodec/quantizer.hpp"

namespace ccodec {

struct TrainConfig {
    std::string corpus_path;
    int segment_length = 15360;   // samples; a whole number of superframes
    int batch_size = 4;           // decoder training
    int pretrain_batch_size = 8;  // encoder pretraining
    double generator_lr = 2e-4;
    double discriminator_lr = 2e-4;
    double encoder_lr = 2e-4;
    double adam_beta1 = 0.8;
    double adam_beta2 = 0.99;
    int pretrain_steps = 5000;
    int total_steps = 2000;       // decoder training steps
    int checkpoint_interval = 500;
    std::uint64_t seed = 1;
    double quant_step_multiplier = 1.0;
    int calibration_segments = 64;
    LossWeights weights;

    void validate(const CodecConfig& codec) const;
    nn::AdamConfig adam(double lr) const { return {lr, adam_beta1, adam_beta2, 1e-8}; }
    bool operator==(const TrainConfig&) const = default;
};

void to_key_values(const TrainConfig& cfg, KeyValues& kv);
TrainConfig train_config_from(const KeyValues& kv);

// Everything one key=value file can configure.
struct ExperimentConfig {
    CodecConfig codec;
    DecoderConfig decoder;
    DiscriminatorConfig disc;
    TrainConfig train;
};

ExperimentConfig experiment_config_from(const KeyValues& kv);
KeyValues to_key_values(const ExperimentConfig& cfg);
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

// ─── Corpus ──────────────────────────────────────────────────────────────────

struct SegmentDataset {
    int segment_length = 0;
    std::vector<std::vector<float>> segments;
    std::vector<std::string> warnings;

    std::size_t size() const { return segments.size(); }
    bool empty() const { return segments.empty(); }
};

// Resamples to 16 kHz, peak-normalizes each file to [-1, 1], cuts non-overlapping
// segments (the tail is dropped), then shuffles under `seed`.
SegmentDataset segment_waveforms(const std::vector<Waveform>& waves, int segment_length, std::uint64_t seed);
// Reads every .wav under `path` (a file or a directory, recursively, in sorted
// order). Unreadable files are skipped with a warning; no segments is an InputError.
SegmentDataset load_corpus(const std::filesystem::path& path, const TrainConfig& cfg);

// Epoch-wise shuffled batches. Each epoch order is a pure function of (seed, epoch).
class BatchSampler {
  public:
    BatchSampler(std::size_t dataset_size, std::uint64_t seed);
    std::vector<std::size_t> next(int batch_size);

    std::int64_t epoch() const { return epoch_; }
    std::size_t position() const { return pos_; }
    void restore(std::int64_t epoch, std::size_t position);

  private:
    void reshuffle();

    std::size_t n_;
    std::uint64_t seed_;
    std::int64_t epoch_ = 0;
    std::size_t pos_ = 0;
    std::vector<std::size_t> order_;
};

std::vector<std::vector<float>> gather(const SegmentDataset& data, const std::vector<std::size_t>& idx);

// ─── Encoder pretraining ─────────────────────────────────────────────────────

struct PretrainStep {
    std::int64_t step = 0;
    NceResult nce;
    double wall_time = 0.0;
};

struct PretrainReport {
    std::int64_t steps = 0;
    // Averages over the last min(100, steps) steps.
    double loss = 0.0;
    double accuracy_short = 0.0;
    double accuracy_long = 0.0;
};

class EncoderPretrainer {
  public:
    EncoderPretrainer(Encoder& enc, const TrainConfig& cfg, std::size_t dataset_size);
    // Throws TrainingError on a non-finite loss.
    PretrainStep step(const SegmentDataset& data);

    std::int64_t steps() const { return steps_; }
    nn::Adam<float>& optimizer() { return opt_; }
    void save_state(Checkpoint& ckpt);
    void restore_state(const Checkpoint& ckpt);

  private:
    Encoder& enc_;
    TrainConfig cfg_;
    nn::Adam<float> opt_;
    BatchSampler sampler_;
    std::mt19937_64 rng_;
    std::int64_t steps_ = 0;
    std::chrono::steady_clock::time_point start_;
};

PretrainReport pretrain_encoder(Encoder& enc, const SegmentDataset& data, const TrainConfig& cfg,
                                const std::function<void(const PretrainStep&)>& on_step = {});

// Step sizes from the median per-frame change of the unquantized codes.
QuantizerSpec calibrate_quantizer(const Encoder& enc, const SegmentDataset& data, const TrainConfig& cfg);

// ─── Decoder training ────────────────────────────────────────────────────────

struct TrainMetrics {
    std::int64_t step = 0;
    double d_loss = 0.0;
    double g_adv = 0.0;
    double cc_s = 0.0;
    double cc_l = 0.0;
    double mel = 0.0;
    double fm = 0.0;
    double total = 0.0;
    double wall_time = 0.0;

    static std::string csv_header();
    std::string csv_row() const;
    // Every field except wall_time.
    bool same_losses(const TrainMetrics& o) const;
};

// Owns a frozen copy of the encoder, the generator, the discriminators and both
// optimizers. One step = one discriminator update, then one generator update on
// quantized codes, with cognitive-coding distances against unquantized codes.
class DecoderTrainer {
  public:
    DecoderTrainer(const Encoder& encoder, const QuantizerSpec& quant, const DecoderConfig& dcfg,
                   const DiscriminatorConfig& disc, const TrainConfig& cfg, std::size_t dataset_size);

    TrainMetrics step(const SegmentDataset& data);
    TrainMetrics step_on(const std::vector<std::vector<float>>& batch);

    std::int64_t steps() const { return steps_; }
    const Encoder& encoder() const { return enc_; }
    Decoder& generator() { return gen_; }
    Discriminators<float>& discriminators() { return disc_; }
    const QuantizerSpec& quantizer() const { return quant_; }
    // crc32 over the encoder weights, fixed at construction.
    std::uint32_t encoder_fingerprint() const { return fingerprint_; }
    // Referenced in divergence errors.
    void set_last_checkpoint(std::string path) { last_checkpoint_ = std::move(path); }

    Checkpoint checkpoint(const ExperimentConfig& exp);
    void restore(const Checkpoint& ckpt);

  private:
    std::uint32_t current_fingerprint() const;

    Encoder enc_;
    QuantizerSpec quant_;
    TrainConfig cfg_;
    Decoder gen_;
    Discriminators<float> disc_;
    nn::Adam<float> opt_g_;
    nn::Adam<float> opt_d_;
    MelAnalyzer<float> mel_;
    BatchSampler sampler_;
    std::int64_t steps_ = 0;
    std::uint32_t fingerprint_ = 0;
    std::string last_checkpoint_ = "(none)";
    std::chrono::steady_clock::time_point start_;
    double elapsed_before_ = 0.0;
};

std::uint32_t weights_crc32(const std::vector<const nn::Param<float>*>& params);

// ─── Codec bundles ───────────────────────────────────────────────────────────

// Inference-side models restored from a checkpoint of any kind.
struct CodecBundle {
    CodecConfig codec;
    DecoderConfig decoder_cfg;
    QuantizerSpec quant;
    std::unique_ptr<Encoder> encoder;
    std::unique_ptr<Decoder> decoder; // null for encoder-only checkpoints
};

Checkpoint codec_checkpoint(const Encoder& enc, const Decoder* dec, const QuantizerSpec& quant,
                            const std::string& kind);
CodecBundle load_codec(const Checkpoint& ckpt);
QuantizerSpec quantizer_from(const Checkpoint& ckpt);

} // namespace ccodec
