#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numbers>
#include <set>

#include "ccodec/errors.hpp"
#include "ccodec/synth.hpp"
#include "ccodec/trainer.hpp"
#include "test_util.hpp"

using namespace ccodec;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("ccodec_" + tag + "_" + std::to_string(::getpid()));
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

Waveform sine(double freq, double seconds, int rate, double amp = 0.5) {
    Waveform w;
    w.sample_rate = rate;
    w.samples.resize(static_cast<std::size_t>(std::llround(seconds * rate)));
    for (std::size_t i = 0; i < w.samples.size(); ++i)
        w.samples[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * i / rate));
    return w;
}

TrainConfig tiny_train() {
    TrainConfig t;
    t.segment_length = 2560;
    t.batch_size = 2;
    t.pretrain_batch_size = 2;
    t.seed = 5;
    t.calibration_segments = 4;
    return t;
}

// Long enough for the upper NCE horizon.
TrainConfig tiny_pretrain() {
    auto t = tiny_train();
    t.segment_length = 7680;
    return t;
}

SegmentDataset tiny_dataset(const TrainConfig& t) {
    std::vector<Waveform> w{synthetic_speech(1.0, 1, Voice::male), synthetic_speech(1.0, 2, Voice::female)};
    return segment_waveforms(w, t.segment_length, t.seed);
}

template <class P>
std::vector<std::vector<float>> weights_of(const std::vector<P*>& ps) {
    std::vector<std::vector<float>> out;
    for (const auto* p : ps) out.push_back(p->value);
    return out;
}

} // namespace

TEST_CASE("train config key=value round trip and validation") {
    TrainConfig t;
    t.corpus_path = "/data/x";
    t.generator_lr = 1.2345678901234e-4;
    t.seed = 18446744073709551615ull;
    t.weights.mel = 45.0;
    KeyValues kv;
    to_key_values(t, kv);
    CHECK(train_config_from(parse_key_values(format_key_values(kv))) == t);

    const CodecConfig c;
    CHECK_NOTHROW(TrainConfig{}.validate(c));
    TrainConfig bad;
    bad.segment_length = 16000;
    CHECK_THROWS_AS(bad.validate(c), ConfigError);
    CHECK_THROWS_AS(train_config_from({{"train.batch_size", "four"}}), ConfigError);

    ExperimentConfig e;
    e.codec = tiny_codec_config();
    e.train = tiny_train();
    CHECK(experiment_config_from(to_key_values(e)).train == e.train);
    CHECK(experiment_config_from(to_key_values(e)).codec == e.codec);
}

TEST_CASE("corpus segmentation arithmetic") {
    TempDir dir("corpus");
    for (int i = 0; i < 3; ++i) write_wav(dir.path / ("f" + std::to_string(i) + ".wav"), sine(200.0 + 50 * i, 10.0, 16000));
    TrainConfig t;
    t.segment_length = 16000;
    const auto ds = load_corpus(dir.path, t);
    CHECK(ds.size() == 30);
    CHECK(ds.warnings.empty());
    for (const auto& s : ds.segments) CHECK(s.size() == 16000u);

    // Peak normalization to one.
    float peak = 0;
    for (float v : ds.segments[0]) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(1.0).epsilon(1e-3));

    // Seeded shuffle.
    CHECK(load_corpus(dir.path, t).segments == ds.segments);
    t.seed = 99;
    CHECK(load_corpus(dir.path, t).segments != ds.segments);

    // Unreadable files are skipped with a warning.
    std::ofstream(dir.path / "junk.wav") << "not audio";
    const auto ds2 = load_corpus(dir.path, t);
    CHECK(ds2.size() == 30);
    CHECK(ds2.warnings.size() == 1);
}

TEST_CASE("empty or missing corpus is an error") {
    TempDir dir("empty");
    CHECK_THROWS_AS(load_corpus(dir.path, TrainConfig{}), InputError);
    CHECK_THROWS_AS(load_corpus(dir.path / "nope", TrainConfig{}), InputError);
}

TEST_CASE("48 kHz input is resampled with duration preserved") {
    TempDir dir("resample");
    const auto hi = sine(440.0, 3.2, 48000, 0.8);
    write_wav(dir.path / "hi.wav", hi);
    const auto low = resample(read_wav(dir.path / "hi.wav"), 16000);
    CHECK(std::abs(static_cast<long>(low.samples.size()) - 51200) <= 1);
    // Oracle: the same sine sampled directly at 16 kHz, away from the edges.
    const auto ref = sine(440.0, 3.2, 16000, 0.8);
    double worst = 0;
    for (std::size_t i = 1000; i + 1000 < ref.samples.size(); ++i)
        worst = std::max(worst, double(std::abs(low.samples[i] - ref.samples[i])));
    CHECK(worst < 2e-3);

    TrainConfig t;
    t.segment_length = 1280;
    CHECK(load_corpus(dir.path, t).size() == 40);
}

TEST_CASE("batch sampler visits every segment once per epoch and restores") {
    BatchSampler s(10, 3);
    std::multiset<std::size_t> seen;
    for (int i = 0; i < 5; ++i)
        for (auto k : s.next(2)) seen.insert(k);
    CHECK(seen.size() == 10);
    CHECK(std::set<std::size_t>(seen.begin(), seen.end()).size() == 10);

    const auto a = s.next(3);
    BatchSampler r(10, 3);
    r.restore(s.epoch(), s.position());
    const auto b1 = s.next(7), b2 = r.next(7);
    CHECK(b1 == b2);
    CHECK(a.size() == 3);
}

TEST_CASE("checkpoint container round trip and corruption") {
    Checkpoint c;
    c.meta["kind"] = "test";
    c.meta["x"] = format_double(0.1);
    c.put("a", {1.0f, -2.5f, std::numeric_limits<float>::denorm_min()});
    c.put("b", {});
    const auto bytes = serialize_checkpoint(c);
    CHECK(parse_checkpoint(bytes) == c);
    CHECK(parse_double(parse_checkpoint(bytes).meta.at("x")) == 0.1);

    auto flip = bytes;
    flip[flip.size() / 2] ^= 0x10;
    CHECK_THROWS_AS(parse_checkpoint(flip), CheckpointError);

    auto ver = bytes;
    ver[4] = 7;
    try {
        parse_checkpoint(ver);
        FAIL("expected error");
    } catch (const CheckpointError& e) {
        CHECK(std::string(e.what()).find("version") != std::string::npos);
    }
    CHECK_THROWS_AS(parse_checkpoint(std::vector<std::uint8_t>(bytes.begin(), bytes.end() - 9)), CheckpointError);
    CHECK_THROWS_AS(parse_checkpoint(std::vector<std::uint8_t>{'R', 'I', 'F', 'F'}), CheckpointError);
    CHECK_THROWS_AS(c.get("missing"), CheckpointError);

    TempDir dir("ckpt");
    save_checkpoint(dir.path / "c.ckpt", c);
    CHECK(load_checkpoint(dir.path / "c.ckpt") == c);
    CHECK_THROWS_AS(load_checkpoint(dir.path / "none.ckpt"), CheckpointError);
}

TEST_CASE("codec checkpoints restore encoder, decoder and quantizer") {
    const auto cc = tiny_codec_config();
    const Encoder enc(cc, 3);
    const Decoder dec(cc, tiny_decoder_config(), 4);
    const QuantizerSpec q{0.0123f, 0.0456f, 0.0f};
    const auto b = load_codec(parse_checkpoint(serialize_checkpoint(codec_checkpoint(enc, &dec, q, "codec"))));
    CHECK(b.codec == cc);
    CHECK(b.quant == q);
    REQUIRE(b.decoder);
    CHECK(weights_of(b.encoder->params()) == weights_of(enc.params()));
    CHECK(weights_of(b.decoder->params()) == weights_of(dec.params()));

    const auto enc_only = load_codec(codec_checkpoint(enc, nullptr, q, "encoder"));
    CHECK_FALSE(enc_only.decoder);

    auto ck = codec_checkpoint(enc, nullptr, q, "encoder");
    ck.arrays.front().values.pop_back();
    CHECK_THROWS_AS(load_codec(ck), CheckpointError);
}

TEST_CASE("pretraining: zero steps keep init, fixed seed is reproducible") {
    const auto t = tiny_pretrain();
    const auto ds = tiny_dataset(t);
    auto cfg = tiny_codec_config();

    Encoder a(cfg, 9), init(cfg, 9);
    auto t0 = t;
    t0.pretrain_steps = 0;
    pretrain_encoder(a, ds, t0);
    CHECK(weights_of(a.params()) == weights_of(init.params()));

    auto t3 = t;
    t3.pretrain_steps = 3;
    Encoder b(cfg, 9), c(cfg, 9);
    const auto rb = pretrain_encoder(b, ds, t3);
    const auto rc = pretrain_encoder(c, ds, t3);
    CHECK(rb.steps == 3);
    CHECK(weights_of(b.params()) == weights_of(c.params()));
    CHECK(weights_of(b.params()) != weights_of(init.params()));
    CHECK(rb.loss == rc.loss);
    CHECK_THROWS_AS(pretrain_encoder(b, SegmentDataset{}, t3), InputError);
    CHECK_THROWS_AS(pretrain_encoder(b, tiny_dataset(tiny_train()), t3), InputError);
}

TEST_CASE("pretraining state resumes bit-identically") {
    const auto t = tiny_pretrain();
    const auto ds = tiny_dataset(t);
    auto cfg = tiny_codec_config();
    Encoder a(cfg, 2);
    EncoderPretrainer pa(a, t, ds.size());
    pa.step(ds);
    Checkpoint ck = codec_checkpoint(a, nullptr, QuantizerSpec{}, "pretrain");
    pa.save_state(ck);
    ck = parse_checkpoint(serialize_checkpoint(ck));
    const auto next_a = pa.step(ds);

    auto bundle = load_codec(ck);
    EncoderPretrainer pb(*bundle.encoder, t, ds.size());
    pb.restore_state(ck);
    const auto next_b = pb.step(ds);
    CHECK(next_a.step == next_b.step);
    CHECK(next_a.nce.loss == next_b.nce.loss);
    CHECK(weights_of(a.params()) == weights_of(bundle.encoder->params()));
}

TEST_CASE("calibration matches a direct median oracle") {
    const auto t = tiny_train();
    const auto ds = tiny_dataset(t);
    const Encoder enc(tiny_codec_config(), 4);
    const auto q = calibrate_quantizer(enc, ds, t);
    std::vector<double> ds_short, ds_long;
    for (int i = 0; i < t.calibration_segments; ++i) {
        const auto tr = enc.forward(std::span<const float>(ds.segments[i]), false);
        for (int c = 0; c < tr.c_short.channels; ++c)
            for (int f = 1; f < tr.c_short.frames; ++f)
                ds_short.push_back(std::abs(double(tr.c_short.at(c, f)) - tr.c_short.at(c, f - 1)));
        for (int c = 0; c < tr.c_long.channels; ++c)
            for (int f = 1; f < tr.c_long.frames; ++f)
                ds_long.push_back(std::abs(double(tr.c_long.at(c, f)) - tr.c_long.at(c, f - 1)));
    }
    auto median = [](std::vector<double> v) {
        std::sort(v.begin(), v.end());
        const auto n = v.size();
        return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
    };
    CHECK(q.step_short == doctest::Approx(median(ds_short)).epsilon(1e-5));
    CHECK(q.step_long == doctest::Approx(median(ds_long)).epsilon(1e-5));
}

TEST_CASE("decoder training keeps the encoder frozen and totals exact") {
    const auto t = tiny_train();
    const auto ds = tiny_dataset(t);
    const Encoder enc(tiny_codec_config(), 4);
    const auto q = calibrate_quantizer(enc, ds, t);
    DecoderTrainer tr(enc, q, tiny_decoder_config(), tiny_discriminator_config(), t, ds.size());
    const auto before = weights_of(tr.encoder().params());
    const auto gen_before = weights_of(std::as_const(tr.generator()).params());
    for (int i = 0; i < 3; ++i) {
        const auto m = tr.step(ds);
        CHECK(m.step == i + 1);
        CHECK(m.total == total_generator_loss(m.g_adv, m.cc_s, m.cc_l, m.mel, m.fm));
        CHECK(m.total == 1.0 * m.g_adv + 10.0 * m.cc_s + 10.0 * m.cc_l + 50.0 * m.mel + 2.0 * m.fm);
        for (double v : {m.d_loss, m.g_adv, m.cc_s, m.cc_l, m.mel, m.fm, m.total}) CHECK(std::isfinite(v));
    }
    CHECK(weights_of(tr.encoder().params()) == before);
    CHECK(weights_of(std::as_const(tr.generator()).params()) != gen_before);
    CHECK(TrainMetrics::csv_header() == "step,d_loss,g_adv,cc_s,cc_l,mel,fm,total,wall_time");
}

TEST_CASE("discriminator loss falls towards zero against a silent generator") {
    auto t = tiny_train();
    t.generator_lr = 0.0;
    t.discriminator_lr = 1e-3;
    const auto ds = tiny_dataset(t);
    const Encoder enc(tiny_codec_config(), 4);
    DecoderTrainer tr(enc, QuantizerSpec{0.01f, 0.01f, 0.0f}, tiny_decoder_config(), tiny_discriminator_config(), t,
                      ds.size());
    for (auto* p : tr.generator().params()) std::fill(p->value.begin(), p->value.end(), 0.0f);
    const std::vector<std::vector<float>> batch{ds.segments[0], ds.segments[1]};
    const double first = tr.step_on(batch).d_loss;
    double last = first;
    for (int i = 0; i < 150; ++i) last = tr.step_on(batch).d_loss;
    CHECK(last < 0.1 * first);
    CHECK(last < 0.05);
}

TEST_CASE("training resumes from a checkpoint with identical metrics") {
    const auto t = tiny_train();
    const auto ds = tiny_dataset(t);
    const Encoder enc(tiny_codec_config(), 4);
    const auto q = calibrate_quantizer(enc, ds, t);
    ExperimentConfig exp;
    exp.codec = tiny_codec_config();
    exp.decoder = tiny_decoder_config();
    exp.disc = tiny_discriminator_config();
    exp.train = t;

    DecoderTrainer a(enc, q, exp.decoder, exp.disc, t, ds.size());
    a.step(ds);
    const auto ck = parse_checkpoint(serialize_checkpoint(a.checkpoint(exp)));
    const auto a2 = a.step(ds);
    const auto a3 = a.step(ds);

    const Encoder other(tiny_codec_config(), 77);
    DecoderTrainer b(other, QuantizerSpec{}, exp.decoder, exp.disc, t, ds.size());
    b.restore(ck);
    CHECK(b.steps() == 1);
    CHECK(b.quantizer() == q);
    CHECK(b.encoder_fingerprint() == a.encoder_fingerprint());
    CHECK(b.step(ds).same_losses(a2));
    CHECK(b.step(ds).same_losses(a3));

    auto wrong = exp;
    wrong.decoder.top_initial_channels = 64;
    DecoderTrainer c(enc, q, wrong.decoder, exp.disc, t, ds.size());
    CHECK_THROWS_AS(c.restore(ck), CheckpointError);
}

TEST_CASE("non-finite losses abort with the last checkpoint reference") {
    const auto t = tiny_train();
    const auto ds = tiny_dataset(t);
    const Encoder enc(tiny_codec_config(), 4);
    DecoderTrainer tr(enc, QuantizerSpec{0.01f, 0.01f, 0.0f}, tiny_decoder_config(), tiny_discriminator_config(), t,
                      ds.size());
    tr.set_last_checkpoint("run/step_500.ckpt");
    auto bad = ds.segments[0];
    bad[100] = std::numeric_limits<float>::infinity();
    CHECK_THROWS_AS(tr.step_on({bad}), InputError);
    tr.generator().conv_post.bias.value[0] = std::numeric_limits<float>::quiet_NaN();
    try {
        tr.step_on({ds.segments[0]});
        FAIL("expected divergence error");
    } catch (const TrainingError& e) {
        CHECK(std::string(e.what()).find("step_500.ckpt") != std::string::npos);
    }
    CHECK_THROWS_AS(tr.step_on({std::vector<float>(100, 0.0f)}), InputError);
}

TEST_CASE("synthetic speech is deterministic and normalized") {
    const auto a = synthetic_speech(2.0, 4, Voice::female);
    const auto b = synthetic_speech(2.0, 4, Voice::female);
    CHECK(a.samples == b.samples);
    CHECK(a.samples.size() == 32000);
    float peak = 0;
    for (float v : a.samples) peak = std::max(peak, std::abs(v));
    CHECK(peak == doctest::Approx(0.9f));
    CHECK(synthetic_speech(2.0, 5, Voice::female).samples != a.samples);
    CHECK(synthetic_speech(0.0, 1, Voice::male).samples.empty());
}
