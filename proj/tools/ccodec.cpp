#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <fstream>
#include <iostream>

#include "ccodec/abtest_server.hpp"
#include "ccodec/codec.hpp"
#include "ccodec/losses.hpp"
#include "ccodec/synth.hpp"
#include "ccodec/trainer.hpp"

using namespace ccodec;
namespace fs = std::filesystem;

namespace {

struct Options {
    std::string input;
    std::string checkpoint;
    std::string config;
    std::string out;
    std::uint64_t seed = 1;
    bool seed_given = false;
    double seconds = 60.0;
    int files = 60;
    std::string host = "127.0.0.1";
    int port = 8080;
    int log_every = 50;
};

void warn(const std::string& msg) { std::cerr << "warning: " << msg << "\n"; }

std::vector<std::uint8_t> read_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw InputError("cannot open '" + p.string() + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_bytes(const fs::path& p, const std::vector<std::uint8_t>& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write '" + p.string() + "'");
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

void require(const std::string& value, const char* flag) {
    if (value.empty()) throw ConfigError(std::string(flag) + " is required");
}

CodecBundle load_bundle(const Options& o, bool need_decoder) {
    require(o.checkpoint, "--checkpoint");
    auto b = load_codec(load_checkpoint(o.checkpoint));
    if (need_decoder && !b.decoder) throw CheckpointError("checkpoint '" + o.checkpoint + "' holds no decoder");
    return b;
}

ExperimentConfig experiment(const Options& o) {
    ExperimentConfig e = o.config.empty() ? ExperimentConfig{} : load_experiment_config(o.config);
    if (o.seed_given) e.train.seed = o.seed;
    return e;
}

int cmd_encode(const Options& o) {
    require(o.input, "input");
    require(o.out, "--out");
    const auto b = load_bundle(o, false);
    const auto wav = read_wav(o.input);
    if (wav.sample_rate != b.codec.sample_rate)
        warn("resampling " + std::to_string(wav.sample_rate) + " Hz input to " + std::to_string(b.codec.sample_rate) +
             " Hz");
    const auto s = encode_to_stream(*b.encoder, b.quant, wav);
    for (const auto& w : s.warnings) warn(w);
    write_bytes(o.out, s.bytes);
    std::printf("superframes %zu  short-term frames %zu  long-term frames %zu\n", s.superframes, s.superframes * 8,
                s.superframes);
    std::printf("payload %zu bytes (%zu bits)  bitrate %.1f bps\n", s.payload_bytes(), s.payload_bytes() * 8,
                payload_bitrate(b.codec));
    return 0;
}

int cmd_decode(const Options& o) {
    require(o.input, "input");
    require(o.out, "--out");
    const auto b = load_bundle(o, true);
    const auto bytes = read_bytes(o.input);
    const auto y = decode_stream(*b.decoder, bytes);
    write_wav(o.out, y);
    std::printf("decoded %zu samples (%.3f s)\n", y.samples.size(), y.duration());
    return 0;
}

int cmd_measure(const Options& o) {
    std::unique_ptr<Encoder> enc;
    std::unique_ptr<Decoder> dec;
    QuantizerSpec quant;
    CodecConfig cfg;
    if (o.checkpoint.empty()) {
        const auto e = experiment(o);
        cfg = e.codec;
        warn("no --checkpoint given; measuring an untrained model (seed " + std::to_string(e.train.seed) + ")");
        enc = std::make_unique<Encoder>(cfg, e.train.seed);
        dec = std::make_unique<Decoder>(cfg, e.decoder, e.train.seed + 1);
    } else {
        auto b = load_bundle(o, true);
        cfg = b.codec;
        quant = b.quant;
        enc = std::move(b.encoder);
        dec = std::move(b.decoder);
    }

    Waveform x;
    if (!o.input.empty()) {
        x = read_wav(o.input);
        if (x.sample_rate != cfg.sample_rate) x = resample(x, cfg.sample_rate);
    } else {
        x = synthetic_speech(o.seconds, o.seed, Voice::male, cfg.sample_rate);
    }

    const auto probe = synthetic_speech(0.5, o.seed + 1, Voice::female, cfg.sample_rate);
    const auto delay = measure_delay_samples(*enc, *dec, quant, probe.samples);

    const auto t0 = std::chrono::steady_clock::now();
    const auto stream = encode_to_stream(*enc, quant, x);
    const auto y = decode_stream(*dec, stream.bytes);
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

    const std::span<const float> ref(x.samples.data(), y.samples.size());
    const std::span<const float> out(y.samples);
    nlohmann::json r = {
        {"payload_bitrate", payload_bitrate(cfg)},
        {"algorithmic_delay_ms", 1000.0 * double(delay) / cfg.sample_rate},
        {"algorithmic_delay_samples", delay},
        {"realtime_factor", x.duration() / elapsed},
        {"input_seconds", x.duration()},
        {"payload_bytes", stream.payload_bytes()},
    };
    if (!y.samples.empty()) {
        r["mel_distance"] = mel_distance<float>(ref, out);
        r["cc_distance_short"] = cc_distance<float>(Level::short_term, ref, out, *enc);
        r["cc_distance_long"] = cc_distance<float>(Level::long_term, ref, out, *enc);
    }
    std::cout << r.dump(2) << "\n";
    if (!o.out.empty()) std::ofstream(o.out) << r.dump(2) << "\n";
    return 0;
}

int cmd_dump_features(const Options& o) {
    require(o.input, "input");
    const auto b = load_bundle(o, false);
    const auto wav = read_wav(o.input);
    const auto p = quantized_codes(*b.encoder, b.quant, wav);
    std::ofstream file;
    if (!o.out.empty()) {
        file.open(o.out, std::ios::trunc);
        if (!file) throw InputError("cannot write '" + o.out + "'");
    }
    std::ostream& out = o.out.empty() ? std::cout : file;
    out << "time,level,feature,raw,quantized\n";
    const double sr = b.codec.sample_rate;
    for (const auto* pair : {&p.raw_short, &p.raw_long}) {
        const auto& raw = *pair;
        const auto& q = pair == &p.raw_short ? p.q_short : p.q_long;
        for (int t = 0; t < raw.frames(); ++t) {
            const double time = double(raw.start_sample + std::int64_t(t) * raw.hop) / sr;
            for (int f = 0; f < raw.dim; ++f) {
                char line[160];
                std::snprintf(line, sizeof line, "%.4f,%s,%d,%.9g,%.9g\n", time, level_name(raw.level), f,
                              raw.frame(t)[f], q.frame(t)[f]);
                out << line;
            }
        }
    }
    return 0;
}

int cmd_init(const Options& o) {
    require(o.out, "--out");
    const auto e = experiment(o);
    const Encoder enc(e.codec, e.train.seed);
    const Decoder dec(e.codec, e.decoder, e.train.seed + 1);
    save_checkpoint(o.out, codec_checkpoint(enc, &dec, QuantizerSpec{}, "codec"));
    std::printf("wrote untrained codec: encoder %lld params, decoder %lld params\n",
                static_cast<long long>(enc.parameter_count()), static_cast<long long>(dec.parameter_count()));
    return 0;
}

SegmentDataset corpus_for(const ExperimentConfig& e, const Options& o, int segment_length) {
    auto t = e.train;
    if (!o.input.empty()) t.corpus_path = o.input;
    require(t.corpus_path, "corpus (positional input or train.corpus_path)");
    t.segment_length = segment_length;
    auto ds = load_corpus(t.corpus_path, t);
    for (const auto& w : ds.warnings) warn(w);
    std::fprintf(stderr, "corpus: %zu segments of %d samples\n", ds.size(), ds.segment_length);
    return ds;
}

int cmd_pretrain(const Options& o) {
    require(o.out, "--out");
    auto e = experiment(o);
    fs::create_directories(o.out);
    Encoder enc(e.codec, e.train.seed);
    const auto ds = corpus_for(e, o, e.train.segment_length);
    EncoderPretrainer trainer(enc, e.train, ds.size());
    if (!o.checkpoint.empty()) {
        const auto ck = load_checkpoint(o.checkpoint);
        if (ck.meta_or("kind", "") != "pretrain") throw CheckpointError("resume needs a pretraining checkpoint");
        restore_params(ck, "encoder.", enc.params());
        trainer.restore_state(ck);
        std::fprintf(stderr, "resumed at step %lld\n", static_cast<long long>(trainer.steps()));
    }
    auto save = [&](const fs::path& path) {
        auto ck = codec_checkpoint(enc, nullptr, QuantizerSpec{}, "pretrain");
        for (const auto& [k, v] : to_key_values(e)) ck.meta.emplace(k, v);
        trainer.save_state(ck);
        save_checkpoint(path, ck);
    };
    std::ofstream log(fs::path(o.out) / "pretrain.csv", std::ios::app);
    if (trainer.steps() == 0) log << "step,loss,accuracy,accuracy_short,accuracy_long,wall_time\n";
    while (trainer.steps() < e.train.pretrain_steps) {
        const auto s = trainer.step(ds);
        log << s.step << ',' << s.nce.loss << ',' << s.nce.accuracy << ',' << s.nce.accuracy_lower << ','
            << s.nce.accuracy_upper << ',' << s.wall_time << '\n';
        if (s.step % o.log_every == 0)
            std::fprintf(stderr, "pretrain %lld  loss %.4f  acc %.3f / %.3f\n", static_cast<long long>(s.step),
                         s.nce.loss, s.nce.accuracy_lower, s.nce.accuracy_upper);
        if (e.train.checkpoint_interval > 0 && s.step % e.train.checkpoint_interval == 0)
            save(fs::path(o.out) / ("pretrain_" + std::to_string(s.step) + ".ckpt"));
    }
    save(fs::path(o.out) / "encoder.ckpt");
    std::printf("wrote %s\n", (fs::path(o.out) / "encoder.ckpt").c_str());
    return 0;
}

int cmd_train(const Options& o) {
    require(o.out, "--out");
    require(o.checkpoint, "--checkpoint");
    fs::create_directories(o.out);
    const auto ck = load_checkpoint(o.checkpoint);
    const bool resume = ck.meta_or("kind", "") == "train";
    auto e = resume ? experiment_config_from(ck.meta) : experiment(o);
    if (resume && o.seed_given) warn("--seed is ignored when resuming");
    const auto bundle = load_codec(ck);
    e.codec = bundle.codec;
    const auto ds = corpus_for(e, o, e.train.segment_length);

    QuantizerSpec quant = bundle.quant;
    if (!resume) {
        quant = calibrate_quantizer(*bundle.encoder, ds, e.train);
        std::fprintf(stderr, "calibrated steps: short %.6g  long %.6g\n", quant.step_short, quant.step_long);
    }
    DecoderTrainer trainer(*bundle.encoder, quant, e.decoder, e.disc, e.train, ds.size());
    if (resume) {
        trainer.restore(ck);
        trainer.set_last_checkpoint(o.checkpoint);
        std::fprintf(stderr, "resumed at step %lld\n", static_cast<long long>(trainer.steps()));
    }
    std::ofstream log(fs::path(o.out) / "metrics.csv", std::ios::app);
    if (!resume) log << TrainMetrics::csv_header() << '\n';
    while (trainer.steps() < e.train.total_steps) {
        const auto m = trainer.step(ds);
        log << m.csv_row() << '\n';
        if (m.step % o.log_every == 0)
            std::fprintf(stderr, "step %lld  d %.4f  adv %.4f  mel %.4f  fm %.4f  total %.4f\n",
                         static_cast<long long>(m.step), m.d_loss, m.g_adv, m.mel, m.fm, m.total);
        if (e.train.checkpoint_interval > 0 && m.step % e.train.checkpoint_interval == 0) {
            const auto path = fs::path(o.out) / ("step_" + std::to_string(m.step) + ".ckpt");
            save_checkpoint(path, trainer.checkpoint(e));
            trainer.set_last_checkpoint(path.string());
        }
    }
    const auto final_path = fs::path(o.out) / "codec.ckpt";
    save_checkpoint(final_path, codec_checkpoint(trainer.encoder(), &trainer.generator(), trainer.quantizer(), "codec"));
    std::printf("wrote %s\n", final_path.c_str());
    return 0;
}

int cmd_synth_corpus(const Options& o) {
    require(o.out, "--out");
    write_synthetic_corpus(o.out, o.files, o.seconds, o.seed);
    std::printf("wrote %d files of %.1f s to %s\n", o.files, o.seconds, o.out.c_str());
    return 0;
}

int cmd_abtest_serve(const Options& o) {
    require(o.out, "--out (data directory)");
    abtest::Store store(o.out);
    abtest::serve(store, o.host, o.port);
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"ccodec: low-rate neural speech codec"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--checkpoint", o.checkpoint, "model checkpoint");
        sub->add_option("--config", o.config, "key=value experiment config");
        sub->add_option("--out", o.out, "output path");
        sub->add_option_function<std::uint64_t>(
            "--seed",
            [&](const std::uint64_t& s) {
                o.seed = s;
                o.seed_given = true;
            },
            "random seed");
    };

    auto* enc = app.add_subcommand("encode", "WAV to coded stream");
    enc->add_option("input", o.input, "input WAV")->required();
    common(enc);
    auto* dec = app.add_subcommand("decode", "coded stream to WAV");
    dec->add_option("input", o.input, "input stream")->required();
    common(dec);
    auto* meas = app.add_subcommand("measure", "delay, bitrate, speed and distances");
    meas->add_option("--input", o.input, "WAV to measure on (default: synthetic speech)");
    meas->add_option("--seconds", o.seconds, "length of synthetic input")->check(CLI::PositiveNumber);
    common(meas);
    auto* dump = app.add_subcommand("dump-features", "CSV of raw and quantized codes");
    dump->add_option("input", o.input, "input WAV")->required();
    common(dump);
    auto* pre = app.add_subcommand("pretrain", "contrastive encoder pretraining");
    pre->add_option("input", o.input, "corpus file or directory (default: train.corpus_path)");
    pre->add_option("--log-every", o.log_every)->check(CLI::PositiveNumber);
    common(pre);
    auto* train = app.add_subcommand("train", "decoder training against a frozen encoder");
    train->add_option("input", o.input, "corpus file or directory (default: train.corpus_path)");
    train->add_option("--log-every", o.log_every)->check(CLI::PositiveNumber);
    common(train);
    auto* serve = app.add_subcommand("abtest-serve", "A/B listening test service (--out is the data directory)");
    serve->add_option("--host", o.host);
    serve->add_option("--port", o.port)->check(CLI::Range(1, 65535));
    common(serve);
    auto* synth = app.add_subcommand("synth-corpus", "write a synthetic speech corpus");
    synth->add_option("--files", o.files)->check(CLI::PositiveNumber);
    synth->add_option("--seconds", o.seconds)->check(CLI::PositiveNumber);
    common(synth);
    auto* init = app.add_subcommand("init", "write an untrained codec checkpoint");
    common(init);

    CLI11_PARSE(app, argc, argv);
    try {
        if (*enc) return cmd_encode(o);
        if (*dec) return cmd_decode(o);
        if (*meas) return cmd_measure(o);
        if (*dump) return cmd_dump_features(o);
        if (*pre) return cmd_pretrain(o);
        if (*train) return cmd_train(o);
        if (*serve) return cmd_abtest_serve(o);
        if (*synth) return cmd_synth_corpus(o);
        if (*init) return cmd_init(o);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
