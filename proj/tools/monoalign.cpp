// monoalign command line: synthetic data generation, aligner training,
// alignment inspection, duration extraction and DP-vs-oracle verification.

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "monoalign/monoalign.hpp"

namespace fs = std::filesystem;
using namespace monoalign;

namespace {

constexpr int kExitFailure = 1;
constexpr int kExitUsage = 2;

KvConfig load_config(const std::string& config_path, const std::vector<std::string>& overrides) {
    KvConfig cfg = config_path.empty() ? KvConfig{} : KvConfig::from_file(config_path);
    for (const auto& kv : overrides) cfg.apply_override(kv);
    return cfg;
}

void write_model_cfg(const ModelConfig& m, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write model config: " + path);
    f << "model_dim=" << m.enc.model_dim << "\nheads=" << m.enc.heads << "\nffn_hidden=" << m.enc.ffn_hidden
      << "\nfft_blocks=" << m.enc.fft_blocks << "\nconv_kernel=" << m.enc.conv_kernel
      << "\nmel_channels=" << m.enc.mel_channels << "\ncnn_channels=" << m.enc.cnn_channels
      << "\ncnn_dilation=" << m.enc.cnn_dilation << "\ndropout=" << m.enc.dropout << "\nvocab=" << m.enc.vocab
      << "\nmax_duration=" << m.align.max_duration << "\ninterlace=" << (m.align.interlace ? 1 : 0)
      << "\nnoise=" << (m.align.noise ? 1 : 0) << "\n";
}

ModelConfig model_cfg_near_checkpoint(const std::string& checkpoint, const std::string& explicit_cfg,
                                      const std::vector<std::string>& overrides) {
    std::string path = explicit_cfg;
    if (path.empty()) {
        const fs::path guess = fs::path(checkpoint).parent_path() / "model.cfg";
        if (!fs::exists(guess))
            throw std::runtime_error("no model config found at " + guess.string() + "; pass --config");
        path = guess.string();
    }
    KvConfig kv = load_config(path, overrides);
    ModelConfig m = model_config_from(kv);
    kv.reject_unknown();
    return m;
}

const Utterance& find_utterance(const std::vector<Utterance>& corpus, const std::string& id) {
    for (const auto& u : corpus)
        if (u.id == id) return u;
    throw std::runtime_error("utterance not found in corpus: " + id);
}

int run_gen_data(const std::string& spec_path, const std::string& out_path,
                 const std::vector<std::string>& overrides) {
    KvConfig kv = load_config(spec_path, overrides);
    SynthSpec spec = synth_spec_from(kv);
    kv.reject_unknown();
    spec.validate();
    auto corpus = generate(spec);
    save_corpus(corpus, out_path);
    long long frames = 0;
    int max_j = 0;
    for (const auto& u : corpus) {
        frames += u.n_frames();
        max_j = std::max(max_j, u.n_frames());
    }
    const double mean_j = corpus.empty() ? 0.0 : static_cast<double>(frames) / corpus.size();
    std::printf("wrote %zu utterances to %s (frames total %lld, mean %.1f, max %d)\n", corpus.size(),
                out_path.c_str(), frames, mean_j, max_j);
    std::printf("RESULT: gen-data samples=%zu frames=%lld out=%s\n", corpus.size(), frames, out_path.c_str());
    return 0;
}

int run_train(const std::string& corpus_path, const std::string& out_dir, const std::string& config_path,
              const std::vector<std::string>& overrides, int jobs) {
    KvConfig kv = load_config(config_path, overrides);
    ModelConfig model = model_config_from(kv);
    TrainConfig tcfg = train_config_from(kv);
    kv.reject_unknown();
    tcfg.jobs = jobs;

    auto corpus = load_corpus(corpus_path);
    fs::create_directories(out_dir);
    ParameterStore store;
    register_model_params(store, model, tcfg.seed);
    write_model_cfg(model, out_dir + "/model.cfg");

    auto result = train(corpus, store, model, tcfg, out_dir);
    std::printf("trained %lld steps, final loss %.6g (%d samples skipped)\n",
                static_cast<long long>(result.total_steps), result.final_loss, result.skipped_samples);
    std::printf("RESULT: train steps=%lld final_loss=%.17g checkpoint=%s/checkpoint_final.bin\n",
                static_cast<long long>(result.total_steps), result.final_loss, out_dir.c_str());
    return 0;
}

int run_align(const std::string& checkpoint, const std::string& corpus_path, const std::string& id,
              const std::string& out_dir, const std::string& config_path,
              const std::vector<std::string>& overrides) {
    ModelConfig model = model_cfg_near_checkpoint(checkpoint, config_path, overrides);
    ParameterStore store = ParameterStore::load(checkpoint);
    auto corpus = load_corpus(corpus_path);
    const Utterance& utt = find_utterance(corpus, id);

    Tape tape;
    PassOptions opt;  // eval: no noise, tau = 0.1
    auto rec = reconstruct(tape, utt, store, model, opt);
    fs::create_directories(out_dir);
    write_matrix_csv(rec.alpha, out_dir + "/alpha.csv");
    write_matrix_csv(rec.beta, out_dir + "/beta.csv");
    write_matrix_pgm(rec.alpha, out_dir + "/alpha.pgm");
    write_matrix_pgm(rec.beta, out_dir + "/beta.pgm");
    write_matrix_csv(rec.mel_hat, out_dir + "/recon-mel.csv");
    std::printf("aligned %s: I=%d J=%d mse=%.6g\n", id.c_str(), utt.n_tokens(), utt.n_frames(), rec.loss.v[0]);
    std::printf("RESULT: align id=%s files=5 dir=%s\n", id.c_str(), out_dir.c_str());
    return 0;
}

int run_extract(const std::string& checkpoint, const std::string& corpus_path, const std::string& out_path,
                const std::string& config_path, const std::vector<std::string>& overrides, int jobs) {
    ModelConfig model = model_cfg_near_checkpoint(checkpoint, config_path, overrides);
    ParameterStore store = ParameterStore::load(checkpoint);
    auto corpus = load_corpus(corpus_path);

    ExtractionReport report;
    auto records = extract_corpus_durations(corpus, store, model.enc, model.align, report, jobs);
    std::ofstream f(out_path, std::ios::trunc);
    if (!f) throw std::runtime_error("cannot open output: " + out_path);
    for (const auto& rec : records)
        if (rec.accepted) f << duration_record_to_json(rec).dump() << '\n';

    std::printf("rejected: %d/%d\n", report.rejected, report.total);
    if (report.truth_tokens > 0)
        std::printf("ground-truth match: %.1f%% tokens exact, %.1f%% boundaries within 1 frame\n",
                    100.0 * report.match_rate(), 100.0 * report.boundary_rate());
    std::printf("RESULT: extract accepted=%d rejected=%d rate=%.6g match_rate=%.6g out=%s\n", report.accepted,
                report.rejected, report.rejection_rate(), report.match_rate(), out_path.c_str());
    return 0;
}

int run_verify_oracle(int trials, int max_i, int max_j, int max_d, uint64_t seed, bool corrupt) {
    if (max_i > 6 || max_j > 10 || max_d > 5) {
        std::fprintf(stderr, "verify-oracle: sizes exceed the enumeration guard (I<=6, J<=10, D<=5)\n");
        return kExitUsage;
    }
    if (trials == 0) {
        std::printf("warning: 0 trials requested, vacuous pass\n");
        std::printf("RESULT: verify-oracle trials=0 max_diff=0 status=pass\n");
        return 0;
    }
    auto r = oracle::verify_dp_against_oracle(trials, max_i, max_j, max_d, seed, corrupt);
    std::printf("%s, max diff %.3g over %d trials (tolerance 1e-10)\n", r.pass ? "PASS" : "FAIL", r.max_diff,
                r.trials);
    std::printf("RESULT: verify-oracle trials=%d max_diff=%.3g status=%s\n", r.trials, r.max_diff,
                r.pass ? "pass" : "fail");
    return r.pass ? 0 : kExitFailure;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"monotonic text-to-spectrum boundary aligner"};
    app.require_subcommand(1);

    std::string spec_path, corpus_path, out_path, out_dir, config_path, checkpoint, utt_id;
    std::vector<std::string> overrides;
    int jobs = 1;

    auto* gen = app.add_subcommand("gen-data", "generate a synthetic aligned corpus");
    gen->add_option("--spec", spec_path, "synthesis spec (key=value file)")->required();
    gen->add_option("--out", out_path, "output corpus (JSON lines)")->required();
    gen->add_option("--set", overrides, "override spec keys (key=value)");

    auto* tr = app.add_subcommand("train", "train the aligner on a corpus");
    tr->add_option("--corpus", corpus_path, "training corpus (JSON lines)")->required();
    tr->add_option("--out-dir", out_dir, "output directory for checkpoints and the loss curve")->required();
    tr->add_option("--config", config_path, "model/training config (key=value file)");
    tr->add_option("--set", overrides, "override config keys (key=value)");
    tr->add_option("--jobs", jobs, "worker threads for per-sample passes");

    auto* al = app.add_subcommand("align", "emit soft alignment matrices and the reconstructed spectrum");
    al->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    al->add_option("--corpus", corpus_path, "corpus holding the utterance")->required();
    al->add_option("--id", utt_id, "utterance id")->required();
    al->add_option("--out-dir", out_dir, "output directory")->required();
    al->add_option("--config", config_path, "model config (defaults to model.cfg beside the checkpoint)");
    al->add_option("--set", overrides, "override config keys (key=value)");

    auto* ex = app.add_subcommand("extract", "extract hard durations for a corpus");
    ex->add_option("--checkpoint", checkpoint, "trained checkpoint")->required();
    ex->add_option("--corpus", corpus_path, "corpus (JSON lines)")->required();
    ex->add_option("--out", out_path, "output duration records (JSON lines)")->required();
    ex->add_option("--config", config_path, "model config (defaults to model.cfg beside the checkpoint)");
    ex->add_option("--set", overrides, "override config keys (key=value)");
    ex->add_option("--jobs", jobs, "worker threads");

    auto* vo = app.add_subcommand("verify-oracle", "compare the DP against brute-force enumeration");
    int trials = 400, max_i = 4, max_j = 8, max_d = 4;
    uint64_t seed = 1;
    bool corrupt = false;
    vo->add_option("--trials", trials, "random instances to test");
    vo->add_option("--max-i", max_i, "largest token count");
    vo->add_option("--max-j", max_j, "largest frame count");
    vo->add_option("--max-d", max_d, "largest duration cap");
    vo->add_option("--seed", seed, "rng seed");
    vo->add_flag("--corrupt", corrupt, "test hook: perturb the DP output to force a failure")->group("");

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return run_gen_data(spec_path, out_path, overrides);
        if (tr->parsed()) return run_train(corpus_path, out_dir, config_path, overrides, jobs);
        if (al->parsed()) return run_align(checkpoint, corpus_path, utt_id, out_dir, config_path, overrides);
        if (ex->parsed()) return run_extract(checkpoint, corpus_path, out_path, config_path, overrides, jobs);
        if (vo->parsed()) return run_verify_oracle(trials, max_i, max_j, max_d, seed, corrupt);
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitFailure;
    }
    return kExitUsage;
}
