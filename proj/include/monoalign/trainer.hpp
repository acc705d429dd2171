#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include "monoalign/align.hpp"
#include "monoalign/corpus.hpp"
#include "monoalign/encoders.hpp"
#include "monoalign/parallel.hpp"
#include "monoalign/params.hpp"

namespace monoalign {

struct ModelConfig {
    EncoderConfig enc;
    AlignConfig align;

    void validate() const {
        enc.validate();
        align.validate();
    }
};

struct TrainConfig {
    int epochs = 50;
    int frame_budget = 2000;    // frames per batch
    int warmup = 4000;          // Noam warmup steps
    double noam_scale = 1.0;
    double tau_start = 1.0;     // tau_max schedule endpoints
    double tau_end = 0.1;
    uint64_t seed = 42;
    int checkpoint_interval = 1000;
    int jobs = 1;

    void validate() const {
        if (epochs < 1 || frame_budget < 1 || warmup < 1 || checkpoint_interval < 1 || jobs < 1)
            throw std::invalid_argument("train config: counts must be positive");
        if (noam_scale <= 0.0) throw std::invalid_argument("train config: noam_scale must be positive");
        if (!(tau_start > 0.0 && tau_start <= 1.0 && tau_end > 0.0 && tau_end <= tau_start))
            throw std::invalid_argument("train config: tau endpoints must satisfy 0 < tau_end <= tau_start <= 1");
    }
};

inline double noam_lr(int64_t step, int warmup, double scale, int model_dim) {
    const double s = static_cast<double>(step);
    return scale * std::pow(static_cast<double>(model_dim), -0.5) *
           std::min(std::pow(s, -0.5), s * std::pow(static_cast<double>(warmup), -1.5));
}

// linear interpolation of the tau_max ceiling over 0-based steps; endpoints
// are hit exactly
inline double tau_schedule(int64_t step, int64_t total_steps, double tau_start, double tau_end) {
    if (total_steps <= 1) return tau_end;
    const double progress = std::min(1.0, static_cast<double>(step) / static_cast<double>(total_steps - 1));
    return std::max(tau_end, tau_start * (1.0 - progress) + tau_end * progress);
}

// mean of squared elementwise differences
inline Tensor mse_loss(Tape& tape, const Tensor& predicted, const Tensor& target) {
    require_same_shape(predicted, target, "mse_loss");
    Tensor diff = ops::sub(tape, predicted, target);
    Tensor sq = ops::mul(tape, diff, diff);
    return ops::mul_scalar(tape, ops::sum(tape, sq), 1.0 / static_cast<double>(predicted.size()));
}

// ---------------------------------------------------------------------------
// forward reconstruction
// ---------------------------------------------------------------------------

struct PassOptions {
    bool training = false;  // Gumbel noise + dropout on
    double tau_max = 1.0;   // ceiling for sampled temperatures (training)
    double eval_tau = 0.1;  // fixed temperature when not training
    RngStream* rng = nullptr;
};

struct Reconstruction {
    Tensor mel_hat;  // J x C
    Tensor beta;     // I x J
    Tensor alpha;    // I x J
    Tensor loss;     // scalar MSE
};

inline void register_model_params(ParameterStore& store, const ModelConfig& cfg, uint64_t seed) {
    cfg.validate();
    RngStream rng(derive_seed(seed, 0x1417));
    register_encoder_params(store, cfg.enc, rng);
    init_xavier(store.create("proj.w", {cfg.enc.model_dim, cfg.enc.mel_channels}), rng, cfg.enc.model_dim,
                cfg.enc.mel_channels);
    store.create("proj.b", {cfg.enc.mel_channels});
}

// encoders -> (optionally noised) energies -> boundary DP -> expansion ->
// linear projection -> MSE against the input spectrum
inline Reconstruction reconstruct(Tape& tape, const Utterance& utt, ParameterStore& store, const ModelConfig& cfg,
                                  const PassOptions& opt, ParamBinder& param) {
    ForwardMode mode{opt.training, opt.rng};
    Tensor text = encode_text(tape, utt.tokens, param, cfg.enc, mode);
    Tensor mel_hidden = encode_mel(tape, utt.mel, param, cfg.enc, mode);

    const int n_frames = utt.n_frames();
    Tensor dp_mel = cfg.align.interlace ? downsample_rows_x2(tape, mel_hidden) : mel_hidden;
    const int dp_frames = dp_mel.rows();
    const int dp_window = cfg.align.interlace ? cfg.align.sub_duration() : cfg.align.max_duration;

    Tensor logits = alignment_logits(tape, text, dp_mel);
    Tensor scaled;
    if (opt.training && cfg.align.noise) {
        if (!opt.rng) throw std::invalid_argument("reconstruct: training pass requires an rng stream");
        GumbelDraw draw = sample_gumbel(utt.n_tokens(), dp_frames, opt.tau_max, *opt.rng);
        Tensor inv_tau = Tensor::matrix(utt.n_tokens(), dp_frames);
        Tensor noise_over_tau = Tensor::matrix(utt.n_tokens(), dp_frames);
        for (int i = 0; i < utt.n_tokens(); ++i) {
            const double it = 1.0 / draw.tau[static_cast<size_t>(i)];
            for (int j = 0; j < dp_frames; ++j) {
                inv_tau.at(i, j) = it;
                noise_over_tau.at(i, j) = draw.noise.at(i, j) * it;
            }
        }
        scaled = ops::add(tape, ops::mul(tape, logits, inv_tau), noise_over_tau);
    } else {
        scaled = ops::mul_scalar(tape, logits, 1.0 / opt.eval_tau);
    }

    Tensor alpha = boundary_forward_logits_op(tape, scaled, dp_window);
    Tensor beta = alignment_posterior_logits_op(tape, scaled, alpha, dp_window);
    if (cfg.align.interlace) {
        alpha = dilate_cols_x2(tape, alpha, n_frames);
        beta = repeat_cols_x2(tape, beta, n_frames);
    }

    Tensor expanded = expand_hidden(tape, beta, text);
    Tensor mel_hat = ops::linear(tape, expanded, param("proj.w"), param("proj.b"));
    Tensor loss = mse_loss(tape, mel_hat, utt.mel);
    return {mel_hat, beta, alpha, loss};
}

inline Reconstruction reconstruct(Tape& tape, const Utterance& utt, ParameterStore& store, const ModelConfig& cfg,
                                  const PassOptions& opt = {}) {
    cfg.validate();
    ParamBinder param(tape, store);
    return reconstruct(tape, utt, store, cfg, opt, param);
}

// ---------------------------------------------------------------------------
// training loop
// ---------------------------------------------------------------------------

struct LossRow {
    int64_t step;
    double lr;
    double tau_max;
    double loss;
};

struct TrainResult {
    std::vector<LossRow> curve;
    int64_t total_steps = 0;
    double final_loss = 0.0;
    int skipped_samples = 0;
};

struct TrainAbort : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Deterministic batch plan: per-epoch seeded shuffle, then greedy fill until
// the frame budget would be exceeded. The whole plan is materialized up
// front so the tau schedule knows the total step count and resumed runs see
// the identical sequence.
inline std::vector<std::vector<int>> plan_batches(const std::vector<Utterance>& corpus, const TrainConfig& cfg) {
    std::vector<std::vector<int>> plan;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<int> order(corpus.size());
        std::iota(order.begin(), order.end(), 0);
        RngStream rng(derive_seed(cfg.seed, 0xE90C4, static_cast<uint64_t>(epoch)));
        for (int i = static_cast<int>(order.size()) - 1; i > 0; --i)
            std::swap(order[static_cast<size_t>(i)], order[static_cast<size_t>(rng.uniform_int(0, i))]);
        std::vector<int> batch;
        int frames = 0;
        for (int idx : order) {
            const int j = corpus[static_cast<size_t>(idx)].n_frames();
            if (!batch.empty() && frames + j > cfg.frame_budget) {
                plan.push_back(std::move(batch));
                batch.clear();
                frames = 0;
            }
            batch.push_back(idx);
            frames += j;
        }
        if (!batch.empty()) plan.push_back(std::move(batch));
    }
    return plan;
}

inline void write_loss_curve(const std::vector<LossRow>& curve, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("train: cannot open loss curve file: " + path);
    f << "step,lr,tau_max,loss\n";
    char line[160];
    for (const auto& r : curve) {
        std::snprintf(line, sizeof(line), "%lld,%.17g,%.17g,%.17g\n", static_cast<long long>(r.step), r.lr, r.tau_max,
                      r.loss);
        f << line;
    }
}

// Runs (or resumes) training. `store` must hold the model parameters; a
// resumed store continues from its recorded Adam step through the same batch
// plan. Checkpoints and the loss curve go to out_dir when it is non-empty.
inline TrainResult train(const std::vector<Utterance>& corpus, ParameterStore& store, const ModelConfig& model_cfg,
                         const TrainConfig& cfg, const std::string& out_dir = "") {
    model_cfg.validate();
    cfg.validate();
    if (corpus.empty()) throw std::invalid_argument("train: empty corpus");

    const auto plan = plan_batches(corpus, cfg);
    const int64_t total_steps = static_cast<int64_t>(plan.size());
    if (!out_dir.empty()) std::filesystem::create_directories(out_dir);

    TrainResult result;
    result.total_steps = total_steps;
    for (int64_t step = store.step(); step < total_steps; ++step) {
        const double tau_max = tau_schedule(step, total_steps, cfg.tau_start, cfg.tau_end);
        const auto& batch = plan[static_cast<size_t>(step)];
        const int n = static_cast<int>(batch.size());

        std::vector<std::map<std::string, std::vector<double>>> grads(static_cast<size_t>(n));
        std::vector<double> losses(static_cast<size_t>(n), -1.0);  // -1 marks a skipped sample
        parallel_for(n, cfg.jobs, [&](int s) {
            const Utterance& utt = corpus[static_cast<size_t>(batch[static_cast<size_t>(s)])];
            const int dp_frames = model_cfg.align.interlace ? (utt.n_frames() + 1) / 2 : utt.n_frames();
            if (utt.n_tokens() > dp_frames) return;  // no monotone cover possible
            RngStream rng(derive_seed(cfg.seed, static_cast<uint64_t>(step) + 1, static_cast<uint64_t>(s)));
            Tape tape;
            PassOptions opt{true, tau_max, 0.1, &rng};
            ParamBinder param(tape, store);
            Reconstruction rec = reconstruct(tape, utt, store, model_cfg, opt, param);
            tape.backward(rec.loss);
            grads[static_cast<size_t>(s)] = param.collect_grads(tape);
            losses[static_cast<size_t>(s)] = rec.loss.v[0];
        });

        std::map<std::string, std::vector<double>> mean_grads;
        double loss_sum = 0.0;
        int used = 0;
        for (int s = 0; s < n; ++s) {
            if (losses[static_cast<size_t>(s)] < 0.0 && grads[static_cast<size_t>(s)].empty()) {
                ++result.skipped_samples;
                std::fprintf(stderr, "train: skipping %s (tokens exceed usable frames)\n",
                             corpus[static_cast<size_t>(batch[static_cast<size_t>(s)])].id.c_str());
                continue;
            }
            if (!std::isfinite(losses[static_cast<size_t>(s)]))
                throw TrainAbort("train: non-finite loss at step " + std::to_string(step + 1) + ", tau_max " +
                                 std::to_string(tau_max) + ", utterance " +
                                 corpus[static_cast<size_t>(batch[static_cast<size_t>(s)])].id);
            loss_sum += losses[static_cast<size_t>(s)];
            for (auto& [name, g] : grads[static_cast<size_t>(s)]) {
                auto& acc = mean_grads[name];
                if (acc.empty())
                    acc = g;
                else
                    for (size_t i = 0; i < g.size(); ++i) acc[i] += g[i];
            }
            ++used;
        }
        if (used > 0)
            for (auto& [name, g] : mean_grads)
                for (auto& x : g) x /= used;

        const double lr = noam_lr(step + 1, cfg.warmup, cfg.noam_scale, model_cfg.enc.model_dim);
        adam_step(store, mean_grads, lr);

        const double batch_loss = used > 0 ? loss_sum / used : 0.0;
        result.curve.push_back({store.step(), lr, tau_max, batch_loss});
        result.final_loss = batch_loss;

        if (!out_dir.empty() && (store.step() % cfg.checkpoint_interval == 0 || store.step() == total_steps))
            store.save(out_dir + "/checkpoint_step" + std::to_string(store.step()) + ".bin");
    }

    if (!out_dir.empty()) {
        store.save(out_dir + "/checkpoint_final.bin");
        write_loss_curve(result.curve, out_dir + "/loss_curve.csv");
    }
    return result;
}

}  // namespace monoalign
