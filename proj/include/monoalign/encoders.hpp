#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "monoalign/ops.hpp"
#include "monoalign/params.hpp"
#include "monoalign/rng.hpp"
#include "monoalign/tape.hpp"
#include "monoalign/tensor.hpp"

namespace monoalign {

struct EncoderConfig {
    int model_dim = 64;
    int heads = 2;
    int ffn_hidden = 128;
    int fft_blocks = 1;
    int conv_kernel = 3;
    int mel_channels = 8;
    int cnn_channels = 32;
    int cnn_dilation = 2;
    double dropout = 0.1;
    int vocab = 16;

    void validate() const {
        if (model_dim <= 0 || heads <= 0 || ffn_hidden <= 0 || fft_blocks <= 0 || conv_kernel <= 0 ||
            mel_channels <= 0 || cnn_channels <= 0 || cnn_dilation <= 0 || vocab <= 0)
            throw std::invalid_argument("encoder config: all dimensions must be positive");
        if (model_dim % heads != 0) throw std::invalid_argument("encoder config: model_dim must be divisible by heads");
        if (conv_kernel % 2 == 0) throw std::invalid_argument("encoder config: conv kernel must be odd");
        if (dropout < 0.0 || dropout >= 1.0) throw std::invalid_argument("encoder config: dropout must be in [0,1)");
    }
};

// per-forward runtime switches; rng drives dropout masks and is only touched
// when training is set
struct ForwardMode {
    bool training = false;
    RngStream* rng = nullptr;
};

// ---------------------------------------------------------------------------
// building blocks
// ---------------------------------------------------------------------------

inline Tensor sinusoid_table(int length, int dim) {
    Tensor pe = Tensor::matrix(length, dim);
    for (int pos = 0; pos < length; ++pos)
        for (int i = 0; i < dim; i += 2) {
            const double angle = pos * std::exp(-std::log(10000.0) * i / dim);
            pe.at(pos, i) = std::sin(angle);
            if (i + 1 < dim) pe.at(pos, i + 1) = std::cos(angle);
        }
    return pe;
}

// sinusoidal table times one learnable scalar
inline Tensor scaled_positional_embedding(Tape& tape, int length, int dim, const Tensor& scale_param) {
    return ops::scale(tape, sinusoid_table(length, dim), scale_param);
}

inline Tensor add_scaled_pe(Tape& tape, const Tensor& x, const Tensor& scale_param) {
    return ops::add(tape, x, scaled_positional_embedding(tape, x.rows(), x.cols(), scale_param));
}

// inverted dropout; identity when not training
inline Tensor dropout(Tape& tape, const Tensor& x, double rate, const ForwardMode& mode) {
    if (!mode.training || rate <= 0.0) return x;
    if (!mode.rng) throw std::invalid_argument("dropout: training mode requires an rng stream");
    Tensor mask(x.shape);
    const double keep = 1.0 - rate;
    for (auto& m : mask.v) m = mode.rng->uniform01() < keep ? 1.0 / keep : 0.0;
    return ops::mul(tape, x, mask);
}

inline Tensor multihead_self_attention(Tape& tape, const Tensor& x, ParamBinder& param, const std::string& prefix,
                                       int heads) {
    const int d = x.cols();
    const int dh = d / heads;
    Tensor q = ops::linear(tape, x, param(prefix + ".wq"), param(prefix + ".bq"));
    Tensor k = ops::linear(tape, x, param(prefix + ".wk"), param(prefix + ".bk"));
    Tensor v = ops::linear(tape, x, param(prefix + ".wv"), param(prefix + ".bv"));
    std::vector<Tensor> outs;
    outs.reserve(static_cast<size_t>(heads));
    for (int h = 0; h < heads; ++h) {
        Tensor qh = ops::slice_cols(tape, q, h * dh, (h + 1) * dh);
        Tensor kh = ops::slice_cols(tape, k, h * dh, (h + 1) * dh);
        Tensor vh = ops::slice_cols(tape, v, h * dh, (h + 1) * dh);
        Tensor scores = ops::mul_scalar(tape, ops::matmul(tape, qh, ops::transpose(tape, kh)), 1.0 / std::sqrt(dh));
        Tensor attn = ops::softmax_rows(tape, scores);
        outs.push_back(ops::matmul(tape, attn, vh));
    }
    Tensor merged = heads == 1 ? outs[0] : ops::concat_cols(tape, outs);
    return ops::linear(tape, merged, param(prefix + ".wo"), param(prefix + ".bo"));
}

// self-attention and conv feed-forward sublayers, each with residual + layer norm
inline Tensor fft_block(Tape& tape, const Tensor& x, ParamBinder& param, const std::string& prefix,
                        const EncoderConfig& cfg, const ForwardMode& mode) {
    Tensor attn = multihead_self_attention(tape, x, param, prefix + ".attn", cfg.heads);
    attn = dropout(tape, attn, cfg.dropout, mode);
    Tensor y = ops::layer_norm(tape, ops::add(tape, x, attn), param(prefix + ".ln1.gamma"), param(prefix + ".ln1.beta"));
    Tensor h = ops::conv1d(tape, y, param(prefix + ".ffn.w1"), param(prefix + ".ffn.b1"), 1);
    h = ops::relu(tape, h);
    h = ops::conv1d(tape, h, param(prefix + ".ffn.w2"), param(prefix + ".ffn.b2"), 1);
    h = dropout(tape, h, cfg.dropout, mode);
    return ops::layer_norm(tape, ops::add(tape, y, h), param(prefix + ".ln2.gamma"), param(prefix + ".ln2.beta"));
}

// ---------------------------------------------------------------------------
// encoders
// ---------------------------------------------------------------------------

// embedding -> scaled positional embedding -> FFT blocks
inline Tensor encode_text(Tape& tape, const std::vector<int>& tokens, ParamBinder& param, const EncoderConfig& cfg,
                          const ForwardMode& mode = {}) {
    if (tokens.empty()) throw std::invalid_argument("encode_text: empty token sequence");
    Tensor x = ops::embedding(tape, tokens, param("text.embedding"));
    x = add_scaled_pe(tape, x, param("text.pe_scale"));
    for (int b = 0; b < cfg.fft_blocks; ++b)
        x = fft_block(tape, x, param, "text.block" + std::to_string(b), cfg, mode);
    return x;
}

// the local-context CNN: linear + ReLU + dropout, then two dilated convs
// (each ReLU + dropout), then linear up to model_dim
inline Tensor mel_conv_stack(Tape& tape, const Tensor& mel, ParamBinder& param, const EncoderConfig& cfg,
                             const ForwardMode& mode = {}) {
    if (mel.rank() != 2 || mel.cols() != cfg.mel_channels)
        throw std::invalid_argument("encode_mel: expected frames of width " + std::to_string(cfg.mel_channels) +
                                    ", got " + mel.shape_str());
    Tensor x = ops::linear(tape, mel, param("mel.pre.w"), param("mel.pre.b"));
    x = dropout(tape, ops::relu(tape, x), cfg.dropout, mode);
    x = ops::conv1d(tape, x, param("mel.conv1.w"), param("mel.conv1.b"), cfg.cnn_dilation);
    x = dropout(tape, ops::relu(tape, x), cfg.dropout, mode);
    x = ops::conv1d(tape, x, param("mel.conv2.w"), param("mel.conv2.b"), cfg.cnn_dilation);
    x = dropout(tape, ops::relu(tape, x), cfg.dropout, mode);
    return ops::linear(tape, x, param("mel.post.w"), param("mel.post.b"));
}

// conv stack -> scaled positional embedding -> one self-attention layer
inline Tensor encode_mel(Tape& tape, const Tensor& mel, ParamBinder& param, const EncoderConfig& cfg,
                         const ForwardMode& mode = {}) {
    Tensor x = mel_conv_stack(tape, mel, param, cfg, mode);
    x = add_scaled_pe(tape, x, param("mel.pe_scale"));
    Tensor attn = multihead_self_attention(tape, x, param, "mel.attn", cfg.heads);
    attn = dropout(tape, attn, cfg.dropout, mode);
    return ops::layer_norm(tape, ops::add(tape, x, attn), param("mel.ln.gamma"), param("mel.ln.beta"));
}

// ---------------------------------------------------------------------------
// parameter registration
// ---------------------------------------------------------------------------

namespace detail {

inline void register_attention(ParameterStore& store, const std::string& prefix, int dim, RngStream& rng) {
    for (const char* w : {".wq", ".wk", ".wv", ".wo"}) init_xavier(store.create(prefix + w, {dim, dim}), rng, dim, dim);
    for (const char* b : {".bq", ".bk", ".bv", ".bo"}) store.create(prefix + b, {dim});
}

}  // namespace detail

inline void register_encoder_params(ParameterStore& store, const EncoderConfig& cfg, RngStream& rng) {
    cfg.validate();
    const int d = cfg.model_dim;
    const int k = cfg.conv_kernel;

    // unit-scale embeddings so content is not drowned by the positional table
    init_normal(store.create("text.embedding", {cfg.vocab, d}), rng, 1.0);
    init_const(store.create("text.pe_scale", {1}), 1.0);
    for (int b = 0; b < cfg.fft_blocks; ++b) {
        const std::string p = "text.block" + std::to_string(b);
        detail::register_attention(store, p + ".attn", d, rng);
        init_const(store.create(p + ".ln1.gamma", {d}), 1.0);
        store.create(p + ".ln1.beta", {d});
        init_const(store.create(p + ".ln2.gamma", {d}), 1.0);
        store.create(p + ".ln2.beta", {d});
        init_xavier(store.create(p + ".ffn.w1", {k, d, cfg.ffn_hidden}), rng, k * d, cfg.ffn_hidden);
        store.create(p + ".ffn.b1", {cfg.ffn_hidden});
        init_xavier(store.create(p + ".ffn.w2", {k, cfg.ffn_hidden, d}), rng, k * cfg.ffn_hidden, d);
        store.create(p + ".ffn.b2", {d});
    }

    init_xavier(store.create("mel.pre.w", {cfg.mel_channels, cfg.cnn_channels}), rng, cfg.mel_channels, cfg.cnn_channels);
    store.create("mel.pre.b", {cfg.cnn_channels});
    for (const char* c : {"mel.conv1", "mel.conv2"}) {
        init_xavier(store.create(std::string(c) + ".w", {k, cfg.cnn_channels, cfg.cnn_channels}), rng,
                    k * cfg.cnn_channels, cfg.cnn_channels);
        store.create(std::string(c) + ".b", {cfg.cnn_channels});
    }
    init_xavier(store.create("mel.post.w", {cfg.cnn_channels, d}), rng, cfg.cnn_channels, d);
    store.create("mel.post.b", {d});
    init_const(store.create("mel.pe_scale", {1}), 1.0);
    detail::register_attention(store, "mel.attn", d, rng);
    init_const(store.create("mel.ln.gamma", {d}), 1.0);
    store.create("mel.ln.beta", {d});
}

}  // namespace monoalign
