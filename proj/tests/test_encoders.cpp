#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"

using namespace monoalign;
using Catch::Approx;
using testutil::random_tensor;

namespace {

EncoderConfig micro_config() {
    EncoderConfig cfg;
    cfg.model_dim = 8;
    cfg.heads = 2;
    cfg.ffn_hidden = 8;
    cfg.fft_blocks = 1;
    cfg.mel_channels = 4;
    cfg.cnn_channels = 4;
    cfg.vocab = 5;
    cfg.dropout = 0.1;
    return cfg;
}

ParameterStore make_store(const EncoderConfig& cfg, uint64_t seed = 1) {
    ParameterStore store;
    RngStream rng(seed);
    register_encoder_params(store, cfg, rng);
    return store;
}

}  // namespace

TEST_CASE("scaled positional embedding") {
    Tape tape;
    SECTION("zero scale gives a zero matrix") {
        Tensor pe = scaled_positional_embedding(tape, 6, 8, Tensor::scalar(0.0));
        for (double x : pe.v) REQUIRE(x == 0.0);
    }
    SECTION("position zero has sin(0)=0 in even channels") {
        Tensor pe = scaled_positional_embedding(tape, 4, 8, Tensor::scalar(1.0));
        for (int c = 0; c < 8; c += 2) REQUIRE(pe.at(0, c) == 0.0);
        for (int c = 1; c < 8; c += 2) REQUIRE(pe.at(0, c) == 1.0);
    }
    SECTION("values are bounded by |scale|") {
        Tensor pe = scaled_positional_embedding(tape, 32, 10, Tensor::scalar(-0.7));
        for (double x : pe.v) REQUIRE(std::abs(x) <= 0.7 + 1e-12);
    }
}

TEST_CASE("encoder shape contracts") {
    EncoderConfig cfg;
    cfg.model_dim = 64;
    cfg.heads = 2;
    cfg.ffn_hidden = 32;
    cfg.fft_blocks = 1;
    cfg.mel_channels = 8;
    cfg.cnn_channels = 8;
    cfg.vocab = 16;
    ParameterStore store = make_store(cfg);
    SECTION("text output is I x model_dim") {
        Tape tape;
        ParamBinder param(tape, store);
        Tensor out = encode_text(tape, {1, 2, 3, 4, 5}, param, cfg);
        REQUIRE(out.rows() == 5);
        REQUIRE(out.cols() == 64);
    }
    SECTION("mel output is J x model_dim") {
        Tape tape;
        ParamBinder param(tape, store);
        RngStream rng(2);
        Tensor out = encode_mel(tape, random_tensor({12, 8}, rng), param, cfg);
        REQUIRE(out.rows() == 12);
        REQUIRE(out.cols() == 64);
    }
    SECTION("random lengths keep the contract") {
        RngStream rng(5);
        for (int trial = 0; trial < 4; ++trial) {
            const int I = rng.uniform_int(1, 64);
            const int J = rng.uniform_int(1, 64);
            Tape tape;
            ParamBinder param(tape, store);
            std::vector<int> tokens;
            for (int i = 0; i < I; ++i) tokens.push_back(rng.uniform_int(0, cfg.vocab - 1));
            REQUIRE(encode_text(tape, tokens, param, cfg).rows() == I);
            REQUIRE(encode_mel(tape, random_tensor({J, 8}, rng), param, cfg).rows() == J);
        }
    }
    SECTION("wrong frame width is rejected") {
        Tape tape;
        ParamBinder param(tape, store);
        REQUIRE_THROWS_AS(encode_mel(tape, Tensor::matrix(4, 7), param, cfg), std::invalid_argument);
    }
    SECTION("unknown token id is rejected") {
        Tape tape;
        ParamBinder param(tape, store);
        REQUIRE_THROWS_AS(encode_text(tape, {0, 16}, param, cfg), std::out_of_range);
    }
}

TEST_CASE("embedding stage behaviour") {
    EncoderConfig cfg = micro_config();
    ParameterStore store = make_store(cfg);
    SECTION("permuting tokens permutes embedding rows") {
        Tape tape;
        ParamBinder param(tape, store);
        Tensor ab = ops::embedding(tape, {1, 3}, param("text.embedding"));
        Tensor ba = ops::embedding(tape, {3, 1}, param("text.embedding"));
        for (int c = 0; c < cfg.model_dim; ++c) {
            REQUIRE(ab.at(0, c) == ba.at(1, c));
            REQUIRE(ab.at(1, c) == ba.at(0, c));
        }
    }
    SECTION("zero positional scale leaves pure embeddings") {
        store.at("text.pe_scale").value.v[0] = 0.0;
        Tape tape;
        ParamBinder param(tape, store);
        Tensor emb = ops::embedding(tape, {2, 4, 0}, param("text.embedding"));
        Tensor with_pe = add_scaled_pe(tape, emb, param("text.pe_scale"));
        REQUIRE(with_pe.v == emb.v);
    }
}

TEST_CASE("encoders are deterministic with dropout off") {
    EncoderConfig cfg = micro_config();
    ParameterStore store = make_store(cfg, 3);
    RngStream rng(4);
    Tensor mel = random_tensor({9, cfg.mel_channels}, rng);
    auto run = [&]() {
        Tape tape;
        ParamBinder param(tape, store);
        return encode_mel(tape, mel, param, cfg);  // default mode: inference
    };
    REQUIRE(run().v == run().v);
}

TEST_CASE("dropout masks differ between training passes but keep expectation scale") {
    EncoderConfig cfg = micro_config();
    ParameterStore store = make_store(cfg, 3);
    RngStream data_rng(4);
    Tensor mel = random_tensor({9, cfg.mel_channels}, data_rng);
    RngStream r1(100), r2(101);
    ForwardMode m1{true, &r1}, m2{true, &r2};
    Tape t1, t2;
    ParamBinder p1(t1, store), p2(t2, store);
    Tensor a = encode_mel(t1, mel, p1, cfg, m1);
    Tensor b = encode_mel(t2, mel, p2, cfg, m2);
    REQUIRE(a.v != b.v);
}

TEST_CASE("mel conv stack has a 9-frame receptive field") {
    EncoderConfig cfg = micro_config();
    ParameterStore store = make_store(cfg, 6);
    // large positive biases keep every ReLU active, so no path is masked and
    // the propagation distance is purely a kernel/dilation question
    for (const char* b : {"mel.pre.b", "mel.conv1.b", "mel.conv2.b"}) init_const(store.at(b).value, 10.0);
    RngStream rng(7);
    const int J = 30, probe = 15;
    Tensor mel = random_tensor({J, cfg.mel_channels}, rng);
    auto run = [&](const Tensor& x) {
        Tape tape;
        ParamBinder param(tape, store);
        return mel_conv_stack(tape, x, param, cfg);
    };
    Tensor base = run(mel);
    Tensor bumped = mel;
    for (int c = 0; c < cfg.mel_channels; ++c) bumped.at(probe, c) += 1.0;
    Tensor changed = run(bumped);
    // two kernel-3 dilation-2 convs span 1 + 2*2 + 2*2 = 9 frames; dilation
    // leaves the odd offsets untouched
    int lo = J, hi = -1;
    for (int l = 0; l < J; ++l) {
        bool differs = false;
        for (int c = 0; c < cfg.model_dim; ++c)
            if (base.at(l, c) != changed.at(l, c)) differs = true;
        if (differs) {
            lo = std::min(lo, l);
            hi = std::max(hi, l);
        }
        const int off = l - probe;
        if (off % 2 == 0 && std::abs(off) <= 4)
            REQUIRE(differs);
        else
            REQUIRE_FALSE(differs);
    }
    REQUIRE(hi - lo + 1 == 9);
}

TEST_CASE("encoder gradients pass finite differences") {
    EncoderConfig cfg = micro_config();
    cfg.dropout = 0.0;
    ParameterStore store = make_store(cfg, 9);
    RngStream rng(10);
    Tensor mel = random_tensor({4, cfg.mel_channels}, rng);
    std::vector<int> tokens{1, 4, 2};

    auto loss_value = [&]() {
        Tape tape;
        ParamBinder param(tape, store);
        Tensor text = encode_text(tape, tokens, param, cfg);
        Tensor melh = encode_mel(tape, mel, param, cfg);
        double s = 0.0;
        for (size_t i = 0; i < text.size(); ++i) s += text.v[i] * (0.1 + 0.001 * static_cast<double>(i % 17));
        for (size_t i = 0; i < melh.size(); ++i) s += melh.v[i] * (0.05 - 0.002 * static_cast<double>(i % 13));
        return s;
    };

    Tape tape;
    ParamBinder param(tape, store);
    Tensor text = encode_text(tape, tokens, param, cfg);
    Tensor melh = encode_mel(tape, mel, param, cfg);
    Tensor wt = Tensor(text.shape), wm = Tensor(melh.shape);
    for (size_t i = 0; i < wt.size(); ++i) wt.v[i] = 0.1 + 0.001 * static_cast<double>(i % 17);
    for (size_t i = 0; i < wm.size(); ++i) wm.v[i] = 0.05 - 0.002 * static_cast<double>(i % 13);
    Tensor loss = ops::add(tape, ops::sum(tape, ops::mul(tape, text, wt)), ops::sum(tape, ops::mul(tape, melh, wm)));
    tape.backward(loss);

    double worst = 0.0;
    std::string worst_name;
    for (const auto& [name, node] : param.bound()) {
        const auto& analytic = tape.grad(node);
        auto fd = testutil::fd_gradient(store.at(name).value.v, loss_value);
        for (size_t i = 0; i < fd.size(); ++i) {
            const double err = testutil::rel_err(analytic[i], fd[i]);
            if (err > worst) {
                worst = err;
                worst_name = name;
            }
        }
    }
    INFO("worst parameter: " << worst_name);
    REQUIRE(worst < 1e-4);
}
