#include <catch2/catch_amalgamated.hpp>

#include "testutil.hpp"

using namespace monoalign;
using Catch::Approx;
using testutil::random_tensor;

namespace {

Tensor uniform_energies(int n_tokens, int n_frames) {
    Tensor e = Tensor::matrix(n_tokens, n_frames);
    for (auto& x : e.v) x = 1.0;
    return e;
}

}  // namespace

TEST_CASE("energy from scaled dot products") {
    SECTION("zero logits give unit energies") {
        Tensor text = Tensor::matrix(2, 4);
        Tensor mel = Tensor::matrix(3, 4);
        EnergyMatrix em = energy(text, mel);
        for (double x : em.e.v) REQUIRE(x == 1.0);
        for (double s : em.row_shift) REQUIRE(s == 0.0);
    }
    SECTION("d_QK=4 and Q.K=2 puts the logit at 1") {
        Tensor text({1, 4}, {1, 1, 0, 0});
        Tensor mel({1, 4}, {1, 1, 0, 0});
        EnergyMatrix em = energy(text, mel);
        REQUIRE(em.logits.v[0] == Approx(1.0));
        REQUIRE(em.unshifted(0, 0) == Approx(std::exp(1.0)));
    }
    SECTION("non-finite logits are rejected") {
        Tensor bad({1, 2}, {1.0, std::numeric_limits<double>::infinity()});
        REQUIRE_THROWS_AS(energy_from_logits(bad), std::runtime_error);
    }
    SECTION("per-row logit shifts leave conditionals, alpha and beta unchanged") {
        RngStream rng(5);
        Tensor logits = random_tensor({3, 6}, rng, -2.0, 2.0);
        Tensor shifted = logits;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 6; ++j) shifted.at(i, j) += 7.5 * (i + 1);
        EnergyMatrix a = energy_from_logits(logits);
        EnergyMatrix b = energy_from_logits(shifted);
        for (int k = 0; k < 5; ++k) {
            auto wa = conditional_boundary(a.e, 1, k, 3);
            auto wb = conditional_boundary(b.e, 1, k, 3);
            for (size_t m = 0; m < wa.p.size(); ++m) REQUIRE(wa.p[m] == Approx(wb.p[m]).margin(1e-12));
        }
        Tensor alpha_a = boundary_forward(a.e, 3);
        Tensor alpha_b = boundary_forward(b.e, 3);
        Tensor beta_a = alignment_posterior(a.e, alpha_a, 3);
        Tensor beta_b = alignment_posterior(b.e, alpha_b, 3);
        for (size_t i = 0; i < alpha_a.size(); ++i) {
            REQUIRE(alpha_a.v[i] == Approx(alpha_b.v[i]).margin(1e-12));
            REQUIRE(beta_a.v[i] == Approx(beta_b.v[i]).margin(1e-12));
        }
    }
}

TEST_CASE("gumbel noise machinery") {
    SECTION("U = 1/e maps to zero noise") {
        REQUIRE(gumbel_from_uniform(std::exp(-1.0)) == Approx(0.0).margin(1e-12));
    }
    SECTION("zero noise at tau=1 reproduces the plain energies") {
        RngStream rng(3);
        Tensor logits = random_tensor({2, 5}, rng);
        GumbelDraw draw;
        draw.tau = {1.0, 1.0};
        draw.noise = Tensor::matrix(2, 5);
        draw.uniforms = Tensor::matrix(2, 5);
        EnergyMatrix noisy = gumbel_energy(logits, draw);
        EnergyMatrix plain = energy_from_logits(logits);
        for (size_t i = 0; i < noisy.e.size(); ++i) REQUIRE(noisy.e.v[i] == Approx(plain.e.v[i]).margin(1e-14));
    }
    SECTION("tiny temperature concentrates the window on the argmax of logit+noise") {
        RngStream rng(17);
        Tensor logits = random_tensor({1, 6}, rng, -1.0, 1.0);
        GumbelDraw draw;
        draw.tau = {0.01};
        draw.uniforms = Tensor::matrix(1, 6);
        draw.noise = Tensor::matrix(1, 6);
        for (auto& x : draw.noise.v) x = rng.uniform(-0.5, 0.5);
        EnergyMatrix em = gumbel_energy(logits, draw);
        auto w = conditional_boundary(em.e, 0, 0, 6);
        int arg = 0;
        for (int j = 1; j < 6; ++j)
            if (logits.v[static_cast<size_t>(j)] + draw.noise.v[static_cast<size_t>(j)] >
                logits.v[static_cast<size_t>(arg)] + draw.noise.v[static_cast<size_t>(arg)])
                arg = j;
        REQUIRE(w.p[static_cast<size_t>(arg)] == Approx(1.0).margin(1e-6));
    }
    SECTION("non-positive temperature is rejected") {
        GumbelDraw draw;
        draw.tau = {0.0};
        draw.noise = Tensor::matrix(1, 2);
        draw.uniforms = Tensor::matrix(1, 2);
        REQUIRE_THROWS_AS(gumbel_energy(Tensor::matrix(1, 2), draw), std::invalid_argument);
    }
}

TEST_CASE("sample_gumbel draws") {
    RngStream rng(21);
    SECTION("degenerate ceiling pins every temperature at 0.1") {
        GumbelDraw d = sample_gumbel(4, 3, 0.1, rng);
        for (double t : d.tau) REQUIRE(t == Approx(0.1).margin(1e-12));
    }
    SECTION("temperatures stay inside [0.1, tau_max] and uniforms inside (0,1)") {
        GumbelDraw d = sample_gumbel(50, 40, 0.7, rng);
        for (double t : d.tau) {
            REQUIRE(t >= 0.1);
            REQUIRE(t <= 0.7);
        }
        for (double u : d.uniforms.v) {
            REQUIRE(u > 0.0);
            REQUIRE(u < 1.0);
        }
    }
    SECTION("empirical noise mean approximates the Euler-Mascheroni constant") {
        double sum = 0.0;
        const int n = 100000;
        for (int i = 0; i < n; ++i) sum += gumbel_from_uniform(rng.uniform01());
        REQUIRE(sum / n == Approx(0.5772).margin(0.01));
    }
    SECTION("ceiling outside [0.1, 1] is rejected") {
        REQUIRE_THROWS_AS(sample_gumbel(2, 2, 0.05, rng), std::invalid_argument);
        REQUIRE_THROWS_AS(sample_gumbel(2, 2, 1.5, rng), std::invalid_argument);
    }
}

TEST_CASE("conditional boundary distributions") {
    SECTION("uniform energies normalize over the window") {
        auto w = conditional_boundary(uniform_energies(1, 3), 0, 0, 5);
        REQUIRE(w.first == 1);
        REQUIRE(w.last == 3);
        for (double p : w.p) REQUIRE(p == Approx(1.0 / 3).margin(1e-12));
    }
    SECTION("D=1 is a point mass at k+1") {
        auto w = conditional_boundary(uniform_energies(1, 4), 0, 1, 1);
        REQUIRE(w.first == 2);
        REQUIRE(w.last == 2);
        REQUIRE(w.p == std::vector<double>{1.0});
    }
    SECTION("direct normalization of [1,2,1]") {
        Tensor e({1, 3}, {1, 2, 1});
        auto w = conditional_boundary(e, 0, 0, 3);
        REQUIRE(w.p[0] == Approx(0.25));
        REQUIRE(w.p[1] == Approx(0.5));
        REQUIRE(w.p[2] == Approx(0.25));
    }
    SECTION("window sums to one on random energies") {
        RngStream rng(9);
        for (int trial = 0; trial < 50; ++trial) {
            const int J = rng.uniform_int(1, 9);
            const int D = rng.uniform_int(1, 5);
            const int k = rng.uniform_int(0, J - 1);
            Tensor e = oracle::random_energies(1, J, rng);
            auto w = conditional_boundary(e, 0, k, D);
            double s = 0.0;
            for (double p : w.p) s += p;
            REQUIRE(s == Approx(1.0).margin(1e-12));
        }
    }
    SECTION("exhausted window is an error") {
        REQUIRE_THROWS_AS(conditional_boundary(uniform_energies(1, 3), 0, 3, 2), std::invalid_argument);
    }
}

TEST_CASE("boundary forward DP") {
    SECTION("single token, single frame") {
        Tensor alpha = boundary_forward(uniform_energies(1, 1), 4);
        REQUIRE(alpha.v[0] == Approx(1.0));
    }
    SECTION("hand-derived uniform instance with leakage") {
        Tensor alpha = boundary_forward(uniform_energies(2, 3), 3);
        REQUIRE(alpha.at(0, 0) == Approx(1.0 / 3).margin(1e-12));
        REQUIRE(alpha.at(0, 1) == Approx(1.0 / 3).margin(1e-12));
        REQUIRE(alpha.at(0, 2) == Approx(1.0 / 3).margin(1e-12));
        REQUIRE(alpha.at(1, 0) == 0.0);
        REQUIRE(alpha.at(1, 1) == Approx(1.0 / 6).margin(1e-12));
        REQUIRE(alpha.at(1, 2) == Approx(1.0 / 2).margin(1e-12));
        const double row2 = alpha.at(1, 0) + alpha.at(1, 1) + alpha.at(1, 2);
        REQUIRE(row2 == Approx(2.0 / 3).margin(1e-12));
        REQUIRE(1.0 - alpha.at(0, 2) == Approx(row2).margin(1e-12));
    }
    SECTION("more tokens than frames is rejected") {
        REQUIRE_THROWS_AS(boundary_forward(uniform_energies(4, 3), 2), std::invalid_argument);
    }
    SECTION("support and leak monotonicity on random instances") {
        RngStream rng(31);
        for (int trial = 0; trial < 40; ++trial) {
            const int I = rng.uniform_int(1, 5);
            const int J = rng.uniform_int(I, 10);
            const int D = rng.uniform_int(1, 5);
            Tensor e = oracle::random_energies(I, J, rng);
            Tensor alpha = boundary_forward(e, D);
            double first_row = 0.0;
            for (int j = 0; j < J; ++j) first_row += alpha.at(0, j);
            REQUIRE(first_row == Approx(1.0).margin(1e-12));
            double prev_mass = 2.0;
            for (int i = 0; i < I; ++i) {
                double mass = 0.0;
                for (int j = 0; j < J; ++j) {
                    mass += alpha.at(i, j);
                    if (j + 1 < i + 1 || j + 1 > (i + 1) * D) REQUIRE(alpha.at(i, j) == 0.0);
                    REQUIRE(alpha.at(i, j) >= 0.0);
                }
                REQUIRE(mass <= prev_mass + 1e-12);
                prev_mass = mass;
            }
        }
    }
    SECTION("full mass reaches every token when no prefix can hit J early") {
        // boundaries of token i reach at most i*D, so leakage needs (I-1)*D >= J
        RngStream rng(57);
        for (int trial = 0; trial < 30; ++trial) {
            const int I = rng.uniform_int(1, 5);
            const int D = rng.uniform_int(1, 4);
            const int J = (I - 1) * D + rng.uniform_int(1, 3);  // J > (I-1)*D
            if (J < I) continue;
            Tensor e = oracle::random_energies(I, J, rng);
            Tensor alpha = boundary_forward(e, D);
            for (int i = 0; i < I; ++i) {
                double mass = 0.0;
                for (int j = 0; j < J; ++j) mass += alpha.at(i, j);
                REQUIRE(mass == Approx(1.0).margin(1e-12));
            }
        }
    }
}

TEST_CASE("alignment posterior") {
    SECTION("I=1, J=2, uniform: beta = [1, 1/2]") {
        Tensor e = uniform_energies(1, 2);
        Tensor alpha = boundary_forward(e, 2);
        Tensor beta = alignment_posterior(e, alpha, 2);
        REQUIRE(beta.at(0, 0) == Approx(1.0).margin(1e-12));
        REQUIRE(beta.at(0, 1) == Approx(0.5).margin(1e-12));
    }
    SECTION("frame 1 always belongs to token 1") {
        RngStream rng(13);
        for (int trial = 0; trial < 20; ++trial) {
            const int J = rng.uniform_int(1, 5);
            const int D = rng.uniform_int(J, 5);  // J <= D
            Tensor e = oracle::random_energies(1, J, rng);
            Tensor beta = alignment_posterior(e, boundary_forward(e, D), D);
            REQUIRE(beta.at(0, 0) == Approx(1.0).margin(1e-12));
        }
    }
    SECTION("beta stays within [0,1]") {
        RngStream rng(43);
        for (int trial = 0; trial < 30; ++trial) {
            const int I = rng.uniform_int(1, 5);
            const int J = rng.uniform_int(I, 10);
            const int D = rng.uniform_int(1, 5);
            Tensor e = oracle::random_energies(I, J, rng);
            Tensor beta = alignment_posterior(e, boundary_forward(e, D), D);
            for (double x : beta.v) {
                REQUIRE(x >= 0.0);
                REQUIRE(x <= 1.0 + 1e-12);
            }
        }
    }
    SECTION("shape mismatch is rejected") {
        Tensor e = uniform_energies(2, 4);
        Tensor alpha = boundary_forward(e, 2);
        REQUIRE_THROWS_AS(alignment_posterior(uniform_energies(2, 5), alpha, 2), std::invalid_argument);
    }
}

TEST_CASE("hidden state expansion") {
    Tape tape;
    SECTION("one-hot columns select token rows") {
        Tensor beta({2, 3}, {1, 0, 0, 0, 1, 1});
        Tensor h({2, 4}, {1, 2, 3, 4, 5, 6, 7, 8});
        Tensor out = expand_hidden(tape, beta, h);
        REQUIRE(out.rows() == 3);
        REQUIRE(out.v == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8, 5, 6, 7, 8});
    }
    SECTION("single token tiles its row everywhere") {
        Tensor beta({1, 3}, {1, 1, 1});
        Tensor h({1, 2}, {3, -1});
        Tensor out = expand_hidden(tape, beta, h);
        for (int j = 0; j < 3; ++j) {
            REQUIRE(out.at(j, 0) == 3.0);
            REQUIRE(out.at(j, 1) == -1.0);
        }
    }
    SECTION("matches the naive loop, including columns that sum below one") {
        RngStream rng(3);
        Tensor beta = random_tensor({3, 5}, rng, 0.0, 0.4);
        Tensor h = random_tensor({3, 4}, rng);
        Tensor out = expand_hidden(tape, beta, h);
        for (int j = 0; j < 5; ++j)
            for (int c = 0; c < 4; ++c) {
                double want = 0.0;
                for (int i = 0; i < 3; ++i) want += beta.at(i, j) * h.at(i, c);
                REQUIRE(out.at(j, c) == Approx(want).margin(1e-12));
            }
    }
    SECTION("dimension mismatch is rejected") {
        REQUIRE_THROWS_AS(expand_hidden(tape, Tensor::matrix(2, 3), Tensor::matrix(3, 4)), std::invalid_argument);
    }
}

TEST_CASE("frame interlacement") {
    SECTION("downsample keeps the first frame of each pair") {
        Tensor x({6, 1}, {10, 11, 12, 13, 14, 15});
        Tensor sub = interlace_downsample(x);
        REQUIRE(sub.v == std::vector<double>{10, 12, 14});
        Tensor odd({5, 1}, {10, 11, 12, 13, 14});
        REQUIRE(interlace_downsample(odd).v == std::vector<double>{10, 12, 14});
        Tensor one({1, 1}, {42});
        REQUIRE(interlace_downsample(one).v == std::vector<double>{42});
    }
    SECTION("recovery patterns for even J") {
        Tensor alpha_sub({1, 3}, {0.1, 0.2, 0.3});
        Tensor beta_sub({1, 3}, {0.4, 0.5, 0.6});
        auto rec = interlace_recover(alpha_sub, beta_sub, 6);
        REQUIRE(rec.alpha.v == std::vector<double>{0.1, 0, 0.2, 0, 0.3, 0});
        REQUIRE(rec.beta.v == std::vector<double>{0.4, 0.4, 0.5, 0.5, 0.6, 0.6});
    }
    SECTION("odd J truncates the trailing duplicate") {
        Tensor alpha_sub({1, 3}, {0.1, 0.2, 0.3});
        Tensor beta_sub({1, 3}, {0.4, 0.5, 0.6});
        auto rec = interlace_recover(alpha_sub, beta_sub, 5);
        REQUIRE(rec.alpha.v == std::vector<double>{0.1, 0, 0.2, 0, 0.3});
        REQUIRE(rec.beta.v == std::vector<double>{0.4, 0.4, 0.5, 0.5, 0.6});
    }
    SECTION("column count mismatch is rejected") {
        REQUIRE_THROWS_AS(interlace_recover(Tensor::matrix(1, 2), Tensor::matrix(1, 2), 6), std::invalid_argument);
    }
    SECTION("half-rate window bound") {
        AlignConfig cfg;
        cfg.max_duration = 7;
        REQUIRE(cfg.sub_duration() == 4);
        cfg.max_duration = 8;
        REQUIRE(cfg.sub_duration() == 4);
    }
}

TEST_CASE("DP gradients match finite differences") {
    RngStream rng(77);
    const int I = 3, J = 7, D = 3;
    SECTION("boundary_forward w.r.t. logits") {
        Tensor logits = random_tensor({I, J}, rng, -1.5, 1.5);
        REQUIRE(testutil::check_unary_grad(logits, [&](Tape& t, const Tensor& x) {
                    return boundary_forward_logits_op(t, x, D);
                }) < 1e-4);
    }
    SECTION("alignment_posterior w.r.t. logits and alpha") {
        Tensor logits = random_tensor({I, J}, rng, -1.5, 1.5);
        Tensor alpha0 = boundary_forward_logits(logits, D);
        REQUIRE(testutil::check_unary_grad(logits, [&](Tape& t, const Tensor& x) {
                    return alignment_posterior_logits_op(t, x, alpha0, D);
                }) < 1e-4);
        REQUIRE(testutil::check_unary_grad(alpha0, [&](Tape& t, const Tensor& x) {
                    return alignment_posterior_logits_op(t, logits, x, D);
                }) < 1e-4);
    }
    SECTION("full chain from logits through both posteriors") {
        Tensor logits = random_tensor({I, J}, rng, -1.5, 1.5);
        REQUIRE(testutil::check_unary_grad(logits, [&](Tape& t, const Tensor& x) {
                    Tensor alpha = boundary_forward_logits_op(t, x, D);
                    Tensor beta = alignment_posterior_logits_op(t, x, alpha, D);
                    return ops::concat_cols(t, {alpha, beta});
                }) < 1e-4);
    }
    SECTION("extreme logit spreads stay finite through the DP") {
        Tensor logits = random_tensor({2, 6}, rng, -1.0, 1.0);
        logits.at(0, 3) += 2000.0;  // far beyond exp range without local shifts
        logits.at(1, 1) -= 2000.0;
        Tensor alpha = boundary_forward_logits(logits, D);
        Tensor beta = alignment_posterior_logits(logits, alpha, D);
        REQUIRE(all_finite(alpha));
        REQUIRE(all_finite(beta));
        double first_row = 0.0;
        for (int j = 0; j < 6; ++j) first_row += alpha.at(0, j);
        REQUIRE(first_row == Approx(1.0).margin(1e-12));
    }
    SECTION("interlace recovery ops") {
        Tensor sub = random_tensor({2, 4}, rng);
        REQUIRE(testutil::check_unary_grad(sub, [](Tape& t, const Tensor& x) { return dilate_cols_x2(t, x, 8); }) <
                1e-4);
        REQUIRE(testutil::check_unary_grad(sub, [](Tape& t, const Tensor& x) { return repeat_cols_x2(t, x, 7); }) <
                1e-4);
        Tensor mel = random_tensor({7, 3}, rng);
        REQUIRE(testutil::check_unary_grad(mel, [](Tape& t, const Tensor& x) { return downsample_rows_x2(t, x); }) <
                1e-4);
    }
}
