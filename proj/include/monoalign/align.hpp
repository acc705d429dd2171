#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoalign/ops.hpp"
#include "monoalign/rng.hpp"
#include "monoalign/tape.hpp"
#include "monoalign/tensor.hpp"

namespace monoalign {

struct AlignConfig {
    int max_duration = 20;  // D, hard cap on frames per token
    double tau_max = 1.0;
    double tau_final = 0.1;
    bool interlace = false;
    bool noise = false;

    void validate() const {
        if (max_duration < 1) throw std::invalid_argument("align config: max_duration must be >= 1");
        if (!(tau_final > 0.0 && tau_final <= tau_max && tau_max <= 1.0))
            throw std::invalid_argument("align config: need 0 < tau_final <= tau_max <= 1");
    }

    int sub_duration() const { return (max_duration + 1) / 2; }  // D for the half-rate DP
};

// Token-frame energies. Values are stored max-shifted per row (e = exp(logit - shift));
// every conditional in the DP is a ratio of same-row entries, so the shift cancels.
struct EnergyMatrix {
    Tensor e;                       // I x J, strictly positive
    Tensor logits;                  // I x J raw scaled dot products
    std::vector<double> row_shift;  // subtracted per row before exponentiation

    double unshifted(int i, int j) const { return e.at(i, j) * std::exp(row_shift[static_cast<size_t>(i)]); }
};

struct GumbelDraw {
    std::vector<double> tau;  // per-token temperatures, length I
    Tensor noise;             // I x J, G = -log(-log U)
    Tensor uniforms;          // I x J raw U draws in (0,1)
};

// ---------------------------------------------------------------------------
// energies
// ---------------------------------------------------------------------------

// (Q K^T) / sqrt(d) with Q = text hidden rows and K = mel hidden rows
inline Tensor alignment_logits(Tape& tape, const Tensor& text_hidden, const Tensor& mel_hidden) {
    if (text_hidden.cols() != mel_hidden.cols())
        throw std::invalid_argument("alignment_logits: hidden dim mismatch " + text_hidden.shape_str() + " vs " +
                                    mel_hidden.shape_str());
    Tensor kt = ops::transpose(tape, mel_hidden);
    Tensor qk = ops::matmul(tape, text_hidden, kt);
    return ops::mul_scalar(tape, qk, 1.0 / std::sqrt(static_cast<double>(text_hidden.cols())));
}

inline EnergyMatrix energy_from_logits(const Tensor& logits) {
    if (!all_finite(logits)) throw std::runtime_error("energy: non-finite logits");
    EnergyMatrix em;
    em.logits = logits;
    em.logits.node = -1;
    Tape scratch;
    em.e = ops::exp_row_shifted(scratch, em.logits, &em.row_shift);
    for (double x : em.e.v)
        if (x == 0.0) throw std::runtime_error("energy: exponential underflow, logit spread too large");
    return em;
}

inline EnergyMatrix energy(const Tensor& text_hidden, const Tensor& mel_hidden) {
    Tape scratch;
    Tensor t = text_hidden, m = mel_hidden;
    t.node = m.node = -1;
    return energy_from_logits(alignment_logits(scratch, t, m));
}

inline double gumbel_from_uniform(double u) { return -std::log(-std::log(u)); }

// fresh per-token temperatures and per-pair Gumbel noise
inline GumbelDraw sample_gumbel(int n_tokens, int n_frames, double tau_max, RngStream& rng) {
    if (!(tau_max >= 0.1 && tau_max <= 1.0))
        throw std::invalid_argument("sample_gumbel: tau_max must lie in [0.1, 1]");
    GumbelDraw d;
    d.tau.resize(static_cast<size_t>(n_tokens));
    for (auto& t : d.tau) t = rng.uniform(0.1, tau_max);
    d.uniforms = Tensor::matrix(n_tokens, n_frames);
    d.noise = Tensor::matrix(n_tokens, n_frames);
    for (size_t i = 0; i < d.uniforms.size(); ++i) {
        const double u = rng.uniform01();
        d.uniforms.v[i] = u;
        d.noise.v[i] = gumbel_from_uniform(u);
    }
    return d;
}

// e^G = exp(logit / tau_i + G / tau_i), stored max-shifted per row
inline EnergyMatrix gumbel_energy(const Tensor& logits, const GumbelDraw& draw) {
    require_same_shape(logits, draw.noise, "gumbel_energy");
    const int n = logits.rows();
    if (static_cast<int>(draw.tau.size()) != n)
        throw std::invalid_argument("gumbel_energy: temperature count mismatch");
    for (double t : draw.tau)
        if (t <= 0.0) throw std::invalid_argument("gumbel_energy: non-positive temperature");
    Tensor noisy = Tensor::matrix(n, logits.cols());
    for (int i = 0; i < n; ++i) {
        const double inv_tau = 1.0 / draw.tau[static_cast<size_t>(i)];
        for (int j = 0; j < logits.cols(); ++j)
            noisy.at(i, j) = (logits.at(i, j) + draw.noise.at(i, j)) * inv_tau;
    }
    EnergyMatrix em = energy_from_logits(noisy);
    em.logits = logits;  // keep the un-noised logits on record
    em.logits.node = -1;
    return em;
}

// ---------------------------------------------------------------------------
// the boundary DP
// ---------------------------------------------------------------------------

namespace dp {

inline void validate_energies(const Tensor& e, int max_duration, const char* op) {
    if (e.rank() != 2) throw std::invalid_argument(std::string(op) + ": energies must be rank-2, got " + e.shape_str());
    if (max_duration < 1) throw std::invalid_argument(std::string(op) + ": max duration must be >= 1");
    for (double x : e.v) {
        if (!(x > 0.0) || !std::isfinite(x))
            throw std::runtime_error(std::string(op) + ": energies must be strictly positive and finite");
    }
}

inline void validate_logits(const Tensor& x, int max_duration, const char* op) {
    if (x.rank() != 2) throw std::invalid_argument(std::string(op) + ": logits must be rank-2, got " + x.shape_str());
    if (max_duration < 1) throw std::invalid_argument(std::string(op) + ": max duration must be >= 1");
    require_finite(x, op);
}

// The DP consumes energies only through within-window ratios, so every
// window gets its own local max shift. The denominator is then always >= 1:
// no overflow, no cancellation, and entries far below the window max decay
// to a true zero conditional instead of poisoning the row. `probs` must hold
// max_duration entries; the window is (prev_boundary, min(prev_boundary+D, J)].
inline void window_softmax(const Tensor& logits, int token, int prev_boundary, int max_duration, int& first,
                           int& last, double* probs) {
    const int J = logits.cols();
    first = prev_boundary + 1;
    last = std::min(prev_boundary + max_duration, J);
    double m = logits.at(token, first - 1);
    for (int j = first + 1; j <= last; ++j) m = std::max(m, logits.at(token, j - 1));
    double den = 0.0;
    for (int j = first; j <= last; ++j) {
        const double u = std::exp(logits.at(token, j - 1) - m);
        probs[j - first] = u;
        den += u;
    }
    for (int j = first; j <= last; ++j) probs[j - first] /= den;
}

inline Tensor log_energies(const Tensor& e, int max_duration, const char* op) {
    validate_energies(e, max_duration, op);
    Tensor x(e.shape);
    for (size_t i = 0; i < e.size(); ++i) x.v[i] = std::log(e.v[i]);
    return x;
}

}  // namespace dp

// P(B_i = j | B_{i-1} = k) over the window j in (k, min(k+D, J)].
// `token` is the 0-based energy row; `prev_boundary` is the previous
// boundary frame in 0..J (0 meaning the virtual start).
struct WindowDist {
    int first = 0, last = 0;        // 1-based frame range, inclusive
    std::vector<double> p;          // probabilities, p[j - first]
};

inline WindowDist conditional_boundary(const Tensor& e, int token, int prev_boundary, int max_duration) {
    dp::validate_energies(e, max_duration, "conditional_boundary");
    const int J = e.cols();
    if (prev_boundary < 0 || prev_boundary >= J)
        throw std::invalid_argument("conditional_boundary: empty window, previous boundary " +
                                    std::to_string(prev_boundary) + " with J=" + std::to_string(J));
    WindowDist w;
    w.first = prev_boundary + 1;
    w.last = std::min(prev_boundary + max_duration, J);
    double den = 0.0;
    for (int m = w.first; m <= w.last; ++m) den += e.at(token, m - 1);
    w.p.resize(static_cast<size_t>(w.last - w.first + 1));
    for (int m = w.first; m <= w.last; ++m) w.p[static_cast<size_t>(m - w.first)] = e.at(token, m - 1) / den;
    return w;
}

// Forward DP for the boundary posterior alpha[i][j] = P(B_{i+1} = j+1),
// operating on (possibly temperature-scaled) logits. Mass that exhausts all
// frames before the last token simply leaks; rows are never renormalized.
// O(I*J*D).
inline Tensor boundary_forward_logits(const Tensor& logits, int max_duration) {
    dp::validate_logits(logits, max_duration, "boundary_forward");
    const int I = logits.rows(), J = logits.cols(), D = max_duration;
    if (I > J)
        throw std::invalid_argument("boundary_forward: more tokens than frames (I=" + std::to_string(I) +
                                    ", J=" + std::to_string(J) + "), no monotone cover exists");
    Tensor alpha = Tensor::matrix(I, J);
    std::vector<double> prev(static_cast<size_t>(J) + 1, 0.0);
    prev[0] = 1.0;  // B_0 = 0 with probability 1
    std::vector<double> cond(static_cast<size_t>(D));
    for (int i = 0; i < I; ++i) {
        for (int k = 0; k < J; ++k) {
            const double pk = prev[static_cast<size_t>(k)];
            if (pk == 0.0) continue;
            int first = 0, last = 0;
            dp::window_softmax(logits, i, k, D, first, last, cond.data());
            for (int j = first; j <= last; ++j) alpha.at(i, j - 1) += pk * cond[static_cast<size_t>(j - first)];
        }
        prev[0] = 0.0;
        for (int k = 1; k <= J; ++k) prev[static_cast<size_t>(k)] = alpha.at(i, k - 1);
    }
    return alpha;
}

// spec surface: the same DP fed with strictly positive energies
inline Tensor boundary_forward(const Tensor& e, int max_duration) {
    return boundary_forward_logits(dp::log_energies(e, max_duration, "boundary_forward"), max_duration);
}

// beta[i][j] = P(B_i < j+1 <= B_{i+1}) from the same logits and the alpha
// rows produced by boundary_forward. The tail probability is a suffix sum of
// the window conditional.
inline Tensor alignment_posterior_logits(const Tensor& logits, const Tensor& alpha, int max_duration) {
    dp::validate_logits(logits, max_duration, "alignment_posterior");
    require_same_shape(logits, alpha, "alignment_posterior");
    const int I = logits.rows(), J = logits.cols(), D = max_duration;
    Tensor beta = Tensor::matrix(I, J);
    std::vector<double> prev(static_cast<size_t>(J) + 1, 0.0);
    prev[0] = 1.0;
    std::vector<double> cond(static_cast<size_t>(D));
    for (int i = 0; i < I; ++i) {
        for (int k = 0; k < J; ++k) {
            const double pk = prev[static_cast<size_t>(k)];
            if (pk == 0.0) continue;
            int first = 0, last = 0;
            dp::window_softmax(logits, i, k, D, first, last, cond.data());
            double tail = 0.0;
            for (int j = last; j >= first; --j) {
                tail += cond[static_cast<size_t>(j - first)];
                beta.at(i, j - 1) += pk * tail;
            }
        }
        prev[0] = 0.0;
        for (int k = 1; k <= J; ++k) prev[static_cast<size_t>(k)] = alpha.at(i, k - 1);
    }
    return beta;
}

inline Tensor alignment_posterior(const Tensor& e, const Tensor& alpha, int max_duration) {
    return alignment_posterior_logits(dp::log_energies(e, max_duration, "alignment_posterior"), alpha, max_duration);
}

// h~_j = sum_i beta[i][j] * h_i, i.e. beta^T H
inline Tensor expand_hidden(Tape& tape, const Tensor& beta, const Tensor& text_hidden) {
    if (beta.rows() != text_hidden.rows())
        throw std::invalid_argument("expand_hidden: token count mismatch " + beta.shape_str() + " vs " +
                                    text_hidden.shape_str());
    return ops::matmul(tape, ops::transpose(tape, beta), text_hidden);
}

// ---------------------------------------------------------------------------
// tape wrappers for the DP
// ---------------------------------------------------------------------------

// alpha as a differentiable function of the scaled logits
inline Tensor boundary_forward_logits_op(Tape& tape, const Tensor& logits, int max_duration) {
    Tensor alpha = boundary_forward_logits(logits, max_duration);
    if (logits.node < 0) return alpha;
    const int I = logits.rows(), J = logits.cols(), D = max_duration;
    auto px = std::make_shared<Tensor>(logits);
    px->node = -1;
    auto pa = ops::detail::save(alpha);
    alpha.node = tape.add_node(alpha.size(), [xn = logits.node, px, pa, I, J, D](Tape& tp, const std::vector<double>& g) {
        std::vector<double> ga(g);  // dL/d alpha, grows as rows feed back
        std::vector<double> gx(static_cast<size_t>(I) * J, 0.0);
        std::vector<double> cond(static_cast<size_t>(D));
        for (int i = I - 1; i >= 0; --i) {
            for (int k = 0; k < J; ++k) {
                int first = 0, last = 0;
                dp::window_softmax(*px, i, k, D, first, last, cond.data());
                // alpha(i,j) += pk * cond_j over the window; cond is a softmax
                double dot = 0.0;
                for (int j = first; j <= last; ++j)
                    dot += ga[static_cast<size_t>(i) * J + (j - 1)] * cond[static_cast<size_t>(j - first)];
                if (i >= 1 && k >= 1) ga[static_cast<size_t>(i - 1) * J + (k - 1)] += dot;
                const double pk = (i == 0) ? (k == 0 ? 1.0 : 0.0) : (*pa)[static_cast<size_t>(i - 1) * J + (k - 1)];
                if (pk == 0.0) continue;
                for (int m = first; m <= last; ++m) {
                    const size_t idx = static_cast<size_t>(i) * J + (m - 1);
                    gx[idx] += pk * cond[static_cast<size_t>(m - first)] * (ga[idx] - dot);
                }
            }
        }
        tp.accumulate(xn, gx);
    });
    return alpha;
}

// beta as a differentiable function of the scaled logits and alpha
inline Tensor alignment_posterior_logits_op(Tape& tape, const Tensor& logits, const Tensor& alpha, int max_duration) {
    Tensor beta = alignment_posterior_logits(logits, alpha, max_duration);
    if (logits.node < 0 && alpha.node < 0) return beta;
    const int I = logits.rows(), J = logits.cols(), D = max_duration;
    auto px = std::make_shared<Tensor>(logits);
    px->node = -1;
    auto pa = ops::detail::save(alpha);
    beta.node = tape.add_node(beta.size(), [xn = logits.node, an = alpha.node, px, pa, I, J, D](
                                               Tape& tp, const std::vector<double>& g) {
        std::vector<double> gx(static_cast<size_t>(I) * J, 0.0);
        std::vector<double> galpha(static_cast<size_t>(I) * J, 0.0);
        std::vector<double> cond(static_cast<size_t>(D));
        std::vector<double> tail(static_cast<size_t>(D));
        for (int i = 0; i < I; ++i) {
            for (int k = 0; k < J; ++k) {
                int first = 0, last = 0;
                dp::window_softmax(*px, i, k, D, first, last, cond.data());
                // tail_j = sum_{j' >= j} cond_j'; beta(i,j) += pk * tail_j
                double run = 0.0;
                for (int j = last; j >= first; --j) {
                    run += cond[static_cast<size_t>(j - first)];
                    tail[static_cast<size_t>(j - first)] = run;
                }
                double dot = 0.0;  // sum_j gbeta(i,j) * tail_j
                for (int j = first; j <= last; ++j)
                    dot += g[static_cast<size_t>(i) * J + (j - 1)] * tail[static_cast<size_t>(j - first)];
                if (i >= 1 && k >= 1) galpha[static_cast<size_t>(i - 1) * J + (k - 1)] += dot;
                const double pk = (i == 0) ? (k == 0 ? 1.0 : 0.0) : (*pa)[static_cast<size_t>(i - 1) * J + (k - 1)];
                if (pk == 0.0) continue;
                // d tail_j / d x_m = cond_m ([m >= j] - tail_j), so with
                // P_m = sum_{j <= m} gT_j and c = sum_j gT_j tail_j:
                // gx_m += cond_m (P_m - c)
                double prefix = 0.0;
                const double c = pk * dot;
                for (int m = first; m <= last; ++m) {
                    prefix += g[static_cast<size_t>(i) * J + (m - 1)] * pk;
                    gx[static_cast<size_t>(i) * J + (m - 1)] += cond[static_cast<size_t>(m - first)] * (prefix - c);
                }
            }
        }
        tp.accumulate(xn, gx);
        tp.accumulate(an, galpha);
    });
    return beta;
}

// ---------------------------------------------------------------------------
// frame interlacement
// ---------------------------------------------------------------------------

// keep the first frame of every consecutive pair (rows 0, 2, 4, ...)
inline Tensor downsample_rows_x2(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("downsample_rows_x2: need rank-2, got " + x.shape_str());
    const int J = x.rows(), c = x.cols(), Js = (J + 1) / 2;
    Tensor out = Tensor::matrix(Js, c);
    for (int t = 0; t < Js; ++t)
        for (int j = 0; j < c; ++j) out.at(t, j) = x.at(2 * t, j);
    if (x.node < 0) return out;
    out.node = tape.add_node(out.size(), [xn = x.node, J, c, Js](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gx(static_cast<size_t>(J) * c, 0.0);
        for (int t = 0; t < Js; ++t)
            for (int j = 0; j < c; ++j) gx[static_cast<size_t>(2 * t) * c + j] = g[static_cast<size_t>(t) * c + j];
        tp.accumulate(xn, gx);
    });
    return out;
}

inline Tensor interlace_downsample(const Tensor& mel_hidden) {
    Tape scratch;
    Tensor x = mel_hidden;
    x.node = -1;
    return downsample_rows_x2(scratch, x);
}

namespace detail {
inline void check_sub_cols(const Tensor& sub, int n_frames, const char* op) {
    if (sub.rank() != 2 || sub.cols() != (n_frames + 1) / 2)
        throw std::invalid_argument(std::string(op) + ": expected " + std::to_string((n_frames + 1) / 2) +
                                    " subsampled columns for J=" + std::to_string(n_frames) + ", got " + sub.shape_str());
}
}  // namespace detail

// alpha recovery: subsampled column t lands on original column 2t, zeros between
inline Tensor dilate_cols_x2(Tape& tape, const Tensor& sub, int n_frames) {
    detail::check_sub_cols(sub, n_frames, "dilate_cols_x2");
    const int I = sub.rows(), Js = sub.cols(), J = n_frames;
    Tensor out = Tensor::matrix(I, J);
    for (int i = 0; i < I; ++i)
        for (int t = 0; t < Js; ++t) out.at(i, 2 * t) = sub.at(i, t);
    if (sub.node < 0) return out;
    out.node = tape.add_node(out.size(), [sn = sub.node, I, Js, J](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gs(static_cast<size_t>(I) * Js);
        for (int i = 0; i < I; ++i)
            for (int t = 0; t < Js; ++t) gs[static_cast<size_t>(i) * Js + t] = g[static_cast<size_t>(i) * J + 2 * t];
        tp.accumulate(sn, gs);
    });
    return out;
}

// beta recovery: each subsampled column is repeated for both frames of its pair
inline Tensor repeat_cols_x2(Tape& tape, const Tensor& sub, int n_frames) {
    detail::check_sub_cols(sub, n_frames, "repeat_cols_x2");
    const int I = sub.rows(), Js = sub.cols(), J = n_frames;
    Tensor out = Tensor::matrix(I, J);
    for (int i = 0; i < I; ++i)
        for (int j = 0; j < J; ++j) out.at(i, j) = sub.at(i, j / 2);
    if (sub.node < 0) return out;
    out.node = tape.add_node(out.size(), [sn = sub.node, I, Js, J](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gs(static_cast<size_t>(I) * Js, 0.0);
        for (int i = 0; i < I; ++i)
            for (int j = 0; j < J; ++j) gs[static_cast<size_t>(i) * Js + j / 2] += g[static_cast<size_t>(i) * J + j];
        tp.accumulate(sn, gs);
    });
    return out;
}

struct RecoveredPosteriors {
    Tensor alpha;
    Tensor beta;
};

inline RecoveredPosteriors interlace_recover(const Tensor& alpha_sub, const Tensor& beta_sub, int n_frames) {
    Tape scratch;
    Tensor a = alpha_sub, b = beta_sub;
    a.node = b.node = -1;
    return {dilate_cols_x2(scratch, a, n_frames), repeat_cols_x2(scratch, b, n_frames)};
}

}  // namespace monoalign
