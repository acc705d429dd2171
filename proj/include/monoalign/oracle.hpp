#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoalign/align.hpp"
#include "monoalign/rng.hpp"
#include "monoalign/tensor.hpp"

namespace monoalign::oracle {

// One monotone boundary sequence 0 = b_0 < b_1 < ... <= J with per-step gaps
// bounded by D. A path is leaked when the boundaries hit J with tokens still
// unplaced; its weight stays on the books, mirroring the DP.
struct BoundaryPath {
    std::vector<int> b;  // b[0] == 0, then 1-based boundary frames
    double weight = 1.0;
    bool leaked = false;
};

struct Enumeration {
    std::vector<BoundaryPath> complete;
    std::vector<BoundaryPath> leaked;
    double leaked_mass = 0.0;
};

namespace detail {

inline void expand(const Tensor& e, int max_duration, int token, int prev, double weight,
                   std::vector<int>& path, Enumeration& out) {
    const int n_tokens = e.rows(), n_frames = e.cols();
    if (token == n_tokens) {
        out.complete.push_back({path, weight, false});
        return;
    }
    if (prev >= n_frames) {
        out.leaked.push_back({path, weight, true});
        out.leaked_mass += weight;
        return;
    }
    const int hi = std::min(prev + max_duration, n_frames);
    double den = 0.0;
    for (int m = prev + 1; m <= hi; ++m) den += e.at(token, m - 1);
    for (int m = prev + 1; m <= hi; ++m) {
        path.push_back(m);
        expand(e, max_duration, token + 1, m, weight * e.at(token, m - 1) / den, path, out);
        path.pop_back();
    }
}

}  // namespace detail

inline Enumeration enumerate_paths(const Tensor& e, int max_duration) {
    const int n_tokens = e.rows(), n_frames = e.cols();
    if (n_tokens > 6 || n_frames > 10 || max_duration > 5)
        throw std::invalid_argument("enumerate_paths: instance exceeds size guard (I<=6, J<=10, D<=5), got I=" +
                                    std::to_string(n_tokens) + " J=" + std::to_string(n_frames) +
                                    " D=" + std::to_string(max_duration));
    dp::validate_energies(e, max_duration, "enumerate_paths");
    Enumeration out;
    std::vector<int> path{0};
    detail::expand(e, max_duration, 0, 0, 1.0, path, out);
    return out;
}

struct Marginals {
    Tensor alpha;
    Tensor beta;
};

inline Marginals oracle_marginals(const Enumeration& en, int n_tokens, int n_frames) {
    Marginals m{Tensor::matrix(n_tokens, n_frames), Tensor::matrix(n_tokens, n_frames)};
    auto tally = [&](const BoundaryPath& p) {
        for (size_t i = 1; i < p.b.size(); ++i) {
            const int row = static_cast<int>(i) - 1;
            m.alpha.at(row, p.b[i] - 1) += p.weight;
            for (int j = p.b[i - 1] + 1; j <= p.b[i]; ++j) m.beta.at(row, j - 1) += p.weight;
        }
    };
    for (const auto& p : en.complete) tally(p);
    for (const auto& p : en.leaked) tally(p);
    return m;
}

// probability that frame j (1-based) is attributed to some token
inline std::vector<double> coverage(const Enumeration& en, int n_frames) {
    std::vector<double> cov(static_cast<size_t>(n_frames), 0.0);
    auto tally = [&](const BoundaryPath& p) {
        const int last = p.b.back();
        for (int j = 1; j <= last; ++j) cov[static_cast<size_t>(j - 1)] += p.weight;
    };
    for (const auto& p : en.complete) tally(p);
    for (const auto& p : en.leaked) tally(p);
    return cov;
}

// ---------------------------------------------------------------------------
// randomized DP-vs-oracle check (shared by tests and the CLI)
// ---------------------------------------------------------------------------

struct VerifyResult {
    int trials = 0;
    double max_diff = 0.0;
    bool pass = true;
};

inline Tensor random_energies(int n_tokens, int n_frames, RngStream& rng) {
    Tensor e = Tensor::matrix(n_tokens, n_frames);
    for (auto& x : e.v) x = std::exp(rng.normal());
    return e;
}

// `corrupt` is a test hook that perturbs one DP output entry so negative
// controls can prove the comparison actually bites.
inline VerifyResult verify_dp_against_oracle(int trials, int max_i, int max_j, int max_d, uint64_t seed,
                                             bool corrupt = false) {
    if (max_i > 6 || max_j > 10 || max_d > 5)
        throw std::invalid_argument("verify_dp_against_oracle: sizes exceed the oracle guard (I<=6, J<=10, D<=5)");
    VerifyResult r;
    RngStream rng(derive_seed(seed, 0xA11CE));
    for (int t = 0; t < trials; ++t) {
        const int I = rng.uniform_int(1, max_i);
        const int J = rng.uniform_int(std::max(I, 1), max_j);
        const int D = rng.uniform_int(1, max_d);
        Tensor e = random_energies(I, J, rng);
        Tensor alpha = boundary_forward(e, D);
        Tensor beta = alignment_posterior(e, alpha, D);
        if (corrupt) alpha.v[0] += 1e-6;
        Marginals m = oracle_marginals(enumerate_paths(e, D), I, J);
        for (size_t i = 0; i < alpha.size(); ++i) {
            r.max_diff = std::max(r.max_diff, std::abs(alpha.v[i] - m.alpha.v[i]));
            r.max_diff = std::max(r.max_diff, std::abs(beta.v[i] - m.beta.v[i]));
        }
        ++r.trials;
    }
    r.pass = r.max_diff <= 1e-10;
    return r;
}

}  // namespace monoalign::oracle
