#pragma once

#include <algorithm>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "monoalign/align.hpp"
#include "monoalign/corpus.hpp"
#include "monoalign/encoders.hpp"
#include "monoalign/parallel.hpp"
#include "monoalign/params.hpp"

namespace monoalign {

// scan could not place every token (previous boundary already at J)
struct AlignmentFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct HardBoundaries {
    std::vector<int> b;  // 1-based frames, strictly increasing; last entry coerced to J
};

struct DurationVector {
    std::vector<int> d;
    bool accepted = false;
};

constexpr double kInferenceTau = 0.1;

// Sequential hard boundary search: each alpha row is computed from the
// one-hot previous boundary, so it reduces to an argmax over the window of
// noise-free energies at tau = 0.1 (the temperature preserves the argmax).
// Ties break toward the lowest frame.
inline HardBoundaries hard_boundary_scan(const Tensor& text_hidden, const Tensor& mel_hidden,
                                         const AlignConfig& cfg) {
    cfg.validate();
    Tape scratch;
    Tensor th = text_hidden, mh = mel_hidden;
    th.node = mh.node = -1;
    Tensor logits = ops::mul_scalar(scratch, alignment_logits(scratch, th, mh), 1.0 / kInferenceTau);
    require_finite(logits, "hard_boundary_scan");

    const int n_tokens = logits.rows(), n_frames = logits.cols(), window = cfg.max_duration;
    HardBoundaries hb;
    hb.b.resize(static_cast<size_t>(n_tokens));
    int prev = 0;
    for (int i = 0; i < n_tokens; ++i) {
        if (prev >= n_frames)
            throw AlignmentFailure("hard_boundary_scan: boundary reached frame " + std::to_string(n_frames) +
                                   " with " + std::to_string(n_tokens - i) + " token(s) unplaced");
        if (i + 1 == n_tokens) {
            // last duration is defined by the residual, not by a scanned argmax
            hb.b[static_cast<size_t>(i)] = n_frames;
            break;
        }
        const int hi = std::min(prev + window, n_frames);
        int best = prev + 1;
        for (int m = prev + 2; m <= hi; ++m)
            if (logits.at(i, m - 1) > logits.at(i, best - 1)) best = m;
        hb.b[static_cast<size_t>(i)] = best;
        prev = best;
    }
    return hb;
}

// d_i = b_i - b_{i-1} for i < I; d_I = J - sum(d_i) and the sample is
// rejected when that residual falls outside [1, D]
inline DurationVector durations_from_boundaries(const HardBoundaries& hb, int n_frames, int max_duration) {
    const int n_tokens = static_cast<int>(hb.b.size());
    if (n_tokens == 0) throw std::invalid_argument("durations_from_boundaries: empty boundaries");
    for (int i = 1; i + 1 < n_tokens; ++i)
        if (hb.b[static_cast<size_t>(i)] <= hb.b[static_cast<size_t>(i - 1)])
            throw std::invalid_argument("durations_from_boundaries: boundaries not strictly increasing");
    DurationVector dv;
    dv.d.resize(static_cast<size_t>(n_tokens));
    int prev = 0;
    for (int i = 0; i + 1 < n_tokens; ++i) {
        dv.d[static_cast<size_t>(i)] = hb.b[static_cast<size_t>(i)] - prev;
        prev = hb.b[static_cast<size_t>(i)];
    }
    const int residual = n_frames - prev;
    dv.d[static_cast<size_t>(n_tokens - 1)] = residual;
    dv.accepted = residual >= 1 && residual <= max_duration;
    return dv;
}

// ---------------------------------------------------------------------------
// corpus-level extraction
// ---------------------------------------------------------------------------

struct DurationRecord {
    std::string id;
    std::vector<int> tokens;
    std::vector<int> durations;  // empty when the scan failed outright
    bool accepted = false;
    int n_frames = 0;
};

struct ExtractionReport {
    int total = 0;
    int accepted = 0;
    int rejected = 0;
    // against ground truth, accepted samples only; zero totals when no truth available
    long long exact_tokens = 0, truth_tokens = 0;
    long long boundaries_within_one = 0, truth_boundaries = 0;

    double rejection_rate() const { return total == 0 ? 0.0 : static_cast<double>(rejected) / total; }
    double match_rate() const { return truth_tokens == 0 ? 0.0 : static_cast<double>(exact_tokens) / truth_tokens; }
    double boundary_rate() const {
        return truth_boundaries == 0 ? 0.0 : static_cast<double>(boundaries_within_one) / truth_boundaries;
    }
};

inline DurationRecord extract_durations(const Utterance& u, ParameterStore& store, const EncoderConfig& enc_cfg,
                                        const AlignConfig& align_cfg) {
    DurationRecord rec;
    rec.id = u.id;
    rec.tokens = u.tokens;
    rec.n_frames = u.n_frames();
    Tape tape;
    ParamBinder param(tape, store);
    ForwardMode eval{};  // dropout off, deterministic
    Tensor text = encode_text(tape, u.tokens, param, enc_cfg, eval);
    Tensor mel = encode_mel(tape, u.mel, param, enc_cfg, eval);
    try {
        HardBoundaries hb = hard_boundary_scan(text, mel, align_cfg);
        DurationVector dv = durations_from_boundaries(hb, u.n_frames(), align_cfg.max_duration);
        rec.durations = dv.d;
        rec.accepted = dv.accepted;
    } catch (const AlignmentFailure&) {
        rec.accepted = false;
    }
    return rec;
}

inline void tally_against_truth(const DurationRecord& rec, const std::vector<int>& truth, ExtractionReport& rep) {
    if (truth.empty() || !rec.accepted) return;
    rep.truth_tokens += static_cast<long long>(truth.size());
    for (size_t i = 0; i < truth.size() && i < rec.durations.size(); ++i)
        if (rec.durations[i] == truth[i]) ++rep.exact_tokens;
    // boundaries are duration prefix sums; the final one is J on both sides
    long long got = 0, want = 0;
    for (size_t i = 0; i < truth.size(); ++i) {
        got += rec.durations[i];
        want += truth[i];
        ++rep.truth_boundaries;
        if (std::llabs(got - want) <= 1) ++rep.boundaries_within_one;
    }
}

inline std::vector<DurationRecord> extract_corpus_durations(const std::vector<Utterance>& corpus,
                                                            ParameterStore& store, const EncoderConfig& enc_cfg,
                                                            const AlignConfig& align_cfg, ExtractionReport& report,
                                                            int jobs = 1) {
    std::vector<DurationRecord> records(corpus.size());
    parallel_for(static_cast<int>(corpus.size()), jobs, [&](int i) {
        records[static_cast<size_t>(i)] =
            extract_durations(corpus[static_cast<size_t>(i)], store, enc_cfg, align_cfg);
    });
    report = {};
    report.total = static_cast<int>(corpus.size());
    for (size_t i = 0; i < corpus.size(); ++i) {
        if (records[i].accepted)
            ++report.accepted;
        else
            ++report.rejected;
        tally_against_truth(records[i], corpus[i].durations, report);
    }
    return records;
}

inline nlohmann::json duration_record_to_json(const DurationRecord& rec) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["tokens"] = rec.tokens;
    j["durations"] = rec.durations;
    j["accepted"] = rec.accepted;
    j["J"] = rec.n_frames;
    return j;
}

}  // namespace monoalign
