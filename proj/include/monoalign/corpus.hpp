#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "monoalign/rng.hpp"
#include "monoalign/tensor.hpp"

namespace monoalign {

struct Utterance {
    std::string id;
    std::vector<int> tokens;
    Tensor mel;                   // J x C
    std::vector<int> durations;   // ground truth when known (synthetic corpora); empty otherwise

    int n_frames() const { return mel.rows(); }
    int n_tokens() const { return static_cast<int>(tokens.size()); }

    bool operator==(const Utterance& o) const {
        return id == o.id && tokens == o.tokens && durations == o.durations && mel.shape == o.mel.shape &&
               mel.v == o.mel.v;
    }
};

struct SynthSpec {
    int vocab = 16;
    int mel_channels = 8;
    int d_min = 1, d_max = 5;
    int i_min = 3, i_max = 8;
    double sigma = 0.05;
    int samples = 200;
    uint64_t seed = 7;

    void validate() const {
        if (vocab < 1 || mel_channels < 1 || samples < 0) throw std::invalid_argument("synth spec: bad sizes");
        if (!(1 <= d_min && d_min <= d_max)) throw std::invalid_argument("synth spec: need 1 <= d_min <= d_max");
        if (!(1 <= i_min && i_min <= i_max)) throw std::invalid_argument("synth spec: need 1 <= i_min <= i_max");
        if (sigma < 0.0) throw std::invalid_argument("synth spec: sigma must be >= 0");
    }
};

// ---------------------------------------------------------------------------
// synthetic generation
// ---------------------------------------------------------------------------

namespace detail {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    double d = 0, na = 0, nb = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        d += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    return d / (std::sqrt(na) * std::sqrt(nb) + 1e-300);
}

}  // namespace detail

// One unit-norm spectral template per token id, rejection-sampled to keep
// pairwise cosine similarity under 0.8 so tokens stay distinguishable.
inline std::vector<std::vector<double>> spectral_templates(const SynthSpec& spec, RngStream& rng) {
    std::vector<std::vector<double>> templates;
    templates.reserve(static_cast<size_t>(spec.vocab));
    for (int t = 0; t < spec.vocab; ++t) {
        for (int attempt = 0;; ++attempt) {
            if (attempt > 10000)
                throw std::runtime_error("spectral_templates: cannot separate " + std::to_string(spec.vocab) +
                                         " templates in " + std::to_string(spec.mel_channels) + " channels");
            std::vector<double> v(static_cast<size_t>(spec.mel_channels));
            double norm = 0;
            for (auto& x : v) {
                x = rng.normal();
                norm += x * x;
            }
            norm = std::sqrt(norm);
            for (auto& x : v) x /= norm;
            bool ok = true;
            for (const auto& prev : templates)
                if (detail::cosine(v, prev) >= 0.8) {
                    ok = false;
                    break;
                }
            if (ok) {
                templates.push_back(std::move(v));
                break;
            }
        }
    }
    return templates;
}

inline std::vector<Utterance> generate(const SynthSpec& spec) {
    spec.validate();
    RngStream rng(derive_seed(spec.seed, 0xC0135));
    auto templates = spectral_templates(spec, rng);
    std::vector<Utterance> corpus;
    corpus.reserve(static_cast<size_t>(spec.samples));
    for (int s = 0; s < spec.samples; ++s) {
        Utterance u;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "utt_%06d", s);
        u.id = buf;
        const int n_tokens = rng.uniform_int(spec.i_min, spec.i_max);
        int total = 0;
        for (int i = 0; i < n_tokens; ++i) {
            u.tokens.push_back(rng.uniform_int(0, spec.vocab - 1));
            u.durations.push_back(rng.uniform_int(spec.d_min, spec.d_max));
            total += u.durations.back();
        }
        u.mel = Tensor::matrix(total, spec.mel_channels);
        int frame = 0;
        for (int i = 0; i < n_tokens; ++i) {
            const auto& tpl = templates[static_cast<size_t>(u.tokens[static_cast<size_t>(i)])];
            for (int r = 0; r < u.durations[static_cast<size_t>(i)]; ++r, ++frame)
                for (int c = 0; c < spec.mel_channels; ++c)
                    u.mel.at(frame, c) = tpl[static_cast<size_t>(c)] + spec.sigma * rng.normal();
        }
        corpus.push_back(std::move(u));
    }
    return corpus;
}

// ---------------------------------------------------------------------------
// JSON-lines persistence (schema in docs/FORMATS.md)
// ---------------------------------------------------------------------------

inline nlohmann::json utterance_to_json(const Utterance& u) {
    nlohmann::json j;
    j["id"] = u.id;
    j["tokens"] = u.tokens;
    j["mel"] = {{"J", u.mel.rows()}, {"C", u.mel.cols()}, {"values", u.mel.v}};
    if (!u.durations.empty()) j["durations"] = u.durations;
    return j;
}

inline Utterance utterance_from_json(const nlohmann::json& j) {
    Utterance u;
    u.id = j.at("id").get<std::string>();
    u.tokens = j.at("tokens").get<std::vector<int>>();
    const auto& m = j.at("mel");
    const int rows = m.at("J").get<int>();
    const int cols = m.at("C").get<int>();
    u.mel = Tensor({rows, cols}, m.at("values").get<std::vector<double>>());
    if (j.contains("durations")) {
        u.durations = j.at("durations").get<std::vector<int>>();
        int total = 0;
        for (int d : u.durations) total += d;
        if (static_cast<int>(u.durations.size()) != u.n_tokens() || total != rows)
            throw std::runtime_error("durations inconsistent with tokens/frames");
    }
    return u;
}

inline void save_corpus(const std::vector<Utterance>& corpus, const std::string& path) {
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("corpus: cannot open for writing: " + path);
    for (const auto& u : corpus) f << utterance_to_json(u).dump() << '\n';
    if (!f) throw std::runtime_error("corpus: write failed: " + path);
}

inline std::vector<Utterance> load_corpus(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("corpus: cannot open: " + path);
    std::vector<Utterance> corpus;
    std::string line;
    int lineno = 0;
    while (std::getline(f, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            corpus.push_back(utterance_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::runtime_error("corpus: parse error at line " + std::to_string(lineno) + ": " + e.what());
        }
    }
    return corpus;
}

}  // namespace monoalign
