#pragma once

#include <fstream>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoalign/corpus.hpp"
#include "monoalign/trainer.hpp"

namespace monoalign {

// Flat key=value configuration: one pair per line, '#' comments, later
// assignments win. CLI overrides are applied on top with the same syntax.
class KvConfig {
  public:
    KvConfig() = default;

    static KvConfig from_file(const std::string& path) {
        std::ifstream f(path);
        if (!f) throw std::runtime_error("config: cannot open " + path);
        KvConfig c;
        std::string line;
        int lineno = 0;
        while (std::getline(f, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line.erase(hash);
            const auto trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::runtime_error("config: line " + std::to_string(lineno) + ": expected key=value");
            c.set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
        }
        return c;
    }

    void set(const std::string& key, const std::string& value) {
        if (key.empty()) throw std::runtime_error("config: empty key");
        kv_[key] = value;
    }

    void apply_override(const std::string& assignment) {
        const auto eq = assignment.find('=');
        if (eq == std::string::npos) throw std::runtime_error("config: override must be key=value: " + assignment);
        set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
    }

    bool contains(const std::string& key) const { return kv_.count(key) != 0; }

    std::string get_string(const std::string& key, const std::string& dflt) {
        used_.insert(key);
        auto it = kv_.find(key);
        return it == kv_.end() ? dflt : it->second;
    }

    int get_int(const std::string& key, int dflt) {
        used_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            size_t pos = 0;
            const int v = std::stoi(it->second, &pos);
            if (pos != it->second.size()) throw std::invalid_argument("");
            return v;
        } catch (...) {
            throw std::runtime_error("config: key '" + key + "' expects an integer, got '" + it->second + "'");
        }
    }

    uint64_t get_u64(const std::string& key, uint64_t dflt) {
        used_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stoull(it->second);
        } catch (...) {
            throw std::runtime_error("config: key '" + key + "' expects an unsigned integer, got '" + it->second + "'");
        }
    }

    double get_double(const std::string& key, double dflt) {
        used_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        try {
            return std::stod(it->second);
        } catch (...) {
            throw std::runtime_error("config: key '" + key + "' expects a number, got '" + it->second + "'");
        }
    }

    bool get_bool(const std::string& key, bool dflt) {
        used_.insert(key);
        auto it = kv_.find(key);
        if (it == kv_.end()) return dflt;
        const std::string& s = it->second;
        if (s == "1" || s == "true" || s == "on" || s == "yes") return true;
        if (s == "0" || s == "false" || s == "off" || s == "no") return false;
        throw std::runtime_error("config: key '" + key + "' expects a boolean, got '" + s + "'");
    }

    // rejects keys nobody asked about
    void reject_unknown() const {
        std::string unknown;
        for (const auto& [k, v] : kv_)
            if (!used_.count(k)) unknown += (unknown.empty() ? "" : ", ") + k;
        if (!unknown.empty()) throw std::runtime_error("config: unknown key(s): " + unknown);
    }

  private:
    static std::string trim(const std::string& s) {
        const auto a = s.find_first_not_of(" \t\r");
        const auto b = s.find_last_not_of(" \t\r");
        return a == std::string::npos ? "" : s.substr(a, b - a + 1);
    }

    std::map<std::string, std::string> kv_;
    std::set<std::string> used_;
};

// ---------------------------------------------------------------------------
// typed views used by the CLI
// ---------------------------------------------------------------------------

inline SynthSpec synth_spec_from(KvConfig& c) {
    SynthSpec s;
    s.vocab = c.get_int("vocab", s.vocab);
    s.mel_channels = c.get_int("mel_channels", s.mel_channels);
    s.d_min = c.get_int("d_min", s.d_min);
    s.d_max = c.get_int("d_max", s.d_max);
    s.i_min = c.get_int("i_min", s.i_min);
    s.i_max = c.get_int("i_max", s.i_max);
    s.sigma = c.get_double("sigma", s.sigma);
    s.samples = c.get_int("samples", s.samples);
    s.seed = c.get_u64("seed", s.seed);
    return s;
}

inline ModelConfig model_config_from(KvConfig& c) {
    ModelConfig m;
    m.enc.model_dim = c.get_int("model_dim", m.enc.model_dim);
    m.enc.heads = c.get_int("heads", m.enc.heads);
    m.enc.ffn_hidden = c.get_int("ffn_hidden", m.enc.ffn_hidden);
    m.enc.fft_blocks = c.get_int("fft_blocks", m.enc.fft_blocks);
    m.enc.conv_kernel = c.get_int("conv_kernel", m.enc.conv_kernel);
    m.enc.mel_channels = c.get_int("mel_channels", m.enc.mel_channels);
    m.enc.cnn_channels = c.get_int("cnn_channels", m.enc.cnn_channels);
    m.enc.cnn_dilation = c.get_int("cnn_dilation", m.enc.cnn_dilation);
    m.enc.dropout = c.get_double("dropout", m.enc.dropout);
    m.enc.vocab = c.get_int("vocab", m.enc.vocab);
    m.align.max_duration = c.get_int("max_duration", m.align.max_duration);
    m.align.interlace = c.get_bool("interlace", m.align.interlace);
    m.align.noise = c.get_bool("noise", true);
    return m;
}

inline TrainConfig train_config_from(KvConfig& c) {
    TrainConfig t;
    t.epochs = c.get_int("epochs", t.epochs);
    t.frame_budget = c.get_int("frame_budget", t.frame_budget);
    t.warmup = c.get_int("warmup", t.warmup);
    t.noam_scale = c.get_double("noam_scale", t.noam_scale);
    t.tau_start = c.get_double("tau_start", t.tau_start);
    t.tau_end = c.get_double("tau_end", t.tau_end);
    t.seed = c.get_u64("train_seed", t.seed);
    t.checkpoint_interval = c.get_int("checkpoint_interval", t.checkpoint_interval);
    return t;
}

}  // namespace monoalign
