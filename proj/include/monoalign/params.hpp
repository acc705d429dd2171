#pragma once

#include <bit>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoalign/rng.hpp"
#include "monoalign/tape.hpp"
#include "monoalign/tensor.hpp"

namespace monoalign {

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-9;
};

struct Parameter {
    Tensor value;
    Tensor m;  // first moment
    Tensor v;  // second moment
};

class ParameterStore {
  public:
    Tensor& create(const std::string& name, std::vector<int> shape) {
        if (params_.count(name)) throw std::invalid_argument("parameter already exists: " + name);
        Parameter p{Tensor(shape), Tensor(shape), Tensor(shape)};
        return params_.emplace(name, std::move(p)).first->second.value;
    }

    bool has(const std::string& name) const { return params_.count(name) != 0; }

    Parameter& at(const std::string& name) {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
        return it->second;
    }
    const Parameter& at(const std::string& name) const {
        auto it = params_.find(name);
        if (it == params_.end()) throw std::out_of_range("no such parameter: " + name);
        return it->second;
    }

    // ordered by name, so iteration is deterministic
    std::map<std::string, Parameter>& all() { return params_; }
    const std::map<std::string, Parameter>& all() const { return params_; }

    int64_t step() const { return step_; }
    void set_step(int64_t s) { step_ = s; }

    size_t value_count() const {
        size_t n = 0;
        for (const auto& [k, p] : params_) n += p.value.size();
        return n;
    }

    void save(const std::string& path) const;
    static ParameterStore load(const std::string& path);

  private:
    std::map<std::string, Parameter> params_;
    int64_t step_ = 0;
    friend void adam_step(ParameterStore&, const std::map<std::string, std::vector<double>>&, double, const AdamConfig&);
};

// Places parameters on a tape as leaves and records their node ids so the
// trainer can read gradients back out by name after backward().
class ParamBinder {
  public:
    ParamBinder(Tape& tape, ParameterStore& store) : tape_(tape), store_(store) {}

    Tensor operator()(const std::string& name) {
        Tensor t = tape_.leaf(store_.at(name).value);
        bound_[name] = t.node;
        return t;
    }

    const std::map<std::string, int>& bound() const { return bound_; }

    std::map<std::string, std::vector<double>> collect_grads(Tape& tape) const {
        std::map<std::string, std::vector<double>> g;
        for (const auto& [name, node] : bound_) g[name] = tape.grad(node);
        return g;
    }

  private:
    Tape& tape_;
    ParameterStore& store_;
    std::map<std::string, int> bound_;
};

// Standard Adam with bias correction. Parameters missing from `grads` are
// treated as zero-gradient (their moments still decay).
inline void adam_step(ParameterStore& store, const std::map<std::string, std::vector<double>>& grads, double lr,
                      const AdamConfig& cfg = {}) {
    store.step_ += 1;
    const double t = static_cast<double>(store.step_);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (auto& [name, p] : store.params_) {
        const std::vector<double>* g = nullptr;
        auto it = grads.find(name);
        if (it != grads.end()) {
            if (it->second.size() != p.value.size())
                throw std::invalid_argument("adam_step: gradient shape mismatch for " + name);
            g = &it->second;
        }
        for (size_t i = 0; i < p.value.size(); ++i) {
            const double gi = g ? (*g)[i] : 0.0;
            p.m.v[i] = cfg.beta1 * p.m.v[i] + (1.0 - cfg.beta1) * gi;
            p.v.v[i] = cfg.beta2 * p.v.v[i] + (1.0 - cfg.beta2) * gi * gi;
            const double mhat = p.m.v[i] / bc1;
            const double vhat = p.v.v[i] / bc2;
            p.value.v[i] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ---------------------------------------------------------------------------
// checkpoint file, format version 1 (see docs/FORMATS.md)
// ---------------------------------------------------------------------------

namespace ckpt {

inline void put_u32(std::string& out, uint32_t x) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
inline void put_u64(std::string& out, uint64_t x) {
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
}
inline void put_f64(std::string& out, double x) { put_u64(out, std::bit_cast<uint64_t>(x)); }

struct Reader {
    const std::string& buf;
    size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    uint8_t u8() {
        need(1);
        return static_cast<uint8_t>(buf[pos++]);
    }
    uint32_t u32() {
        need(4);
        uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return x;
    }
    uint64_t u64() {
        need(8);
        uint64_t x = 0;
        for (int i = 0; i < 8; ++i) x |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos++])) << (8 * i);
        return x;
    }
    double f64() { return std::bit_cast<double>(u64()); }
    std::string str(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    void need(size_t n) const {
        if (pos + n > buf.size()) throw std::runtime_error("checkpoint: truncated file");
    }
};

}  // namespace ckpt

inline void ParameterStore::save(const std::string& path) const {
    std::string out;
    out.push_back(static_cast<char>(1));  // format version
    ckpt::put_u32(out, static_cast<uint32_t>(params_.size()));
    for (const auto& [name, p] : params_) {
        ckpt::put_u32(out, static_cast<uint32_t>(name.size()));
        out += name;
        ckpt::put_u32(out, static_cast<uint32_t>(p.value.shape.size()));
        for (int d : p.value.shape) ckpt::put_u32(out, static_cast<uint32_t>(d));
        for (double x : p.value.v) ckpt::put_f64(out, x);
        for (double x : p.m.v) ckpt::put_f64(out, x);
        for (double x : p.v.v) ckpt::put_f64(out, x);
    }
    ckpt::put_u64(out, static_cast<uint64_t>(step_));
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("checkpoint: cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error("checkpoint: write failed: " + path);
}

inline ParameterStore ParameterStore::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("checkpoint: cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    ckpt::Reader r(buf);
    const uint8_t version = r.u8();
    if (version != 1) throw std::runtime_error("checkpoint: unsupported format version " + std::to_string(version));
    ParameterStore store;
    const uint32_t count = r.u32();
    for (uint32_t i = 0; i < count; ++i) {
        const std::string name = r.str(r.u32());
        const uint32_t rank = r.u32();
        std::vector<int> shape(rank);
        for (auto& d : shape) d = static_cast<int>(r.u32());
        Parameter p{Tensor(shape), Tensor(shape), Tensor(shape)};
        for (auto& x : p.value.v) x = r.f64();
        for (auto& x : p.m.v) x = r.f64();
        for (auto& x : p.v.v) x = r.f64();
        store.params_.emplace(name, std::move(p));
    }
    store.step_ = static_cast<int64_t>(r.u64());
    return store;
}

// ---------------------------------------------------------------------------
// initializers
// ---------------------------------------------------------------------------

inline void init_uniform(Tensor& t, RngStream& rng, double limit) {
    for (auto& x : t.v) x = rng.uniform(-limit, limit);
}

inline void init_xavier(Tensor& t, RngStream& rng, int fan_in, int fan_out) {
    init_uniform(t, rng, std::sqrt(6.0 / (fan_in + fan_out)));
}

inline void init_normal(Tensor& t, RngStream& rng, double stddev) {
    for (auto& x : t.v) x = stddev * rng.normal();
}

inline void init_const(Tensor& t, double value) {
    for (auto& x : t.v) x = value;
}

}  // namespace monoalign
