#pragma once

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace monoalign {

// Dense row-major f64 tensor. `node` is the tape handle; -1 marks a constant
// that no gradient flows into.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> v;
    int node = -1;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        v.assign(static_cast<size_t>(count(shape)), 0.0);
    }
    Tensor(std::vector<int> s, std::vector<double> values)
        : shape(std::move(s)), v(std::move(values)) {
        if (v.size() != static_cast<size_t>(count(shape)))
            throw std::invalid_argument("tensor: value count does not match shape");
    }

    static long long count(const std::vector<int>& s) {
        long long n = 1;
        for (int d : s) {
            if (d <= 0) throw std::invalid_argument("tensor: non-positive dimension");
            n *= d;
        }
        return n;
    }

    static Tensor scalar(double x) { return Tensor({1}, {x}); }
    static Tensor matrix(int r, int c) { return Tensor({r, c}); }

    int rank() const { return static_cast<int>(shape.size()); }
    size_t size() const { return v.size(); }
    bool is_scalar() const { return v.size() == 1 && shape.size() == 1; }

    int rows() const {
        if (rank() != 2) throw std::invalid_argument("tensor: rows() on rank-" + std::to_string(rank()));
        return shape[0];
    }
    int cols() const {
        if (rank() != 2) throw std::invalid_argument("tensor: cols() on rank-" + std::to_string(rank()));
        return shape[1];
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * shape[1] + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * shape[1] + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    std::string shape_str() const {
        std::ostringstream os;
        os << '[';
        for (size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
        os << ']';
        return os.str();
    }
};

inline bool all_finite(const Tensor& t) {
    for (double x : t.v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void require_finite(const Tensor& t, const char* what) {
    if (!all_finite(t))
        throw std::runtime_error(std::string(what) + ": non-finite value in tensor " + t.shape_str());
}

inline void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (!a.same_shape(b))
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " + b.shape_str());
}

}  // namespace monoalign
