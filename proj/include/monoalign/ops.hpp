#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <string>
#include <vector>

#include "monoalign/tape.hpp"
#include "monoalign/tensor.hpp"

namespace monoalign::ops {

namespace detail {
inline std::shared_ptr<std::vector<double>> save(const Tensor& t) {
    return std::make_shared<std::vector<double>>(t.v);
}
inline bool traced(const Tensor& a) { return a.node >= 0; }
}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise
// ---------------------------------------------------------------------------

inline Tensor add(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a.v[i] + b.v[i];
    if (!detail::traced(a) && !detail::traced(b)) return out;
    out.node = tape.add_node(out.size(), [an = a.node, bn = b.node](Tape& tp, const std::vector<double>& g) {
        tp.accumulate(an, g);
        tp.accumulate(bn, g);
    });
    return out;
}

inline Tensor sub(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "sub");
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a.v[i] - b.v[i];
    if (!detail::traced(a) && !detail::traced(b)) return out;
    out.node = tape.add_node(out.size(), [an = a.node, bn = b.node](Tape& tp, const std::vector<double>& g) {
        tp.accumulate(an, g);
        if (bn >= 0) {
            std::vector<double> nb(g.size());
            for (size_t i = 0; i < g.size(); ++i) nb[i] = -g[i];
            tp.accumulate(bn, nb);
        }
    });
    return out;
}

inline Tensor mul(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a.v[i] * b.v[i];
    if (!detail::traced(a) && !detail::traced(b)) return out;
    auto pa = detail::save(a);
    auto pb = detail::save(b);
    out.node = tape.add_node(out.size(), [an = a.node, bn = b.node, pa, pb](Tape& tp, const std::vector<double>& g) {
        if (an >= 0) {
            std::vector<double> ga(g.size());
            for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (*pb)[i];
            tp.accumulate(an, ga);
        }
        if (bn >= 0) {
            std::vector<double> gb(g.size());
            for (size_t i = 0; i < g.size(); ++i) gb[i] = g[i] * (*pa)[i];
            tp.accumulate(bn, gb);
        }
    });
    return out;
}

inline Tensor div(Tape& tape, const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "div");
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a.v[i] / b.v[i];
    if (!detail::traced(a) && !detail::traced(b)) return out;
    auto pb = detail::save(b);
    auto po = detail::save(out);
    out.node = tape.add_node(out.size(), [an = a.node, bn = b.node, pb, po](Tape& tp, const std::vector<double>& g) {
        if (an >= 0) {
            std::vector<double> ga(g.size());
            for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / (*pb)[i];
            tp.accumulate(an, ga);
        }
        if (bn >= 0) {
            std::vector<double> gb(g.size());
            for (size_t i = 0; i < g.size(); ++i) gb[i] = -g[i] * (*po)[i] / (*pb)[i];
            tp.accumulate(bn, gb);
        }
    });
    return out;
}

inline Tensor mul_scalar(Tape& tape, const Tensor& a, double c) {
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a.v[i] * c;
    if (!detail::traced(a)) return out;
    out.node = tape.add_node(out.size(), [an = a.node, c](Tape& tp, const std::vector<double>& g) {
        std::vector<double> ga(g.size());
        for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * c;
        tp.accumulate(an, ga);
    });
    return out;
}

// out = a * s where s is a 1-element tensor (possibly a learnable scalar)
inline Tensor scale(Tape& tape, const Tensor& a, const Tensor& s) {
    if (!s.is_scalar()) throw std::invalid_argument("scale: scale factor must be a scalar, got " + s.shape_str());
    Tensor out(a.shape);
    const double c = s.v[0];
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a.v[i] * c;
    if (!detail::traced(a) && !detail::traced(s)) return out;
    auto pa = detail::save(a);
    out.node = tape.add_node(out.size(), [an = a.node, sn = s.node, c, pa](Tape& tp, const std::vector<double>& g) {
        if (an >= 0) {
            std::vector<double> ga(g.size());
            for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * c;
            tp.accumulate(an, ga);
        }
        if (sn >= 0) {
            double gs = 0.0;
            for (size_t i = 0; i < g.size(); ++i) gs += g[i] * (*pa)[i];
            tp.accumulate(sn, {gs});
        }
    });
    return out;
}

inline Tensor exp(Tape& tape, const Tensor& a) {
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = std::exp(a.v[i]);
    if (!detail::traced(a)) return out;
    auto po = detail::save(out);
    out.node = tape.add_node(out.size(), [an = a.node, po](Tape& tp, const std::vector<double>& g) {
        std::vector<double> ga(g.size());
        for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] * (*po)[i];
        tp.accumulate(an, ga);
    });
    return out;
}

inline Tensor log(Tape& tape, const Tensor& a) {
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = std::log(a.v[i]);
    if (!detail::traced(a)) return out;
    auto pa = detail::save(a);
    out.node = tape.add_node(out.size(), [an = a.node, pa](Tape& tp, const std::vector<double>& g) {
        std::vector<double> ga(g.size());
        for (size_t i = 0; i < g.size(); ++i) ga[i] = g[i] / (*pa)[i];
        tp.accumulate(an, ga);
    });
    return out;
}

inline Tensor relu(Tape& tape, const Tensor& a) {
    Tensor out(a.shape);
    for (size_t i = 0; i < out.size(); ++i) out.v[i] = a.v[i] > 0.0 ? a.v[i] : 0.0;
    if (!detail::traced(a)) return out;
    auto pa = detail::save(a);
    out.node = tape.add_node(out.size(), [an = a.node, pa](Tape& tp, const std::vector<double>& g) {
        std::vector<double> ga(g.size());
        for (size_t i = 0; i < g.size(); ++i) ga[i] = (*pa)[i] > 0.0 ? g[i] : 0.0;
        tp.accumulate(an, ga);
    });
    return out;
}

// ---------------------------------------------------------------------------
// matrix ops
// ---------------------------------------------------------------------------

inline Tensor matmul(Tape& tape, const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows())
        throw std::invalid_argument("matmul: incompatible shapes " + a.shape_str() + " vs " + b.shape_str());
    const int m = a.rows(), k = a.cols(), n = b.cols();
    Tensor out = Tensor::matrix(m, n);
    for (int i = 0; i < m; ++i)
        for (int t = 0; t < k; ++t) {
            const double av = a.at(i, t);
            if (av == 0.0) continue;
            const double* brow = &b.v[static_cast<size_t>(t) * n];
            double* orow = &out.v[static_cast<size_t>(i) * n];
            for (int j = 0; j < n; ++j) orow[j] += av * brow[j];
        }
    if (!detail::traced(a) && !detail::traced(b)) return out;
    auto pa = detail::save(a);
    auto pb = detail::save(b);
    out.node = tape.add_node(out.size(), [an = a.node, bn = b.node, pa, pb, m, k, n](Tape& tp, const std::vector<double>& g) {
        if (an >= 0) {
            // gA = G * B^T
            std::vector<double> ga(static_cast<size_t>(m) * k, 0.0);
            for (int i = 0; i < m; ++i)
                for (int j = 0; j < n; ++j) {
                    const double gv = g[static_cast<size_t>(i) * n + j];
                    if (gv == 0.0) continue;
                    for (int t = 0; t < k; ++t) ga[static_cast<size_t>(i) * k + t] += gv * (*pb)[static_cast<size_t>(t) * n + j];
                }
            tp.accumulate(an, ga);
        }
        if (bn >= 0) {
            // gB = A^T * G
            std::vector<double> gb(static_cast<size_t>(k) * n, 0.0);
            for (int i = 0; i < m; ++i)
                for (int t = 0; t < k; ++t) {
                    const double av = (*pa)[static_cast<size_t>(i) * k + t];
                    if (av == 0.0) continue;
                    const double* grow = &g[static_cast<size_t>(i) * n];
                    double* brow = &gb[static_cast<size_t>(t) * n];
                    for (int j = 0; j < n; ++j) brow[j] += av * grow[j];
                }
            tp.accumulate(bn, gb);
        }
    });
    return out;
}

inline Tensor transpose(Tape& tape, const Tensor& a) {
    if (a.rank() != 2) throw std::invalid_argument("transpose: need rank-2, got " + a.shape_str());
    const int m = a.rows(), n = a.cols();
    Tensor out = Tensor::matrix(n, m);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
    if (!detail::traced(a)) return out;
    out.node = tape.add_node(out.size(), [an = a.node, m, n](Tape& tp, const std::vector<double>& g) {
        std::vector<double> ga(static_cast<size_t>(m) * n);
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < n; ++j) ga[static_cast<size_t>(i) * n + j] = g[static_cast<size_t>(j) * m + i];
        tp.accumulate(an, ga);
    });
    return out;
}

inline Tensor sum(Tape& tape, const Tensor& a) {
    double s = 0.0;
    for (double x : a.v) s += x;
    Tensor out = Tensor::scalar(s);
    if (!detail::traced(a)) return out;
    const size_t n = a.size();
    out.node = tape.add_node(1, [an = a.node, n](Tape& tp, const std::vector<double>& g) {
        std::vector<double> ga(n, g[0]);
        tp.accumulate(an, ga);
    });
    return out;
}

// broadcast a length-C row vector over the rows of an R x C matrix
inline Tensor add_rowvec(Tape& tape, const Tensor& x, const Tensor& b) {
    if (x.rank() != 2 || b.rank() != 1 || b.shape[0] != x.cols())
        throw std::invalid_argument("add_rowvec: shapes " + x.shape_str() + " vs " + b.shape_str());
    const int r = x.rows(), c = x.cols();
    Tensor out = x;
    out.node = -1;
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) out.at(i, j) += b.v[static_cast<size_t>(j)];
    if (!detail::traced(x) && !detail::traced(b)) return out;
    out.node = tape.add_node(out.size(), [xn = x.node, bn = b.node, r, c](Tape& tp, const std::vector<double>& g) {
        tp.accumulate(xn, g);
        if (bn >= 0) {
            std::vector<double> gb(static_cast<size_t>(c), 0.0);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) gb[static_cast<size_t>(j)] += g[static_cast<size_t>(i) * c + j];
            tp.accumulate(bn, gb);
        }
    });
    return out;
}

inline Tensor slice_cols(Tape& tape, const Tensor& x, int c0, int c1) {
    if (x.rank() != 2 || c0 < 0 || c1 > x.cols() || c0 >= c1)
        throw std::invalid_argument("slice_cols: bad range [" + std::to_string(c0) + "," + std::to_string(c1) +
                                    ") for " + x.shape_str());
    const int r = x.rows(), c = x.cols(), w = c1 - c0;
    Tensor out = Tensor::matrix(r, w);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < w; ++j) out.at(i, j) = x.at(i, c0 + j);
    if (!detail::traced(x)) return out;
    out.node = tape.add_node(out.size(), [xn = x.node, r, c, c0, w](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gx(static_cast<size_t>(r) * c, 0.0);
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < w; ++j) gx[static_cast<size_t>(i) * c + c0 + j] = g[static_cast<size_t>(i) * w + j];
        tp.accumulate(xn, gx);
    });
    return out;
}

inline Tensor concat_cols(Tape& tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw std::invalid_argument("concat_cols: empty input");
    const int r = parts[0].rows();
    int total = 0;
    bool traced = false;
    for (const auto& p : parts) {
        if (p.rank() != 2 || p.rows() != r)
            throw std::invalid_argument("concat_cols: row mismatch, got " + p.shape_str());
        total += p.cols();
        traced = traced || detail::traced(p);
    }
    Tensor out = Tensor::matrix(r, total);
    int off = 0;
    for (const auto& p : parts) {
        for (int i = 0; i < r; ++i)
            for (int j = 0; j < p.cols(); ++j) out.at(i, off + j) = p.at(i, j);
        off += p.cols();
    }
    if (!traced) return out;
    std::vector<int> nodes, widths;
    for (const auto& p : parts) {
        nodes.push_back(p.node);
        widths.push_back(p.cols());
    }
    out.node = tape.add_node(out.size(), [nodes, widths, r, total](Tape& tp, const std::vector<double>& g) {
        int off = 0;
        for (size_t k = 0; k < nodes.size(); ++k) {
            const int w = widths[k];
            if (nodes[k] >= 0) {
                std::vector<double> gp(static_cast<size_t>(r) * w);
                for (int i = 0; i < r; ++i)
                    for (int j = 0; j < w; ++j) gp[static_cast<size_t>(i) * w + j] = g[static_cast<size_t>(i) * total + off + j];
                tp.accumulate(nodes[k], gp);
            }
            off += w;
        }
    });
    return out;
}

// id lookup into a V x d table; ids are plain data, gradient flows into the table
inline Tensor embedding(Tape& tape, const std::vector<int>& ids, const Tensor& table) {
    if (table.rank() != 2) throw std::invalid_argument("embedding: table must be rank-2, got " + table.shape_str());
    const int v = table.rows(), d = table.cols();
    for (int id : ids)
        if (id < 0 || id >= v)
            throw std::out_of_range("embedding: token id " + std::to_string(id) + " outside vocabulary of " + std::to_string(v));
    Tensor out = Tensor::matrix(static_cast<int>(ids.size()), d);
    for (size_t i = 0; i < ids.size(); ++i)
        for (int j = 0; j < d; ++j) out.at(static_cast<int>(i), j) = table.at(ids[i], j);
    if (!detail::traced(table)) return out;
    out.node = tape.add_node(out.size(), [tn = table.node, ids, v, d](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gt(static_cast<size_t>(v) * d, 0.0);
        for (size_t i = 0; i < ids.size(); ++i)
            for (int j = 0; j < d; ++j) gt[static_cast<size_t>(ids[i]) * d + j] += g[i * d + j];
        tp.accumulate(tn, gt);
    });
    return out;
}

inline Tensor softmax_rows(Tape& tape, const Tensor& x) {
    if (x.rank() != 2) throw std::invalid_argument("softmax_rows: need rank-2, got " + x.shape_str());
    const int r = x.rows(), c = x.cols();
    Tensor out = Tensor::matrix(r, c);
    for (int i = 0; i < r; ++i) {
        double m = x.at(i, 0);
        for (int j = 1; j < c; ++j) m = std::max(m, x.at(i, j));
        double s = 0.0;
        for (int j = 0; j < c; ++j) {
            out.at(i, j) = std::exp(x.at(i, j) - m);
            s += out.at(i, j);
        }
        for (int j = 0; j < c; ++j) out.at(i, j) /= s;
    }
    if (!detail::traced(x)) return out;
    auto po = detail::save(out);
    out.node = tape.add_node(out.size(), [xn = x.node, po, r, c](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gx(static_cast<size_t>(r) * c);
        for (int i = 0; i < r; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g[static_cast<size_t>(i) * c + j] * (*po)[static_cast<size_t>(i) * c + j];
            for (int j = 0; j < c; ++j) {
                const size_t idx = static_cast<size_t>(i) * c + j;
                gx[idx] = (*po)[idx] * (g[idx] - dot);
            }
        }
        tp.accumulate(xn, gx);
    });
    return out;
}

// per-row layer norm with learnable gain/bias vectors
inline Tensor layer_norm(Tape& tape, const Tensor& x, const Tensor& gamma, const Tensor& beta, double eps = 1e-5) {
    if (x.rank() != 2 || gamma.rank() != 1 || beta.rank() != 1 || gamma.shape[0] != x.cols() || beta.shape[0] != x.cols())
        throw std::invalid_argument("layer_norm: shapes " + x.shape_str() + ", " + gamma.shape_str() + ", " + beta.shape_str());
    const int r = x.rows(), c = x.cols();
    Tensor out = Tensor::matrix(r, c);
    auto xhat = std::make_shared<std::vector<double>>(static_cast<size_t>(r) * c);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(r));
    for (int i = 0; i < r; ++i) {
        double mu = 0.0;
        for (int j = 0; j < c; ++j) mu += x.at(i, j);
        mu /= c;
        double var = 0.0;
        for (int j = 0; j < c; ++j) {
            const double d = x.at(i, j) - mu;
            var += d * d;
        }
        var /= c;
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(i)] = is;
        for (int j = 0; j < c; ++j) {
            const double h = (x.at(i, j) - mu) * is;
            (*xhat)[static_cast<size_t>(i) * c + j] = h;
            out.at(i, j) = gamma.v[static_cast<size_t>(j)] * h + beta.v[static_cast<size_t>(j)];
        }
    }
    if (!detail::traced(x) && !detail::traced(gamma) && !detail::traced(beta)) return out;
    auto pg = detail::save(gamma);
    out.node = tape.add_node(out.size(), [xn = x.node, gn = gamma.node, bn = beta.node, xhat, inv_std, pg, r, c](
                                             Tape& tp, const std::vector<double>& g) {
        if (gn >= 0 || bn >= 0) {
            std::vector<double> gg(static_cast<size_t>(c), 0.0), gb(static_cast<size_t>(c), 0.0);
            for (int i = 0; i < r; ++i)
                for (int j = 0; j < c; ++j) {
                    const size_t idx = static_cast<size_t>(i) * c + j;
                    gg[static_cast<size_t>(j)] += g[idx] * (*xhat)[idx];
                    gb[static_cast<size_t>(j)] += g[idx];
                }
            if (gn >= 0) tp.accumulate(gn, gg);
            if (bn >= 0) tp.accumulate(bn, gb);
        }
        if (xn >= 0) {
            std::vector<double> gx(static_cast<size_t>(r) * c);
            for (int i = 0; i < r; ++i) {
                double mean_h = 0.0, mean_hx = 0.0;
                for (int j = 0; j < c; ++j) {
                    const size_t idx = static_cast<size_t>(i) * c + j;
                    const double h = g[idx] * (*pg)[static_cast<size_t>(j)];
                    mean_h += h;
                    mean_hx += h * (*xhat)[idx];
                }
                mean_h /= c;
                mean_hx /= c;
                const double is = (*inv_std)[static_cast<size_t>(i)];
                for (int j = 0; j < c; ++j) {
                    const size_t idx = static_cast<size_t>(i) * c + j;
                    const double h = g[idx] * (*pg)[static_cast<size_t>(j)];
                    gx[idx] = is * (h - mean_h - (*xhat)[idx] * mean_hx);
                }
            }
            tp.accumulate(xn, gx);
        }
    });
    return out;
}

// 1-D convolution over an L x Cin sequence with "same" zero padding.
// Weight shape {K, Cin, Cout}, kernel size K odd.
inline Tensor conv1d(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b, int dilation = 1) {
    if (x.rank() != 2 || w.rank() != 3 || b.rank() != 1)
        throw std::invalid_argument("conv1d: shapes " + x.shape_str() + ", " + w.shape_str() + ", " + b.shape_str());
    const int L = x.rows(), cin = x.cols();
    const int K = w.shape[0], wcin = w.shape[1], cout = w.shape[2];
    if (wcin != cin || b.shape[0] != cout || K % 2 == 0 || dilation < 1)
        throw std::invalid_argument("conv1d: incompatible weight " + w.shape_str() + " for input " + x.shape_str());
    const int half = K / 2;
    Tensor out = Tensor::matrix(L, cout);
    auto widx = [cin, cout](int t, int ci, int co) {
        return (static_cast<size_t>(t) * cin + ci) * cout + co;
    };
    for (int l = 0; l < L; ++l) {
        for (int co = 0; co < cout; ++co) out.at(l, co) = b.v[static_cast<size_t>(co)];
        for (int t = 0; t < K; ++t) {
            const int src = l + (t - half) * dilation;
            if (src < 0 || src >= L) continue;
            for (int ci = 0; ci < cin; ++ci) {
                const double xv = x.at(src, ci);
                if (xv == 0.0) continue;
                for (int co = 0; co < cout; ++co) out.at(l, co) += xv * w.v[widx(t, ci, co)];
            }
        }
    }
    if (!detail::traced(x) && !detail::traced(w) && !detail::traced(b)) return out;
    auto px = detail::save(x);
    auto pw = detail::save(w);
    out.node = tape.add_node(out.size(), [xn = x.node, wn = w.node, bn = b.node, px, pw, L, cin, cout, K, half,
                                          dilation, widx](Tape& tp, const std::vector<double>& g) {
        if (bn >= 0) {
            std::vector<double> gb(static_cast<size_t>(cout), 0.0);
            for (int l = 0; l < L; ++l)
                for (int co = 0; co < cout; ++co) gb[static_cast<size_t>(co)] += g[static_cast<size_t>(l) * cout + co];
            tp.accumulate(bn, gb);
        }
        if (wn >= 0) {
            std::vector<double> gw(static_cast<size_t>(K) * cin * cout, 0.0);
            for (int l = 0; l < L; ++l)
                for (int t = 0; t < K; ++t) {
                    const int src = l + (t - half) * dilation;
                    if (src < 0 || src >= L) continue;
                    for (int ci = 0; ci < cin; ++ci) {
                        const double xv = (*px)[static_cast<size_t>(src) * cin + ci];
                        if (xv == 0.0) continue;
                        for (int co = 0; co < cout; ++co) gw[widx(t, ci, co)] += xv * g[static_cast<size_t>(l) * cout + co];
                    }
                }
            tp.accumulate(wn, gw);
        }
        if (xn >= 0) {
            std::vector<double> gx(static_cast<size_t>(L) * cin, 0.0);
            for (int l = 0; l < L; ++l)
                for (int t = 0; t < K; ++t) {
                    const int src = l + (t - half) * dilation;
                    if (src < 0 || src >= L) continue;
                    for (int ci = 0; ci < cin; ++ci) {
                        double acc = 0.0;
                        for (int co = 0; co < cout; ++co) acc += (*pw)[widx(t, ci, co)] * g[static_cast<size_t>(l) * cout + co];
                        gx[static_cast<size_t>(src) * cin + ci] += acc;
                    }
                }
            tp.accumulate(xn, gx);
        }
    });
    return out;
}

// exp(x - rowmax(x)); the per-row shift keeps the exponentials in range and is
// exactly cancelled by the window normalization downstream.
inline Tensor exp_row_shifted(Tape& tape, const Tensor& x, std::vector<double>* shifts_out = nullptr) {
    if (x.rank() != 2) throw std::invalid_argument("exp_row_shifted: need rank-2, got " + x.shape_str());
    const int r = x.rows(), c = x.cols();
    Tensor out = Tensor::matrix(r, c);
    auto amax = std::make_shared<std::vector<int>>(static_cast<size_t>(r));
    if (shifts_out) shifts_out->assign(static_cast<size_t>(r), 0.0);
    for (int i = 0; i < r; ++i) {
        int am = 0;
        for (int j = 1; j < c; ++j)
            if (x.at(i, j) > x.at(i, am)) am = j;
        (*amax)[static_cast<size_t>(i)] = am;
        const double m = x.at(i, am);
        if (shifts_out) (*shifts_out)[static_cast<size_t>(i)] = m;
        for (int j = 0; j < c; ++j) out.at(i, j) = std::exp(x.at(i, j) - m);
    }
    if (!detail::traced(x)) return out;
    auto po = detail::save(out);
    out.node = tape.add_node(out.size(), [xn = x.node, po, amax, r, c](Tape& tp, const std::vector<double>& g) {
        std::vector<double> gx(static_cast<size_t>(r) * c);
        for (int i = 0; i < r; ++i) {
            double dot = 0.0;
            for (int j = 0; j < c; ++j) dot += g[static_cast<size_t>(i) * c + j] * (*po)[static_cast<size_t>(i) * c + j];
            for (int j = 0; j < c; ++j) {
                const size_t idx = static_cast<size_t>(i) * c + j;
                gx[idx] = g[idx] * (*po)[idx];
            }
            gx[static_cast<size_t>(i) * c + (*amax)[static_cast<size_t>(i)]] -= dot;
        }
        tp.accumulate(xn, gx);
    });
    return out;
}

// linear layer helper: x * w + b
inline Tensor linear(Tape& tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    return add_rowvec(tape, matmul(tape, x, w), b);
}

}  // namespace monoalign::ops
