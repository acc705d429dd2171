#pragma once

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "monoalign/tensor.hpp"

namespace monoalign {

// CSV matrix dump: first line "rows,cols", then one row per line with
// full-precision values
inline void write_matrix_csv(const Tensor& m, const std::string& path) {
    if (m.rank() != 2) throw std::invalid_argument("write_matrix_csv: need rank-2, got " + m.shape_str());
    std::ofstream f(path, std::ios::trunc);
    if (!f) throw std::runtime_error("write_matrix_csv: cannot open " + path);
    f << m.rows() << ',' << m.cols() << '\n';
    char buf[40];
    for (int i = 0; i < m.rows(); ++i) {
        for (int j = 0; j < m.cols(); ++j) {
            std::snprintf(buf, sizeof(buf), "%.17g", m.at(i, j));
            f << (j ? "," : "") << buf;
        }
        f << '\n';
    }
    if (!f) throw std::runtime_error("write_matrix_csv: write failed: " + path);
}

inline Tensor read_matrix_csv(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("read_matrix_csv: cannot open " + path);
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("read_matrix_csv: empty file " + path);
    int rows = 0, cols = 0;
    if (std::sscanf(line.c_str(), "%d,%d", &rows, &cols) != 2 || rows < 1 || cols < 1)
        throw std::runtime_error("read_matrix_csv: bad header in " + path);
    Tensor m = Tensor::matrix(rows, cols);
    for (int i = 0; i < rows; ++i) {
        if (!std::getline(f, line)) throw std::runtime_error("read_matrix_csv: truncated at row " + std::to_string(i));
        std::istringstream ss(line);
        std::string cell;
        for (int j = 0; j < cols; ++j) {
            if (!std::getline(ss, cell, ',')) throw std::runtime_error("read_matrix_csv: short row " + std::to_string(i));
            m.at(i, j) = std::stod(cell);
        }
    }
    return m;
}

// 8-bit binary PGM, min-max normalized; width = cols, height = rows
inline void write_matrix_pgm(const Tensor& m, const std::string& path) {
    if (m.rank() != 2) throw std::invalid_argument("write_matrix_pgm: need rank-2, got " + m.shape_str());
    double lo = m.v[0], hi = m.v[0];
    for (double x : m.v) {
        lo = std::min(lo, x);
        hi = std::max(hi, x);
    }
    const double span = hi - lo;
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("write_matrix_pgm: cannot open " + path);
    f << "P5\n" << m.cols() << ' ' << m.rows() << "\n255\n";
    std::vector<unsigned char> bytes(m.size());
    for (size_t i = 0; i < m.size(); ++i)
        bytes[i] = span > 0.0 ? static_cast<unsigned char>(255.0 * (m.v[i] - lo) / span + 0.5) : 0;
    f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw std::runtime_error("write_matrix_pgm: write failed: " + path);
}

}  // namespace monoalign
