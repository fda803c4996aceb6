#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace malbench {

/// Dense row-major matrix of doubles.
struct Matrix {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

    std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
    std::span<const double> row(std::size_t i) const { return {data.data() + i * cols, cols}; }

    double& operator()(std::size_t i, std::size_t j) { return data[i * cols + j]; }
    double operator()(std::size_t i, std::size_t j) const { return data[i * cols + j]; }

    /// Copies the given columns, in order, into a new matrix.
    Matrix select_columns(std::span<const std::size_t> columns) const {
        Matrix out(rows, columns.size());
        for (std::size_t i = 0; i < rows; ++i) {
            const double* src = data.data() + i * cols;
            double* dst = out.data.data() + i * out.cols;
            for (std::size_t c = 0; c < columns.size(); ++c) dst[c] = src[columns[c]];
        }
        return out;
    }
};

}  // namespace malbench
