#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace sdm {

// Dense row-major matrix of doubles. The training path works on batches of
// feature rows, so rows = batch size, cols = dimension.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), data(static_cast<size_t>(r) * c, 0.0) {}

    double& operator()(int i, int j) { return data[static_cast<size_t>(i) * cols + j]; }
    double operator()(int i, int j) const { return data[static_cast<size_t>(i) * cols + j]; }

    double* row(int i) { return data.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return data.data() + static_cast<size_t>(i) * cols; }

    std::span<const double> row_span(int i) const { return {row(i), static_cast<size_t>(cols)}; }

    bool empty() const { return rows == 0 || cols == 0; }
    size_t size() const { return data.size(); }

    void fill(double v) { data.assign(data.size(), v); }
};

// out = A(B x I) * W(I x O); out must be B x O and is overwritten.
void matmul(const Matrix& a, const Matrix& w, Matrix& out);

// out += A * W without clearing out first.
void matmul_add(const Matrix& a, const Matrix& w, Matrix& out);

// out = G(B x O) * W^T, with W stored I x O; out must be B x I. The
// gradient-to-input product of the layer out = in * W.
void matmul_transposed_b(const Matrix& g, const Matrix& w, Matrix& out);

// out = X^T(I x B) * G(B x O); out must be I x O. The weight-gradient
// product of the same layer.
void matmul_transposed_a(const Matrix& x, const Matrix& g, Matrix& out);

} // namespace sdm
