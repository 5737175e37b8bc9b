#include "sdm/matrix.hpp"

#include <cassert>

namespace sdm {

void matmul(const Matrix& a, const Matrix& w, Matrix& out) {
    out.fill(0.0);
    matmul_add(a, w, out);
}

void matmul_add(const Matrix& a, const Matrix& w, Matrix& out) {
    assert(a.cols == w.rows && out.rows == a.rows && out.cols == w.cols);
    const int b = a.rows, inner = a.cols, o = w.cols;
    for (int i = 0; i < b; ++i) {
        const double* arow = a.row(i);
        double* crow = out.row(i);
        for (int k = 0; k < inner; ++k) {
            const double aik = arow[k];
            const double* wrow = w.row(k);
            for (int j = 0; j < o; ++j) {
                crow[j] += aik * wrow[j];
            }
        }
    }
}

void matmul_transposed_b(const Matrix& g, const Matrix& w, Matrix& out) {
    assert(g.cols == w.cols && out.rows == g.rows && out.cols == w.rows);
    // transposing W first keeps the inner loop free of dependency chains;
    // the transpose is O(I*O) against O(B*I*O) multiply work
    Matrix wt(w.cols, w.rows);
    for (int i = 0; i < w.rows; ++i) {
        const double* wrow = w.row(i);
        for (int j = 0; j < w.cols; ++j) wt(j, i) = wrow[j];
    }
    matmul(g, wt, out);
}

void matmul_transposed_a(const Matrix& x, const Matrix& g, Matrix& out) {
    assert(x.rows == g.rows && out.rows == x.cols && out.cols == g.cols);
    const int b = x.rows, inner = x.cols, o = g.cols;
    out.fill(0.0);
    for (int k = 0; k < b; ++k) {
        const double* xrow = x.row(k);
        const double* grow = g.row(k);
        for (int i = 0; i < inner; ++i) {
            const double xki = xrow[i];
            double* crow = out.row(i);
            for (int j = 0; j < o; ++j) {
                crow[j] += xki * grow[j];
            }
        }
    }
}

} // namespace sdm
