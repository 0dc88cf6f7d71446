#include "hybridflow/kernels.hpp"

namespace hybridflow::kernels {

namespace {

double dot(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void affine(const double* w, const double* bias, const double* x, double* y, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) y[r] = (bias ? bias[r] : 0.0) + dot(w + r * cols, x, cols);
}

void affine_transposed_acc(const double* w, const double* g, double* x, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double gr = g[r];
        const double* row = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) x[c] += row[c] * gr;
    }
}

void rank1_update(double* w, double alpha, const double* g, const double* x, std::size_t rows, std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        const double s = alpha * g[r];
        double* row = w + r * cols;
        for (std::size_t c = 0; c < cols; ++c) row[c] += s * x[c];
    }
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

} // namespace

const KernelTable& scalar_table() {
    static const KernelTable table{"scalar", dot, affine, affine_transposed_acc, rank1_update, axpy};
    return table;
}

} // namespace hybridflow::kernels
