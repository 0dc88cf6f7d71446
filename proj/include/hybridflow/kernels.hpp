#pragma once

// Dense float64 kernels behind the MLP. A scalar reference implementation is
// always present; an AVX2/FMA variant is selected at runtime when the CPU
// supports it. Set HYBRIDFLOW_KERNELS=scalar to force the reference path.

#include <cstddef>

namespace hybridflow::kernels {

struct KernelTable {
    const char* name;
    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    /// y[r] = bias[r] + sum_c w[r*cols + c] * x[c], w row-major rows x cols. bias may be null.
    void (*affine)(const double* w, const double* bias, const double* x, double* y, std::size_t rows,
                   std::size_t cols);
    /// x[c] += sum_r w[r*cols + c] * g[r]
    void (*affine_transposed_acc)(const double* w, const double* g, double* x, std::size_t rows, std::size_t cols);
    /// w[r*cols + c] += alpha * g[r] * x[c]
    void (*rank1_update)(double* w, double alpha, const double* g, const double* x, std::size_t rows,
                         std::size_t cols);
    /// y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
};

const KernelTable& scalar_table();
/// Null when the AVX2 variant was not built or the CPU lacks AVX2/FMA.
const KernelTable* avx2_table();
/// The table used by the library, chosen once per process.
const KernelTable& active();

} // namespace hybridflow::kernels
