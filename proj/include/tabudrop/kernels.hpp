#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace tabudrop::kernels {

/// One set of dense-math kernels. The scalar set is the reference
/// implementation; SIMD sets must agree with it elementwise bit-for-bit
/// for the non-reducing kernels and to ~1e-13 relative for reductions
/// (accumulation order differs there).
struct Ops {
    const char* name;

    /// sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);

    /// c[m x n] = a[m x k] * b[n x k]^T   (rows of b are the "columns")
    void (*matmul_nt)(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c);

    /// c[m x n] = a[m x k] * b[k x n]
    void (*matmul_nn)(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c);

    /// c[k x n] = a[m x k]^T * b[m x n]
    void (*matmul_tn)(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c);

    /// y[i] = max(x[i], 0)
    void (*relu)(const double* x, double* y, std::size_t n);

    /// out[i] = pre[i] > 0 ? g[i] : 0
    void (*relu_grad)(const double* g, const double* pre, double* out,
                      std::size_t n);

    /// y[i] = keep[i] ? x[i] * factor : 0
    void (*mask_scale)(const double* x, const std::uint8_t* keep,
                       double factor, double* y, std::size_t n);

    /// In-place Adam update. bc1/bc2 are the precomputed bias-correction
    /// factors 1/(1-beta1^t) and 1/(1-beta2^t).
    void (*adam_update)(double* w, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bc1, double bc2);

    /// y[r, c] += bias[c] for every row r
    void (*add_rowwise)(double* y, const double* bias, std::size_t rows,
                        std::size_t cols);

    /// out[c] = sum_r a[r, c]
    void (*col_sums)(const double* a, std::size_t rows, std::size_t cols,
                     double* out);
};

const Ops& scalar_ops();

#if defined(__x86_64__) || defined(_M_X64)
const Ops& avx2_ops();
bool avx2_supported();
#endif
#if defined(__aarch64__)
const Ops& neon_ops();
#endif

/// Kernel set used by all callers. Chosen once from CPU capabilities,
/// overridable via the TABUDROP_KERNEL environment variable or force().
const Ops& active();

/// Force a specific set by name ("scalar", "avx2", "neon"). Returns false
/// if the name is unknown or the CPU lacks support.
bool force(std::string_view name);

/// Kernel sets runnable on this machine.
std::vector<const Ops*> available();

}  // namespace tabudrop::kernels
