#include "tabudrop/kernels.hpp"

#include <cmath>
#include <cstring>

// Reference kernels. Plain sequential loops, no reassociation: these define
// the semantics the SIMD variants are tested against.

namespace tabudrop::kernels {
namespace {

double dot_scalar(const double* a, const double* b, std::size_t n) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void matmul_nt_scalar(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] = dot_scalar(arow, b + j * k, k);
        }
    }
}

void matmul_nn_scalar(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::memset(crow, 0, n * sizeof(double));
        for (std::size_t l = 0; l < k; ++l) {
            const double ail = a[i * k + l];
            const double* brow = b + l * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

void matmul_tn_scalar(const double* a, std::size_t m, std::size_t k,
                      const double* b, std::size_t n, double* c) {
    std::memset(c, 0, k * n * sizeof(double));
    for (std::size_t l = 0; l < m; ++l) {
        const double* arow = a + l * k;
        const double* brow = b + l * n;
        for (std::size_t i = 0; i < k; ++i) {
            const double ali = arow[i];
            double* crow = c + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += ali * brow[j];
        }
    }
}

void relu_scalar(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_scalar(const double* g, const double* pre, double* out,
                      std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void mask_scale_scalar(const double* x, const std::uint8_t* keep,
                       double factor, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = keep[i] ? x[i] * factor : 0.0;
}

void adam_update_scalar(double* w, const double* g, double* m, double* v,
                        std::size_t n, double lr, double beta1, double beta2,
                        double eps, double bc1, double bc2) {
    const double c1 = 1.0 - beta1;
    const double c2 = 1.0 - beta2;
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + c1 * g[i];
        v[i] = beta2 * v[i] + c2 * (g[i] * g[i]);
        w[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
    }
}

void add_rowwise_scalar(double* y, const double* bias, std::size_t rows,
                        std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* yrow = y + r * cols;
        for (std::size_t c = 0; c < cols; ++c) yrow[c] += bias[c];
    }
}

void col_sums_scalar(const double* a, std::size_t rows, std::size_t cols,
                     double* out) {
    std::memset(out, 0, cols * sizeof(double));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* arow = a + r * cols;
        for (std::size_t c = 0; c < cols; ++c) out[c] += arow[c];
    }
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {
        "scalar",        dot_scalar,        matmul_nt_scalar,
        matmul_nn_scalar, matmul_tn_scalar, relu_scalar,
        relu_grad_scalar, mask_scale_scalar, adam_update_scalar,
        add_rowwise_scalar, col_sums_scalar,
    };
    return ops;
}

}  // namespace tabudrop::kernels
