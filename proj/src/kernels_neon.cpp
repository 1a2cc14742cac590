#if defined(__aarch64__)

#include "tabudrop/kernels.hpp"

#include <arm_neon.h>

#include <cmath>
#include <cstring>

// NEON variants (2 doubles per vector). NEON is baseline on aarch64 so this
// set is always usable there. Same equivalence contract as AVX2: elementwise
// kernels bit-exact against scalar, reductions to rounding.

namespace tabudrop::kernels {
namespace {

inline double hsum(float64x2_t v) { return vgetq_lane_f64(v, 0) + vgetq_lane_f64(v, 1); }

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    float64x2_t acc2 = vdupq_n_f64(0.0);
    float64x2_t acc3 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
        acc2 = vfmaq_f64(acc2, vld1q_f64(a + i + 4), vld1q_f64(b + i + 4));
        acc3 = vfmaq_f64(acc3, vld1q_f64(a + i + 6), vld1q_f64(b + i + 6));
    }
    for (; i + 2 <= n; i += 2) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
    }
    double sum = hsum(vaddq_f64(vaddq_f64(acc0, acc1), vaddq_f64(acc2, acc3)));
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void matmul_nt_neon(const double* a, std::size_t m, std::size_t k,
                    const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (std::size_t j = 0; j < n; ++j) {
            c[i * n + j] = dot_neon(arow, b + j * k, k);
        }
    }
}

void matmul_nn_neon(const double* a, std::size_t m, std::size_t k,
                    const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::memset(crow, 0, n * sizeof(double));
        for (std::size_t l = 0; l < k; ++l) {
            const float64x2_t av = vdupq_n_f64(a[i * k + l]);
            const double* brow = b + l * n;
            std::size_t j = 0;
            for (; j + 2 <= n; j += 2) {
                vst1q_f64(crow + j,
                          vfmaq_f64(vld1q_f64(crow + j), av, vld1q_f64(brow + j)));
            }
            const double ail = a[i * k + l];
            for (; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

void matmul_tn_neon(const double* a, std::size_t m, std::size_t k,
                    const double* b, std::size_t n, double* c) {
    std::memset(c, 0, k * n * sizeof(double));
    for (std::size_t l = 0; l < m; ++l) {
        const double* arow = a + l * k;
        const double* brow = b + l * n;
        for (std::size_t i = 0; i < k; ++i) {
            const float64x2_t av = vdupq_n_f64(arow[i]);
            double* crow = c + i * n;
            std::size_t j = 0;
            for (; j + 2 <= n; j += 2) {
                vst1q_f64(crow + j,
                          vfmaq_f64(vld1q_f64(crow + j), av, vld1q_f64(brow + j)));
            }
            for (; j < n; ++j) crow[j] += arow[i] * brow[j];
        }
    }
}

void relu_neon(const double* x, double* y, std::size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vmaxq_f64(vld1q_f64(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_neon(const double* g, const double* pre, double* out,
                    std::size_t n) {
    const float64x2_t zero = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        const uint64x2_t keep = vcgtq_f64(vld1q_f64(pre + i), zero);
        const uint64x2_t gv = vreinterpretq_u64_f64(vld1q_f64(g + i));
        vst1q_f64(out + i, vreinterpretq_f64_u64(vandq_u64(keep, gv)));
    }
    for (; i < n; ++i) out[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void mask_scale_neon(const double* x, const std::uint8_t* keep, double factor,
                     double* y, std::size_t n) {
    const float64x2_t vfactor = vdupq_n_f64(factor);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        uint64x2_t km = vdupq_n_u64(keep[i] ? ~0ull : 0ull);
        km = vsetq_lane_u64(keep[i + 1] ? ~0ull : 0ull, km, 1);
        const float64x2_t scaled = vmulq_f64(vld1q_f64(x + i), vfactor);
        vst1q_f64(y + i, vreinterpretq_f64_u64(
                             vandq_u64(km, vreinterpretq_u64_f64(scaled))));
    }
    for (; i < n; ++i) y[i] = keep[i] ? x[i] * factor : 0.0;
}

void adam_update_neon(double* w, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
    const float64x2_t vb1 = vdupq_n_f64(beta1);
    const float64x2_t vb2 = vdupq_n_f64(beta2);
    const float64x2_t vc1 = vdupq_n_f64(1.0 - beta1);
    const float64x2_t vc2 = vdupq_n_f64(1.0 - beta2);
    const float64x2_t vlr = vdupq_n_f64(lr);
    const float64x2_t veps = vdupq_n_f64(eps);
    const float64x2_t vbc1 = vdupq_n_f64(bc1);
    const float64x2_t vbc2 = vdupq_n_f64(bc2);
    std::size_t i = 0;
    // No fused multiply-add: matches the scalar rounding exactly.
    for (; i + 2 <= n; i += 2) {
        const float64x2_t gv = vld1q_f64(g + i);
        float64x2_t mv = vld1q_f64(m + i);
        float64x2_t vv = vld1q_f64(v + i);
        mv = vaddq_f64(vmulq_f64(vb1, mv), vmulq_f64(vc1, gv));
        vv = vaddq_f64(vmulq_f64(vb2, vv), vmulq_f64(vc2, vmulq_f64(gv, gv)));
        vst1q_f64(m + i, mv);
        vst1q_f64(v + i, vv);
        const float64x2_t num = vmulq_f64(vlr, vmulq_f64(mv, vbc1));
        const float64x2_t den = vaddq_f64(vsqrtq_f64(vmulq_f64(vv, vbc2)), veps);
        vst1q_f64(w + i, vsubq_f64(vld1q_f64(w + i), vdivq_f64(num, den)));
    }
    const double c1 = 1.0 - beta1;
    const double c2 = 1.0 - beta2;
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + c1 * g[i];
        v[i] = beta2 * v[i] + c2 * (g[i] * g[i]);
        w[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
    }
}

void add_rowwise_neon(double* y, const double* bias, std::size_t rows,
                      std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* yrow = y + r * cols;
        std::size_t c = 0;
        for (; c + 2 <= cols; c += 2) {
            vst1q_f64(yrow + c, vaddq_f64(vld1q_f64(yrow + c), vld1q_f64(bias + c)));
        }
        for (; c < cols; ++c) yrow[c] += bias[c];
    }
}

void col_sums_neon(const double* a, std::size_t rows, std::size_t cols,
                   double* out) {
    std::memset(out, 0, cols * sizeof(double));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* arow = a + r * cols;
        std::size_t c = 0;
        for (; c + 2 <= cols; c += 2) {
            vst1q_f64(out + c, vaddq_f64(vld1q_f64(out + c), vld1q_f64(arow + c)));
        }
        for (; c < cols; ++c) out[c] += arow[c];
    }
}

}  // namespace

const Ops& neon_ops() {
    static const Ops ops = {
        "neon",          dot_neon,        matmul_nt_neon,
        matmul_nn_neon,  matmul_tn_neon,  relu_neon,
        relu_grad_neon,  mask_scale_neon, adam_update_neon,
        add_rowwise_neon, col_sums_neon,
    };
    return ops;
}

}  // namespace tabudrop::kernels

#endif  // __aarch64__
