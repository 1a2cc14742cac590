#if defined(__x86_64__) || defined(_M_X64)

#include "tabudrop/kernels.hpp"

#include <immintrin.h>

#include <cmath>
#include <cstring>

// AVX2/FMA variants. This translation unit is compiled with -mavx2 -mfma;
// nothing here may run unless the dispatcher verified CPU support.
//
// Elementwise kernels (relu, relu_grad, mask_scale, adam_update, add_rowwise,
// col_sums) mirror the scalar expressions operation for operation and are
// bit-exact against the reference. Reductions (dot, matmuls) use FMA and
// lane-parallel partial sums, so they agree only to rounding.

namespace tabudrop::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

double dot_avx2(const double* a, const double* b, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                               _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4),
                               _mm256_loadu_pd(b + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8),
                               _mm256_loadu_pd(b + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12),
                               _mm256_loadu_pd(b + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i),
                               _mm256_loadu_pd(b + i), acc0);
    }
    double sum = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1),
                                    _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) sum += a[i] * b[i];
    return sum;
}

void matmul_nt_avx2(const double* a, std::size_t m, std::size_t k,
                    const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        std::size_t j = 0;
        // Four output columns per pass share the loads of arow.
        for (; j + 4 <= n; j += 4) {
            const double* b0 = b + (j + 0) * k;
            const double* b1 = b + (j + 1) * k;
            const double* b2 = b + (j + 2) * k;
            const double* b3 = b + (j + 3) * k;
            __m256d s0 = _mm256_setzero_pd();
            __m256d s1 = _mm256_setzero_pd();
            __m256d s2 = _mm256_setzero_pd();
            __m256d s3 = _mm256_setzero_pd();
            std::size_t l = 0;
            for (; l + 4 <= k; l += 4) {
                const __m256d av = _mm256_loadu_pd(arow + l);
                s0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b0 + l), s0);
                s1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b1 + l), s1);
                s2 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b2 + l), s2);
                s3 = _mm256_fmadd_pd(av, _mm256_loadu_pd(b3 + l), s3);
            }
            double r0 = hsum(s0), r1 = hsum(s1), r2 = hsum(s2), r3 = hsum(s3);
            for (; l < k; ++l) {
                const double av = arow[l];
                r0 += av * b0[l];
                r1 += av * b1[l];
                r2 += av * b2[l];
                r3 += av * b3[l];
            }
            crow[j + 0] = r0;
            crow[j + 1] = r1;
            crow[j + 2] = r2;
            crow[j + 3] = r3;
        }
        for (; j < n; ++j) crow[j] = dot_avx2(arow, b + j * k, k);
    }
}

void matmul_nn_avx2(const double* a, std::size_t m, std::size_t k,
                    const double* b, std::size_t n, double* c) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        std::memset(crow, 0, n * sizeof(double));
        for (std::size_t l = 0; l < k; ++l) {
            const __m256d av = _mm256_set1_pd(a[i * k + l]);
            const double* brow = b + l * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                __m256d c1 = _mm256_loadu_pd(crow + j + 4);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j + 4), c1);
                _mm256_storeu_pd(crow + j, c0);
                _mm256_storeu_pd(crow + j + 4, c1);
            }
            for (; j + 4 <= n; j += 4) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                _mm256_storeu_pd(crow + j, c0);
            }
            const double ail = a[i * k + l];
            for (; j < n; ++j) crow[j] += ail * brow[j];
        }
    }
}

void matmul_tn_avx2(const double* a, std::size_t m, std::size_t k,
                    const double* b, std::size_t n, double* c) {
    std::memset(c, 0, k * n * sizeof(double));
    for (std::size_t l = 0; l < m; ++l) {
        const double* arow = a + l * k;
        const double* brow = b + l * n;
        for (std::size_t i = 0; i < k; ++i) {
            const __m256d av = _mm256_set1_pd(arow[i]);
            double* crow = c + i * n;
            std::size_t j = 0;
            for (; j + 8 <= n; j += 8) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                __m256d c1 = _mm256_loadu_pd(crow + j + 4);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                c1 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j + 4), c1);
                _mm256_storeu_pd(crow + j, c0);
                _mm256_storeu_pd(crow + j + 4, c1);
            }
            for (; j + 4 <= n; j += 4) {
                __m256d c0 = _mm256_loadu_pd(crow + j);
                c0 = _mm256_fmadd_pd(av, _mm256_loadu_pd(brow + j), c0);
                _mm256_storeu_pd(crow + j, c0);
            }
            const double ali = arow[i];
            for (; j < n; ++j) crow[j] += ali * brow[j];
        }
    }
}

void relu_avx2(const double* x, double* y, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(y + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) y[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_avx2(const double* g, const double* pre, double* out,
                    std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d keep =
            _mm256_cmp_pd(_mm256_loadu_pd(pre + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i,
                         _mm256_and_pd(keep, _mm256_loadu_pd(g + i)));
    }
    for (; i < n; ++i) out[i] = pre[i] > 0.0 ? g[i] : 0.0;
}

void mask_scale_avx2(const double* x, const std::uint8_t* keep, double factor,
                     double* y, std::size_t n) {
    const __m256d vfactor = _mm256_set1_pd(factor);
    const __m256i izero = _mm256_setzero_si256();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        std::uint32_t packed;
        std::memcpy(&packed, keep + i, 4);
        const __m256i lanes = _mm256_cvtepu8_epi64(
            _mm_cvtsi32_si128(static_cast<int>(packed)));
        const __m256i dropped = _mm256_cmpeq_epi64(lanes, izero);
        const __m256d scaled =
            _mm256_mul_pd(_mm256_loadu_pd(x + i), vfactor);
        _mm256_storeu_pd(
            y + i, _mm256_andnot_pd(_mm256_castsi256_pd(dropped), scaled));
    }
    for (; i < n; ++i) y[i] = keep[i] ? x[i] * factor : 0.0;
}

void adam_update_avx2(double* w, const double* g, double* m, double* v,
                      std::size_t n, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
    const __m256d vb1 = _mm256_set1_pd(beta1);
    const __m256d vb2 = _mm256_set1_pd(beta2);
    const __m256d vc1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d vc2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    std::size_t i = 0;
    // No FMA here: matches the scalar rounding exactly.
    for (; i + 4 <= n; i += 4) {
        const __m256d gv = _mm256_loadu_pd(g + i);
        __m256d mv = _mm256_loadu_pd(m + i);
        __m256d vv = _mm256_loadu_pd(v + i);
        mv = _mm256_add_pd(_mm256_mul_pd(vb1, mv), _mm256_mul_pd(vc1, gv));
        vv = _mm256_add_pd(_mm256_mul_pd(vb2, vv),
                           _mm256_mul_pd(vc2, _mm256_mul_pd(gv, gv)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d num = _mm256_mul_pd(vlr, _mm256_mul_pd(mv, vbc1));
        const __m256d den = _mm256_add_pd(
            _mm256_sqrt_pd(_mm256_mul_pd(vv, vbc2)), veps);
        _mm256_storeu_pd(w + i, _mm256_sub_pd(_mm256_loadu_pd(w + i),
                                              _mm256_div_pd(num, den)));
    }
    const double c1 = 1.0 - beta1;
    const double c2 = 1.0 - beta2;
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + c1 * g[i];
        v[i] = beta2 * v[i] + c2 * (g[i] * g[i]);
        w[i] -= lr * (m[i] * bc1) / (std::sqrt(v[i] * bc2) + eps);
    }
}

void add_rowwise_avx2(double* y, const double* bias, std::size_t rows,
                      std::size_t cols) {
    for (std::size_t r = 0; r < rows; ++r) {
        double* yrow = y + r * cols;
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            _mm256_storeu_pd(yrow + c,
                             _mm256_add_pd(_mm256_loadu_pd(yrow + c),
                                           _mm256_loadu_pd(bias + c)));
        }
        for (; c < cols; ++c) yrow[c] += bias[c];
    }
}

void col_sums_avx2(const double* a, std::size_t rows, std::size_t cols,
                   double* out) {
    std::memset(out, 0, cols * sizeof(double));
    for (std::size_t r = 0; r < rows; ++r) {
        const double* arow = a + r * cols;
        std::size_t c = 0;
        for (; c + 4 <= cols; c += 4) {
            _mm256_storeu_pd(out + c,
                             _mm256_add_pd(_mm256_loadu_pd(out + c),
                                           _mm256_loadu_pd(arow + c)));
        }
        for (; c < cols; ++c) out[c] += arow[c];
    }
}

}  // namespace

const Ops& avx2_ops() {
    static const Ops ops = {
        "avx2",          dot_avx2,        matmul_nt_avx2,
        matmul_nn_avx2,  matmul_tn_avx2,  relu_avx2,
        relu_grad_avx2,  mask_scale_avx2, adam_update_avx2,
        add_rowwise_avx2, col_sums_avx2,
    };
    return ops;
}

}  // namespace tabudrop::kernels

#endif  // x86_64
