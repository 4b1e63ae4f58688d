// SPDX-License-Identifier: Apache-2.0
//
// AVX2/FMA variants, 4 doubles per lane. Loop order matches the scalar
// reference so accumulation differs only by FMA rounding and the 4-way
// horizontal sums; equivalence tests bound the drift at 1e-12 relative.
#include "lidda/kernels.h"

#ifdef LIDDA_KERNELS_AVX2

#include <immintrin.h>

#include <cstring>

namespace lidda::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d swapped = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, swapped));
}

void add_v(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_v(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_v(double* out, const double* a, const double* b, size_t n) {
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_v(double* out, const double* a, double s, size_t n) {
    const __m256d sv = _mm256_set1_pd(s);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), sv));
    for (; i < n; ++i) out[i] = a[i] * s;
}

void axpy_v(double* y, const double* x, double a, size_t n) {
    const __m256d av = _mm256_set1_pd(a);
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(y + i, _mm256_fmadd_pd(av, _mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    for (; i < n; ++i) y[i] += a * x[i];
}

double dot_v(const double* a, const double* b, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc);
    double out = hsum(acc);
    for (; i < n; ++i) out += a[i] * b[i];
    return out;
}

double sum_v(const double* a, size_t n) {
    __m256d acc = _mm256_setzero_pd();
    size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    double out = hsum(acc);
    for (; i < n; ++i) out += a[i];
    return out;
}

void matmul_v(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            axpy_v(crow, b + p * n, a[i * k + p], n);
        }
    }
}

void matmul_nt_v(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (size_t j = 0; j < n; ++j) c[i * n + j] = dot_v(arow, b + j * k, k);
    }
}

void matmul_tn_v(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    std::memset(c, 0, k * n * sizeof(double));
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            axpy_v(c + p * n, brow, arow[p], n);
        }
    }
}

}  // namespace

bool avx2_supported() { return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"); }

const Kernels& avx2_kernels() {
    static const Kernels k = {
        "avx2", add_v, sub_v, mul_v, scale_v, axpy_v, dot_v, sum_v,
        matmul_v, matmul_nt_v, matmul_tn_v,
    };
    return k;
}

}  // namespace lidda::kernels

#endif  // LIDDA_KERNELS_AVX2
