// SPDX-License-Identifier: Apache-2.0
#include "lidda/kernels.h"

#include <cstring>

namespace lidda::kernels {
namespace {

void add_s(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] + b[i];
}

void sub_s(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] - b[i];
}

void mul_s(double* out, const double* a, const double* b, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * b[i];
}

void scale_s(double* out, const double* a, double s, size_t n) {
    for (size_t i = 0; i < n; ++i) out[i] = a[i] * s;
}

void axpy_s(double* y, const double* x, double a, size_t n) {
    for (size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

double dot_s(const double* a, const double* b, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i] * b[i];
    return acc;
}

double sum_s(const double* a, size_t n) {
    double acc = 0.0;
    for (size_t i = 0; i < n; ++i) acc += a[i];
    return acc;
}

// C = A*B, ikj order: row of C accumulates broadcast(A[i,k]) * row of B.
void matmul_s(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    std::memset(c, 0, m * n * sizeof(double));
    for (size_t i = 0; i < m; ++i) {
        double* crow = c + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = a[i * k + p];
            const double* brow = b + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C = A*B^T with B stored [n, k]: each entry is a dot of two rows.
void matmul_nt_s(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        for (size_t j = 0; j < n; ++j) c[i * n + j] = dot_s(arow, b + j * k, k);
    }
}

// C = A^T*B with A stored [m, k]: C[k, n].
void matmul_tn_s(double* c, const double* a, const double* b, size_t m, size_t k, size_t n) {
    std::memset(c, 0, k * n * sizeof(double));
    for (size_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            double* crow = c + p * n;
            for (size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

}  // namespace

const Kernels& scalar_kernels() {
    static const Kernels k = {
        "scalar", add_s, sub_s, mul_s, scale_s, axpy_s, dot_s, sum_s,
        matmul_s, matmul_nt_s, matmul_tn_s,
    };
    return k;
}

}  // namespace lidda::kernels
