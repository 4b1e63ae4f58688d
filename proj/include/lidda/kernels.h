// SPDX-License-Identifier: Apache-2.0
//
// Data-parallel inner loops behind the tensor/autodiff layer. Scalar reference
// kernels always exist; an AVX2 variant is compiled on x86-64 and selected at
// runtime (override with LIDDA_KERNEL=scalar|avx2). Variants are
// equivalence-tested against the reference in tests/test_kernels.cpp.
//
// Row-major everywhere. matmul:    C[M,N] = A[M,K] * B[K,N]
//                        matmul_nt: C[M,N] = A[M,K] * B[N,K]^T
//                        matmul_tn: C[K,N] = A[M,K]^T * B[M,N]
#pragma once

#include <cstddef>

namespace lidda::kernels {

struct Kernels {
    const char* name;
    void (*add)(double* out, const double* a, const double* b, size_t n);
    void (*sub)(double* out, const double* a, const double* b, size_t n);
    void (*mul)(double* out, const double* a, const double* b, size_t n);
    void (*scale)(double* out, const double* a, double s, size_t n);
    void (*axpy)(double* y, const double* x, double a, size_t n);  // y += a*x
    double (*dot)(const double* a, const double* b, size_t n);
    double (*sum)(const double* a, size_t n);
    void (*matmul)(double* c, const double* a, const double* b, size_t m, size_t k, size_t n);
    void (*matmul_nt)(double* c, const double* a, const double* b, size_t m, size_t k, size_t n);
    void (*matmul_tn)(double* c, const double* a, const double* b, size_t m, size_t k, size_t n);
};

const Kernels& scalar_kernels();
#ifdef LIDDA_KERNELS_AVX2
const Kernels& avx2_kernels();
bool avx2_supported();
#endif

// Dispatch target, resolved once on first use.
const Kernels& active();

}  // namespace lidda::kernels
