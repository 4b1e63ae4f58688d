// SPDX-License-Identifier: Apache-2.0
#include "lidda/kernels.h"

#include <cstdlib>
#include <cstring>

#include "lidda/common.h"

namespace lidda::kernels {
namespace {

const Kernels* resolve() {
    const char* env = std::getenv("LIDDA_KERNEL");
    if (env && std::strcmp(env, "scalar") == 0) return &scalar_kernels();
#ifdef LIDDA_KERNELS_AVX2
    if (env && std::strcmp(env, "avx2") == 0) {
        if (!avx2_supported()) fail("LIDDA_KERNEL=avx2 requested but CPU lacks AVX2/FMA");
        return &avx2_kernels();
    }
    if (env) fail(std::string("unknown LIDDA_KERNEL value: ") + env);
    if (avx2_supported()) return &avx2_kernels();
#else
    if (env && std::strcmp(env, "scalar") != 0)
        fail(std::string("unknown LIDDA_KERNEL value: ") + env);
#endif
    return &scalar_kernels();
}

}  // namespace

const Kernels& active() {
    static const Kernels* k = resolve();
    return *k;
}

}  // namespace lidda::kernels
