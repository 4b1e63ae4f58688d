// SPDX-License-Identifier: Apache-2.0
#include "lidda/optim.h"

#include <cmath>

#include "lidda/common.h"
#include "lidda/kernels.h"

namespace lidda {

void sgd_step(Tensor& param, const Tensor& grad, double lr) {
    if (!param.same_shape(grad)) fail("sgd_step: shape mismatch");
    kernels::active().axpy(param.v.data(), grad.v.data(), -lr, param.v.size());
}

void adam_step(Tensor& param, const Tensor& grad, double lr, AdamState& state, double beta1,
               double beta2, double eps) {
    if (!param.same_shape(grad)) fail("adam_step: shape mismatch");
    if (state.t == 0) {
        state.m = Tensor(param.shape);
        state.v = Tensor(param.shape);
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(state.t));
    for (size_t i = 0; i < param.v.size(); ++i) {
        const double g = grad.v[i];
        state.m.v[i] = beta1 * state.m.v[i] + (1.0 - beta1) * g;
        state.v.v[i] = beta2 * state.v.v[i] + (1.0 - beta2) * g * g;
        const double mhat = state.m.v[i] / bc1;
        const double vhat = state.v.v[i] / bc2;
        param.v[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

}  // namespace lidda
