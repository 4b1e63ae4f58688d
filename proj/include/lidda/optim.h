// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "lidda/tensor.h"

namespace lidda {

struct AdamState {
    Tensor m;
    Tensor v;
    int64_t t = 0;
};

void sgd_step(Tensor& param, const Tensor& grad, double lr);

// Bias-corrected Adam, beta1=0.9 beta2=0.999 eps=1e-8.
void adam_step(Tensor& param, const Tensor& grad, double lr, AdamState& state,
               double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

}  // namespace lidda
