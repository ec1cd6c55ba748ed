#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "stpc/tensor.hpp"

namespace stpc::ad {

// Moment buffers for one parameter group. Buffers are sized on the first step.
struct AdamState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::int64_t step = 0;
    std::vector<std::vector<double>> first_moment;
    std::vector<std::vector<double>> second_moment;
};

// Bias-corrected Adam update using each parameter's accumulated grad.
// Parameters without a grad buffer are treated as having zero gradient.
void adam_step(std::span<Tensor> params, AdamState& state, double lr);

void zero_grads(std::span<Tensor> params);

}  // namespace stpc::ad
