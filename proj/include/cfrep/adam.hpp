#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfrep/tensor.hpp"

namespace cfrep {

struct AdamOptions {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Moment buffers for one parameter group. Buffers are allocated on the
/// first step and must stay shape-congruent with the parameters afterwards.
struct AdamState {
    AdamOptions options;
    std::uint64_t step = 0;
    std::vector<std::vector<float>> first_moment;
    std::vector<std::vector<float>> second_moment;
};

/// Bias-corrected Adam update of every tensor in `params`, followed by
/// zeroing their gradients. Throws if a parameter has no gradient buffer.
void adam_step(std::span<Tensor> params, AdamState& state);

}  // namespace cfrep
