#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>

#include "cfrep/tensor.hpp"

namespace cfrep {

/// Builds a scalar loss from the given inputs on a 64-bit graph.
using LossBuilder = std::function<Tensor64(Graph64&, std::span<const Tensor64>)>;

struct GradCheckOptions {
    double step = 1e-3;
    /// Denominator floor: |ad - fd| / max(|ad|, |fd|, floor).
    double floor = 1e-4;
    /// Coordinates probed per input (0 = all), chosen by a seeded shuffle.
    std::size_t max_coords_per_input = 0;
    std::uint64_t seed = 0;
    /// Kink detection (e.g. leaky ReLU at 0 within one step): if halving the
    /// step moves the central difference by more than this (relative), or
    /// the second difference fails to shrink fourfold, the step is cut
    /// tenfold, down to min_step, until both tests pass.
    double smoothness_tolerance = 1e-4;
    double min_step = 1e-7;
};

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t coords_checked = 0;
    std::size_t worst_input = 0;
    std::size_t worst_index = 0;
    double worst_autodiff = 0.0;
    double worst_numeric = 0.0;
    /// Coordinates whose finite difference needed a smaller step.
    std::size_t refined_coords = 0;
};

/// Compares reverse-mode gradients of `net` w.r.t. every input against
/// central finite differences of the same 64-bit computation. Inputs are
/// restored to their original values before returning.
GradCheckReport grad_check(const LossBuilder& net, std::span<Tensor64> inputs, const GradCheckOptions& options = {});

}  // namespace cfrep
