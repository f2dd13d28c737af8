#include "cfrep/adam.hpp"

#include <cmath>
#include <string>

namespace cfrep {

void adam_step(std::span<Tensor> params, AdamState& state) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (!params[i].has_grad()) {
            throw Error("adam_step: parameter " + std::to_string(i) + " " + shape_str(params[i].shape()) +
                        " has no gradient");
        }
    }
    if (state.step == 0) {
        state.first_moment.clear();
        state.second_moment.clear();
        for (auto& p : params) {
            state.first_moment.emplace_back(p.numel(), 0.0f);
            state.second_moment.emplace_back(p.numel(), 0.0f);
        }
    }
    if (state.first_moment.size() != params.size()) {
        throw ShapeError("adam_step: optimizer state tracks " + std::to_string(state.first_moment.size()) +
                         " parameters, got " + std::to_string(params.size()));
    }
    ++state.step;
    const auto& o = state.options;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(o.beta1, t);
    const double c2 = 1.0 - std::pow(o.beta2, t);
    const auto b1 = static_cast<float>(o.beta1), b2 = static_cast<float>(o.beta2);
    const auto step_size = static_cast<float>(o.learning_rate / c1);
    const auto root_c2 = static_cast<float>(std::sqrt(c2));
    const auto eps = static_cast<float>(o.eps);
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& m = state.first_moment[i];
        auto& v = state.second_moment[i];
        if (m.size() != params[i].numel()) {
            throw ShapeError("adam_step: moment buffer size mismatch for parameter " + std::to_string(i));
        }
        auto w = params[i].values();
        auto& g = params[i].grad_buffer();
        for (std::size_t k = 0; k < w.size(); ++k) {
            m[k] = b1 * m[k] + (1.0f - b1) * g[k];
            v[k] = b2 * v[k] + (1.0f - b2) * g[k] * g[k];
            w[k] -= step_size * m[k] / (std::sqrt(v[k]) / root_c2 + eps);
            g[k] = 0.0f;
        }
    }
}

}  // namespace cfrep
