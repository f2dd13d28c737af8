#include "cfrep/grad_check.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

namespace cfrep {

namespace {

double evaluate(const LossBuilder& net, std::span<Tensor64> inputs) {
    Graph64 g;
    return net(g, std::span<const Tensor64>(inputs.data(), inputs.size())).item();
}

struct Difference {
    double slope;   ///< central first difference
    double second;  ///< f(x+h) - 2 f(x) + f(x-h)
};

Difference difference(const LossBuilder& net, std::span<Tensor64> inputs, std::span<double> vals, std::size_t idx,
                      double step, double centre) {
    const double orig = vals[idx];
    vals[idx] = orig + step;
    const double up = evaluate(net, inputs);
    vals[idx] = orig - step;
    const double down = evaluate(net, inputs);
    vals[idx] = orig;
    return {(up - down) / (2.0 * step), up - 2.0 * centre + down};
}

/// A kink inside [x-h, x+h] shows up either as a first difference that
/// moves when h is halved or as a second difference that stops scaling
/// like h^2 (it scales like h across a kink, however close to x it sits).
bool smooth(const Difference& full, const Difference& half, double step, double tolerance, double floor) {
    const double scale = tolerance * std::max({std::abs(full.slope), std::abs(half.slope), floor});
    return std::abs(full.slope - half.slope) <= scale && std::abs(full.second - 4.0 * half.second) <= scale * step;
}

}  // namespace

GradCheckReport grad_check(const LossBuilder& net, std::span<Tensor64> inputs, const GradCheckOptions& options) {
    std::vector<bool> saved_flags;
    for (auto& x : inputs) {
        saved_flags.push_back(x.requires_grad());
        x.set_requires_grad(true);
        x.zero_grad();
    }
    std::vector<std::vector<double>> analytic;
    {
        Graph64 g;
        auto loss = net(g, std::span<const Tensor64>(inputs.data(), inputs.size()));
        g.backward(loss);
        for (auto& x : inputs) {
            auto gr = x.grad();
            analytic.emplace_back(gr.begin(), gr.end());
        }
    }
    for (auto& x : inputs) {
        x.drop_grad();
        x.set_requires_grad(false);
    }

    const double centre = evaluate(net, inputs);
    GradCheckReport report;
    std::mt19937_64 rng(options.seed);
    for (std::size_t k = 0; k < inputs.size(); ++k) {
        std::vector<std::size_t> coords(inputs[k].numel());
        std::iota(coords.begin(), coords.end(), std::size_t{0});
        if (options.max_coords_per_input && coords.size() > options.max_coords_per_input) {
            std::shuffle(coords.begin(), coords.end(), rng);
            coords.resize(options.max_coords_per_input);
        }
        auto vals = inputs[k].values();
        for (auto idx : coords) {
            double step = options.step;
            auto full = difference(net, inputs, vals, idx, step, centre);
            auto half = difference(net, inputs, vals, idx, step / 2.0, centre);
            bool refined = false;
            while (!smooth(full, half, step, options.smoothness_tolerance, options.floor) &&
                   step / 10.0 >= options.min_step) {
                step /= 10.0;
                full = difference(net, inputs, vals, idx, step, centre);
                half = difference(net, inputs, vals, idx, step / 2.0, centre);
                refined = true;
            }
            report.refined_coords += refined;
            const double numeric = full.slope;
            const double ad = analytic[k][idx];
            const double denom = std::max({std::abs(ad), std::abs(numeric), options.floor});
            const double rel = std::abs(ad - numeric) / denom;
            ++report.coords_checked;
            if (rel > report.max_rel_error || report.coords_checked == 1) {
                report.max_rel_error = std::max(report.max_rel_error, rel);
                report.worst_input = k;
                report.worst_index = idx;
                report.worst_autodiff = ad;
                report.worst_numeric = numeric;
            }
        }
    }
    for (std::size_t k = 0; k < inputs.size(); ++k) inputs[k].set_requires_grad(saved_flags[k]);
    return report;
}

}  // namespace cfrep
