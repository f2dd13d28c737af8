#include "cfrep/losses.hpp"

#include <cmath>
#include <algorithm>
#include <numeric>

#include "cfrep/ops.hpp"

namespace cfrep {

template <typename T>
BasicTensor<T> loss_rec(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& x_rec) {
    if (x.shape() != x_rec.shape()) {
        throw ShapeError("loss_rec: shapes " + shape_str(x.shape()) + " and " + shape_str(x_rec.shape()) +
                         " differ");
    }
    return ops::mean(g, ops::abs(g, ops::sub(g, x, x_rec)));
}

template <typename T>
BasicTensor<T> loss_ncc(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& x_rec) {
    auto z = ops::windowed_zncc(g, x, x_rec, kNccWindow, static_cast<T>(kNccEps));
    return ops::add_scalar(g, ops::mul_scalar(g, z, T(-1)), T(1));
}

template <typename T>
PearsonTerm<T> batch_pearson(BasicGraph<T>& g, const BasicTensor<T>& a, std::span<const T> b) {
    if (a.rank() != 1 || a.numel() != b.size()) {
        throw ShapeError("batch_pearson: a " + shape_str(a.shape()) + " vs b of length " + std::to_string(b.size()));
    }
    if (b.size() < 2) throw ShapeError("batch_pearson needs at least 2 samples");
    const std::size_t n = b.size();
    double mb = 0.0;
    for (auto v : b) mb += v;
    mb /= static_cast<double>(n);
    std::vector<T> bc(n);
    double sbb = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        bc[i] = static_cast<T>(b[i] - mb);
        sbb += static_cast<double>(bc[i]) * bc[i];
    }
    const double sd_b = std::sqrt(sbb / static_cast<double>(n));

    auto av = a.values();
    const bool a_const = std::all_of(av.begin(), av.end(), [&](T v) { return v == av[0]; });
    const bool degenerate = a_const || sbb == 0.0;

    auto ac = ops::sub(g, a, ops::mean(g, a));
    auto cov = ops::mean(g, ops::mul(g, ac, BasicTensor<T>(Shape{n}, std::move(bc))));
    auto sd_a = ops::add_scalar(g, ops::sqrt(g, ops::mean(g, ops::square(g, ac))), static_cast<T>(kPearsonEps));
    auto r = ops::mul_scalar(g, ops::div(g, cov, sd_a), static_cast<T>(1.0 / (sd_b + kPearsonEps)));
    return {r, degenerate};
}

template <typename T>
CorrLoss<T> loss_corr(BasicGraph<T>& g, const BasicTensor<T>& zp, std::span<const T> target,
                      const std::vector<std::span<const T>>& confounders, double eta) {
    if (eta < 0.0) throw DomainError("loss_corr: eta must be non-negative");
    CorrLoss<T> out;
    BasicTensor<T> total;
    auto accumulate = [&](const BasicTensor<T>& term) { total = total.defined() ? ops::add(g, total, term) : term; };

    auto rt = batch_pearson(g, zp, target);
    if (rt.degenerate) {
        ++out.skipped_terms;
    } else {
        accumulate(ops::mul_scalar(g, ops::abs(g, rt.r), T(-1)));
    }
    if (eta != 0.0) {
        for (const auto& c : confounders) {
            auto rc = batch_pearson(g, zp, c);
            if (rc.degenerate) {
                ++out.skipped_terms;
                continue;
            }
            accumulate(ops::mul_scalar(g, ops::abs(g, rc.r), static_cast<T>(eta)));
        }
    }
    out.value = total.defined() ? total : BasicTensor<T>::scalar(T(0));
    return out;
}

template <typename T>
JointLoss<T> loss_joint(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& x_rec,
                        const BasicTensor<T>& zp, std::span<const T> target,
                        const std::vector<std::span<const T>>& confounders, double eta, double lambda,
                        bool use_ncc) {
    JointLoss<T> out;
    auto rec = loss_rec(g, x, x_rec);
    out.rec = rec.item();
    BasicTensor<T> total = rec;
    if (use_ncc) {
        auto ncc = loss_ncc(g, x, x_rec);
        out.ncc = ncc.item();
        total = ops::add(g, total, ncc);
    }
    if (lambda != 0.0) {
        auto corr = loss_corr(g, zp, target, confounders, eta);
        out.corr = corr.value.item();
        out.skipped_terms = corr.skipped_terms;
        total = ops::add(g, total, ops::mul_scalar(g, corr.value, static_cast<T>(lambda)));
    }
    out.total = total;
    return out;
}

double corr_upper_bound(std::span<const double> target_confounder_r) {
    double s = 0.0;
    for (double r : target_confounder_r) s += r * r;
    if (s > 1.0) throw DomainError("corr_upper_bound: sum of squared correlations exceeds 1");
    return std::sqrt(1.0 - s);
}

double guarded_pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2) throw ShapeError("guarded_pearson: need equal lengths >= 2");
    const double n = static_cast<double>(a.size());
    const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
    const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
    double sab = 0, saa = 0, sbb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    return (sab / n) / ((std::sqrt(saa / n) + kPearsonEps) * (std::sqrt(sbb / n) + kPearsonEps));
}

#define CFREP_INSTANTIATE_LOSSES(T)                                                                              \
    template BasicTensor<T> loss_rec(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&);              \
    template BasicTensor<T> loss_ncc(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&);              \
    template PearsonTerm<T> batch_pearson(BasicGraph<T>&, const BasicTensor<T>&, std::span<const T>);            \
    template CorrLoss<T> loss_corr(BasicGraph<T>&, const BasicTensor<T>&, std::span<const T>,                    \
                                   const std::vector<std::span<const T>>&, double);                             \
    template JointLoss<T> loss_joint(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&,               \
                                     const BasicTensor<T>&, std::span<const T>,                                 \
                                     const std::vector<std::span<const T>>&, double, double, bool);

CFREP_INSTANTIATE_LOSSES(float)
CFREP_INSTANTIATE_LOSSES(double)

#undef CFREP_INSTANTIATE_LOSSES

}  // namespace cfrep
