#pragma once

#include <span>
#include <vector>

#include "cfrep/tensor.hpp"

namespace cfrep {

/// Mean absolute error over all pixels.
template <typename T>
BasicTensor<T> loss_rec(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& x_rec);

/// 1 - mean windowed ZNCC (9x9 tiles, stride 9, variance floor 1e-5).
template <typename T>
BasicTensor<T> loss_ncc(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& x_rec);

inline constexpr std::size_t kNccWindow = 9;
inline constexpr double kNccEps = 1e-5;
inline constexpr double kPearsonEps = 1e-8;

template <typename T>
struct PearsonTerm {
    BasicTensor<T> r;
    /// Either side was constant within the batch.
    bool degenerate = false;
};

/// Centered cosine between a (in-graph, [B]) and a constant vector b, with
/// kPearsonEps added to each standard deviation.
template <typename T>
PearsonTerm<T> batch_pearson(BasicGraph<T>& g, const BasicTensor<T>& a, std::span<const T> b);

template <typename T>
struct CorrLoss {
    BasicTensor<T> value;
    /// Terms dropped because their label column was constant in the batch.
    std::size_t skipped_terms = 0;
};

/// -|r(zp,t)| + eta * sum_i |r(zp,c_i)|. Confounder terms are not evaluated
/// at all when eta == 0; degenerate terms are skipped and counted.
template <typename T>
CorrLoss<T> loss_corr(BasicGraph<T>& g, const BasicTensor<T>& zp, std::span<const T> target,
                      const std::vector<std::span<const T>>& confounders, double eta);

template <typename T>
struct JointLoss {
    BasicTensor<T> total;
    double rec = 0.0;
    double ncc = 0.0;
    double corr = 0.0;
    std::size_t skipped_terms = 0;
};

/// L_rec (+ L_ncc when enabled) + lambda * L_corr.
template <typename T>
JointLoss<T> loss_joint(BasicGraph<T>& g, const BasicTensor<T>& x, const BasicTensor<T>& x_rec,
                        const BasicTensor<T>& zp, std::span<const T> target,
                        const std::vector<std::span<const T>>& confounders, double eta, double lambda,
                        bool use_ncc = false);

/// Largest |r(zp*, t)| reachable when zp* is uncorrelated with mutually
/// independent confounders: sqrt(1 - sum r(t,c_i)^2).
double corr_upper_bound(std::span<const double> target_confounder_r);

/// Population Pearson on plain vectors with the same epsilon guard as
/// batch_pearson (used for monitoring, not for metrics).
double guarded_pearson(std::span<const double> a, std::span<const double> b);

}  // namespace cfrep
