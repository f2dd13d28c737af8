#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cfrep/tensor.hpp"

namespace cfrep {

/// Textbook Pearson coefficient. Throws DomainError for fewer than 3
/// samples or a constant input.
double pearson(std::span<const double> a, std::span<const double> b);

/// sqrt(mean((prediction - truth)^2)).
double rmse(std::span<const double> prediction, std::span<const double> truth);

/// Mann-Whitney AUC with mid-ranks for ties. Labels must be 0 or 1 and
/// both classes must be present.
double auc(std::span<const double> scores, std::span<const double> labels);

/// Squared distance correlation (biased V-statistic). Returns 0 when either
/// marginal distance variance vanishes. Exact; O(N^2) time, O(N) memory.
double dcor2(std::span<const double> a, std::span<const double> b);

inline constexpr std::size_t kMiNeighbours = 3;

/// Kraskov-Stoegbauer-Grassberger estimator (first variant) in nats, max
/// norm, on standardized variables. A fixed-seed jitter of 1e-10 breaks
/// ties. Needs at least 50 samples; a constant variable yields 0.
double mutual_info(std::span<const double> a, std::span<const double> b, std::size_t k = kMiNeighbours);

/// Mean absolute difference between two image batches (same as loss_rec).
double l1_metric(const Tensor& x, const Tensor& x_rec);

/// Mean windowed zero-normalized cross-correlation (same windowing as
/// loss_ncc); 1 means identical up to per-window affine maps.
double ncc_metric(const Tensor& x, const Tensor& x_rec);

enum class DependenceMethod { pearson, dcor2, mi_ksg };

std::string to_string(DependenceMethod method);

struct DependenceResult {
    double value = 0.0;
    DependenceMethod method = DependenceMethod::pearson;
    std::size_t samples = 0;
};

DependenceResult measure_dependence(DependenceMethod method, std::span<const double> a, std::span<const double> b);

/// Two-sided critical value of Student's t for df degrees of freedom.
/// Embedded table for alpha in {0.05, 0.01}; df above 30 uses the df = 30
/// entry (slightly conservative).
double t_critical(std::size_t df, double alpha = 0.05);

/// One-sample t statistic against 0 (sample standard deviation).
double t_statistic(std::span<const double> values);

/// values is F x P row-major (one row per fold). Position p is significant
/// when |t| exceeds the critical value for df = F - 1. Zero spread with a
/// nonzero mean counts as significant; all zeros never do.
std::vector<std::uint8_t> ttest_mask(std::span<const double> values, std::size_t folds, double alpha = 0.05);

}  // namespace cfrep
