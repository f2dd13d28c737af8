#include "cfrep/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "cfrep/errors.hpp"
#include "cfrep/losses.hpp"
#include "cfrep/rng.hpp"

namespace cfrep {

namespace {

void same_length(std::span<const double> a, std::span<const double> b, const char* what) {
    if (a.size() != b.size()) {
        throw ShapeError(std::string(what) + ": lengths " + std::to_string(a.size()) + " and " +
                         std::to_string(b.size()) + " differ");
    }
}

double mean_of(std::span<const double> v) {
    return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

// Pairwise |x_i - x_j| double-centred, evaluated row by row so that only
// the O(N) row means are stored.
struct DistanceCentering {
    std::vector<double> row_mean;
    double grand_mean = 0.0;

    explicit DistanceCentering(std::span<const double> x) : row_mean(x.size(), 0.0) {
        const std::size_t n = x.size();
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (std::size_t j = 0; j < n; ++j) acc += std::abs(x[i] - x[j]);
            row_mean[i] = acc / static_cast<double>(n);
        }
        grand_mean = mean_of(row_mean);
    }
};

double centred_product(std::span<const double> x, const DistanceCentering& cx, std::span<const double> y,
                       const DistanceCentering& cy) {
    const std::size_t n = x.size();
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            const double a = std::abs(x[i] - x[j]) - cx.row_mean[i] - cx.row_mean[j] + cx.grand_mean;
            const double b = std::abs(y[i] - y[j]) - cy.row_mean[i] - cy.row_mean[j] + cy.grand_mean;
            acc += a * b;
        }
        total += acc;
    }
    return total / (static_cast<double>(n) * static_cast<double>(n));
}

// psi(m) for positive integers: -gamma + H_{m-1}.
class Digamma {
public:
    explicit Digamma(std::size_t max_arg) : table_(max_arg + 1, 0.0) {
        constexpr double euler_gamma = 0.57721566490153286061;
        double h = 0.0;
        for (std::size_t m = 1; m <= max_arg; ++m) {
            table_[m] = -euler_gamma + h;
            h += 1.0 / static_cast<double>(m);
        }
    }
    double operator()(std::size_t m) const { return table_.at(m); }

private:
    std::vector<double> table_;
};

std::vector<double> standardized(std::span<const double> v, Rng& rng) {
    const double m = mean_of(v);
    double ss = 0.0;
    for (double x : v) ss += (x - m) * (x - m);
    const double sd = std::sqrt(ss / static_cast<double>(v.size()));
    std::vector<double> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = (v[i] - m) / sd + 1e-10 * rng.uniform(-1.0, 1.0);
    return out;
}

std::size_t strictly_within(const std::vector<double>& sorted, double centre, double radius) {
    const auto lo = std::upper_bound(sorted.begin(), sorted.end(), centre - radius);
    const auto hi = std::lower_bound(sorted.begin(), sorted.end(), centre + radius);
    return hi > lo ? static_cast<std::size_t>(hi - lo) : 0;
}

constexpr std::array<double, 30> kT05 = {12.7062, 4.3027, 3.1824, 2.7764, 2.5706, 2.4469, 2.3646, 2.3060,
                                         2.2622,  2.2281, 2.2010, 2.1788, 2.1604, 2.1448, 2.1314, 2.1199,
                                         2.1098,  2.1009, 2.0930, 2.0860, 2.0796, 2.0739, 2.0687, 2.0639,
                                         2.0595,  2.0555, 2.0518, 2.0484, 2.0452, 2.0423};
constexpr std::array<double, 30> kT01 = {63.6567, 9.9248, 5.8409, 4.6041, 4.0321, 3.7074, 3.4995, 3.3554,
                                         3.2498,  3.1693, 3.1058, 3.0545, 3.0123, 2.9768, 2.9467, 2.9208,
                                         2.8982,  2.8784, 2.8609, 2.8453, 2.8314, 2.8188, 2.8073, 2.7969,
                                         2.7874,  2.7787, 2.7707, 2.7633, 2.7564, 2.7500};

constexpr std::uint64_t kJitterSeed = 0x4B5347;

}  // namespace

double pearson(std::span<const double> a, std::span<const double> b) {
    same_length(a, b, "pearson");
    if (a.size() < 3) throw DomainError("pearson needs at least 3 samples");
    const double ma = mean_of(a), mb = mean_of(b);
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        sab += (a[i] - ma) * (b[i] - mb);
        saa += (a[i] - ma) * (a[i] - ma);
        sbb += (b[i] - mb) * (b[i] - mb);
    }
    if (saa == 0.0 || sbb == 0.0) throw DomainError("pearson: undefined for a constant input (zero variance)");
    return std::clamp(sab / std::sqrt(saa * sbb), -1.0, 1.0);
}

double rmse(std::span<const double> prediction, std::span<const double> truth) {
    same_length(prediction, truth, "rmse");
    if (prediction.empty()) throw ShapeError("rmse of empty vectors");
    double ss = 0.0;
    for (std::size_t i = 0; i < truth.size(); ++i) ss += (prediction[i] - truth[i]) * (prediction[i] - truth[i]);
    return std::sqrt(ss / static_cast<double>(truth.size()));
}

double auc(std::span<const double> scores, std::span<const double> labels) {
    same_length(scores, labels, "auc");
    const std::size_t n = scores.size();
    std::size_t positives = 0;
    for (double l : labels) {
        if (l != 0.0 && l != 1.0) throw DomainError("auc: labels must be 0 or 1");
        positives += l == 1.0 ? 1 : 0;
    }
    if (positives == 0 || positives == n) throw DomainError("auc: both classes must be present");
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return scores[i] < scores[j]; });
    double positive_rank_sum = 0.0;
    for (std::size_t i = 0; i < n;) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid_rank = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t q = i; q <= j; ++q) positive_rank_sum += labels[order[q]] == 1.0 ? mid_rank : 0.0;
        i = j + 1;
    }
    const double np = static_cast<double>(positives), nn = static_cast<double>(n - positives);
    return (positive_rank_sum - np * (np + 1.0) / 2.0) / (np * nn);
}

double dcor2(std::span<const double> a, std::span<const double> b) {
    same_length(a, b, "dcor2");
    if (a.size() < 4) throw DomainError("dcor2 needs at least 4 samples");
    const DistanceCentering ca(a), cb(b);
    const double vab = centred_product(a, ca, b, cb);
    const double vaa = centred_product(a, ca, a, ca);
    const double vbb = centred_product(b, cb, b, cb);
    if (vaa <= 0.0 || vbb <= 0.0) return 0.0;
    return std::clamp(vab / std::sqrt(vaa * vbb), 0.0, 1.0);
}

double mutual_info(std::span<const double> a, std::span<const double> b, std::size_t k) {
    same_length(a, b, "mutual_info");
    const std::size_t n = a.size();
    if (n < 50) throw DomainError("mutual_info needs at least 50 samples");
    if (k == 0 || k >= n) throw DomainError("mutual_info: neighbour count out of range");
    const auto constant = [](std::span<const double> v) {
        return std::all_of(v.begin(), v.end(), [&](double x) { return x == v[0]; });
    };
    if (constant(a) || constant(b)) return 0.0;

    Rng rng(kJitterSeed);
    const auto x = standardized(a, rng);
    const auto y = standardized(b, rng);

    // Points sorted by x let the k-NN search stop once |dx| exceeds the
    // current k-th distance.
    std::vector<std::size_t> by_x(n);
    std::iota(by_x.begin(), by_x.end(), std::size_t{0});
    std::sort(by_x.begin(), by_x.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> xs(n), ys(y);
    for (std::size_t r = 0; r < n; ++r) xs[r] = x[by_x[r]];
    std::sort(ys.begin(), ys.end());

    const Digamma psi(n);
    double marginal = 0.0;
    std::vector<double> best(k);
    for (std::size_t r = 0; r < n; ++r) {
        const std::size_t i = by_x[r];
        std::fill(best.begin(), best.end(), std::numeric_limits<double>::infinity());
        auto offer = [&](std::size_t j) {
            const double d = std::max(std::abs(x[i] - x[j]), std::abs(y[i] - y[j]));
            if (d >= best[k - 1]) return;
            std::size_t pos = k - 1;
            while (pos > 0 && best[pos - 1] > d) {
                best[pos] = best[pos - 1];
                --pos;
            }
            best[pos] = d;
        };
        for (std::size_t q = r; q-- > 0;) {
            if (x[i] - xs[q] >= best[k - 1]) break;
            offer(by_x[q]);
        }
        for (std::size_t q = r + 1; q < n; ++q) {
            if (xs[q] - x[i] >= best[k - 1]) break;
            offer(by_x[q]);
        }
        const double eps = best[k - 1];
        const std::size_t nx = strictly_within(xs, x[i], eps) - 1;
        const std::size_t ny = strictly_within(ys, y[i], eps) - 1;
        marginal += psi(nx + 1) + psi(ny + 1);
    }
    return psi(k) + psi(n) - marginal / static_cast<double>(n);
}

double l1_metric(const Tensor& x, const Tensor& x_rec) {
    Graph g;
    g.set_recording(false);
    return loss_rec(g, x, x_rec).item();
}

double ncc_metric(const Tensor& x, const Tensor& x_rec) {
    Graph g;
    g.set_recording(false);
    return 1.0 - static_cast<double>(loss_ncc(g, x, x_rec).item());
}

std::string to_string(DependenceMethod method) {
    switch (method) {
        case DependenceMethod::pearson: return "pearson";
        case DependenceMethod::dcor2: return "dcor2";
        case DependenceMethod::mi_ksg: return "mi_ksg";
    }
    return "unknown";
}

DependenceResult measure_dependence(DependenceMethod method, std::span<const double> a, std::span<const double> b) {
    DependenceResult r;
    r.method = method;
    r.samples = a.size();
    switch (method) {
        case DependenceMethod::pearson: r.value = pearson(a, b); break;
        case DependenceMethod::dcor2: r.value = dcor2(a, b); break;
        case DependenceMethod::mi_ksg: r.value = mutual_info(a, b); break;
    }
    return r;
}

double t_critical(std::size_t df, double alpha) {
    if (df == 0) throw DomainError("t_critical: degrees of freedom must be positive");
    const std::size_t idx = std::min<std::size_t>(df, 30) - 1;
    if (alpha == 0.05) return kT05[idx];
    if (alpha == 0.01) return kT01[idx];
    throw DomainError("t_critical: only alpha 0.05 and 0.01 are tabulated");
}

double t_statistic(std::span<const double> values) {
    if (values.size() < 2) throw DomainError("t statistic needs at least 2 values");
    const double m = mean_of(values);
    double ss = 0.0;
    for (double v : values) ss += (v - m) * (v - m);
    const double sd = std::sqrt(ss / static_cast<double>(values.size() - 1));
    if (sd == 0.0) {
        if (m == 0.0) return 0.0;
        return m > 0.0 ? std::numeric_limits<double>::infinity() : -std::numeric_limits<double>::infinity();
    }
    return m / (sd / std::sqrt(static_cast<double>(values.size())));
}

std::vector<std::uint8_t> ttest_mask(std::span<const double> values, std::size_t folds, double alpha) {
    if (folds < 2) throw DomainError("ttest_mask needs at least 2 folds");
    if (values.size() % folds != 0) throw ShapeError("ttest_mask: value count is not a multiple of the fold count");
    const std::size_t positions = values.size() / folds;
    const double critical = t_critical(folds - 1, alpha);
    std::vector<std::uint8_t> mask(positions, 0);
    std::vector<double> column(folds);
    for (std::size_t p = 0; p < positions; ++p) {
        for (std::size_t f = 0; f < folds; ++f) column[f] = values[f * positions + p];
        mask[p] = std::abs(t_statistic(column)) > critical ? 1 : 0;
    }
    return mask;
}

}  // namespace cfrep
