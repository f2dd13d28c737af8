#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfrep/metrics.hpp"
#include "cfrep/rng.hpp"

using namespace cfrep;

namespace {

/// Textbook dCor^2 with N x N double-centred distance matrices.
double brute_dcor2(const std::vector<double>& x, const std::vector<double>& y) {
    const std::size_t n = x.size();
    auto centred = [n](const std::vector<double>& v) {
        std::vector<double> d(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] = std::abs(v[i] - v[j]);
        std::vector<double> row(n, 0.0);
        double all = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) row[i] += d[i * n + j];
            all += row[i];
            row[i] /= static_cast<double>(n);
        }
        all /= static_cast<double>(n * n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) d[i * n + j] += all - row[i] - row[j];
        return d;
    };
    const auto a = centred(x), b = centred(y);
    double ab = 0, aa = 0, bb = 0;
    for (std::size_t i = 0; i < n * n; ++i) {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    return ab / std::sqrt(aa * bb);
}

/// Fraction of (positive, negative) pairs ranked correctly; ties count half.
double brute_auc(const std::vector<double>& s, const std::vector<double>& y) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < s.size(); ++i)
        for (std::size_t j = 0; j < s.size(); ++j)
            if (y[i] == 1 && y[j] == 0) {
                pairs += 1;
                wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
            }
    return wins / pairs;
}

void gaussian_pair(std::size_t n, double rho, std::uint64_t seed, std::vector<double>& a, std::vector<double>& b) {
    Rng rng(seed);
    a.resize(n);
    b.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = rng.normal();
        b[i] = rho * a[i] + std::sqrt(1 - rho * rho) * rng.normal();
    }
}

}  // namespace

TEST_CASE("pearson") {
    const std::vector<double> a{1, 2, 3}, b{1, 2, 4};
    CHECK(pearson(a, a) == doctest::Approx(1.0));
    CHECK(pearson(a, b) == doctest::Approx(0.9820).epsilon(1e-4));
    CHECK(pearson(a, std::vector<double>{-1, -2, -3}) == doctest::Approx(-1.0));
    CHECK_THROWS_AS(pearson(a, std::vector<double>{2, 2, 2}), DomainError);
    CHECK_THROWS_AS(pearson(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DomainError);
    CHECK_THROWS_AS(pearson(a, std::vector<double>{1, 2}), ShapeError);
}

TEST_CASE("rmse") {
    const std::vector<double> t{3, 4};
    CHECK(rmse(t, t) == 0.0);
    CHECK(rmse(std::vector<double>{4, 5}, t) == doctest::Approx(1.0));
    CHECK(rmse(std::vector<double>{0, 0}, t) == doctest::Approx(std::sqrt(12.5)));
}

TEST_CASE("auc") {
    const std::vector<double> s{0.1, 0.4, 0.35, 0.8}, y{0, 0, 1, 1};
    CHECK(auc(s, y) == doctest::Approx(0.75));
    CHECK(auc(std::vector<double>{0.1, 0.2, 0.8, 0.9}, y) == 1.0);
    CHECK(auc(std::vector<double>{0.5, 0.5, 0.5, 0.5}, y) == 0.5);
    CHECK_THROWS_AS(auc(s, std::vector<double>{1, 1, 1, 1}), DomainError);

    Rng rng(2);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> sc(60), lab(60), flipped(60), neg(60);
        for (std::size_t i = 0; i < sc.size(); ++i) {
            lab[i] = i % 3 == 0 ? 1.0 : 0.0;
            sc[i] = std::round(10 * (rng.normal() + lab[i])) / 10;  // coarse grid forces ties
            flipped[i] = 1.0 - lab[i];
            neg[i] = -sc[i];
        }
        CHECK(auc(sc, lab) == doctest::Approx(brute_auc(sc, lab)).epsilon(1e-12));
        CHECK(auc(sc, lab) + auc(sc, flipped) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(auc(neg, lab) == doctest::Approx(auc(sc, flipped)).epsilon(1e-12));
    }
}

TEST_CASE("distance correlation") {
    std::vector<double> a, b;
    gaussian_pair(200, 0.5, 3, a, b);
    CHECK(dcor2(a, a) == doctest::Approx(1.0));
    CHECK(dcor2(a, std::vector<double>(a.size(), 4.0)) == 0.0);
    Rng rng(9);
    for (std::size_t n : {5, 37, 200}) {
        std::vector<double> x(n), y(n);
        for (std::size_t i = 0; i < n; ++i) {
            x[i] = rng.normal();
            y[i] = x[i] * x[i] + 0.3 * rng.normal();
        }
        CHECK(std::abs(dcor2(x, y) - brute_dcor2(x, y)) < 1e-10);
    }
    gaussian_pair(8000, 0.668, 4, a, b);
    CHECK(dcor2(a, b) == doctest::Approx(0.38).epsilon(0.03 / 0.38));
}

TEST_CASE("KSG mutual information") {
    std::vector<double> a, b;
    gaussian_pair(8000, 0.0, 5, a, b);
    CHECK(std::abs(mutual_info(a, b)) <= 0.02);
    for (double rho : {0.3, 0.668, 0.9}) {
        gaussian_pair(8000, rho, 6, a, b);
        CHECK(std::abs(mutual_info(a, b) - (-0.5 * std::log(1 - rho * rho))) <= 0.05);
    }
    gaussian_pair(1000, 0.0, 7, a, b);
    CHECK(mutual_info(a, a) > 2.0);
    CHECK(mutual_info(a, std::vector<double>(a.size(), 1.0)) == 0.0);
    CHECK_THROWS_AS(mutual_info(std::vector<double>(10, 0.0), std::vector<double>(10, 0.0)), DomainError);
}

TEST_CASE("dependence dispatch") {
    std::vector<double> a, b;
    gaussian_pair(300, 0.5, 8, a, b);
    const auto r = measure_dependence(DependenceMethod::pearson, a, b);
    CHECK(r.value == pearson(a, b));
    CHECK(r.samples == 300);
    CHECK(measure_dependence(DependenceMethod::dcor2, a, b).value == dcor2(a, b));
    CHECK(to_string(DependenceMethod::mi_ksg) == "mi_ksg");
}

TEST_CASE("t-test significance mask") {
    // mean 1, sample sd sqrt(0.025 / 4), t = 1 / (sd / sqrt(5)) = sqrt(800)
    const std::vector<double> v{0.9, 1.1, 1.0, 0.95, 1.05};
    CHECK(t_statistic(v) == doctest::Approx(std::sqrt(800.0)));
    CHECK(t_critical(4) == doctest::Approx(2.776).epsilon(1e-3));
    CHECK(t_critical(1000) == t_critical(30));

    // Three positions over five folds: significant, constant ones, all zeros.
    std::vector<double> folds(5 * 3);
    for (std::size_t f = 0; f < 5; ++f) {
        folds[f * 3 + 0] = v[f];
        folds[f * 3 + 1] = 1.0;
        folds[f * 3 + 2] = 0.0;
    }
    const auto mask = ttest_mask(folds, 5);
    CHECK(mask[0] == 1);
    CHECK(mask[1] == 1);
    CHECK(mask[2] == 0);
    const std::vector<double> alternating{1, -1, 1, -1, 0.0};
    CHECK(ttest_mask(alternating, 5)[0] == 0);
}
