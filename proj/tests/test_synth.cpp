#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <vector>

#include <json.hpp>

#include "cfrep/metrics.hpp"
#include "cfrep/synth.hpp"

using namespace cfrep;
namespace fs = std::filesystem;

namespace {

std::size_t lit(const std::vector<float>& img) {
    std::size_t n = 0;
    for (auto v : img) n += v > 0.0f;
    return n;
}

fs::path scratch(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("cfrep_test_" + name);
    fs::remove_all(dir);
    return dir;
}

}  // namespace

TEST_CASE("circle attributes reach their declared correlation") {
    const auto ds = generate_dataset(DatasetKind::circles, 8000, 42);
    const double r = pearson(ds.column(0), ds.column(1));
    CHECK(r >= -0.688);
    CHECK(r <= -0.648);
    CHECK(ds.realized_correlation(0, 1) == doctest::Approx(r).epsilon(1e-9));
    CHECK(ds.realized_mean[0] == doctest::Approx(0.470).epsilon(0.01 / 0.47));
    CHECK(ds.realized_sd[1] == doctest::Approx(6.320).epsilon(0.2 / 6.32));
    for (std::size_t i = 0; i < ds.count; ++i) {
        CHECK_FALSE((ds.label(i, 1) < 3.0f || ds.label(i, 1) > 30.0f));
    }
}

TEST_CASE("identity correlation yields pairwise independent columns") {
    const auto specs = ellipse_attributes();
    const auto rows = sample_correlated(specs, CorrelationSpec::identity(specs.size()), 8000, 3);
    const auto c = empirical_correlation(rows, specs.size());
    for (std::size_t i = 0; i < specs.size(); ++i)
        for (std::size_t j = i + 1; j < specs.size(); ++j) CHECK(std::abs(c(i, j)) < 0.03);
}

TEST_CASE("ellipse attributes reach Table-A1 correlations") {
    const auto ds = generate_dataset(DatasetKind::ellipses, 8000, 42);
    REQUIRE(ds.attribute_count() == 4);
    CHECK(ds.attributes[0].name == "brightness");
    CHECK(ds.attributes[1].name == "angle");
    CHECK(ds.attributes[2].name == "position");
    CHECK(ds.attributes[3].name == "area");
    CHECK(ds.target_index() == 0);
    for (std::size_t i = 0; i < 4; ++i)
        for (std::size_t j = 0; j < 4; ++j)
            CHECK(std::abs(ds.realized_correlation(i, j) - ds.target_correlation(i, j)) <= 0.02);
}

TEST_CASE("non positive-definite correlation is rejected") {
    auto c = CorrelationSpec::identity(3);
    c(0, 1) = c(1, 0) = 0.9;
    c(0, 2) = c(2, 0) = 0.9;
    c(1, 2) = c(2, 1) = -0.9;
    const std::vector<AttributeSpec> specs(3, AttributeSpec{"x", 0.0, 1.0, -10.0, 10.0});
    CHECK_THROWS_AS(sample_correlated(specs, c, 10, 1), DomainError);
}

TEST_CASE("circle rendering") {
    const auto white = render_circle(1.0, 3.0);
    CHECK(white[32 * 64 + 32] == 1.0f);
    const auto gray = render_circle(0.0, 10.0);
    CHECK(gray[32 * 64 + 32] == doctest::Approx(128.0 / 255.0));
    CHECK(gray[0] == 0.0f);
    for (double radius : {5.0, 9.5, 16.0, 30.0}) {
        const double area = std::numbers::pi * radius * radius;
        CHECK(std::abs(static_cast<double>(lit(render_circle(0.5, radius))) - area) <= 0.08 * area);
    }
    CHECK_THROWS_AS(render_circle(0.5, 31.0), DomainError);
}

TEST_CASE("ellipse rendering") {
    const auto e = render_ellipse(0.16, 30.0, 32.0, 399.0);
    float peak = 0.0f;
    for (auto v : e.pixels) peak = std::max(peak, v);
    CHECK(std::abs(peak * 255.0f - 40.0f) <= 1.5f);  // round(0.16 * 255) = 41
    CHECK(std::abs(static_cast<double>(lit(e.pixels)) - 399.0) <= 0.08 * 399.0);
    CHECK_FALSE(e.clipped);

    // a = 2b with pi*a*b = 399: a ~ 15.9. At 90 degrees the long axis is vertical.
    const auto v = render_ellipse(1.0, 90.0, 32.0, 399.0).pixels;
    CHECK(v[(32 + 13) * 64 + 32] > 0.0f);
    CHECK(v[32 * 64 + 32 + 13] == 0.0f);

    // Mirroring left-right maps 90+d onto 90-d.
    const auto plus = render_ellipse(0.5, 110.0, 32.0, 500.0).pixels;
    const auto minus = render_ellipse(0.5, 70.0, 32.0, 500.0).pixels;
    std::size_t differ = 0;
    for (std::size_t r = 0; r < 64; ++r)
        for (std::size_t c = 1; c < 64; ++c) differ += plus[r * 64 + c] != minus[r * 64 + (64 - c)];
    CHECK(differ <= 8);
    CHECK(render_ellipse(0.5, 0.0, 2.0, 700.0).clipped);
}

TEST_CASE("dataset generation") {
    const auto a = generate_dataset(DatasetKind::circles, 10, 7, 0.5);
    CHECK(a.labeled_count() == 5);
    CHECK(a.images.size() == 10 * 64 * 64);
    const auto b = generate_dataset(DatasetKind::circles, 10, 7, 0.5);
    CHECK(a.images == b.images);
    CHECK(a.labels == b.labels);
    CHECK(a.mask == b.mask);
    const auto c = generate_dataset(DatasetKind::circles, 10, 8, 0.5);
    CHECK(a.labels != c.labels);
    CHECK_THROWS_AS(generate_dataset(DatasetKind::circles, 0, 1), DomainError);
    CHECK_THROWS_AS(generate_dataset(DatasetKind::circles, 10, 1, 1.5), DomainError);
    CHECK(parse_dataset_kind("ellipses") == DatasetKind::ellipses);
    CHECK_THROWS_AS(parse_dataset_kind("squares"), ConfigError);
}

TEST_CASE("dataset directory round trip") {
    const auto ds = generate_dataset(DatasetKind::ellipses, 25, 3, 0.4);
    const auto dir = scratch("dataset");
    write_dataset(ds, dir);
    const auto back = read_dataset(dir);
    CHECK(back.kind == ds.kind);
    CHECK(back.count == ds.count);
    CHECK(back.images == ds.images);
    CHECK(back.labels == ds.labels);
    CHECK(back.mask == ds.mask);
    CHECK(back.seed == ds.seed);
    CHECK(back.labeled_fraction == ds.labeled_fraction);
    CHECK(back.realized_correlation.values == ds.realized_correlation.values);
    CHECK(back.generator_version == ds.generator_version);

    SUBCASE("truncated image blob") {
        fs::resize_file(dir / "images.f32le", fs::file_size(dir / "images.f32le") - 4);
        CHECK_THROWS_AS(read_dataset(dir), DataError);
    }
    SUBCASE("unknown manifest version") {
        auto m = nlohmann::json::parse(std::ifstream(dir / "manifest.json"));
        m["version"] = 99;
        std::ofstream(dir / "manifest.json") << m.dump();
        CHECK_THROWS_AS(read_dataset(dir), DataError);
    }
    SUBCASE("missing directory") { CHECK_THROWS_AS(read_dataset(dir / "nope"), DataError); }
    fs::remove_all(dir);
}
