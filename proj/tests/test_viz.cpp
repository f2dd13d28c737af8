#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <vector>

#include <png.h>

#include "cfrep/synth.hpp"
#include "cfrep/viz.hpp"

using namespace cfrep;

namespace {

ModelState tiny_model() {
    Architecture a;
    a.image_size = 16;
    a.channels = {2, 4};
    a.latent_dim = 2;
    return ModelState(a, 1, 21);
}

/// Decodes PNG bytes with libpng into 8-bit samples of the requested format.
std::vector<unsigned char> decode(const std::vector<unsigned char>& bytes, png_uint_32 format, png_uint_32& w,
                                  png_uint_32& h) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    REQUIRE(png_image_begin_read_from_memory(&img, bytes.data(), bytes.size()) != 0);
    img.format = format;
    std::vector<unsigned char> out(PNG_IMAGE_SIZE(img));
    REQUIRE(png_image_finish_read(&img, nullptr, out.data(), 0, nullptr) != 0);
    w = img.width;
    h = img.height;
    return out;
}

Frames frames_of(const std::vector<std::vector<float>>& imgs, std::size_t size) {
    Frames f;
    std::vector<float> px;
    for (std::size_t i = 0; i < imgs.size(); ++i) {
        f.targets.push_back(static_cast<double>(i));
        f.steps.push_back(0.0);
        f.predicted.push_back(static_cast<double>(i));
        px.insert(px.end(), imgs[i].begin(), imgs[i].end());
    }
    f.images = Tensor({imgs.size(), 1, size, size}, px);
    return f;
}

}  // namespace

TEST_CASE("solving frame steps") {
    const Predictor lin{PredictorKind::linear, 2.0, 1.0};
    CHECK(solve_k(lin.predict(0.3), 0.3, lin) == doctest::Approx(0.0));
    CHECK(solve_k(5.0, 0.5, lin) == doctest::Approx((5.0 - 1.0) / 2.0 - 0.5));
    const Predictor neg{PredictorKind::linear, -0.5, 0.2};
    const double k = solve_k(0.9, 1.0, neg);
    CHECK(neg.predict(1.0 + k) == doctest::Approx(0.9));

    const Predictor logit{PredictorKind::logistic, 1.5, -0.2};
    for (double t : {0.05, 0.3, 0.5, 0.93}) {
        const double s = solve_k(t, 0.4, logit);
        CHECK(std::abs(logit.predict(0.4 + s) - t) <= 1e-3 * t);
    }
    const Predictor falling{PredictorKind::logistic, -2.0, 0.0};
    CHECK(falling.predict(solve_k(0.8, 0.0, falling)) == doctest::Approx(0.8).epsilon(1e-3));
    CHECK_THROWS_AS(solve_k(0.999999, 0.0, Predictor{PredictorKind::logistic, 1e-3, 0.0}), DomainError);
    CHECK_THROWS_AS(solve_k(1.5, 0.0, logit), DomainError);
    CHECK_THROWS_AS(solve_k(1.0, 0.0, Predictor{PredictorKind::linear, 0.0, 1.0}), DomainError);
}

TEST_CASE("target sequences and ranges") {
    const auto s = target_sequence(0.2, 1.0, 5);
    REQUIRE(s.size() == 5);
    CHECK(s[0] == 0.2);
    CHECK(s[2] == doctest::Approx(0.6));
    CHECK(s[4] == doctest::Approx(1.0));
    CHECK(target_sequence(0.3, 0.9, 1) == std::vector<double>{0.3});
    VizConfig c;
    CHECK(target_range(c, 0.5, 0.1).second == doctest::Approx(0.6));
    c.range = RangePolicy::mean_3sd;
    CHECK(target_range(c, 0.5, 0.1).first == doctest::Approx(0.2));
}

TEST_CASE("frame sampling") {
    const auto m = tiny_model();
    const Predictor lin{PredictorKind::linear, 0.8, 0.1};
    const std::vector<float> mean{0.3f, -0.2f};
    SUBCASE("the mean latent alone reproduces its reconstruction") {
        const auto f = sample_frames(m, lin, mean, {});
        REQUIRE(f.count() == 1);
        CHECK(f.steps[0] == 0.0);
        const auto rec = m.decode(Tensor({1, 2}, mean));
        CHECK(std::equal(rec.values().begin(), rec.values().end(), f.frame(0).begin()));
        const std::vector<double> at_mean{lin.predict(project_point(m, mean))};
        const auto g = sample_frames(m, lin, mean, at_mean);
        CHECK(g.steps[0] == doctest::Approx(0.0).epsilon(1e-6));
    }
    SUBCASE("every frame hits its target") {
        const auto targets = target_sequence(-1.0, 2.0, 11);
        const auto f = sample_frames(m, lin, mean, targets);
        REQUIRE(f.count() == 11);
        CHECK(f.images.shape() == Shape{11, 1, 16, 16});
        for (std::size_t i = 0; i < 11; ++i) {
            CHECK(std::abs(f.predicted[i] - targets[i]) <= kFrameTolerance * std::max(std::abs(targets[i]), kFrameEpsAbs));
        }
    }
}

TEST_CASE("heatmaps") {
    const auto small = render_circle(0.5, 5.0, 32), big = render_circle(0.5, 10.0, 32);
    const auto grow = frames_of({small, render_circle(0.5, 7.0, 32), big}, 32);
    const auto shrink = frames_of({big, render_circle(0.5, 7.0, 32), small}, 32);
    const auto h = heatmap(grow), r = heatmap(shrink);
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == -r[i]);
    const auto flat = heatmap(frames_of({small, small}, 32));
    for (auto v : flat) CHECK(v == 0.0f);
    // Positive annulus between the two edges, zero in the common core.
    CHECK(h[16 * 32 + 16] == 0.0f);
    CHECK(h[16 * 32 + 16 + 8] > 0.0f);

    SUBCASE("aggregation") {
        const auto same = aggregate_heatmaps({h, h, h});
        for (std::size_t i = 0; i < h.size(); ++i) CHECK(same[i] == h[i]);
        std::vector<float> neg(h.size());
        for (std::size_t i = 0; i < h.size(); ++i) neg[i] = -h[i];
        for (auto v : aggregate_heatmaps({h, neg, h, neg})) CHECK(v == 0.0f);
    }
}

TEST_CASE("recovered radius tracks the drawn circle") {
    std::vector<std::vector<float>> imgs;
    for (int r = 6; r <= 16; ++r) imgs.push_back(render_circle(0.5, r, 64));
    CHECK(radius_slope(frames_of(imgs, 64)) == doctest::Approx(1.0).epsilon(0.05));
    std::vector<std::vector<float>> same(5, render_circle(0.2, 9.0, 64));
    CHECK(radius_slope(frames_of(same, 64)) == 0.0);
    CHECK(recovered_radius(render_circle(1.0, 12.0, 64)) == doctest::Approx(12.0).epsilon(0.05));
}

TEST_CASE("PNG export") {
    png_uint_32 w = 0, h = 0;
    SUBCASE("gray round trip equals the quantized input") {
        std::vector<float> v(7 * 5);
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = static_cast<float>(i) / 34.0f;
        const auto px = decode(encode_png(v, 7, 5, PngMode::gray), PNG_FORMAT_GRAY, w, h);
        CHECK(w == 7);
        CHECK(h == 5);
        for (std::size_t i = 0; i < v.size(); ++i) CHECK(px[i] == std::lround(v[i] * 255.0));
    }
    SUBCASE("all-ones gray image is uniform 255") {
        const std::vector<float> v(16, 1.0f);
        for (auto b : decode(encode_png(v, 4, 4, PngMode::gray), PNG_FORMAT_GRAY, w, h)) CHECK(b == 255);
    }
    SUBCASE("all-zero heatmap is uniform white") {
        const std::vector<float> v(16, 0.0f);
        for (auto b : decode(encode_png(v, 4, 4, PngMode::diverging), PNG_FORMAT_RGB, w, h)) CHECK(b == 255);
    }
    SUBCASE("diverging colours") {
        const std::vector<float> v{-2.0f, 0.0f, 2.0f, 1.0f};
        const auto px = decode(encode_png(v, 4, 1, PngMode::diverging), PNG_FORMAT_RGB, w, h);
        CHECK((px[0] == 0 && px[1] == 0 && px[2] == 255));
        CHECK((px[6] == 255 && px[7] == 0 && px[8] == 0));
        CHECK((px[9] == 255 && px[10] == 128 && px[11] == 128));
    }
    SUBCASE("file export") {
        const auto path = std::filesystem::temp_directory_path() / "cfrep_test.png";
        export_png(path, std::vector<float>(9, 0.5f), 3, 3, PngMode::gray);
        CHECK(std::filesystem::file_size(path) > 8);
        std::filesystem::remove(path);
    }
    CHECK_THROWS_AS(encode_png(std::vector<float>(3, 0.0f), 2, 2, PngMode::gray), ShapeError);
}
