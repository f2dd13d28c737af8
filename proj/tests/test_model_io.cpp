#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

#include "cfrep/checkpoint.hpp"
#include "cfrep/config.hpp"
#include "cfrep/model.hpp"
#include "cfrep/synth.hpp"

using namespace cfrep;
namespace fs = std::filesystem;

namespace {

Architecture small_arch() {
    Architecture a;
    a.image_size = 32;
    a.channels = {4, 8};
    a.latent_dim = 3;
    return a;
}

Tensor circles(std::size_t n, std::size_t size) {
    std::vector<float> px;
    for (std::size_t i = 0; i < n; ++i) {
        const auto img = render_circle(0.1 * static_cast<double>(i % 10), 4.0 + static_cast<double>(i % 7), size);
        px.insert(px.end(), img.begin(), img.end());
    }
    return Tensor({n, 1, size, size}, px);
}

}  // namespace

TEST_CASE("architecture validation") {
    Architecture a;
    CHECK(a.bottleneck_side() == 4);
    CHECK(a.bottleneck_size() == 64 * 16);
    a.image_size = 60;
    CHECK_THROWS_AS(a.validate(), ConfigError);
    CHECK_THROWS_AS(ModelState(small_arch(), 3, 1), ConfigError);
}

TEST_CASE("encoder and decoder") {
    const ModelState m(small_arch(), 1, 5);
    const auto x = circles(4, 32);
    SUBCASE("identical images give identical latents") {
        const auto img = render_circle(0.3, 8.0, 32);
        std::vector<float> two(img);
        two.insert(two.end(), img.begin(), img.end());
        const auto z = m.encode(Tensor({2, 1, 32, 32}, two));
        for (std::size_t k = 0; k < 3; ++k) CHECK(z[k] == z[3 + k]);
    }
    SUBCASE("zero input and zero latent stay finite") {
        const auto z = m.encode(Tensor::full({1, 1, 32, 32}, 0.0f));
        CHECK_NOTHROW(z.check_finite("latent"));
        const auto img = m.decode(Tensor::full({1, 3}, 0.0f));
        CHECK(img.shape() == Shape{1, 1, 32, 32});
        for (auto v : img.values()) CHECK((v > 0.0f && v < 1.0f));
    }
    SUBCASE("decode is deterministic") {
        const auto z = m.encode(x);
        const auto a = m.decode(z), b = m.decode(z);
        CHECK(std::memcmp(a.data(), b.data(), a.numel() * sizeof(float)) == 0);
    }
    SUBCASE("graph-free inference matches the recorded graph") {
        Graph g;
        const auto z = encode(g, m.architecture(), m.params(), x);
        const auto z2 = m.encode(x);
        for (std::size_t i = 0; i < z.numel(); ++i) CHECK(z[i] == doctest::Approx(z2[i]).epsilon(1e-6));
    }
    SUBCASE("seeded initialization") {
        const ModelState same(small_arch(), 1, 5), other(small_arch(), 1, 6);
        const auto a = m.params().encoder_conv[0].weight.values();
        CHECK(std::equal(a.begin(), a.end(), same.params().encoder_conv[0].weight.values().begin()));
        CHECK_FALSE(std::equal(a.begin(), a.end(), other.params().encoder_conv[0].weight.values().begin()));
    }
}

TEST_CASE("unit projection") {
    ModelState m(small_arch(), 1, 5);
    auto p = m.params().projection.values();
    p[0] = 3;
    p[1] = 0;
    p[2] = 4;
    const auto u = m.unit_projection();
    CHECK(u[0] == doctest::Approx(0.6));
    CHECK(u[2] == doctest::Approx(0.8));
    const auto zp = m.project(Tensor({1, 3}, {1, 5, 1}));
    CHECK(zp[0] == doctest::Approx(1.4));
    m.normalize_projection();
    CHECK(m.params().projection[2] == doctest::Approx(0.8));
}

TEST_CASE("checkpoint round trip is bit-exact") {
    const ModelState m(small_arch(), 2, 9);
    const auto path = fs::temp_directory_path() / "cfrep_test_model.ckpt";
    save_checkpoint(path, m, "[train]\neta = 2\n");
    const auto back = load_checkpoint(path);
    CHECK(back.config_echo == "[train]\neta = 2\n");
    CHECK(back.model.architecture().channels == m.architecture().channels);
    const auto a = m.params().named(), b = back.model.params().named();
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].first == b[i].first);
        CHECK(a[i].second.shape() == b[i].second.shape());
        CHECK(std::memcmp(a[i].second.data(), b[i].second.data(), a[i].second.numel() * sizeof(float)) == 0);
    }
    SUBCASE("truncated file") {
        fs::resize_file(path, fs::file_size(path) - 8);
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
    SUBCASE("wrong magic") {
        std::fstream f(path, std::ios::in | std::ios::out | std::ios::binary);
        f.write("XXXXXXXX", 8);
        f.close();
        CHECK_THROWS_AS(load_checkpoint(path), DataError);
    }
    fs::remove(path);
}

TEST_CASE("configuration text") {
    const std::string text =
        "# circle run\n"
        "[data]\nkind = ellipses\nn = 500 ; inline comment\nseed = 3\n"
        "[train]\neta = 1.5\nconfounders = angle, area\nlatent_dim = 8\nssl = true\nchannels = 4,8\n"
        "lr_schedule = constant\n"
        "[viz]\nrange = explicit\nlo = 0.2\nhi = 0.9\n";
    const auto cfg = parse_config(text);
    CHECK(cfg.data.kind == DatasetKind::ellipses);
    CHECK(cfg.data.n == 500);
    CHECK(cfg.train.eta == 1.5);
    CHECK(cfg.train.confounders == std::vector<std::string>{"angle", "area"});
    CHECK(cfg.train.ssl);
    CHECK(cfg.train.channels == std::vector<std::size_t>{4, 8});
    CHECK(cfg.train.lr_schedule == LrSchedule::constant);
    CHECK(cfg.viz.range == RangePolicy::explicit_range);

    SUBCASE("echo parses back to the same configuration") {
        CHECK(echo_config(parse_config(echo_config(cfg))) == echo_config(cfg));
        RunConfig odd;
        odd.train.learning_rate = 0.1 + 0.2;
        CHECK(parse_config(echo_config(odd)).train.learning_rate == odd.train.learning_rate);
    }
    SUBCASE("overrides") {
        auto c = cfg;
        apply_override(c, "train.eta=0");
        CHECK(c.train.eta == 0.0);
        CHECK_THROWS_AS(apply_override(c, "eta=0"), ConfigError);
        CHECK_THROWS_AS(apply_override(c, "train.nope=1"), ConfigError);
    }
    SUBCASE("errors name the line") {
        try {
            parse_config("[train]\neta = abc\n", "x.cfg");
            FAIL("expected ConfigError");
        } catch (const ConfigError& e) {
            CHECK(std::string(e.what()).find("x.cfg:2") != std::string::npos);
        }
        CHECK_THROWS_AS(parse_config("[model]\n"), ConfigError);
        CHECK_THROWS_AS(parse_config("eta = 1\n"), ConfigError);
    }
    SUBCASE("validation") {
        RunConfig c;
        c.train.eta = -1;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = RunConfig{};
        c.train.confounders = {"a", "b"};
        c.train.latent_dim = 2;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = RunConfig{};
        c.train.batch_size = 8;
        CHECK_THROWS_AS(c.validate(), ConfigError);
        c = RunConfig{};
        c.train.epochs = 10;
        c.train.eta_warmup = 10;
        CHECK_THROWS_AS(c.validate(), ConfigError);
    }
}
