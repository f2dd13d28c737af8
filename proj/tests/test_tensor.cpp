#include <doctest.h>

#include <cmath>
#include <vector>

#include "cfrep/adam.hpp"
#include "cfrep/grad_check.hpp"
#include "cfrep/model.hpp"
#include "cfrep/ops.hpp"
#include "cfrep/rng.hpp"
#include "cfrep/tensor.hpp"

using namespace cfrep;

namespace {

Tensor64 random64(Shape shape, std::uint64_t seed, double scale = 1.0) {
    Rng rng(seed);
    std::vector<double> v(shape_numel(shape));
    for (auto& x : v) x = scale * rng.normal();
    return Tensor64(std::move(shape), std::move(v), true);
}

}  // namespace

TEST_CASE("conv2d with a scalar kernel scales the input") {
    Graph g;
    const auto x = Tensor::full({1, 1, 3, 3}, 1.0f);
    const auto k = Tensor::full({1, 1, 1, 1}, 2.0f);
    const auto y = ops::conv2d(g, x, k, Tensor{}, 1, 0);
    REQUIRE(y.shape() == Shape{1, 1, 3, 3});
    for (auto v : y.values()) CHECK(v == 2.0f);
}

TEST_CASE("conv2d of a zero input is zero") {
    Graph g;
    const auto x = Tensor::full({1, 1, 5, 5}, 0.0f);
    const auto k = Tensor({1, 1, 3, 3}, {1, -2, 3, 4, 5, 6, -7, 8, 9});
    const auto y = ops::conv2d(g, x, k, Tensor{}, 1, 1);
    for (auto v : y.values()) CHECK(v == 0.0f);
}

TEST_CASE("conv2d of a 3x3 ramp with a ones kernel sums to 45") {
    Graph g;
    const Tensor x({1, 1, 3, 3}, {1, 2, 3, 4, 5, 6, 7, 8, 9});
    const auto k = Tensor::full({1, 1, 3, 3}, 1.0f);
    const auto y = ops::conv2d(g, x, k, Tensor{}, 1, 0);
    REQUIRE(y.numel() == 1);
    CHECK(y.item() == doctest::Approx(45.0));
}

TEST_CASE("conv2d output extent follows the stride/padding formula") {
    Graph g;
    const auto x = Tensor::full({2, 3, 64, 64}, 0.5f);
    const auto k = Tensor::full({4, 3, 3, 3}, 0.1f);
    CHECK(ops::conv2d(g, x, k, Tensor{}, 2, 1).shape() == Shape{2, 4, 32, 32});
    const auto kt = Tensor::full({3, 5, 4, 4}, 0.1f);
    CHECK(ops::conv_transpose2d(g, x, kt, Tensor{}, 2, 1).shape() == Shape{2, 5, 128, 128});
}

TEST_CASE("conv2d rejects mismatched channels") {
    Graph g;
    const auto x = Tensor::full({1, 2, 4, 4}, 1.0f);
    const auto k = Tensor::full({1, 3, 3, 3}, 1.0f);
    CHECK_THROWS_AS(ops::conv2d(g, x, k, Tensor{}, 1, 0), ShapeError);
}

TEST_CASE("dense layer") {
    Graph g;
    SUBCASE("identity weight and zero bias keep the input") {
        const Tensor x({2, 2}, {1, 2, 3, 4});
        const Tensor w({2, 2}, {1, 0, 0, 1});
        const auto y = ops::dense(g, x, w, Tensor({2}, {0, 0}));
        for (std::size_t i = 0; i < 4; ++i) CHECK(y[i] == x[i]);
    }
    SUBCASE("zero weight leaves the bias in every row") {
        const Tensor x({3, 2}, {1, 2, 3, 4, 5, 6});
        const auto y = ops::dense(g, x, Tensor::full({2, 2}, 0.0f), Tensor({2}, {7, -1}));
        for (std::size_t r = 0; r < 3; ++r) {
            CHECK(y[2 * r] == 7.0f);
            CHECK(y[2 * r + 1] == -1.0f);
        }
    }
    SUBCASE("[[1,2]] x [[1],[1]] + [1] = [[4]]") {
        const auto y = ops::dense(g, Tensor({1, 2}, {1, 2}), Tensor({2, 1}, {1, 1}), Tensor({1}, {1}));
        REQUIRE(y.shape() == Shape{1, 1});
        CHECK(y.item() == 4.0f);
    }
}

TEST_CASE("backward of sum of squares is 2x") {
    Graph g;
    Tensor x({3}, {1, 2, 3}, true);
    const auto loss = ops::sum(g, ops::square(g, x));
    g.backward(loss);
    CHECK(x.grad()[0] == 2.0f);
    CHECK(x.grad()[1] == 4.0f);
    CHECK(x.grad()[2] == 6.0f);
}

TEST_CASE("backward of a constant loss gives zero gradients") {
    Graph g;
    Tensor x({3}, {1, 2, 3}, true);
    const auto loss = ops::add_scalar(g, ops::mul_scalar(g, ops::sum(g, x), 0.0f), 5.0f);
    g.backward(loss);
    for (auto v : x.grad()) CHECK(v == 0.0f);
}

TEST_CASE("gradient check of single ops") {
    const GradCheckOptions opts;
    SUBCASE("conv2d alone stays below 1e-4") {
        std::vector<Tensor64> in{random64({2, 2, 7, 7}, 1), random64({3, 2, 3, 3}, 2, 0.5), random64({3}, 3)};
        const auto rep = grad_check(
            [](Graph64& g, std::span<const Tensor64> p) {
                return ops::sum(g, ops::square(g, ops::conv2d(g, p[0], p[1], p[2], 2, 1)));
            },
            in, opts);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("transposed convolution") {
        std::vector<Tensor64> in{random64({1, 2, 4, 4}, 4), random64({2, 3, 4, 4}, 5, 0.5), random64({3}, 6)};
        const auto rep = grad_check(
            [](Graph64& g, std::span<const Tensor64> p) {
                return ops::sum(g, ops::square(g, ops::conv_transpose2d(g, p[0], p[1], p[2], 2, 1)));
            },
            in, opts);
        CHECK(rep.max_rel_error < 1e-4);
    }
    SUBCASE("windowed ZNCC") {
        std::vector<Tensor64> in{random64({1, 1, 18, 18}, 7), random64({1, 1, 18, 18}, 8)};
        const auto rep = grad_check(
            [](Graph64& g, std::span<const Tensor64> p) { return ops::windowed_zncc(g, p[0], p[1], 9, 1e-5); }, in,
            opts);
        CHECK(rep.max_rel_error < 1e-3);
    }
    SUBCASE("a kink within one step of the probe is resolved by a smaller step") {
        std::vector<Tensor64> in{Tensor64({2}, {4e-4, -0.3}, true)};
        const auto rep = grad_check(
            [](Graph64& g, std::span<const Tensor64> p) { return ops::sum(g, ops::leaky_relu(g, p[0], 0.2)); }, in,
            opts);
        CHECK(rep.refined_coords == 1);
        CHECK(rep.max_rel_error < 1e-9);
        CHECK(in[0][0] == 4e-4);
    }
    SUBCASE("a kink far closer than one step is still detected") {
        // Halving the step barely moves the central difference here; the
        // second difference gives the kink away.
        std::vector<Tensor64> in{Tensor64({1}, {5e-8}, true)};
        GradCheckOptions close = opts;
        close.min_step = 1e-9;
        const auto rep = grad_check(
            [](Graph64& g, std::span<const Tensor64> p) { return ops::sum(g, ops::leaky_relu(g, p[0], 0.2)); }, in,
            close);
        CHECK(rep.refined_coords == 1);
        CHECK(rep.max_rel_error < 1e-6);
    }
    SUBCASE("identity network reports zero") {
        std::vector<Tensor64> in{random64({5}, 9)};
        const auto rep =
            grad_check([](Graph64& g, std::span<const Tensor64> p) { return ops::sum(g, p[0]); }, in, opts);
        CHECK(rep.max_rel_error < 1e-9);
    }
}

TEST_CASE("gradient check of the full encoder + decoder + projection composite") {
    Architecture arch;
    arch.image_size = 16;
    arch.channels = {2, 4};
    arch.latent_dim = 2;
    const ModelState model(arch, 1, 3);
    const auto params = model.to_double();
    auto named = params.named();
    std::vector<Tensor64> inputs;
    for (auto& [name, t] : named) inputs.push_back(cast_tensor<double>(t, true));
    Rng rng(11);
    std::vector<double> img(4 * 16 * 16);
    for (auto& v : img) v = rng.uniform();
    const Tensor64 images({4, 1, 16, 16}, img);

    const auto net = [&](Graph64& g, std::span<const Tensor64> p) {
        Parameters<double> q = params;
        std::size_t i = 0;
        // Rebind every parameter slot to the probed inputs.
        for (auto& l : q.encoder_conv) {
            l.weight = p[i++];
            l.bias = p[i++];
        }
        q.encoder_fc.weight = p[i++];
        q.encoder_fc.bias = p[i++];
        q.decoder_fc.weight = p[i++];
        q.decoder_fc.bias = p[i++];
        for (auto& l : q.decoder_deconv) {
            l.weight = p[i++];
            l.bias = p[i++];
        }
        q.projection = p[i++];
        const auto latent = encode(g, arch, q, images);
        const auto rec = decode(g, arch, q, latent);
        const auto zp = project_raw(g, q, latent);
        // Squared error keeps the loss smooth for the finite differences.
        const auto mse = ops::mean(g, ops::square(g, ops::sub(g, rec, images)));
        return ops::add(g, mse, ops::mean(g, ops::square(g, zp)));
    };
    REQUIRE(named.size() == 2 * arch.channels.size() + 4 + 2 * arch.channels.size() + 1);
    GradCheckOptions opts;
    opts.max_coords_per_input = 24;
    const auto rep = grad_check(net, inputs, opts);
    CHECK(rep.coords_checked > 100);
    INFO("refined ", rep.refined_coords, " worst input ", rep.worst_input, " index ", rep.worst_index, " ad ", rep.worst_autodiff, " fd ",
         rep.worst_numeric);
    CHECK(rep.max_rel_error < 1e-3);
}

TEST_CASE("Adam") {
    SUBCASE("zero gradient leaves parameters unchanged") {
        std::vector<Tensor> p{Tensor({3}, {1, -2, 3}, true)};
        p[0].zero_grad();
        AdamState st;
        adam_step(p, st);
        CHECK(p[0][0] == 1.0f);
        CHECK(p[0][1] == -2.0f);
        CHECK(p[0][2] == 3.0f);
    }
    SUBCASE("constant gradient moves against its sign") {
        std::vector<Tensor> p{Tensor({1}, {0.0f}, true)};
        AdamState st;
        for (int i = 0; i < 5; ++i) {
            p[0].grad_buffer()[0] = 0.7f;
            adam_step(p, st);
        }
        CHECK(p[0][0] < 0.0f);
    }
    SUBCASE("1-D quadratic converges within 2000 steps at lr 1e-2") {
        const float target = 1.5f;
        std::vector<Tensor> p{Tensor({1}, {-2.0f}, true)};
        AdamState st;
        st.options.learning_rate = 1e-2;
        for (int i = 0; i < 2000; ++i) {
            Graph g;
            const auto loss = ops::square(g, ops::add_scalar(g, p[0], -target));
            g.backward(loss);
            adam_step(p, st);
        }
        CHECK(std::abs(p[0][0] - target) < 1e-3);
    }
}

TEST_CASE("tensors report non-finite values") {
    Tensor t({2}, {1.0f, std::nanf("")});
    CHECK_THROWS_AS(t.check_finite("t"), NumericFault);
}
