// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oopk/synth.hpp"
#include "oopk/toy.hpp"
#include "test_util.hpp"

using namespace oopk;
namespace tu = testutil;

namespace {

ToyConfig small_config() {
    ToyConfig cfg;
    cfg.widths = {4, 6, 8};
    cfg.epochs = 5;
    return cfg;
}

std::vector<Tensor> toy_dataset(int n, int h, int w, std::uint64_t seed) {
    std::vector<Tensor> out;
    for (int i = 0; i < n; ++i) out.push_back(gen_scene(seed + i, h, w, 4).image);
    return out;
}

}  // namespace

TEST_CASE("conv2d_modal matches autodiff conv in inner mode") {
    Rng rng(3);
    Tensor x = tu::random_tensor({2, 7, 7}, rng);
    Tensor w = tu::random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor b = tu::random_tensor({3}, rng);
    Tensor inner = conv2d_modal(x, w, &b, 2, 1, ActivationMode::Inner);
    Tensor ref = ad::conv2d_value(x, w, &b, 2, 1);
    CHECK(tu::max_abs_diff(inner, ref) < 1e-12);
}

TEST_CASE("modal factorization: inner = magnitude * angle") {
    Rng rng(5);
    Tensor x = tu::random_tensor({2, 8, 8}, rng, 0.05, 1.0);  // nonzero patches
    Tensor w = tu::random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
    Tensor inner = conv2d_modal(x, w, nullptr, 1, 1, ActivationMode::Inner);
    Tensor mag = conv2d_modal(x, w, nullptr, 1, 1, ActivationMode::Magnitude);
    Tensor ang = conv2d_modal(x, w, nullptr, 1, 1, ActivationMode::Angle);
    for (std::size_t i = 0; i < inner.data.size(); ++i)
        CHECK(std::abs(inner.data[i] - mag.data[i] * ang.data[i]) < 1e-9);
}

TEST_CASE("angle output lies in [-1, 1] and guards zero patches") {
    Rng rng(7);
    Tensor w = tu::random_tensor({2, 1, 3, 3}, rng, -0.5, 0.5);

    Tensor x = tu::random_tensor({1, 6, 6}, rng);
    Tensor ang = conv2d_modal(x, w, nullptr, 1, 1, ActivationMode::Angle);
    for (double v : ang.data) {
        CHECK(v >= -1.0 - 1e-12);
        CHECK(v <= 1.0 + 1e-12);
    }

    Tensor zero = Tensor::zeros({1, 6, 6});
    Tensor angz = conv2d_modal(zero, w, nullptr, 1, 1, ActivationMode::Angle);
    for (double v : angz.data) {
        CHECK(std::isfinite(v));
        CHECK(v == 0.0);
    }
}

TEST_CASE("autoencoder shape contract and modal inner equivalence") {
    ToyConfig cfg = small_config();
    ToyAutoencoder model = ToyAutoencoder::create(cfg, Rng(11));
    Rng rng(12);
    Tensor x = tu::random_tensor({3, 16, 24}, rng, 0, 1);

    Tensor via_forward = model.forward(ad::constant(x))->value;
    CHECK(via_forward.shape == x.shape);

    Tensor via_modal = model.reconstruct(x, ActivationMode::Inner);
    CHECK(tu::max_abs_diff(via_forward, via_modal) < 1e-9);
}

TEST_CASE("reconstruct never mutates weights") {
    ToyAutoencoder model = ToyAutoencoder::create(small_config(), Rng(13));
    Rng rng(14);
    Tensor x = tu::random_tensor({3, 16, 16}, rng, 0, 1);
    std::vector<std::vector<double>> before;
    for (auto* p : model.parameters()) before.push_back(p->value().data);
    model.reconstruct(x, ActivationMode::Magnitude);
    model.reconstruct(x, ActivationMode::Angle);
    std::size_t i = 0;
    for (auto* p : model.parameters()) CHECK(p->value().data == before[i++]);
}

TEST_CASE("training on a constant-zero dataset converges fast") {
    ToyConfig cfg = small_config();
    cfg.epochs = 15;
    std::vector<Tensor> zeros(4, Tensor::zeros({3, 16, 16}));
    ToyTrainResult res = train_autoencoder(zeros, cfg, 1);
    CHECK(res.loss_curve.size() == 15u);
    CHECK(res.loss_curve.back() < 1e-3);
}

TEST_CASE("training loss trends down and is reproducible") {
    ToyConfig cfg = small_config();
    cfg.epochs = 12;
    auto data = toy_dataset(4, 16, 16, 100);

    ToyTrainResult r1 = train_autoencoder(data, cfg, 7);
    ToyTrainResult r2 = train_autoencoder(data, cfg, 7);
    CHECK(r1.loss_curve == r2.loss_curve);

    // Window-5 smoothed curve is non-increasing.
    auto smooth = [&](std::size_t i) {
        double s = 0.0;
        for (std::size_t j = i; j < i + 5; ++j) s += r1.loss_curve[j];
        return s / 5.0;
    };
    for (std::size_t i = 0; i + 6 <= r1.loss_curve.size(); ++i)
        CHECK(smooth(i + 1) <= smooth(i) + 1e-9);

    CHECK_THROWS_AS(train_autoencoder({}, cfg, 7), UsageError);
}

TEST_CASE("compare_modes returns a deterministic triple with inner best") {
    ToyConfig cfg = small_config();
    cfg.epochs = 20;
    auto data = toy_dataset(4, 16, 16, 200);
    auto heldout = toy_dataset(2, 16, 16, 300);
    ToyTrainResult res = train_autoencoder(data, cfg, 9);

    ModeComparison c1 = compare_modes(res.model, heldout);
    ModeComparison c2 = compare_modes(res.model, heldout);
    CHECK(c1.mse_inner == c2.mse_inner);
    CHECK(c1.mse_magnitude == c2.mse_magnitude);
    CHECK(c1.mse_angle == c2.mse_angle);

    CHECK(c1.mse_inner >= 0.0);
    CHECK(c1.mse_inner <= c1.mse_angle + 1e-12);
}

TEST_CASE("mse_value closed forms") {
    Tensor a({2, 2}, {1, 2, 3, 4});
    CHECK(mse_value(a, a) == 0.0);
    Tensor b({2, 2}, {2, 2, 3, 4});
    CHECK(mse_value(a, b) == doctest::Approx(0.25).epsilon(1e-15));
    CHECK_THROWS_AS(mse_value(a, Tensor({2, 3})), DimensionError);
}
