// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "oopk/autodiff.hpp"
#include "oopk/finite_diff.hpp"
#include "oopk/optim.hpp"
#include "test_util.hpp"

using namespace oopk;
namespace tu = testutil;

TEST_CASE("matmul basics") {
    Tensor i2 = Tensor::identity(2);
    Tensor col({2, 1}, {2, 3});
    Tensor out = matmul_value(i2, col);
    CHECK(out.data == std::vector<double>{2, 3});

    Tensor a({2, 2}, {1, 2, 3, 4});
    Tensor b({2, 1}, {0, 1});
    Tensor c = matmul_value(a, b);
    CHECK(c.data == std::vector<double>{2, 4});

    Tensor z({2, 3});
    Tensor any({3, 1}, {5, -1, 7});
    Tensor zz = matmul_value(z, any);
    CHECK(zz.data == std::vector<double>{0, 0});

    CHECK_THROWS_AS(matmul_value(a, Tensor({3, 1})), DimensionError);
}

TEST_CASE("softmax values and stability") {
    auto sm = [](std::vector<double> v) {
        const int n = static_cast<int>(v.size());
        return ad::softmax(ad::constant(Tensor({n}, std::move(v))))->value;
    };
    Tensor s0 = sm({0, 0});
    CHECK(s0.data[0] == doctest::Approx(0.5).epsilon(1e-12));

    Tensor s1 = sm({1000, 0});
    CHECK(std::isfinite(s1.data[0]));
    CHECK(s1.data[0] == doctest::Approx(1.0));
    CHECK(s1.data[1] == doctest::Approx(0.0));

    Tensor s2 = sm({std::log(1.0), std::log(2.0), std::log(3.0)});
    CHECK(s2.data[0] == doctest::Approx(1.0 / 6).epsilon(1e-12));
    CHECK(s2.data[1] == doctest::Approx(2.0 / 6).epsilon(1e-12));
    CHECK(s2.data[2] == doctest::Approx(3.0 / 6).epsilon(1e-12));
}

TEST_CASE("softmax outputs sum to one and stay positive") {
    Rng rng(7);
    for (int t = 0; t < 50; ++t) {
        Tensor logits = tu::random_tensor({8}, rng, -30, 30);
        Tensor p = ad::softmax(ad::constant(logits))->value;
        double s = 0.0;
        for (double v : p.data) {
            CHECK(v > 0.0);
            s += v;
        }
        CHECK(std::abs(s - 1.0) < 1e-12);
    }
}

TEST_CASE("conv2d identity and zero kernels") {
    Rng rng(3);
    Tensor x = tu::random_tensor({2, 5, 6}, rng);
    Tensor w1({2, 2, 1, 1});
    w1.data = {1, 0, 0, 1};  // per-channel identity
    Tensor y = ad::conv2d_value(x, w1, nullptr, 1, 0);
    CHECK(tu::max_abs_diff(x, y) == 0.0);

    Tensor wz({3, 2, 3, 3});
    Tensor yz = ad::conv2d_value(x, wz, nullptr, 1, 1);
    CHECK(yz.min_value() == 0.0);
    CHECK(yz.max_value() == 0.0);
}

TEST_CASE("conv2d box kernel on constant image matches direct summation") {
    Tensor x = Tensor::full({1, 6, 6}, 2.5);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0);
    Tensor y = ad::conv2d_value(x, w, nullptr, 1, 0);
    CHECK(y.dim(1) == 4);
    for (double v : y.data) CHECK(v == doctest::Approx(2.5 * 9).epsilon(1e-14));

    // Direct summation oracle on a random image.
    Rng rng(11);
    Tensor xr = tu::random_tensor({2, 5, 5}, rng);
    Tensor wr = tu::random_tensor({3, 2, 3, 3}, rng);
    Tensor got = ad::conv2d_value(xr, wr, nullptr, 1, 1);
    for (int f = 0; f < 3; ++f)
        for (int oi = 0; oi < 5; ++oi)
            for (int oj = 0; oj < 5; ++oj) {
                double acc = 0.0;
                for (int c = 0; c < 2; ++c)
                    for (int u = 0; u < 3; ++u)
                        for (int v = 0; v < 3; ++v) {
                            const int yy = oi + u - 1, xx = oj + v - 1;
                            if (yy < 0 || yy >= 5 || xx < 0 || xx >= 5) continue;
                            acc += xr.at(c, yy, xx) * wr.data[((static_cast<std::size_t>(f) * 2 + c) * 3 + u) * 3 + v];
                        }
                CHECK(got.at(f, oi, oj) == doctest::Approx(acc).epsilon(1e-12));
            }

    CHECK_THROWS_AS(ad::conv2d_value(Tensor({1, 5, 5}), Tensor({1, 1, 2, 2}), nullptr, 2, 0),
                    ConfigError);
}

TEST_CASE("resize basics") {
    Rng rng(5);
    Tensor x = tu::random_tensor({2, 4, 4}, rng);
    CHECK(tu::max_abs_diff(resize(x, 4, 4, ResizeMode::Nearest), x) == 0.0);
    CHECK(tu::max_abs_diff(resize(x, 4, 4, ResizeMode::Bilinear), x) == 0.0);

    Tensor one = Tensor::full({1, 1, 1}, 0.7);
    for (auto mode : {ResizeMode::Nearest, ResizeMode::Bilinear}) {
        Tensor up = resize(one, 4, 4, mode);
        for (double v : up.data) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
    }

    Tensor cols({1, 2, 2}, {0, 1, 0, 1});
    Tensor up = resize(cols, 4, 4, ResizeMode::Nearest);
    for (int i = 0; i < 4; ++i) {
        CHECK(up.at(0, i, 0) == 0.0);
        CHECK(up.at(0, i, 1) == 0.0);
        CHECK(up.at(0, i, 2) == 1.0);
        CHECK(up.at(0, i, 3) == 1.0);
    }
}

TEST_CASE("nearest upscale then integer-stride subsample is the identity") {
    Rng rng(17);
    Tensor x = tu::random_tensor({1, 5, 7}, rng);
    for (int k : {2, 3}) {
        Tensor up = resize(x, 5 * k, 7 * k, ResizeMode::Nearest);
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 7; ++j) CHECK(up.at(0, i * k, j * k) == x.at(0, i, j));
    }
}

TEST_CASE("backward basics") {
    // loss = sum(x) -> grad all ones
    auto x = ad::leaf(Tensor({2, 3}, {1, 2, 3, 4, 5, 6}));
    ad::backward(ad::sum(x));
    for (double g : x->value.grad) CHECK(g == 1.0);

    // loss = sum(x^2) at x=[3] -> grad [6]
    auto x2 = ad::leaf(Tensor({1}, {3.0}));
    ad::backward(ad::sum(ad::mul(x2, x2)));
    CHECK(x2->value.grad[0] == doctest::Approx(6.0).epsilon(1e-14));

    // frozen leaf: grad slot stays absent
    auto frozen = ad::leaf(Tensor({2}, {1, 2}), false);
    auto live = ad::leaf(Tensor({2}, {3, 4}));
    ad::backward(ad::sum(ad::mul(frozen, live)));
    CHECK(frozen->value.grad.empty());
    CHECK(live->value.grad.size() == 2);

    CHECK_THROWS_AS(ad::backward(ad::leaf(Tensor({2}, {1, 2}))), UsageError);
}

TEST_CASE("repeated backward accumulates") {
    auto x = ad::leaf(Tensor({1}, {3.0}));
    auto loss = ad::sum(ad::mul(x, x));
    ad::backward(loss);
    ad::backward(loss);
    CHECK(x->value.grad[0] == doctest::Approx(12.0).epsilon(1e-14));
}

TEST_CASE("finite_diff_grad oracle on closed forms") {
    auto sum_sq = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v * v;
        return s;
    };
    Tensor x({1}, {3.0});
    Tensor g = finite_diff_grad(sum_sq, x, 1e-5);
    CHECK(std::abs(g.data[0] - 6.0) < 1e-6);

    auto constant_f = [](const Tensor&) { return 42.0; };
    Tensor gz = finite_diff_grad(constant_f, Tensor({4}, {1, 2, 3, 4}), 1e-5);
    for (double v : gz.data) CHECK(v == 0.0);

    auto sum_f = [](const Tensor& t) {
        double s = 0.0;
        for (double v : t.data) s += v;
        return s;
    };
    Tensor go = finite_diff_grad(sum_f, Tensor({3}, {1, 2, 3}), 1e-3);
    for (double v : go.data) CHECK(std::abs(v - 1.0) < 1e-9);
}

namespace {

// Generic gradient check: builds a scalar loss from one leaf via `build`.
void check_gradients(const Tensor& x0,
                     const std::function<ad::Var(const ad::Var&)>& build,
                     double tol = 1e-4) {
    auto x = ad::leaf(x0);
    ad::backward(build(x));
    auto f = [&](const Tensor& t) { return build(ad::constant(t))->value.data[0]; };
    Tensor fd = finite_diff_grad(f, x0, 1e-5);
    CHECK(tu::max_rel_error(x->value.grad, fd.data, 1e-4) < tol);
}

}  // namespace

TEST_CASE("reverse-mode gradients match finite differences across ops") {
    Rng rng(23);
    // matmul + mul + mean
    {
        Tensor x0 = tu::random_tensor({3, 4}, rng);
        Tensor other = tu::random_tensor({4, 2}, rng);
        check_gradients(x0, [&](const ad::Var& x) {
            auto y = ad::matmul(x, ad::constant(other));
            return ad::mean(ad::mul(y, y));
        });
    }
    // transpose route
    {
        Tensor x0 = tu::random_tensor({3, 2}, rng);
        check_gradients(x0, [&](const ad::Var& x) {
            auto g = ad::matmul(ad::transpose(x), x);
            return ad::sum(ad::mul(g, g));
        });
    }
    // relu + softmax + log
    {
        Tensor x0 = tu::random_tensor({6}, rng);
        check_gradients(x0, [&](const ad::Var& x) {
            auto p = ad::softmax(ad::relu(x));
            return ad::scale(ad::sum(ad::log_eps(p, 1e-12)), -1.0);
        });
    }
    // conv2d w.r.t. input and weight
    {
        Tensor x0 = tu::random_tensor({2, 5, 5}, rng);
        Tensor w0 = tu::random_tensor({3, 2, 3, 3}, rng, -0.5, 0.5);
        Tensor b0 = tu::random_tensor({3}, rng);
        check_gradients(x0, [&](const ad::Var& x) {
            auto y = ad::conv2d(x, ad::constant(w0), ad::constant(b0), 1, 1);
            return ad::mean(ad::mul(y, y));
        });
        check_gradients(w0, [&](const ad::Var& w) {
            auto y = ad::conv2d(ad::constant(x0), w, ad::constant(b0), 2, 1);
            return ad::mean(ad::mul(y, y));
        });
        check_gradients(b0, [&](const ad::Var& b) {
            auto y = ad::conv2d(ad::constant(x0), ad::constant(w0), b, 1, 1);
            return ad::mean(ad::mul(y, y));
        });
    }
    // conv_transpose2d w.r.t. input and weight
    {
        Tensor x0 = tu::random_tensor({2, 3, 4}, rng);
        Tensor w0 = tu::random_tensor({2, 3, 3, 3}, rng, -0.5, 0.5);
        Tensor b0 = tu::random_tensor({3}, rng);
        check_gradients(x0, [&](const ad::Var& x) {
            auto y = ad::conv_transpose2d(x, ad::constant(w0), ad::constant(b0), 2, 1, 1);
            return ad::mean(ad::mul(y, y));
        });
        check_gradients(w0, [&](const ad::Var& w) {
            auto y = ad::conv_transpose2d(ad::constant(x0), w, ad::constant(b0), 2, 1, 1);
            return ad::mean(ad::mul(y, y));
        });
    }
    // softmax_channels
    {
        Tensor x0 = tu::random_tensor({3, 2, 2}, rng);
        Tensor t = tu::random_tensor({3, 2, 2}, rng, 0.0, 1.0);
        check_gradients(x0, [&](const ad::Var& x) {
            auto p = ad::softmax_channels(x);
            return ad::scale(ad::sum(ad::mul(ad::constant(t), ad::log_eps(p, 1e-12))), -1.0);
        });
    }
}

TEST_CASE("adam step behavior") {
    AdamConfig cfg;
    cfg.lr = 0.1;

    SUBCASE("zero gradient leaves the parameter unchanged") {
        Parameter p("p", Tensor({2}, {1.0, -2.0}), true);
        AdamState st(p.value().shape, cfg);
        p.value().ensure_grad();
        adam_step(p, st);
        CHECK(st.t == 1);
        CHECK(p.value().data == std::vector<double>{1.0, -2.0});
    }

    SUBCASE("first step moves by about -lr * sign(g)") {
        Parameter p("p", Tensor({1}, {0.5}), true);
        AdamState st(p.value().shape, cfg);
        p.value().ensure_grad();
        p.value().grad[0] = 3.0;
        adam_step(p, st);
        // mhat = g, vhat = g^2 -> step = lr * g/(|g| + eps)
        CHECK(p.value().data[0] == doctest::Approx(0.5 - 0.1).epsilon(1e-6));
        CHECK(p.value().grad[0] == 0.0);  // cleared
    }

    SUBCASE("two identical steps match the scalar recurrence") {
        const double g = 0.7;
        Parameter p("p", Tensor({1}, {0.0}), true);
        AdamState st(p.value().shape, cfg);
        double m = 0, v = 0, x = 0;
        for (int t = 1; t <= 2; ++t) {
            p.value().ensure_grad();
            p.value().grad[0] = g;
            adam_step(p, st);
            m = cfg.beta1 * m + (1 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
            const double mhat = m / (1 - std::pow(cfg.beta1, t));
            const double vhat = v / (1 - std::pow(cfg.beta2, t));
            x -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
        CHECK(p.value().data[0] == doctest::Approx(x).epsilon(1e-15));
    }

    SUBCASE("non-trainable parameter rejects steps") {
        Parameter p("p", Tensor({1}, {1.0}), false);
        AdamState st(p.value().shape, cfg);
        CHECK_THROWS_AS(adam_step(p, st), UsageError);
    }
}
