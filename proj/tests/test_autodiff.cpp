#include <cmath>

#include "deepcq/autodiff/gradcheck.hpp"
#include "deepcq/autodiff/layers.hpp"
#include "deepcq/autodiff/optim.hpp"
#include "deepcq/error.hpp"
#include "doctest.h"
#include "support.hpp"

using namespace deepcq;
using namespace deepcq::ad;

namespace {

Tensor<double> random_tensor(Shape s, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(s));
    Rng rng(seed);
    for (auto& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

Var<double> param(Shape s, std::uint64_t seed) { return make_var(random_tensor(std::move(s), seed), true); }

// Direct 7-nested-loop cross-correlation.
std::vector<double> conv_reference(const Tensor<double>& x, const Tensor<double>& w, const Tensor<double>& b,
                                   std::size_t stride, std::size_t pad) {
    const auto N = x.dim(0), C = x.dim(1), D = x.dim(2), H = x.dim(3), W = x.dim(4);
    const auto K = w.dim(0), kd = w.dim(2), kh = w.dim(3), kw = w.dim(4);
    const auto od = (D + 2 * pad - kd) / stride + 1, oh = (H + 2 * pad - kh) / stride + 1,
               ow = (W + 2 * pad - kw) / stride + 1;
    std::vector<double> out;
    for (std::size_t n = 0; n < N; ++n)
        for (std::size_t k = 0; k < K; ++k)
            for (std::size_t z = 0; z < od; ++z)
                for (std::size_t y = 0; y < oh; ++y)
                    for (std::size_t xx = 0; xx < ow; ++xx) {
                        double acc = b.data[k];
                        for (std::size_t c = 0; c < C; ++c)
                            for (std::size_t a = 0; a < kd; ++a)
                                for (std::size_t bb = 0; bb < kh; ++bb)
                                    for (std::size_t e = 0; e < kw; ++e) {
                                        const long iz = static_cast<long>(z * stride + a) - static_cast<long>(pad);
                                        const long iy = static_cast<long>(y * stride + bb) - static_cast<long>(pad);
                                        const long ix = static_cast<long>(xx * stride + e) - static_cast<long>(pad);
                                        if (iz < 0 || iy < 0 || ix < 0 || iz >= static_cast<long>(D) ||
                                            iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                                            continue;
                                        acc += w.data[(((k * C + c) * kd + a) * kh + bb) * kw + e] *
                                               x.data[(((n * C + c) * D + iz) * H + iy) * W + ix];
                                    }
                        out.push_back(acc);
                    }
    return out;
}

}  // namespace

TEST_SUITE("autodiff") {
    TEST_CASE("elementwise and structural ops") {
        Graph<double> g;
        auto r = g.relu(g.constant(Tensor<double>({3}, {-1, 0, 2})));
        CHECK(r->value.data == std::vector<double>{0, 0, 2});

        auto s = g.softmax(g.constant(Tensor<double>({1, 4})));
        for (double v : s->value.data) CHECK(v == doctest::Approx(0.25).epsilon(1e-15));

        auto a = g.constant(random_tensor({2, 64}, 1));
        auto b = g.constant(random_tensor({2, 256}, 2));
        auto c = g.concat({a, b});
        REQUIRE(c->shape() == Shape{2, 320});
        CHECK(c->value.data[0] == a->value.data[0]);
        CHECK(c->value.data[64] == b->value.data[0]);
        CHECK(c->value.data[320] == a->value.data[64]);
        CHECK(c->value.data[319] == b->value.data[255]);

        auto p = g.global_avg_pool(g.constant(Tensor<double>({1, 2, 2, 2, 2}, {1, 1, 1, 1, 1, 1, 1, 1, 0, 0, 0, 0, 0, 0, 0, 8})));
        CHECK(p->value.data == std::vector<double>{1.0, 1.0});

        auto sum = g.sum_last(g.constant(Tensor<double>({2, 3}, {1, 2, 3, 4, 5, 6})));
        CHECK(sum->value.data == std::vector<double>{6, 15});
        const std::size_t idx[] = {1, 1, 0};
        auto gathered = g.gather_rows(g.constant(Tensor<double>({2, 2}, {1, 2, 3, 4})), idx);
        CHECK(gathered->value.data == std::vector<double>{3, 4, 3, 4, 1, 2});

        CHECK_THROWS_AS(g.add(a, b), ShapeError);
        CHECK_THROWS_AS(g.concat({a, g.constant(Tensor<double>({3, 4}))}), ShapeError);
        CHECK(g.tape_size() == 0);  // nothing required gradients
    }

    TEST_CASE("softmax rows are distributions") {
        Graph<double> g;
        auto s = g.softmax(g.constant(random_tensor({50, 7}, 3, -30, 30)));
        for (std::size_t r = 0; r < 50; ++r) {
            double acc = 0;
            for (std::size_t k = 0; k < 7; ++k) {
                CHECK(s->value.data[r * 7 + k] >= 0.0);
                acc += s->value.data[r * 7 + k];
            }
            CHECK(std::fabs(acc - 1.0) < 1e-12);
        }
    }

    TEST_CASE("conv3d forward") {
        Graph<double> g;
        auto x = random_tensor({2, 3, 5, 4, 6}, 4);
        auto w = random_tensor({4, 3, 3, 3, 3}, 5);
        auto b = random_tensor({4}, 6);
        for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}, {1, 0}, {2, 0}}) {
            auto y = g.conv3d(g.constant(x), g.constant(w), g.constant(b), stride, pad);
            const auto ref = conv_reference(x, w, b, stride, pad);
            REQUIRE(y->value.data.size() == ref.size());
            CHECK(y->shape()[2] == (5 + 2 * pad - 3) / stride + 1);
            for (std::size_t i = 0; i < ref.size(); ++i) CHECK(y->value.data[i] == doctest::Approx(ref[i]).epsilon(1e-12));
        }
        Graph<double> h;
        auto src = random_tensor({1, 1, 3, 3, 3}, 8);
        auto id = h.conv3d(h.constant(src), h.constant(Tensor<double>({1, 1, 1, 1, 1}, {1.0})),
                           h.constant(Tensor<double>({1})), 1, 0);
        CHECK(id->value.data == src.data);
        auto zero = h.conv3d(h.constant(Tensor<double>({1, 2, 3, 3, 3})), h.constant(random_tensor({3, 2, 3, 3, 3}, 9)),
                             h.constant(Tensor<double>({3}, {0.5, -1, 2})), 1, 1);
        for (std::size_t i = 0; i < zero->value.numel(); ++i) CHECK(zero->value.data[i] == zero->value.data[(i / 27) * 27]);
        CHECK(zero->value.data[0] == 0.5);
        CHECK(zero->value.data[27] == -1);
        CHECK_THROWS_AS(h.conv3d(h.constant(src), h.constant(random_tensor({1, 2, 3, 3, 3}, 1)), nullptr, 1, 0), ShapeError);
    }

    TEST_CASE("losses") {
        Graph<double> g;
        auto p = g.constant(Tensor<double>({2}, {0, 0}));
        CHECK(g.mse_loss(p, Tensor<double>({2}, {2, 0}))->value.data[0] == 2.0);
        CHECK(g.mse_loss(p, Tensor<double>({2}, {0, 0}))->value.data[0] == 0.0);
        CHECK(g.rmse_loss(p, Tensor<double>({2}, {0, 0}))->value.data[0] == std::sqrt(1e-12));
        CHECK(g.mse_loss(p, Tensor<double>({2}, {2, 4}), {1.0, 0.0})->value.data[0] == 4.0);
        CHECK_THROWS_AS(g.mse_loss(p, Tensor<double>({3})), ShapeError);
    }

    TEST_CASE("gradient checks") {
        SUBCASE("linear") {
            auto x = param({4, 5}, 10), w = param({3, 5}, 11), b = param({3}, 12);
            const auto target = random_tensor({4, 3}, 13);
            auto r = grad_check([&](Graph<double>& g) { return g.mse_loss(g.linear(x, w, b), target); },
                                {{"x", x}, {"w", w}, {"b", b}});
            CHECK(r.max_rel_error < 1e-6);
        }
        SUBCASE("conv3d") {
            auto x = param({1, 2, 4, 4, 4}, 20), w = param({2, 2, 3, 3, 3}, 21), b = param({2}, 22);
            for (std::size_t stride : {1, 2}) {
                Graph<double> probe;
                auto shape = probe.conv3d(x, w, b, stride, 1)->shape();
                const auto target = random_tensor(shape, 23);
                auto r = grad_check([&](Graph<double>& g) { return g.mse_loss(g.conv3d(x, w, b, stride, 1), target); },
                                    {{"x", x}, {"w", w}, {"b", b}});
                CHECK(r.max_rel_error < 1e-4);
            }
        }
        SUBCASE("activations, pooling and combinators") {
            auto a = param({3, 4}, 30), b = param({3, 4}, 31), c = param({3, 2}, 32);
            auto v = param({2, 3, 2, 2, 2}, 33);
            const std::size_t idx[] = {2, 0, 0, 1};
            const auto t1 = random_tensor({4, 6}, 34);
            const auto t2 = random_tensor({3, 1}, 35);
            const auto t3 = random_tensor({2, 3}, 36);
            auto r1 = grad_check(
                [&](Graph<double>& g) {
                    auto h = g.concat({g.relu(g.add(a, b)), g.softmax(c)});
                    return g.mse_loss(g.gather_rows(h, idx), t1);
                },
                {{"a", a}, {"b", b}, {"c", c}});
            CHECK(r1.max_rel_error < 1e-6);
            auto r2 = grad_check([&](Graph<double>& g) { return g.rmse_loss(g.sum_last(g.mul(a, b)), t2); },
                                 {{"a", a}, {"b", b}});
            CHECK(r2.max_rel_error < 1e-6);
            auto r3 = grad_check([&](Graph<double>& g) { return g.mse_loss(g.global_avg_pool(v), t3); }, {{"v", v}});
            CHECK(r3.max_rel_error < 1e-6);
        }
    }

    TEST_CASE("inference mode records nothing") {
        auto w = param({3, 5}, 1), b = param({3}, 2);
        Graph<double> g(false);
        auto y = g.linear(g.constant(random_tensor({2, 5}, 3)), w, b);
        CHECK(g.tape_size() == 0);
        CHECK_FALSE(y->requires_grad);
        Graph<double> t;
        t.linear(t.constant(random_tensor({2, 5}, 3)), w, b);
        CHECK(t.tape_size() == 1);
    }

    TEST_CASE("adam") {
        ParameterStore<double> store;
        auto p = store.add("p", {1});
        CHECK_THROWS_AS(store.add("p", {1}), ArgumentError);
        CHECK_THROWS_AS(store.get("q"), IntegrityError);
        p->value.data[0] = 1.0;
        Adam<double> opt;
        p->grad.assign(1, 0.0);
        opt.step(store, 0.01);
        CHECK(p->value.data[0] == 1.0);

        p->grad.assign(1, 1.0);
        Adam<double> fresh;
        fresh.step(store, 0.01);
        // m_hat = 1, v_hat = 1 -> step = lr / (1 + eps)
        CHECK(std::fabs((1.0 - p->value.data[0]) - 0.01) < 1e-6);
        CHECK(fresh.step_count("p") == 1);

        store.set_trainable("p", false);
        const double before = p->value.data[0];
        fresh.step(store, 0.01);
        CHECK(p->value.data[0] == before);
        store.set_trainable("p", true);

        p->grad.assign(1, NAN);
        try {
            fresh.step(store, 0.01);
            FAIL("expected a training error");
        } catch (const TrainingError& e) {
            CHECK(std::string(e.what()).find("'p'") != std::string::npos);
        }

        CHECK(step_decay_lr(0.01, 0, 150) == 0.01);
        CHECK(step_decay_lr(0.01, 100, 150) == 0.0025);
        CHECK(step_decay_lr(0.01, 149, 150) == 0.0025);
        CHECK(step_decay_lr(0.01, 50, 150) == 0.005);
    }

    TEST_CASE("adam fits a line") {
        ParameterStore<double> store;
        auto w = store.add("w", {1, 1});
        auto b = store.add("b", {1});
        Tensor<double> x({100, 1}), y({100, 1});
        for (int i = 0; i < 100; ++i) {
            x.data[i] = -1.0 + 2.0 * i / 99.0;
            y.data[i] = 3.0 * x.data[i] + 1.0;
        }
        Adam<double> opt;
        double loss = 1e9;
        for (int step = 0; step < 2000 && loss >= 1e-4; ++step) {
            Graph<double> g;
            auto l = g.mse_loss(g.linear(g.constant(x), w, b), y);
            g.backward(l);
            opt.step(store, 0.05);
            store.zero_grad();
            loss = l->value.data[0];
        }
        CHECK(loss < 1e-4);
    }

    TEST_CASE("parameter hash") {
        ParameterStore<float> s;
        auto a = s.add("a", {2, 2});
        const auto h0 = s.hash();
        CHECK(s.hash() == h0);
        a->value.data[3] = 1e-30f;
        CHECK(s.hash() != h0);
        CHECK(s.total_size() == 4);
    }
}
