#include <doctest.h>

#include <cmath>

#include "test_oracles.hpp"
#include "vflu/errors.hpp"
#include "vflu/net.hpp"
#include "vflu/numeric.hpp"
#include "vflu/rng.hpp"

using namespace vflu;

TEST_CASE("fully-connected layer with zero params maps anything to zero") {
    Net net({4}, {LayerSpec::fully_connected(4, 3)});
    ParamVector p(net.param_count());
    const Tensor out = net.forward(p, Tensor::from({4}, {1, -2, 3, 4}));
    for (double v : out.data) CHECK(v == 0.0);
}

TEST_CASE("relu forward matches its definition") {
    Net net({3}, {LayerSpec::relu()});
    ParamVector p(0);
    const Tensor out = net.forward(p, Tensor::from({3}, {-1, 0, 2}));
    CHECK(out.data == std::vector<double>{0, 0, 2});
}

TEST_CASE("1x1 convolution with weight 2 scales the image") {
    Net net({2, 2}, {LayerSpec::conv(1, 1, 1)});
    ParamVector p(net.param_count());
    p[0] = 2.0; // single weight; bias stays 0
    const Tensor out = net.forward(p, Tensor::from({2, 2}, {1, 3, 5, 7}));
    CHECK(out.shape == std::vector<size_t>{1, 2, 2});
    CHECK(out.data == std::vector<double>{2, 6, 10, 14});
}

TEST_CASE("identity fully-connected layer passes the upstream gradient through") {
    Net net({3}, {LayerSpec::fully_connected(3, 3)});
    ParamVector p(net.param_count());
    for (size_t i = 0; i < 3; ++i) p[i * 3 + i] = 1.0;
    ForwardCache cache;
    net.forward(p, Tensor::from({3}, {0.3, -0.7, 2.0}), cache);
    ParamVector grads(net.param_count());
    const Tensor g = Tensor::from({3}, {1.5, -0.5, 0.25});
    const Tensor gin = net.backward(p, cache, g, grads);
    for (size_t i = 0; i < 3; ++i) CHECK(gin.data[i] == doctest::Approx(g.data[i]));
}

TEST_CASE("zero upstream gradient yields zero parameter and input gradients") {
    Rng rng(7);
    Net net({5}, {LayerSpec::fully_connected(5, 4), LayerSpec::relu(),
                  LayerSpec::fully_connected(4, 3)});
    const ParamVector p = net.init_params(rng);
    Tensor x({5});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    ForwardCache cache;
    net.forward(p, x, cache);
    ParamVector grads(net.param_count());
    const Tensor gin = net.backward(p, cache, Tensor({3}), grads);
    for (double v : grads.values) CHECK(v == 0.0);
    for (double v : gin.data) CHECK(v == 0.0);
}

TEST_CASE("analytic gradients match central finite differences on a 3-layer toy net") {
    // conv -> pool -> fc stack, under 200 params
    Rng rng(11);
    Net net({1, 6, 6}, {LayerSpec::conv(1, 2, 3), LayerSpec::max_pool(2, 2),
                        LayerSpec::fully_connected(8, 5)});
    REQUIRE(net.param_count() <= 200);
    const ParamVector p = net.init_params(rng);
    Tensor x({1, 6, 6});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    const size_t label = 2;

    ForwardCache cache;
    const Tensor logits = net.forward(p, x, cache);
    const LossGrad lg = softmax_cross_entropy(logits, label);
    ParamVector analytic(net.param_count());
    net.backward(p, cache, lg.grad_logits, analytic);

    const auto fd = oracle::fd_param_grads(
        [&](const ParamVector& q) { return oracle::net_loss(net, q, x, label); }, p);
    CHECK(oracle::max_rel_err(analytic.values, fd) <= 1e-4);
}

TEST_CASE("every layer kind passes the finite-difference check") {
    struct Case {
        const char* name;
        Net net;
    };
    std::vector<Case> cases;
    cases.push_back({"conv-pad-stride", Net({2, 5, 5}, {LayerSpec::conv(2, 3, 3, 2, 1),
                                                        LayerSpec::fully_connected(27, 4)})});
    cases.push_back({"maxpool", Net({2, 4, 4}, {LayerSpec::max_pool(2, 2),
                                                LayerSpec::fully_connected(8, 4)})});
    cases.push_back({"relu", Net({6}, {LayerSpec::fully_connected(6, 8), LayerSpec::relu(),
                                       LayerSpec::fully_connected(8, 4)})});
    cases.push_back({"dropout", Net({6}, {LayerSpec::fully_connected(6, 8), LayerSpec::dropout(0.4),
                                          LayerSpec::fully_connected(8, 4)})});
    Rng rng(23);
    for (auto& c : cases) {
        CAPTURE(c.name);
        REQUIRE(c.net.param_count() <= 1000);
        const ParamVector p = c.net.init_params(rng);
        Tensor x(c.net.input_shape());
        for (double& v : x.data) v = rng.uniform(-1, 1);
        const size_t label = 1;
        const bool training = std::string(c.name) == "dropout";
        const uint64_t mask_seed = 99; // same mask on every FD evaluation

        ForwardCache cache;
        Rng fwd_rng(mask_seed);
        const Tensor logits = c.net.forward(p, x, cache, training, training ? &fwd_rng : nullptr);
        const LossGrad lg = softmax_cross_entropy(logits, label);
        ParamVector analytic(c.net.param_count());
        c.net.backward(p, cache, lg.grad_logits, analytic);

        const auto fd = oracle::fd_param_grads(
            [&](const ParamVector& q) {
                return oracle::net_loss(c.net, q, x, label, mask_seed, training);
            },
            p);
        CHECK(oracle::max_rel_err(analytic.values, fd) <= 1e-4);
    }
}

TEST_CASE("softmax cross-entropy on equal logits is ln(num_classes)") {
    const Tensor logits = Tensor::from({10}, std::vector<double>(10, 0.37));
    const LossGrad lg = softmax_cross_entropy(logits, 4);
    CHECK(lg.loss == doctest::Approx(std::log(10.0)).epsilon(1e-12));
}

TEST_CASE("softmax cross-entropy saturates on a huge correct margin") {
    Tensor logits({10});
    logits.data[3] = 1000.0;
    const LossGrad lg = softmax_cross_entropy(logits, 3);
    CHECK(lg.loss < 1e-9);
    for (double v : lg.grad_logits.data) CHECK(std::abs(v) < 1e-9);
}

TEST_CASE("softmax cross-entropy rejects an out-of-range label") {
    CHECK_THROWS_AS(softmax_cross_entropy(Tensor({10}), 10), ArgumentError);
}

TEST_CASE("softmax cross-entropy gradient matches finite differences to 1e-6") {
    Rng rng(31);
    for (int trial = 0; trial < 20; ++trial) {
        Tensor logits({10});
        for (double& v : logits.data) v = rng.uniform(-3, 3);
        const size_t label = size_t(rng.below(10));
        const LossGrad lg = softmax_cross_entropy(logits, label);
        const double eps = 1e-6;
        for (size_t i = 0; i < 10; ++i) {
            Tensor hi = logits, lo = logits;
            hi.data[i] += eps;
            lo.data[i] -= eps;
            const double fd = (softmax_cross_entropy(hi, label).loss -
                               softmax_cross_entropy(lo, label).loss) /
                              (2 * eps);
            CHECK(oracle::rel_err(lg.grad_logits.data[i], fd, 1e-4) <= 1e-6);
        }
    }
}

TEST_CASE("sgd_step arithmetic") {
    ParamVector p(2), g(2);
    p.values = {1, 1};
    g.values = {0, 0};
    CHECK(sgd_step(p, g, 3.7).values == std::vector<double>{1, 1});
    p.values = {1, 2};
    g.values = {1, 1};
    CHECK(sgd_step(p, g, 0.5).values == std::vector<double>{0.5, 1.5});
    CHECK(sgd_step(p, g, 0.0).values == p.values);
    ParamVector bad(3);
    CHECK_THROWS_AS(sgd_step(p, bad, 0.1), DimensionError);
}

TEST_CASE("ascent_step arithmetic and sign symmetry with sgd_step") {
    ParamVector p(1), g(1);
    p.values = {0};
    g.values = {2};
    CHECK(ascent_step(p, g, 0.1).values == std::vector<double>{0.2});

    Rng rng(5);
    ParamVector rp(17), rg(17);
    for (size_t i = 0; i < 17; ++i) {
        rp[i] = rng.uniform(-2, 2);
        rg[i] = rng.uniform(-2, 2);
    }
    CHECK(ascent_step(rp, rg, 0.3).values == sgd_step(rp, rg, -0.3).values);
    CHECK(ascent_step(rp, ParamVector(17), 0.3).values == rp.values);
}

TEST_CASE("l2_distance basics and the triangle inequality") {
    ParamVector a(2), b(2);
    CHECK(l2_distance(a, a) == 0.0);
    b.values = {3, 4};
    CHECK(l2_distance(a, b) == doctest::Approx(5.0));
    CHECK(l2_distance(b, a) == doctest::Approx(5.0));

    Rng rng(13);
    for (int trial = 0; trial < 200; ++trial) {
        ParamVector x(8), y(8), z(8);
        for (size_t i = 0; i < 8; ++i) {
            x[i] = rng.uniform(-5, 5);
            y[i] = rng.uniform(-5, 5);
            z[i] = rng.uniform(-5, 5);
        }
        CHECK(l2_distance(x, z) <= l2_distance(x, y) + l2_distance(y, z) + 1e-12);
    }
}

TEST_CASE("project_to_ball: interior points come back bitwise unchanged") {
    Rng rng(17);
    for (int trial = 0; trial < 100; ++trial) {
        ParamVector c(6), p(6);
        for (size_t i = 0; i < 6; ++i) {
            c[i] = rng.uniform(-1, 1);
            p[i] = c[i] + rng.uniform(-0.1, 0.1);
        }
        const double r = l2_distance(p, c) + 0.5;
        CHECK(project_to_ball(p, c, r).values == p.values);
    }
}

TEST_CASE("project_to_ball: radial scaling and idempotence") {
    ParamVector c(2), p(2);
    p.values = {0, 10};
    const ParamVector q = project_to_ball(p, c, 2.0);
    CHECK(q[0] == doctest::Approx(0.0));
    CHECK(q[1] == doctest::Approx(2.0));

    Rng rng(19);
    for (int trial = 0; trial < 100; ++trial) {
        ParamVector center(5), x(5);
        for (size_t i = 0; i < 5; ++i) {
            center[i] = rng.uniform(-1, 1);
            x[i] = rng.uniform(-10, 10);
        }
        const double r = rng.uniform(0.1, 3.0);
        const ParamVector once = project_to_ball(x, center, r);
        CHECK(l2_distance(once, center) <= r + 1e-12);
        CHECK(project_to_ball(once, center, r).values == once.values);
    }
    CHECK_THROWS_AS(project_to_ball(p, c, 0.0), ArgumentError);
    CHECK_THROWS_AS(project_to_ball(p, c, -1.0), ArgumentError);
}

TEST_CASE("flatten/unflatten round-trips exactly") {
    Rng rng(29);
    Net net({1, 6, 6}, {LayerSpec::conv(1, 2, 3), LayerSpec::relu(), LayerSpec::max_pool(2, 2),
                        LayerSpec::fully_connected(8, 5), LayerSpec::dropout(0.2)});
    const ParamVector p = net.init_params(rng);
    CHECK(net.flatten(net.unflatten(p)).values == p.values);
}

TEST_CASE("forward is deterministic given params, input and dropout seed") {
    Rng rng(41);
    Net net({6}, {LayerSpec::fully_connected(6, 8), LayerSpec::dropout(0.5),
                  LayerSpec::fully_connected(8, 3)});
    const ParamVector p = net.init_params(rng);
    Tensor x({6});
    for (double& v : x.data) v = rng.uniform(-1, 1);
    Rng d1(123), d2(123);
    const Tensor o1 = net.forward(p, x, true, &d1);
    const Tensor o2 = net.forward(p, x, true, &d2);
    CHECK(o1.data == o2.data);
}

TEST_CASE("net construction validates layer dimensions") {
    CHECK_THROWS_AS(Net({3}, {LayerSpec::fully_connected(4, 2)}), DimensionError);
    CHECK_THROWS_AS(Net({1, 2, 2}, {LayerSpec::conv(1, 1, 5)}), DimensionError);
    CHECK_THROWS_AS(Net({4}, {LayerSpec::dropout(1.0)}), ArgumentError);
    CHECK_THROWS_AS(Net({4}, {LayerSpec::fully_connected(4, 0)}), ArgumentError);
}

TEST_CASE("forward rejects mismatched input and foreign caches") {
    Net net({4}, {LayerSpec::fully_connected(4, 2)});
    Net other({4}, {LayerSpec::fully_connected(4, 2)});
    ParamVector p(net.param_count());
    CHECK_THROWS_AS(net.forward(p, Tensor({5})), DimensionError);

    ForwardCache cache;
    net.forward(p, Tensor({4}), cache);
    ParamVector grads(other.param_count());
    CHECK_THROWS_AS(other.backward(p, cache, Tensor({2}), grads), DimensionError);
}

TEST_CASE("non-finite forward output raises NumericError") {
    Net net({2}, {LayerSpec::fully_connected(2, 2)});
    ParamVector p(net.param_count());
    p[0] = std::numeric_limits<double>::infinity();
    Tensor x = Tensor::from({2}, {1.0, 1.0});
    CHECK_THROWS_AS(net.forward(p, x), NumericError);
}
