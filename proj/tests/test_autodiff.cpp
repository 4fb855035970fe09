// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "t1/autodiff.hpp"
#include "t1/masking.hpp"
#include "t1/model.hpp"
#include "t1/tensor.hpp"

using t1::ParamStore;
using t1::Tape;
using t1::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i)
        t[i] = 2.0 * t1::rng::uniform(seed, static_cast<uint64_t>(i), 0, 0, 78) - 1.0;
    return t;
}

// grad-check a scalar function of the named parameters
void check_op(const std::function<double(ParamStore&)>& f, ParamStore& ps, double tol = 1e-6) {
    f(ps);  // populate analytic grads
    auto report = t1::grad_check(f, ps, 1e-5);
    CHECK(report.max_rel_err < tol);
}

}  // namespace

TEST_CASE("add mul scale sum gradients") {
    ParamStore ps;
    ps.add("a", random_tensor({2, 3}, 1));
    ps.add("b", random_tensor({2, 3}, 2));
    check_op(
        [](ParamStore& p) {
            Tape t;
            auto a = t.param(p, "a"), b = t.param(p, "b");
            auto loss = t.sum(t.mul(t.scale(t.add(a, b), 1.5), a));
            t.backward(loss);
            return t.value(loss)[0];
        },
        ps);
}

TEST_CASE("conv1d gradient") {
    ParamStore ps;
    ps.add("x", random_tensor({2, 3, 6}, 3));
    ps.add("w", random_tensor({4, 3, 3}, 4));
    ps.add("b", random_tensor({4}, 5));
    for (int stride : {1, 2})
        for (bool pad : {false, true})
            check_op(
                [=](ParamStore& p) {
                    Tape t;
                    auto y = t.conv1d(t.param(p, "x"), t.param(p, "w"), t.param(p, "b"), stride, pad);
                    auto loss = t.sum(t.mul(y, y));
                    t.backward(loss);
                    return t.value(loss)[0];
                },
                ps);
}

TEST_CASE("dwconv gradient including folded batch axes") {
    ParamStore ps;
    ps.add("x", random_tensor({2, 2, 3, 6}, 6));
    ps.add("k", random_tensor({3, 4}, 7));
    for (int stride : {1, 2})
        check_op(
            [=](ParamStore& p) {
                Tape t;
                auto y = t.dwconv(t.param(p, "x"), t.param(p, "k"), stride, true);
                auto loss = t.sum(t.mul(y, y));
                t.backward(loss);
                return t.value(loss)[0];
            },
            ps);
}

TEST_CASE("pwconv layernorm gelu softmax gradients") {
    ParamStore ps;
    ps.add("x", random_tensor({2, 3, 4}, 8));
    ps.add("w", random_tensor({4, 3}, 9));
    ps.add("b", random_tensor({4}, 10));
    ps.add("gamma", random_tensor({4}, 11));
    ps.add("beta", random_tensor({4}, 12));
    check_op(
        [](ParamStore& p) {
            Tape t;
            auto y = t.pwconv(t.param(p, "x"), t.param(p, "w"), t.param(p, "b"));
            y = t.layernorm(y, t.param(p, "gamma"), t.param(p, "beta"));
            y = t.gelu(y);
            y = t.softmax(t.reshape(y, {8, 4}));
            auto loss = t.sum(t.mul(y, y));
            t.backward(loss);
            return t.value(loss)[0];
        },
        ps, 1e-4);
}

TEST_CASE("pixel shuffle and pad_last gradients") {
    ParamStore ps;
    ps.add("x", random_tensor({2, 4, 3}, 13));
    check_op(
        [](ParamStore& p) {
            Tape t;
            auto y = t.pixel_shuffle(t.param(p, "x"), 2);
            y = t.pad_last(y, 3);
            auto loss = t.sum(t.mul(y, y));
            t.backward(loss);
            return t.value(loss)[0];
        },
        ps);
}

TEST_CASE("chead attention gradient") {
    ParamStore ps;
    ps.add("q", random_tensor({2, 3, 4, 5}, 14));
    ps.add("k", random_tensor({2, 3, 4, 5}, 15));
    ps.add("v", random_tensor({2, 3, 4, 5}, 16));
    for (int g : {1, 2, 4})
        check_op(
            [=](ParamStore& p) {
                Tape t;
                auto o = t.chead_attention(t.param(p, "q"), t.param(p, "k"), t.param(p, "v"), g,
                                           nullptr);
                auto loss = t.sum(t.mul(o, o));
                t.backward(loss);
                return t.value(loss)[0];
            },
            ps);
}

TEST_CASE("var_linear denorm add_var_encoding masked_mse gradients") {
    ParamStore ps;
    ps.add("z", random_tensor({2, 3, 2, 2}, 17));
    ps.add("e", random_tensor({3, 2, 2}, 18));
    ps.add("w", random_tensor({3, 5, 4}, 19));
    ps.add("b", random_tensor({3, 5}, 20));
    Tensor sigma = random_tensor({2, 3}, 21);
    for (int64_t i = 0; i < sigma.size(); ++i) sigma[i] = 0.5 + std::abs(sigma[i]);
    Tensor mu = random_tensor({2, 3}, 22);
    Tensor target = random_tensor({2, 3, 5}, 23);
    Tensor mask = random_tensor({2, 3, 5}, 24);
    for (int64_t i = 0; i < mask.size(); ++i) mask[i] = mask[i] > 0 ? 1.0 : 0.0;
    check_op(
        [&](ParamStore& p) {
            Tape t;
            auto z = t.add_var_encoding(t.param(p, "z"), t.param(p, "e"));
            auto y = t.var_linear(z, t.param(p, "w"), t.param(p, "b"));
            y = t.denorm(y, sigma, mu);
            auto loss = t.masked_mse(y, target, mask);
            t.backward(loss);
            return t.value(loss)[0];
        },
        ps);
}

TEST_CASE("parameter used twice accumulates both paths") {
    ParamStore ps;
    ps.add("a", Tensor({2}, {1.0, 2.0}));
    Tape t;
    auto a = t.param(ps, "a");
    auto loss = t.sum(t.add(a, a));  // d/da = 2
    t.backward(loss);
    CHECK(ps.grad("a")[0] == 2.0);
    CHECK(ps.grad("a")[1] == 2.0);
}

TEST_CASE("backward twice accumulates into the store") {
    ParamStore ps;
    ps.add("a", Tensor({1}, {3.0}));
    Tape t;
    auto loss = t.sum(t.param(ps, "a"));
    t.backward(loss);
    t.backward(loss);
    CHECK(ps.grad("a")[0] == 2.0);
}

TEST_CASE("loss through full model forward matches finite differences") {
    t1::ModelConfig cfg;
    cfg.channels = 4;
    cfg.groups = {{1, 3, 2, true}, {1, 3, 2, false}};
    cfg.channels_per_head = 2;
    cfg.seq_len = 8;
    cfg.num_vars = 2;
    ParamStore ps = t1::init_params(cfg, 99);

    t1::SeriesBatch batch;
    batch.x = random_tensor({2, 2, 8}, 30);
    batch.omega = Tensor({2, 2, 8});
    batch.psi = Tensor({2, 2, 8});
    for (int64_t i = 0; i < batch.omega.size(); ++i) {
        batch.omega[i] = t1::rng::uniform(31, static_cast<uint64_t>(i), 0, 0, 1) < 0.85 ? 1.0 : 0.0;
        batch.psi[i] = t1::rng::uniform(32, static_cast<uint64_t>(i), 0, 0, 1) < 0.4 ? 0.0 : 1.0;
    }
    Tensor sup = batch.omega;
    for (int64_t i = 0; i < sup.size(); ++i) sup[i] = (batch.omega[i] == 1.0 && batch.psi[i] == 0.0);

    auto f = [&](ParamStore& p) {
        Tape t;
        auto fw = t1::forward_tape(t, batch, cfg, p);
        auto loss = t.masked_mse(fw.x_hat, batch.x, sup);
        t.backward(loss);
        return t.value(loss)[0];
    };
    f(ps);
    auto report = t1::grad_check(f, ps, 1e-5);
    CHECK(report.max_rel_err < 1e-5);
}

TEST_CASE("sum requires a scalar loss for backward") {
    ParamStore ps;
    ps.add("a", random_tensor({2, 2}, 40));
    Tape t;
    auto a = t.param(ps, "a");
    CHECK_THROWS_AS(t.backward(a), std::invalid_argument);
}
