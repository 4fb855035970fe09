// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <vector>

#include "t1/masking.hpp"
#include "t1/tensor.hpp"

using t1::Tensor;

namespace {

double urand(uint64_t seed, uint64_t i) { return 2.0 * t1::rng::uniform(seed, i, 0, 0, 77) - 1.0; }

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i) t[i] = urand(seed, static_cast<uint64_t>(i));
    return t;
}

// straight-line convolution oracle, independent of the library kernels
Tensor conv_oracle(const Tensor& in, const Tensor& w, const Tensor& b, int stride, bool same_pad) {
    const int M = in.dim(0), Cin = in.dim(1), L = in.dim(2);
    const int Cout = w.dim(0), k = w.dim(2);
    const int pl = same_pad ? (k - 1) / 2 : 0;
    const int Lp = same_pad ? L + k - 1 : L;
    const int Lo = (Lp - k) / stride + 1;
    Tensor out({M, Cout, Lo});
    for (int m = 0; m < M; ++m)
        for (int co = 0; co < Cout; ++co)
            for (int lo = 0; lo < Lo; ++lo) {
                double acc = b.empty() ? 0.0 : b[co];
                for (int ci = 0; ci < Cin; ++ci)
                    for (int j = 0; j < k; ++j) {
                        const int li = lo * stride + j - pl;
                        if (li >= 0 && li < L) acc += in.at({m, ci, li}) * w.at({co, ci, j});
                    }
                out.at({m, co, lo}) = acc;
            }
    return out;
}

}  // namespace

TEST_CASE("dwconv1d hand example") {
    Tensor in({1, 1, 4}, {1, 2, 3, 4});
    Tensor k({1, 2}, {1, 1});
    Tensor out = t1::dwconv1d(in, k, 2, false);
    REQUIRE(out.shape() == std::vector<int>{1, 1, 2});
    CHECK(out[0] == 3.0);
    CHECK(out[1] == 7.0);
}

TEST_CASE("dwconv1d kernel shared across variable rows") {
    Tensor in({2, 1, 3}, {1, 0, 0, 0, 1, 0});
    Tensor k({1, 3}, {1, 2, 3});
    Tensor out = t1::dwconv1d(in, k, 1, true);
    Tensor swapped({2, 1, 3}, {0, 1, 0, 1, 0, 0});
    Tensor out2 = t1::dwconv1d(swapped, k, 1, true);
    for (int l = 0; l < 3; ++l) {
        CHECK(out.at({0, 0, l}) == out2.at({1, 0, l}));
        CHECK(out.at({1, 0, l}) == out2.at({0, 0, l}));
    }
}

TEST_CASE("dwconv1d matches conv oracle with diagonal weight") {
    Tensor in = random_tensor({2, 3, 7}, 1);
    Tensor k = random_tensor({3, 5}, 2);
    for (int stride : {1, 2}) {
        for (bool pad : {false, true}) {
            Tensor w({3, 3, 5});
            for (int c = 0; c < 3; ++c)
                for (int j = 0; j < 5; ++j) w.at({c, c, j}) = k.at({c, j});
            Tensor got = t1::dwconv1d(in, k, stride, pad);
            Tensor want = conv_oracle(in, w, Tensor(), stride, pad);
            REQUIRE(got.shape() == want.shape());
            for (int64_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
    }
}

TEST_CASE("conv1d matches loop oracle") {
    Tensor in = random_tensor({1, 3, 4}, 3);
    Tensor w = random_tensor({2, 3, 2}, 4);
    Tensor b = random_tensor({2}, 5);
    for (int stride : {1, 2})
        for (bool pad : {false, true}) {
            Tensor got = t1::conv1d(in, w, b, stride, pad);
            Tensor want = conv_oracle(in, w, b, stride, pad);
            REQUIRE(got.shape() == want.shape());
            for (int64_t i = 0; i < got.size(); ++i)
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
        }
}

TEST_CASE("pwconv1d matches per-position matrix multiply") {
    Tensor in = random_tensor({1, 3, 4}, 6);
    Tensor w = random_tensor({2, 3}, 7);
    Tensor b = random_tensor({2}, 8);
    Tensor got = t1::pwconv1d(in, w, b);
    REQUIRE(got.shape() == std::vector<int>{1, 2, 4});
    for (int l = 0; l < 4; ++l)
        for (int co = 0; co < 2; ++co) {
            double acc = b[co];
            for (int ci = 0; ci < 3; ++ci) acc += w.at({co, ci}) * in.at({0, ci, l});
            CHECK(got.at({0, co, l}) == doctest::Approx(acc).epsilon(1e-12));
        }
}

TEST_CASE("softmax_rows example and invariants") {
    Tensor in({1, 3}, {1, 2, 3});
    Tensor out = t1::softmax_rows(in);
    CHECK(out[0] == doctest::Approx(0.09003057).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(0.24472847).epsilon(1e-6));
    CHECK(out[2] == doctest::Approx(0.66524096).epsilon(1e-6));

    Tensor r = random_tensor({4, 6}, 9);
    Tensor s = t1::softmax_rows(r);
    for (int i = 0; i < 4; ++i) {
        double sum = 0;
        for (int j = 0; j < 6; ++j) sum += s.at({i, j});
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    }
    Tensor shifted = r;
    for (int i = 0; i < 4; ++i)
        for (int j = 0; j < 6; ++j) shifted.at({i, j}) += 3.25;
    Tensor s2 = t1::softmax_rows(shifted);
    for (int64_t i = 0; i < s.size(); ++i) CHECK(s[i] == doctest::Approx(s2[i]).epsilon(1e-12));
}

TEST_CASE("layernorm_channels standardizes the channel vector") {
    Tensor in({1, 2, 1}, {1, 3});
    Tensor gamma({2}, {1, 1});
    Tensor beta({2}, {0, 0});
    Tensor out = t1::layernorm_channels(in, gamma, beta, 1e-12);
    CHECK(out[0] == doctest::Approx(-1.0).epsilon(1e-6));
    CHECK(out[1] == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("gelu reference value") {
    CHECK(t1::gelu_scalar(1.0) == doctest::Approx(0.8413447).epsilon(1e-6));
    CHECK(t1::gelu_scalar(0.0) == 0.0);
    // numerical derivative agrees with gelu_grad_scalar
    for (double x : {-1.5, -0.3, 0.0, 0.7, 2.0}) {
        double h = 1e-6;
        double num = (t1::gelu_scalar(x + h) - t1::gelu_scalar(x - h)) / (2 * h);
        CHECK(t1::gelu_grad_scalar(x) == doctest::Approx(num).epsilon(1e-5));
    }
}

TEST_CASE("pixel_shuffle_1d interleaves channels") {
    Tensor in({1, 2, 2}, {1, 2, 3, 4});  // channels [a,b]=[1,2], [c,d]=[3,4]
    Tensor out = t1::pixel_shuffle_1d(in, 2);
    REQUIRE(out.shape() == std::vector<int>{1, 1, 4});
    CHECK(out[0] == 1.0);
    CHECK(out[1] == 3.0);
    CHECK(out[2] == 2.0);
    CHECK(out[3] == 4.0);
}

TEST_CASE("pixel shuffle round trip is exact") {
    Tensor in = random_tensor({3, 8, 5}, 10);
    for (int r : {1, 2, 4, 8}) {
        Tensor back = t1::pixel_unshuffle_1d(t1::pixel_shuffle_1d(in, r), r);
        REQUIRE(back.shape() == in.shape());
        for (int64_t i = 0; i < in.size(); ++i) CHECK(back[i] == in[i]);
    }
}

TEST_CASE("same_pad_split puts the extra zero on the right") {
    CHECK(t1::same_pad_split(2) == std::pair<int, int>{0, 1});
    CHECK(t1::same_pad_split(5) == std::pair<int, int>{2, 2});
    CHECK(t1::same_pad_split(71) == std::pair<int, int>{35, 35});
    // same padding keeps length at stride 1
    Tensor in = random_tensor({1, 1, 9}, 11);
    for (int k : {1, 2, 3, 4, 7}) {
        Tensor w = random_tensor({1, k}, 12 + static_cast<uint64_t>(k));
        CHECK(t1::dwconv1d(in, w, 1, true).dim(2) == 9);
    }
}

TEST_CASE("shape mismatches throw") {
    Tensor in = random_tensor({1, 2, 4}, 13);
    CHECK_THROWS_AS(t1::dwconv1d(in, random_tensor({3, 2}, 14), 1, true), std::invalid_argument);
    CHECK_THROWS_AS(t1::conv1d(in, random_tensor({2, 3, 2}, 15), Tensor(), 1, true),
                    std::invalid_argument);
    CHECK_THROWS_AS(t1::pwconv1d(in, random_tensor({2, 3}, 16), Tensor()), std::invalid_argument);
    CHECK_THROWS_AS(t1::pixel_shuffle_1d(in, 3), std::invalid_argument);
    CHECK_THROWS_AS(t1::layernorm_channels(in, random_tensor({3}, 17), random_tensor({2}, 18)),
                    std::invalid_argument);
}
