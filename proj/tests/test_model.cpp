// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstdio>
#include <vector>

#include "t1/autodiff.hpp"
#include "t1/masking.hpp"
#include "t1/model.hpp"
#include "t1/tensor.hpp"

using t1::ModelConfig;
using t1::ParamStore;
using t1::Tensor;

namespace {

Tensor random_tensor(std::vector<int> shape, uint64_t seed) {
    Tensor t(shape);
    for (int64_t i = 0; i < t.size(); ++i)
        t[i] = 2.0 * t1::rng::uniform(seed, static_cast<uint64_t>(i), 0, 0, 79) - 1.0;
    return t;
}

Tensor reshape(const Tensor& t, std::vector<int> shape) {
    std::vector<double> d(t.data(), t.data() + t.size());
    return Tensor(std::move(shape), std::move(d));
}

// naive attention over the variable axis: per head, the feature vector is the
// head's g channels flattened across time
Tensor naive_chead(const Tensor& q, const Tensor& k, const Tensor& v, int g) {
    const int B = q.dim(0), M = q.dim(1), C = q.dim(2), L = q.dim(3);
    const int nh = C / g;
    const double scale = 1.0 / std::sqrt(static_cast<double>(g) * L);
    Tensor out({B, M, C, L});
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < nh; ++h) {
            std::vector<std::vector<double>> scores(M, std::vector<double>(M, 0.0));
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j) {
                    double dot = 0.0;
                    for (int c = h * g; c < (h + 1) * g; ++c)
                        for (int l = 0; l < L; ++l) dot += q.at({b, i, c, l}) * k.at({b, j, c, l});
                    scores[i][j] = dot * scale;
                }
            for (int i = 0; i < M; ++i) {
                double mx = scores[i][0];
                for (int j = 1; j < M; ++j) mx = std::max(mx, scores[i][j]);
                double z = 0.0;
                for (int j = 0; j < M; ++j) z += std::exp(scores[i][j] - mx);
                for (int j = 0; j < M; ++j) scores[i][j] = std::exp(scores[i][j] - mx) / z;
            }
            for (int i = 0; i < M; ++i)
                for (int c = h * g; c < (h + 1) * g; ++c)
                    for (int l = 0; l < L; ++l) {
                        double acc = 0.0;
                        for (int j = 0; j < M; ++j) acc += scores[i][j] * v.at({b, j, c, l});
                        out.at({b, i, c, l}) = acc;
                    }
        }
    return out;
}

// forward reimplemented on the plain tensor primitives (no tape), mirroring
// the documented architecture
Tensor oracle_forward(const t1::SeriesBatch& batch, const ModelConfig& cfg, ParamStore& p) {
    const int B = batch.batch(), M = batch.vars(), T = batch.len(), C = cfg.channels;
    const Tensor eff = batch.effective_mask();
    auto [xn, st] = t1::masked_instance_norm(batch.x, eff);
    const int cin = cfg.use_mask_channel ? 2 : 1;
    Tensor ein({B * M, cin, T});
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t) {
                const int64_t src = (static_cast<int64_t>(b) * M + m) * T + t;
                ein.at({b * M + m, 0, t}) = xn[src];
                if (cin == 2) ein.at({b * M + m, 1, t}) = eff[src];
            }
    Tensor z = t1::conv1d(ein, p.value("embed.conv.w"), p.value("embed.conv.b"), cfg.embed_stride, true);
    int L = z.dim(2);
    const Tensor& evar = p.value("embed.e_var");
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            for (int c = 0; c < C; ++c)
                for (int l = 0; l < L; ++l) z.at({b * M + m, c, l}) += evar.at({m, c, l});

    for (size_t gi = 0; gi < cfg.groups.size(); ++gi) {
        const auto& g = cfg.groups[gi];
        for (int bi = 0; bi < g.num_blocks; ++bi) {
            const std::string pre = "g" + std::to_string(gi) + ".b" + std::to_string(bi) + ".";
            auto proj = [&](const std::string& n) {
                Tensor a = t1::dwconv1d(z, p.value(pre + n + "_large"), 1, true);
                Tensor b2 = t1::dwconv1d(z, p.value(pre + n + "_small"), 1, true);
                a.add_(b2);
                return reshape(a, {B, M, C, L});
            };
            Tensor o = naive_chead(proj("q"), proj("k"), proj("v"), cfg.channels_per_head);
            Tensor a = t1::pwconv1d(reshape(o, {B * M, C, L}), p.value(pre + "attn_pw.w"),
                                    p.value(pre + "attn_pw.b"));
            a = t1::layernorm_channels(a, p.value(pre + "ln1.gamma"), p.value(pre + "ln1.beta"));
            Tensor z_attn = z;
            z_attn.add_(a);
            Tensor f = t1::pwconv1d(z_attn, p.value(pre + "ffn1.w"), p.value(pre + "ffn1.b"));
            f = t1::gelu(f);
            f = t1::pwconv1d(f, p.value(pre + "ffn2.w"), p.value(pre + "ffn2.b"));
            f = t1::layernorm_channels(f, p.value(pre + "ln2.gamma"), p.value(pre + "ln2.beta"));
            z = z_attn;
            z.add_(f);
        }
        if (g.downsample_after) {
            if (L % 2 != 0) {
                Tensor padded({B * M, C, L + 1});
                for (int r = 0; r < B * M; ++r)
                    for (int c = 0; c < C; ++c)
                        for (int l = 0; l < L; ++l) padded.at({r, c, l}) = z.at({r, c, l});
                z = std::move(padded);
            }
            z = t1::dwconv1d(z, p.value("g" + std::to_string(gi) + ".down.w"), 2, false);
            L = z.dim(2);
        }
    }

    Tensor xn_hat;
    if (cfg.upsampler == t1::Upsampler::PixelShuffle) {
        const int r = T / L;
        Tensor y = t1::pwconv1d(t1::pixel_shuffle_1d(z, r), p.value("recon.pw.w"),
                                p.value("recon.pw.b"));
        xn_hat = reshape(y, {B, M, T});
    } else {
        const Tensor& w = p.value("recon.linear.w");
        const Tensor& bias = p.value("recon.linear.b");
        xn_hat = Tensor({B, M, T});
        for (int b = 0; b < B; ++b)
            for (int m = 0; m < M; ++m)
                for (int t = 0; t < T; ++t) {
                    double acc = bias.at({m, t});
                    for (int c = 0; c < C; ++c)
                        for (int l = 0; l < L; ++l)
                            acc += w.at({m, t, c * L + l}) * z.at({b * M + m, c, l});
                    xn_hat.at({b, m, t}) = acc;
                }
    }
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t)
                xn_hat.at({b, m, t}) = xn_hat.at({b, m, t}) * st.sigma.at({b, m}) + st.mu.at({b, m});
    return xn_hat;
}

t1::SeriesBatch random_batch(int B, int M, int T, uint64_t seed, double miss = 0.15) {
    t1::SeriesBatch batch;
    batch.x = random_tensor({B, M, T}, seed);
    batch.omega = t1::gen_point_mask({B, M, T}, miss, seed + 1);
    return batch;
}

}  // namespace

TEST_CASE("masked instance norm hand examples") {
    Tensor x({1, 1, 3}, {1, 2, 3});
    Tensor omega = Tensor::full({1, 1, 3}, 1.0);
    auto [xn, st] = t1::masked_instance_norm(x, omega);
    CHECK(st.mu[0] == doctest::Approx(2.0));
    CHECK(st.sigma[0] == doctest::Approx(0.8164966).epsilon(1e-6));
    CHECK(xn[0] == doctest::Approx(-1.2247449).epsilon(1e-6));
    CHECK(xn[1] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(xn[2] == doctest::Approx(1.2247449).epsilon(1e-6));

    Tensor x2({1, 1, 3}, {1, 99, 3});
    Tensor om2({1, 1, 3}, {1, 0, 1});
    auto [xn2, st2] = t1::masked_instance_norm(x2, om2);
    CHECK(st2.mu[0] == doctest::Approx(2.0));
    CHECK(st2.sigma[0] == doctest::Approx(1.0));
    CHECK(xn2[1] == 0.0);  // unobserved slot contributes nothing
}

TEST_CASE("masked instance norm: row with nothing observed") {
    Tensor x({1, 1, 4}, {5, 6, 7, 8});
    Tensor omega({1, 1, 4});
    auto [xn, st] = t1::masked_instance_norm(x, omega);
    CHECK(st.valid[0] == 0.0);
    CHECK(st.mu[0] == 0.0);
    CHECK(st.sigma[0] == 1.0);
    for (int64_t i = 0; i < xn.size(); ++i) CHECK(xn[i] == 0.0);
}

TEST_CASE("sigma floor on constant series") {
    Tensor x = Tensor::full({1, 1, 6}, 4.25);
    auto [xn, st] = t1::masked_instance_norm(x, Tensor::full({1, 1, 6}, 1.0));
    CHECK(st.sigma[0] == t1::kNormEps);
    (void)xn;
}

TEST_CASE("chead attention hand example M=2") {
    // Q=K=V rows [1,0],[0,1]: scores/sqrt(2), weights row 0 = [0.6698, 0.3302]
    Tensor qkv({1, 2, 1, 2}, {1, 0, 0, 1});
    t1::Tape tape;
    auto n = tape.constant(qkv);
    Tensor w;
    auto o = tape.chead_attention(n, n, n, 1, &w);
    REQUIRE(w.shape() == std::vector<int>{1, 1, 2, 2});
    CHECK(w.at({0, 0, 0, 0}) == doctest::Approx(0.6698).epsilon(1e-3));
    CHECK(w.at({0, 0, 0, 1}) == doctest::Approx(0.3302).epsilon(1e-3));
    const Tensor& out = tape.value(o);
    for (int l = 0; l < 2; ++l)
        CHECK(out.at({0, 0, 0, l}) ==
              doctest::Approx(w.at({0, 0, 0, 0}) * qkv.at({0, 0, 0, l}) +
                              w.at({0, 0, 0, 1}) * qkv.at({0, 1, 0, l})));
}

TEST_CASE("chead attention matches the naive loop oracle") {
    for (uint64_t seed = 0; seed < 8; ++seed) {
        const int B = 2, M = 3, C = 4, L = 5;
        Tensor q = random_tensor({B, M, C, L}, 100 + seed);
        Tensor k = random_tensor({B, M, C, L}, 200 + seed);
        Tensor v = random_tensor({B, M, C, L}, 300 + seed);
        for (int g : {1, 2, 4}) {
            t1::Tape tape;
            auto o = tape.chead_attention(tape.constant(q), tape.constant(k), tape.constant(v), g,
                                          nullptr);
            Tensor want = naive_chead(q, k, v, g);
            const Tensor& got = tape.value(o);
            REQUIRE(got.shape() == want.shape());
            for (int64_t i = 0; i < got.size(); ++i)
                CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-10));
        }
    }
}

TEST_CASE("single-variable attention is a value passthrough") {
    Tensor q = random_tensor({2, 1, 3, 4}, 7);
    Tensor v = random_tensor({2, 1, 3, 4}, 8);
    t1::Tape tape;
    Tensor w;
    auto o = tape.chead_attention(tape.constant(q), tape.constant(q), tape.constant(v), 1, &w);
    const Tensor& out = tape.value(o);
    for (int64_t i = 0; i < out.size(); ++i) CHECK(out[i] == doctest::Approx(v[i]).epsilon(1e-12));
    for (int64_t i = 0; i < w.size(); ++i) CHECK(w[i] == 1.0);
}

TEST_CASE("attention rows sum to one") {
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.groups = {{1, 3, 2, false}};
    cfg.seq_len = 8;
    cfg.num_vars = 3;
    ParamStore ps = t1::init_params(cfg, 5);
    auto batch = random_batch(2, 3, 8, 50);
    auto [x_hat, trace] = t1::forward(batch, cfg, ps);
    (void)x_hat;
    REQUIRE(trace.attention_weights.size() == 1);
    const Tensor& w = trace.attention_weights[0];
    const int B = w.dim(0), H = w.dim(1), M = w.dim(2);
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < H; ++h)
            for (int i = 0; i < M; ++i) {
                double s = 0.0;
                for (int j = 0; j < M; ++j) s += w.at({b, h, i, j});
                CHECK(s == doctest::Approx(1.0).epsilon(1e-9));
            }
}

TEST_CASE("full forward matches the straight-line oracle") {
    for (bool mask_channel : {true, false}) {
        for (auto up : {t1::Upsampler::PixelShuffle, t1::Upsampler::Linear}) {
            ModelConfig cfg;
            cfg.channels = 4;
            cfg.groups = {{1, 5, 3, true}, {1, 3, 3, false}};
            cfg.channels_per_head = 2;
            cfg.seq_len = 8;
            cfg.num_vars = 3;
            cfg.use_mask_channel = mask_channel;
            cfg.upsampler = up;
            ParamStore ps = t1::init_params(cfg, 21);
            auto batch = random_batch(2, 3, 8, 60);
            auto [x_hat, trace] = t1::forward(batch, cfg, ps);
            (void)trace;
            Tensor want = oracle_forward(batch, cfg, ps);
            REQUIRE(x_hat.shape() == want.shape());
            for (int64_t i = 0; i < want.size(); ++i)
                CHECK(x_hat[i] == doctest::Approx(want[i]).epsilon(1e-9));
        }
    }
}

TEST_CASE("default geometry: one downsample halves the latent length") {
    ModelConfig cfg;
    cfg.num_vars = 4;
    CHECK(cfg.seq_len == 96);
    CHECK(cfg.final_len() == 48);
    CHECK(cfg.seq_len / cfg.final_len() == 2);  // shuffle ratio r
}

TEST_CASE("kernel scaling rule") {
    ModelConfig cfg;
    cfg.num_vars = 4;
    ModelConfig s48 = t1::scale_kernels(cfg, 48);
    CHECK(s48.groups[0].large_kernel == 35);
    CHECK(s48.groups[1].large_kernel == 15);
    CHECK(s48.groups[0].small_kernel == 5);
    CHECK(s48.seq_len == 48);

    ModelConfig s96 = t1::scale_kernels(cfg, 96);
    CHECK(s96.groups[0].large_kernel == 71);
    CHECK(s96.groups[1].large_kernel == 31);

    ModelConfig s192 = t1::scale_kernels(cfg, 192);
    CHECK(s192.groups[0].large_kernel == 142);
    CHECK(s192.groups[1].large_kernel == 62);

    ModelConfig tiny = cfg;
    tiny.groups[0].large_kernel = 3;
    std::vector<std::string> warnings;
    ModelConfig s8 = t1::scale_kernels(tiny, 8, &warnings);
    CHECK(s8.groups[0].large_kernel == 1);  // clamped
    CHECK(warnings.size() == 1);
}

TEST_CASE("forward ignores values hidden by the effective mask") {
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.groups = {{1, 3, 2, true}, {1, 3, 2, false}};
    cfg.seq_len = 8;
    cfg.num_vars = 2;
    ParamStore ps = t1::init_params(cfg, 31);
    auto batch = random_batch(1, 2, 8, 70, 0.3);
    auto [base, tr] = t1::forward(batch, cfg, ps);
    (void)tr;
    for (int rep = 0; rep < 50; ++rep) {
        t1::SeriesBatch fuzzed = batch;
        for (int64_t i = 0; i < fuzzed.x.size(); ++i)
            if (fuzzed.omega[i] == 0.0)
                fuzzed.x[i] = 1000.0 * (2.0 * t1::rng::uniform(71, static_cast<uint64_t>(rep),
                                                               static_cast<uint64_t>(i), 0, 3) -
                                        1.0);
        auto [out, tr2] = t1::forward(fuzzed, cfg, ps);
        (void)tr2;
        for (int64_t i = 0; i < out.size(); ++i) REQUIRE(out[i] == base[i]);
    }
}

TEST_CASE("init is deterministic in the seed") {
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.groups = {{1, 3, 2, false}};
    cfg.seq_len = 8;
    cfg.num_vars = 2;
    ParamStore a = t1::init_params(cfg, 11);
    ParamStore b = t1::init_params(cfg, 11);
    ParamStore c = t1::init_params(cfg, 12);
    bool any_differs = false;
    for (const auto& name : a.names()) {
        const Tensor& va = a.value(name);
        const Tensor& vb = b.value(name);
        REQUIRE(va.size() == vb.size());
        for (int64_t i = 0; i < va.size(); ++i) REQUIRE(va[i] == vb[i]);
        const Tensor& vc = c.value(name);
        for (int64_t i = 0; i < va.size(); ++i)
            if (va[i] != vc[i]) any_differs = true;
    }
    CHECK(any_differs);
}

TEST_CASE("checkpoint round trip preserves config and parameters") {
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.groups = {{1, 3, 2, true}, {2, 3, 2, false}};
    cfg.channels_per_head = 2;
    cfg.seq_len = 8;
    cfg.num_vars = 3;
    cfg.use_mask_channel = false;
    ParamStore ps = t1::init_params(cfg, 41);
    const std::string path = "test_ckpt.t1ckpt";
    t1::save_checkpoint(path, cfg, ps);
    auto [cfg2, ps2] = t1::load_checkpoint(path);
    std::remove(path.c_str());
    CHECK(t1::model_config_to_json(cfg2) == t1::model_config_to_json(cfg));
    REQUIRE(ps2.names() == ps.names());
    for (const auto& name : ps.names()) {
        const Tensor& va = ps.value(name);
        const Tensor& vb = ps2.value(name);
        REQUIRE(va.shape() == vb.shape());
        for (int64_t i = 0; i < va.size(); ++i) REQUIRE(va[i] == vb[i]);
    }
    CHECK_THROWS(t1::load_checkpoint("does_not_exist.t1ckpt"));
}

TEST_CASE("config validation rejects bad geometry") {
    ModelConfig cfg;
    cfg.num_vars = 2;
    cfg.channels_per_head = 3;  // 128 % 3 != 0
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ModelConfig{};
    cfg.num_vars = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = ModelConfig{};
    cfg.num_vars = 2;
    cfg.seq_len = 50;  // 50 not divisible by final latent length 25 after rounding
    cfg.groups = {{1, 5, 3, true}, {1, 3, 3, true}};
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

TEST_CASE("forward validates batch shape against the config") {
    ModelConfig cfg;
    cfg.channels = 4;
    cfg.groups = {{1, 3, 2, false}};
    cfg.seq_len = 8;
    cfg.num_vars = 2;
    ParamStore ps = t1::init_params(cfg, 1);
    auto wrong_vars = random_batch(1, 3, 8, 80);
    CHECK_THROWS_AS(t1::forward(wrong_vars, cfg, ps), std::invalid_argument);
    auto wrong_len = random_batch(1, 2, 10, 81);
    CHECK_THROWS_AS(t1::forward(wrong_len, cfg, ps), std::invalid_argument);
}
