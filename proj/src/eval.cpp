// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <stdexcept>

#include "json.hpp"

namespace t1 {

namespace {
constexpr uint64_t kEvalMaskTag = 40;
constexpr uint64_t kAttnMaskTag = 41;
}  // namespace

Metrics metrics(const Tensor& x_hat, const Tensor& y, const Tensor& target_mask) {
    if (!x_hat.same_shape(y) || !x_hat.same_shape(target_mask))
        throw std::invalid_argument("metrics: shape mismatch");
    Metrics m;
    for (int64_t i = 0; i < x_hat.size(); ++i)
        if (target_mask[i] != 0.0) {
            const double d = x_hat[i] - y[i];
            m.mse += d * d;
            m.mae += std::fabs(d);
            ++m.count;
        }
    if (m.count == 0) throw std::invalid_argument("metrics: empty target set");
    m.mse /= static_cast<double>(m.count);
    m.mae /= static_cast<double>(m.count);
    return m;
}

namespace {

// shared per-window evaluation loop; impute(batch) -> (x_hat, trace or null)
EvalReport run_scenario(const WindowSet& test_windows, const MaskSpec& spec, uint64_t run_seed,
                        const std::function<Tensor(const SeriesBatch&, ForwardTrace*)>& impute,
                        bool collect_attention) {
    if (test_windows.empty()) throw std::invalid_argument("evaluate_scenario: no test windows");
    const int M = test_windows[0].x.dim(0);
    EvalReport report;
    report.scenario = spec.name();
    std::vector<double> se(static_cast<size_t>(M), 0.0), ae(static_cast<size_t>(M), 0.0);
    std::vector<int64_t> cnt(static_cast<size_t>(M), 0);
    std::vector<std::vector<double>> attn_others, attn_self;
    int64_t attn_windows = 0;

    for (size_t wi = 0; wi < test_windows.size(); ++wi) {
        SeriesBatch batch = make_batch(test_windows, {static_cast<int>(wi)});
        const uint64_t wseed = rng::mix(run_seed, static_cast<uint64_t>(wi), 0, 0, kEvalMaskTag);
        CompoundMask em = gen_eval_mask(batch.omega, spec, wseed);
        int64_t ntargets = 0;
        for (int64_t i = 0; i < em.targets.size(); ++i)
            if (em.targets[i] != 0.0) ++ntargets;
        if (ntargets == 0) {
            ++report.windows_without_targets;
            continue;
        }
        SeriesBatch reduced = batch;
        reduced.omega = em.omega;
        ForwardTrace trace;
        Tensor x_hat = impute(reduced, collect_attention ? &trace : nullptr);

        const int T = batch.len();
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t)
                if (em.targets.at({0, m, t}) != 0.0) {
                    const double d = x_hat.at({0, m, t}) - batch.x.at({0, m, t});
                    se[static_cast<size_t>(m)] += d * d;
                    ae[static_cast<size_t>(m)] += std::fabs(d);
                    ++cnt[static_cast<size_t>(m)];
                }

        if (collect_attention && !trace.attention_weights.empty()) {
            if (attn_others.empty()) {
                attn_others.assign(trace.attention_weights.size(),
                                   std::vector<double>(static_cast<size_t>(M), 0.0));
                attn_self = attn_others;
            }
            for (size_t layer = 0; layer < trace.attention_weights.size(); ++layer) {
                const Tensor& w = trace.attention_weights[layer];
                const int nh = w.dim(1);
                for (int j = 0; j < M; ++j) {
                    double others = 0.0, self = 0.0;
                    for (int h = 0; h < nh; ++h) {
                        for (int i = 0; i < M; ++i) {
                            const double v = w.at({0, h, i, j});
                            if (i == j)
                                self += v;
                            else
                                others += v;
                        }
                    }
                    if (M > 1) attn_others[layer][static_cast<size_t>(j)] += others / (nh * (M - 1));
                    attn_self[layer][static_cast<size_t>(j)] += self / nh;
                }
            }
            ++attn_windows;
        }
    }

    int64_t total = 0;
    double tot_se = 0.0, tot_ae = 0.0;
    for (int m = 0; m < M; ++m) {
        if (cnt[static_cast<size_t>(m)] > 0) {
            PerVariableMetrics pm;
            pm.var = m;
            pm.count = cnt[static_cast<size_t>(m)];
            pm.mse = se[static_cast<size_t>(m)] / static_cast<double>(pm.count);
            pm.mae = ae[static_cast<size_t>(m)] / static_cast<double>(pm.count);
            report.per_variable.push_back(pm);
        }
        total += cnt[static_cast<size_t>(m)];
        tot_se += se[static_cast<size_t>(m)];
        tot_ae += ae[static_cast<size_t>(m)];
    }
    report.count = total;
    if (total > 0) {
        report.mse = tot_se / static_cast<double>(total);
        report.mae = tot_ae / static_cast<double>(total);
    }
    if (attn_windows > 0) {
        for (auto& layer : attn_others)
            for (auto& v : layer) v /= static_cast<double>(attn_windows);
        for (auto& layer : attn_self)
            for (auto& v : layer) v /= static_cast<double>(attn_windows);
        report.attention_from_others = std::move(attn_others);
        report.attention_self = std::move(attn_self);
    }
    return report;
}

}  // namespace

EvalReport evaluate_scenario(ParamStore& params, const ModelConfig& config,
                             const WindowSet& test_windows, const MaskSpec& spec,
                             uint64_t run_seed) {
    return run_scenario(
        test_windows, spec, run_seed,
        [&](const SeriesBatch& batch, ForwardTrace* trace) {
            auto [x_hat, tr] = forward(batch, config, params);
            if (trace) *trace = std::move(tr);
            return x_hat;
        },
        true);
}

EvalReport evaluate_scenario_baseline(BaselineKind kind, const WindowSet& test_windows,
                                      const MaskSpec& spec, uint64_t run_seed) {
    return run_scenario(
        test_windows, spec, run_seed,
        [&](const SeriesBatch& batch, ForwardTrace*) { return baseline_imputer(batch, kind); },
        false);
}

std::vector<AttentionCurvePoint> attention_vs_missingness(
    ParamStore& params, const ModelConfig& config, const WindowSet& windows, int target_var,
    const std::vector<double>& ratios, double other_ratio, uint64_t seed) {
    if (ratios.empty()) throw std::invalid_argument("attention_vs_missingness: empty ratio list");
    if (windows.empty()) throw std::invalid_argument("attention_vs_missingness: no windows");
    const int M = windows[0].x.dim(0);
    if (target_var < 0 || target_var >= M)
        throw std::invalid_argument("attention_vs_missingness: target_var out of range");

    std::vector<AttentionCurvePoint> curve;
    for (double ratio : ratios) {
        std::vector<double> layer_acc;
        int64_t nwin = 0;
        for (size_t wi = 0; wi < windows.size(); ++wi) {
            SeriesBatch batch = make_batch(windows, {static_cast<int>(wi)});
            const int T = batch.len();
            // per-variable point masking on top of the window's own omega
            const uint64_t wseed = rng::mix(seed, static_cast<uint64_t>(wi),
                                            static_cast<uint64_t>(ratio * 1e6), 0, kAttnMaskTag);
            for (int m = 0; m < M; ++m) {
                const double r = m == target_var ? ratio : other_ratio;
                for (int t = 0; t < T; ++t)
                    if (rng::uniform(wseed, 0, static_cast<uint64_t>(m), static_cast<uint64_t>(t),
                                     rng::kPoint) < r)
                        batch.omega.at({0, m, t}) = 0.0;
            }
            auto [x_hat, trace] = forward(batch, config, params);
            (void)x_hat;
            if (layer_acc.empty()) layer_acc.assign(trace.attention_weights.size(), 0.0);
            for (size_t layer = 0; layer < trace.attention_weights.size(); ++layer) {
                const Tensor& w = trace.attention_weights[layer];
                const int nh = w.dim(1);
                double acc = 0.0;
                if (M == 1) {
                    acc = 1.0;  // self weight; no off-target queries exist
                } else {
                    for (int h = 0; h < nh; ++h)
                        for (int i = 0; i < M; ++i)
                            if (i != target_var) acc += w.at({0, h, i, target_var});
                    acc /= nh * (M - 1);
                }
                layer_acc[layer] += acc;
            }
            ++nwin;
        }
        for (size_t layer = 0; layer < layer_acc.size(); ++layer)
            curve.push_back({static_cast<int>(layer), ratio,
                             layer_acc[layer] / static_cast<double>(nwin)});
    }
    return curve;
}

FlopTable count_flops_and_params(const ModelConfig& c) {
    c.validate();
    FlopTable t;
    const int64_t M = c.num_vars, C = c.channels, T = c.seq_len;
    const int64_t cin = c.use_mask_channel ? 2 : 1;
    int64_t L = (T - 1) / c.embed_stride + 1;
    const int64_t L0 = L;
    const int64_t H = std::max<int64_t>(1, std::llround(c.ffn_ratio * static_cast<double>(C)));
    const int64_t g = c.channels_per_head, nh = C / g;

    auto row = [&](const std::string& name, int64_t flops, int64_t params) {
        t.rows.push_back({name, flops, params});
        t.total_flops += flops;
        t.total_params += params;
    };

    row("embed_conv", 2 * M * C * cin * c.embed_kernel * L0, C * cin * c.embed_kernel + C);
    row("e_var", 0, M * C * L0);

    for (size_t gi = 0; gi < c.groups.size(); ++gi) {
        const auto& grp = c.groups[gi];
        const std::string p = "g" + std::to_string(gi) + ".";
        for (int bi = 0; bi < grp.num_blocks; ++bi) {
            const std::string bp = p + "b" + std::to_string(bi) + ".";
            const int64_t ksum = grp.large_kernel + grp.small_kernel;
            row(bp + "qkv_dwconv", 2 * 3 * M * C * ksum * L, 3 * C * ksum);
            // per head: scores M x M over feature dim g*L, then values
            const int64_t score_flops = 2 * M * M * (g * L) * nh;
            row(bp + "attention_scores", score_flops, 0);
            row(bp + "attention_values", score_flops, 0);
            t.attention_flops += 2 * score_flops;
            row(bp + "attn_pw", 2 * M * C * C * L, C * C + C);
            row(bp + "ffn", 2 * M * (H * C + C * H) * L, H * C + H + C * H + C);
            row(bp + "layernorm", 0, 4 * C);
        }
        if (grp.downsample_after) {
            const int64_t Lh = (L + 1) / 2;
            row(p + "down", 2 * M * C * 2 * Lh, 2 * C);
            L = Lh;
        }
    }

    if (c.upsampler == Upsampler::PixelShuffle) {
        const int64_t r = T / L;
        row("recon.pixel_shuffle", 0, 0);
        row("recon.pw", 2 * M * (C / r) * T, C / r + 1);
    } else {
        row("recon.linear", 2 * M * T * C * L, M * T * C * L + M * T);
    }
    return t;
}

Tensor baseline_imputer(const SeriesBatch& batch, BaselineKind kind) {
    const int B = batch.batch(), M = batch.vars(), T = batch.len();
    Tensor out = batch.x;
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m) {
            std::vector<int> obs;
            for (int t = 0; t < T; ++t)
                if (batch.omega.at({b, m, t}) != 0.0) obs.push_back(t);
            if (obs.empty()) {
                for (int t = 0; t < T; ++t) out.at({b, m, t}) = 0.0;
                continue;
            }
            double mean = 0.0;
            for (int t : obs) mean += batch.x.at({b, m, t});
            mean /= static_cast<double>(obs.size());
            size_t next = 0;
            for (int t = 0; t < T; ++t) {
                if (batch.omega.at({b, m, t}) != 0.0) continue;
                switch (kind) {
                    case BaselineKind::Zero:
                        out.at({b, m, t}) = 0.0;
                        break;
                    case BaselineKind::Mean:
                        out.at({b, m, t}) = mean;
                        break;
                    case BaselineKind::LinearInterp: {
                        while (next < obs.size() && obs[next] < t) ++next;
                        if (next == 0) {
                            out.at({b, m, t}) = batch.x.at({b, m, obs.front()});
                        } else if (next >= obs.size()) {
                            out.at({b, m, t}) = batch.x.at({b, m, obs.back()});
                        } else {
                            const int t0 = obs[next - 1], t1 = obs[next];
                            const double x0 = batch.x.at({b, m, t0});
                            const double x1 = batch.x.at({b, m, t1});
                            out.at({b, m, t}) =
                                x0 + (x1 - x0) * static_cast<double>(t - t0) / (t1 - t0);
                        }
                        break;
                    }
                }
            }
        }
    return out;
}

// ---- serialization ----

void write_report_json(const std::string& path, const EvalReport& r) {
    nlohmann::json j;
    j["scenario"] = r.scenario;
    j["mse"] = r.mse;
    j["mae"] = r.mae;
    j["count"] = r.count;
    j["windows_without_targets"] = r.windows_without_targets;
    j["per_variable"] = nlohmann::json::array();
    for (const auto& pv : r.per_variable)
        j["per_variable"].push_back(
            {{"var", pv.var}, {"mse", pv.mse}, {"mae", pv.mae}, {"count", pv.count}});
    j["attention_from_others"] = r.attention_from_others;
    j["attention_self"] = r.attention_self;
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_report_json: cannot open " + path);
    os << j.dump(2) << "\n";
}

void write_summary_csv(const std::string& path, const std::vector<EvalReport>& reports) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_summary_csv: cannot open " + path);
    os << "scenario,mse,mae,count\n";
    char buf[128];
    for (const auto& r : reports) {
        std::snprintf(buf, sizeof buf, "%s,%.17g,%.17g,%lld\n", r.scenario.c_str(), r.mse, r.mae,
                      static_cast<long long>(r.count));
        os << buf;
    }
}

void write_attention_curve_csv(const std::string& path,
                               const std::vector<AttentionCurvePoint>& curve) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_attention_curve_csv: cannot open " + path);
    os << "layer,ratio,mean_weight\n";
    char buf[96];
    for (const auto& p : curve) {
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g\n", p.layer, p.ratio, p.mean_weight);
        os << buf;
    }
}

void write_flops_csv(const std::string& path, const FlopTable& table) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_flops_csv: cannot open " + path);
    os << "component,flops,params\n";
    for (const auto& r : table.rows)
        os << r.component << "," << r.flops << "," << r.params << "\n";
    os << "total," << table.total_flops << "," << table.total_params << "\n";
}

}  // namespace t1
