// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/run.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "json.hpp"

namespace t1 {

using nlohmann::json;

uint64_t derive_seed(uint64_t run_seed, uint64_t purpose) {
    return rng::mix(run_seed, purpose, 0, 0, 99);
}

namespace {

json mask_spec_to_json(const MaskSpec& s) {
    json j;
    switch (s.kind) {
        case MaskKind::Point:
            j["kind"] = "point";
            j["ratio"] = s.ratio;
            break;
        case MaskKind::Block:
            j["kind"] = "block";
            j["ratio"] = s.ratio;
            j["block_start_prob"] = s.block_start_prob;
            j["min_len"] = s.min_len;
            j["max_len"] = s.max_len;
            break;
        case MaskKind::Compound:
            j["kind"] = "compound";
            j["extra_point_ratio"] = s.extra_point_ratio;
            break;
    }
    j["seed"] = s.seed;
    return j;
}

MaskSpec mask_spec_from_json(const json& j) {
    MaskSpec s;
    const std::string kind = j.value("kind", std::string("point"));
    if (kind == "point")
        s.kind = MaskKind::Point;
    else if (kind == "block")
        s.kind = MaskKind::Block;
    else if (kind == "compound")
        s.kind = MaskKind::Compound;
    else
        throw std::invalid_argument("config: unknown mask kind '" + kind + "'");
    s.ratio = j.value("ratio", s.ratio);
    s.block_start_prob = j.value("block_start_prob", s.block_start_prob);
    s.min_len = j.value("min_len", s.min_len);
    s.max_len = j.value("max_len", s.max_len);
    s.extra_point_ratio = j.value("extra_point_ratio", s.extra_point_ratio);
    s.seed = j.value("seed", s.seed);
    return s;
}

}  // namespace

RunConfig run_config_from_json(const std::string& text) {
    json j = json::parse(text);
    RunConfig c;
    c.seed = j.value("seed", c.seed);
    c.output_dir = j.value("output_dir", c.output_dir);
    if (j.contains("model")) c.model = model_config_from_json(j.at("model").dump());
    if (j.contains("train")) {
        const json& t = j.at("train");
        c.train.lr = t.value("lr", c.train.lr);
        c.train.beta1 = t.value("beta1", c.train.beta1);
        c.train.beta2 = t.value("beta2", c.train.beta2);
        c.train.adam_eps = t.value("adam_eps", c.train.adam_eps);
        c.train.batch_size = t.value("batch_size", c.train.batch_size);
        c.train.max_epochs = t.value("max_epochs", c.train.max_epochs);
        c.train.patience = t.value("patience", c.train.patience);
        c.train.train_mask_ratio = t.value("train_mask_ratio", c.train.train_mask_ratio);
    }
    if (j.contains("data")) {
        const json& d = j.at("data");
        const std::string kind = d.value("kind", std::string("synthetic"));
        if (kind == "synthetic") {
            c.data.synthetic = true;
            if (d.contains("synthetic")) {
                const json& s = d.at("synthetic");
                const std::string sk = s.value("kind", std::string("correlated_sines"));
                if (sk == "correlated_sines")
                    c.data.synth.kind = SyntheticSpec::Kind::CorrelatedSines;
                else if (sk == "ar_process")
                    c.data.synth.kind = SyntheticSpec::Kind::ArProcess;
                else
                    throw std::invalid_argument("config: unknown synthetic kind '" + sk + "'");
                c.data.synth.num_vars = s.value("num_vars", c.data.synth.num_vars);
                c.data.synth.seq_len = s.value("seq_len", c.data.synth.seq_len);
                c.data.synth.num_windows = s.value("num_windows", c.data.synth.num_windows);
                c.data.synth.freqs = s.value("freqs", c.data.synth.freqs);
                c.data.synth.phase_coupling = s.value("phase_coupling", c.data.synth.phase_coupling);
                c.data.synth.noise_sd = s.value("noise_sd", c.data.synth.noise_sd);
                c.data.synth.ar_coeffs = s.value("ar_coeffs", c.data.synth.ar_coeffs);
                c.data.synth.cross_coupling = s.value("cross_coupling", c.data.synth.cross_coupling);
                c.data.synth.seed = s.value("seed", c.data.synth.seed);
            }
        } else if (kind == "csv") {
            c.data.synthetic = false;
            c.data.csv_path = d.value("csv_path", std::string());
            if (c.data.csv_path.empty())
                throw std::invalid_argument("config: data.kind=csv requires csv_path");
            c.data.time_column = d.value("time_column", std::string());
            c.data.value_columns = d.value("value_columns", std::vector<std::string>{});
        } else {
            throw std::invalid_argument("config: unknown data kind '" + kind + "'");
        }
        if (d.contains("window")) {
            const json& w = d.at("window");
            c.data.window.train_stride = w.value("train_stride", c.data.window.train_stride);
            c.data.window.eval_stride = w.value("eval_stride", c.data.window.eval_stride);
            if (w.contains("splits")) {
                auto v = w.at("splits").get<std::vector<double>>();
                if (v.size() != 3) throw std::invalid_argument("config: window.splits needs 3 entries");
                c.data.window.splits = {v[0], v[1], v[2]};
            }
        }
    }
    if (j.contains("scenarios"))
        for (const auto& sj : j.at("scenarios")) c.scenarios.push_back(mask_spec_from_json(sj));
    if (j.contains("analyze")) {
        const json& a = j.at("analyze");
        c.analyze.target_var = a.value("target_var", c.analyze.target_var);
        c.analyze.ratios = a.value("ratios", c.analyze.ratios);
        c.analyze.other_ratio = a.value("other_ratio", c.analyze.other_ratio);
    }
    return c;
}

std::string run_config_to_json(const RunConfig& c) {
    json j;
    j["seed"] = c.seed;
    j["output_dir"] = c.output_dir;
    j["model"] = json::parse(model_config_to_json(c.model));
    j["train"] = {{"lr", c.train.lr},
                  {"beta1", c.train.beta1},
                  {"beta2", c.train.beta2},
                  {"adam_eps", c.train.adam_eps},
                  {"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},
                  {"train_mask_ratio", c.train.train_mask_ratio}};
    json d;
    if (c.data.synthetic) {
        d["kind"] = "synthetic";
        d["synthetic"] = {
            {"kind", c.data.synth.kind == SyntheticSpec::Kind::CorrelatedSines ? "correlated_sines"
                                                                               : "ar_process"},
            {"num_vars", c.data.synth.num_vars},
            {"seq_len", c.data.synth.seq_len},
            {"num_windows", c.data.synth.num_windows},
            {"freqs", c.data.synth.freqs},
            {"phase_coupling", c.data.synth.phase_coupling},
            {"noise_sd", c.data.synth.noise_sd},
            {"ar_coeffs", c.data.synth.ar_coeffs},
            {"cross_coupling", c.data.synth.cross_coupling},
            {"seed", c.data.synth.seed}};
    } else {
        d["kind"] = "csv";
        d["csv_path"] = c.data.csv_path;
        d["time_column"] = c.data.time_column;
        d["value_columns"] = c.data.value_columns;
    }
    d["window"] = {{"train_stride", c.data.window.train_stride},
                   {"eval_stride", c.data.window.eval_stride},
                   {"splits", std::vector<double>{c.data.window.splits[0], c.data.window.splits[1],
                                                  c.data.window.splits[2]}}};
    j["data"] = d;
    j["scenarios"] = json::array();
    for (const auto& s : c.scenarios) j["scenarios"].push_back(mask_spec_to_json(s));
    j["analyze"] = {{"target_var", c.analyze.target_var},
                    {"ratios", c.analyze.ratios},
                    {"other_ratio", c.analyze.other_ratio}};
    return j.dump(2);
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("config: cannot open " + path);
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    try {
        return run_config_from_json(text);
    } catch (const json::exception& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
}

DataBundle load_data(const RunConfig& cfg) {
    DataBundle out;
    if (cfg.data.synthetic) {
        SyntheticSpec spec = cfg.data.synth;
        if (spec.seed == 0) spec.seed = derive_seed(cfg.seed, kSeedData);
        WindowSet all = gen_synthetic(spec);
        const int n = static_cast<int>(all.size());
        const int n_train = static_cast<int>(std::floor(cfg.data.window.splits[0] * n));
        const int n_valid = static_cast<int>(std::floor(cfg.data.window.splits[1] * n));
        for (int i = 0; i < n; ++i) {
            if (i < n_train)
                out.train.push_back(all[static_cast<size_t>(i)]);
            else if (i < n_train + n_valid)
                out.valid.push_back(all[static_cast<size_t>(i)]);
            else
                out.test.push_back(all[static_cast<size_t>(i)]);
        }
    } else {
        SeriesMatrix series = load_csv(cfg.data.csv_path, cfg.data.time_column, cfg.data.value_columns);
        const int eval_stride =
            cfg.data.window.eval_stride > 0 ? cfg.data.window.eval_stride : cfg.model.seq_len;
        WindowSplitResult r = window_split(series, cfg.model.seq_len, cfg.data.window.train_stride,
                                           eval_stride, cfg.data.window.splits);
        out.train = std::move(r.train);
        out.valid = std::move(r.valid);
        out.test = std::move(r.test);
    }
    return out;
}

namespace {

// fill model dims from the data when left unset
RunConfig resolve(RunConfig cfg, const DataBundle& data) {
    const WindowSet* any = !data.train.empty()   ? &data.train
                           : !data.valid.empty() ? &data.valid
                                                 : &data.test;
    if (any->empty()) throw std::invalid_argument("config: dataset produced no windows");
    const int M = (*any)[0].x.dim(0), T = (*any)[0].x.dim(1);
    if (cfg.model.num_vars == 0) cfg.model.num_vars = M;
    if (cfg.model.num_vars != M)
        throw std::invalid_argument("config: model.num_vars=" + std::to_string(cfg.model.num_vars) +
                                    " but data has " + std::to_string(M) + " variables");
    if (cfg.model.seq_len != T)
        throw std::invalid_argument("config: model.seq_len=" + std::to_string(cfg.model.seq_len) +
                                    " but windows have length " + std::to_string(T));
    return cfg;
}

}  // namespace

RunOutcome run_train(const RunConfig& cfg_in) {
    DataBundle data = load_data(cfg_in);
    RunConfig cfg = resolve(cfg_in, data);
    TrainConfig tcfg = cfg.train;
    tcfg.seed = derive_seed(cfg.seed, kSeedTrain);
    ParamStore params = init_params(cfg.model, derive_seed(cfg.seed, kSeedInit));
    TrainResult r = train(data.train, data.valid, cfg.model, tcfg, params);

    std::filesystem::create_directories(cfg.output_dir);
    write_history(cfg.output_dir + "/history.txt", r.history);
    save_checkpoint(cfg.output_dir + "/checkpoint.t1ckpt", cfg.model, params);
    std::ofstream os(cfg.output_dir + "/resolved_config.json");
    os << run_config_to_json(cfg) << "\n";

    if (r.aborted) return {false, "training aborted: " + r.abort_reason};
    return {true, "best epoch " + std::to_string(r.best_epoch)};
}

RunOutcome run_evaluate(const RunConfig& cfg_in, const std::string& checkpoint_path) {
    auto [mcfg, params] = load_checkpoint(checkpoint_path);
    RunConfig cfg = cfg_in;
    cfg.model = mcfg;
    DataBundle data = load_data(cfg);
    cfg = resolve(cfg, data);
    if (cfg.scenarios.empty()) throw std::invalid_argument("config: no evaluation scenarios");
    std::filesystem::create_directories(cfg.output_dir);
    std::vector<EvalReport> reports;
    for (size_t i = 0; i < cfg.scenarios.size(); ++i) {
        MaskSpec spec = cfg.scenarios[i];
        const uint64_t run_seed =
            spec.seed != 0 ? spec.seed : rng::mix(derive_seed(cfg.seed, kSeedEval), i, 0, 0, 7);
        EvalReport rep = evaluate_scenario(params, cfg.model, data.test, spec, run_seed);
        write_report_json(cfg.output_dir + "/report_" + rep.scenario + ".json", rep);
        reports.push_back(std::move(rep));
    }
    write_summary_csv(cfg.output_dir + "/summary.csv", reports);
    return {true, std::to_string(reports.size()) + " scenarios"};
}

RunOutcome run_impute(const std::string& checkpoint_path, const std::string& csv_in,
                      const std::string& csv_out) {
    auto [mcfg, params] = load_checkpoint(checkpoint_path);
    auto rows = read_csv_rows(csv_in);
    if (rows.empty()) throw std::invalid_argument("impute: empty input " + csv_in);
    const bool header = csv_header_row(rows[0]);
    SeriesMatrix series = load_csv(csv_in);
    const int M = series.values.dim(0), N = series.values.dim(1);
    if (M != mcfg.num_vars)
        throw std::invalid_argument("impute: input has " + std::to_string(M) +
                                    " columns but checkpoint expects " +
                                    std::to_string(mcfg.num_vars));
    const int T = mcfg.seq_len;

    // non-overlapping windows; short tail padded with missing, truncated on output
    Tensor filled = series.values;
    for (int start = 0; start < N; start += T) {
        SeriesBatch batch;
        batch.x = Tensor({1, M, T});
        batch.omega = Tensor({1, M, T});
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T && start + t < N; ++t) {
                batch.x.at({0, m, t}) = series.values.at({m, start + t});
                batch.omega.at({0, m, t}) = series.omega.at({m, start + t});
            }
        auto [x_hat, trace] = forward(batch, mcfg, params);
        (void)trace;
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T && start + t < N; ++t)
                if (series.omega.at({m, start + t}) == 0.0)
                    filled.at({m, start + t}) = x_hat.at({0, m, t});
    }

    std::ofstream os(csv_out);
    if (!os) throw std::runtime_error("impute: cannot open " + csv_out + " for writing");
    char buf[40];
    for (size_t r = 0; r < rows.size(); ++r) {
        if (header && r == 0) {
            for (size_t c = 0; c < rows[0].size(); ++c) os << (c ? "," : "") << rows[0][c];
            os << "\n";
            continue;
        }
        const int n = static_cast<int>(r) - (header ? 1 : 0);
        for (size_t c = 0; c < rows[r].size(); ++c) {
            if (c) os << ",";
            if (csv_missing_token(rows[r][c])) {
                std::snprintf(buf, sizeof buf, "%.17g", filled.at({static_cast<int>(c), n}));
                os << buf;
            } else {
                os << rows[r][c];  // observed cells verbatim
            }
        }
        os << "\n";
    }
    return {true, ""};
}

RunOutcome run_analyze(const RunConfig& cfg_in, const std::string& checkpoint_path) {
    auto [mcfg, params] = load_checkpoint(checkpoint_path);
    RunConfig cfg = cfg_in;
    cfg.model = mcfg;
    DataBundle data = load_data(cfg);
    cfg = resolve(cfg, data);
    std::filesystem::create_directories(cfg.output_dir);
    write_flops_csv(cfg.output_dir + "/flops.csv", count_flops_and_params(cfg.model));
    const WindowSet& windows = data.test.empty() ? data.valid : data.test;
    auto curve = attention_vs_missingness(params, cfg.model, windows, cfg.analyze.target_var,
                                          cfg.analyze.ratios, cfg.analyze.other_ratio,
                                          derive_seed(cfg.seed, kSeedEval));
    write_attention_curve_csv(cfg.output_dir + "/attention_curve.csv", curve);
    return {true, ""};
}

}  // namespace t1
