// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>
#include <exception>
#include <string>

#include "CLI11.hpp"
#include "t1/run.hpp"

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;

int finish(const t1::RunOutcome& out) {
    if (!out.message.empty()) std::printf("%s\n", out.message.c_str());
    if (out.ok) return kExitOk;
    std::fprintf(stderr, "error: %s\n", out.message.c_str());
    return kExitNumeric;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"T1 time-series imputation"};
    app.require_subcommand(1);

    std::string config_path, checkpoint_path, out_dir, csv_in, csv_out;
    uint64_t seed = 0;
    bool have_seed = false;
    int threads = 1;

    auto add_common = [&](CLI::App* sub, bool need_config) {
        auto* c = sub->add_option("--config", config_path, "run config JSON");
        if (need_config) c->required();
        sub->add_option("--out", out_dir, "output directory override");
        sub->add_option_function<uint64_t>(
            "--seed", [&](uint64_t s) { seed = s; have_seed = true; }, "run seed override");
        sub->add_option("--threads", threads, "worker threads (current build is single-threaded)");
    };

    auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
    add_common(train, true);

    auto* eval = app.add_subcommand("evaluate", "score a checkpoint under masking scenarios");
    add_common(eval, true);
    eval->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

    auto* impute = app.add_subcommand("impute", "fill missing cells of a CSV");
    impute->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    impute->add_option("--input", csv_in, "input CSV")->required();
    impute->add_option("--output", csv_out, "output CSV")->required();

    auto* analyze = app.add_subcommand("analyze", "attention curves and cost accounting");
    add_common(analyze, true);
    analyze->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        if (impute->parsed()) return finish(t1::run_impute(checkpoint_path, csv_in, csv_out));

        t1::RunConfig cfg = t1::load_run_config(config_path);
        if (have_seed) cfg.seed = seed;
        if (!out_dir.empty()) cfg.output_dir = out_dir;

        if (train->parsed()) return finish(t1::run_train(cfg));
        if (eval->parsed()) return finish(t1::run_evaluate(cfg, checkpoint_path));
        return finish(t1::run_analyze(cfg, checkpoint_path));
    } catch (const std::invalid_argument& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitConfig;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitNumeric;
    }
}
