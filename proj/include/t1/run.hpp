// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_RUN_HPP
#define T1_RUN_HPP

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "t1/data_io.hpp"
#include "t1/eval.hpp"
#include "t1/masking.hpp"
#include "t1/model.hpp"
#include "t1/training.hpp"

namespace t1 {

struct WindowConfig {
    int train_stride = 1;
    int eval_stride = 0;  // 0 -> seq_len (non-overlapping)
    std::array<double, 3> splits = {0.7, 0.1, 0.2};
};

struct DataConfig {
    bool synthetic = true;
    std::string csv_path;
    std::string time_column;
    std::vector<std::string> value_columns;
    SyntheticSpec synth;
    WindowConfig window;
};

struct AnalyzeConfig {
    int target_var = 0;
    std::vector<double> ratios = {0.1, 0.3, 0.5, 0.7};
    double other_ratio = 0.4;
};

struct RunConfig {
    ModelConfig model;
    TrainConfig train;
    DataConfig data;
    std::vector<MaskSpec> scenarios;
    AnalyzeConfig analyze;
    std::string output_dir = "out";
    uint64_t seed = 1;
};

RunConfig run_config_from_json(const std::string& text);
std::string run_config_to_json(const RunConfig& cfg);
RunConfig load_run_config(const std::string& path);

struct DataBundle {
    WindowSet train, valid, test;
};

DataBundle load_data(const RunConfig& cfg);

// derived sub-seeds so one run seed drives everything
uint64_t derive_seed(uint64_t run_seed, uint64_t purpose);
constexpr uint64_t kSeedInit = 1;
constexpr uint64_t kSeedTrain = 2;
constexpr uint64_t kSeedEval = 3;
constexpr uint64_t kSeedData = 4;

struct RunOutcome {
    bool ok = true;
    std::string message;
};

// train + write checkpoint.t1ckpt, history.txt, resolved_config.json
RunOutcome run_train(const RunConfig& cfg);
// evaluate every scenario; writes per-scenario JSON and summary.csv
RunOutcome run_evaluate(const RunConfig& cfg, const std::string& checkpoint_path);
// window, impute, and fill missing CSV cells; observed cells kept verbatim
RunOutcome run_impute(const std::string& checkpoint_path, const std::string& csv_in,
                      const std::string& csv_out);
// attention curves + FLOP accounting CSVs
RunOutcome run_analyze(const RunConfig& cfg, const std::string& checkpoint_path);

}  // namespace t1

#endif
