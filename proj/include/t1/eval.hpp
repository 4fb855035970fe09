// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_EVAL_HPP
#define T1_EVAL_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "t1/data_io.hpp"
#include "t1/masking.hpp"
#include "t1/model.hpp"

namespace t1 {

struct Metrics {
    double mse = 0.0;
    double mae = 0.0;
    int64_t count = 0;
};

// means over exactly the target_mask!=0 set; throws on an empty target set.
Metrics metrics(const Tensor& x_hat, const Tensor& y, const Tensor& target_mask);

struct PerVariableMetrics {
    int var = 0;
    double mse = 0.0;
    double mae = 0.0;
    int64_t count = 0;
};

struct EvalReport {
    std::string scenario;
    double mse = 0.0;
    double mae = 0.0;
    int64_t count = 0;
    std::vector<PerVariableMetrics> per_variable;
    // [layer][var]: mean post-softmax attention onto var's key, split into
    // weight from other variables' queries and the self weight.
    std::vector<std::vector<double>> attention_from_others;
    std::vector<std::vector<double>> attention_self;
    int windows_without_targets = 0;
};

// Per test window: hide extra observed entries per spec (seed derived from
// (run_seed, window index)), impute with the reduced mask, score exactly the
// newly hidden entries.
EvalReport evaluate_scenario(ParamStore& params, const ModelConfig& config,
                             const WindowSet& test_windows, const MaskSpec& spec,
                             uint64_t run_seed);

struct AttentionCurvePoint {
    int layer = 0;
    double ratio = 0.0;
    double mean_weight = 0.0;  // from other variables' queries onto the target key
};

std::vector<AttentionCurvePoint> attention_vs_missingness(
    ParamStore& params, const ModelConfig& config, const WindowSet& windows, int target_var,
    const std::vector<double>& ratios, double other_ratio, uint64_t seed);

struct FlopRow {
    std::string component;
    int64_t flops = 0;   // multiply-accumulates * 2, per sample
    int64_t params = 0;
};

struct FlopTable {
    std::vector<FlopRow> rows;
    int64_t total_flops = 0;
    int64_t total_params = 0;
    int64_t attention_flops = 0;  // score + value stages summed over blocks
};

FlopTable count_flops_and_params(const ModelConfig& config);

enum class BaselineKind { Mean, LinearInterp, Zero };

// Full prediction: observed entries pass through, missing entries filled by
// the baseline rule. Fully missing variables fall back to 0.
Tensor baseline_imputer(const SeriesBatch& batch, BaselineKind kind);

// score a baseline under the same per-window masking protocol as
// evaluate_scenario.
EvalReport evaluate_scenario_baseline(BaselineKind kind, const WindowSet& test_windows,
                                      const MaskSpec& spec, uint64_t run_seed);

// ---- serialization ----
void write_report_json(const std::string& path, const EvalReport& report);
void write_summary_csv(const std::string& path, const std::vector<EvalReport>& reports);
void write_attention_curve_csv(const std::string& path,
                               const std::vector<AttentionCurvePoint>& curve);
void write_flops_csv(const std::string& path, const FlopTable& table);

}  // namespace t1

#endif
