// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_MODEL_HPP
#define T1_MODEL_HPP

#include <string>
#include <utility>
#include <vector>

#include "t1/autodiff.hpp"
#include "t1/series.hpp"
#include "t1/tensor.hpp"

namespace t1 {

enum class Upsampler { PixelShuffle, Linear };

struct BlockGroup {
    int num_blocks = 2;
    int large_kernel = 71;
    int small_kernel = 5;
    bool downsample_after = true;
};

struct ModelConfig {
    int channels = 128;
    std::vector<BlockGroup> groups = {{2, 71, 5, true}, {2, 31, 5, false}};
    double ffn_ratio = 1.0;
    int channels_per_head = 1;
    int embed_kernel = 2;
    int embed_stride = 1;
    bool use_mask_channel = true;
    Upsampler upsampler = Upsampler::PixelShuffle;
    int seq_len = 96;
    int num_vars = 0;

    int total_blocks() const;
    // latent length after all groups (product of stride-2 downsamples).
    int final_len() const;
    void validate() const;
};

// reference length for the kernel-size scaling rule.
constexpr int kReferenceSeqLen = 96;

// large kernels scale by floor(new_T/96 * k), clamped to >= 1; small kernels
// stay fixed. seq_len is set to new_T.
ModelConfig scale_kernels(const ModelConfig& config, int new_T,
                          std::vector<std::string>* warnings = nullptr);

struct NormStats {
    Tensor mu;     // [B,M]
    Tensor sigma;  // [B,M], floored at eps
    Tensor valid;  // [B,M], 1 when any observed value present
};

constexpr double kNormEps = 1e-5;

// per-(b,m) mean/std over positions with omega_eff=1; x_norm zero at
// unobserved positions. Rows with no observed entries get mu=0, sigma=1.
std::pair<Tensor, NormStats> masked_instance_norm(const Tensor& x, const Tensor& omega_eff);

struct ForwardTrace {
    std::vector<Tensor> attention_weights;  // per block, [B,n_h,M,M]
    std::vector<int> latent_lengths;        // per stage
};

// deterministic parameter init for the given config.
ParamStore init_params(const ModelConfig& config, uint64_t seed);

struct TapeForward {
    Tape::NodeId x_hat;  // [B,M,T]
    NormStats stats;
    ForwardTrace trace;
};

// full pipeline on an existing tape (training path).
TapeForward forward_tape(Tape& tape, const SeriesBatch& batch, const ModelConfig& config,
                         ParamStore& params);

// inference: builds a throwaway tape internally.
std::pair<Tensor, ForwardTrace> forward(const SeriesBatch& batch, const ModelConfig& config,
                                        ParamStore& params);

// ---- checkpoint container: "T1CKPT1" + config + named f64 payloads ----
void save_checkpoint(const std::string& path, const ModelConfig& config, const ParamStore& params);
std::pair<ModelConfig, ParamStore> load_checkpoint(const std::string& path);

std::string model_config_to_json(const ModelConfig& config);
ModelConfig model_config_from_json(const std::string& text);

}  // namespace t1

#endif
