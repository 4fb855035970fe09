// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_MASKING_HPP
#define T1_MASKING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "t1/tensor.hpp"

namespace t1 {

// Counter-based generator: every draw is a pure hash of (seed, b, m, t, tag),
// so masks are identical regardless of evaluation order or platform.
namespace rng {
uint64_t mix(uint64_t seed, uint64_t a, uint64_t b, uint64_t c, uint64_t tag);
double u01(uint64_t h);  // [0,1)
inline double uniform(uint64_t seed, uint64_t a, uint64_t b, uint64_t c, uint64_t tag) {
    return u01(mix(seed, a, b, c, tag));
}
// draw tags
constexpr uint64_t kPoint = 1;
constexpr uint64_t kBlockStart = 2;
constexpr uint64_t kBlockLen = 3;
constexpr uint64_t kTraining = 4;
constexpr uint64_t kCompound = 5;
}  // namespace rng

enum class MaskKind { Point, Block, Compound };

struct MaskSpec {
    MaskKind kind = MaskKind::Point;
    double ratio = 0.1;             // point ratio; for block: point component
    double block_start_prob = 0.0015;
    int min_len = 24;
    int max_len = 96;
    double extra_point_ratio = 0.0;  // compound: extra masking on observed
    uint64_t seed = 0;
    std::string name() const;
};

struct MaskPair {
    Tensor omega;  // 1 = observed
    Tensor psi;    // 0 = artificially masked for supervision; psi=1 wherever omega=0
};

// shape {B,M,T}; each entry independently 0 with probability ratio.
Tensor gen_point_mask(const std::vector<int>& shape, double ratio, uint64_t seed);

// point missing at point_ratio, then left-to-right scan starting missing
// blocks with probability block_start_prob outside active blocks, length
// uniform in [min_len, max_len] truncated at T.
Tensor gen_block_mask(const std::vector<int>& shape, double point_ratio,
                      double block_start_prob, int min_len, int max_len, uint64_t seed);

struct TrainingMask {
    Tensor psi;
    bool empty_sample = false;  // some (b) slice had zero observed entries
};

// psi = 0 with probability mask_ratio where omega = 1; psi = 1 elsewhere.
TrainingMask gen_training_mask(const Tensor& omega, double mask_ratio, uint64_t seed);

struct CompoundMask {
    Tensor omega;    // reduced observation mask
    Tensor targets;  // 1 exactly at newly hidden (originally observed) entries
};

CompoundMask compound_mask(const Tensor& natural_omega, double extra_ratio, uint64_t seed);

// evaluation-mask dispatch: applies spec on top of natural_omega.
CompoundMask gen_eval_mask(const Tensor& natural_omega, const MaskSpec& spec, uint64_t seed);

}  // namespace t1

#endif
