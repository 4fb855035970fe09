// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/masking.hpp"

#include <cmath>
#include <stdexcept>

namespace t1 {

namespace rng {

static uint64_t splitmix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

uint64_t mix(uint64_t seed, uint64_t a, uint64_t b, uint64_t c, uint64_t tag) {
    uint64_t h = splitmix(seed ^ 0x5851F42D4C957F2DULL);
    h = splitmix(h ^ a);
    h = splitmix(h ^ b);
    h = splitmix(h ^ c);
    h = splitmix(h ^ tag);
    return h;
}

double u01(uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

}  // namespace rng

std::string MaskSpec::name() const {
    char buf[96];
    switch (kind) {
        case MaskKind::Point:
            std::snprintf(buf, sizeof buf, "point_%g", ratio);
            break;
        case MaskKind::Block:
            std::snprintf(buf, sizeof buf, "block_%g_%g_%d_%d", ratio, block_start_prob, min_len, max_len);
            break;
        case MaskKind::Compound:
            std::snprintf(buf, sizeof buf, "compound_%g", extra_point_ratio);
            break;
    }
    return buf;
}

static void expect_bmt(const std::vector<int>& shape) {
    if (shape.size() != 3) throw std::invalid_argument("mask shape must be {B,M,T}");
}

Tensor gen_point_mask(const std::vector<int>& shape, double ratio, uint64_t seed) {
    expect_bmt(shape);
    if (ratio < 0.0 || ratio > 1.0) throw std::invalid_argument("gen_point_mask: ratio outside [0,1]");
    const int B = shape[0], M = shape[1], T = shape[2];
    Tensor mask({B, M, T});
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t)
                mask.at({b, m, t}) =
                    rng::uniform(seed, static_cast<uint64_t>(b), static_cast<uint64_t>(m),
                                 static_cast<uint64_t>(t), rng::kPoint) < ratio
                        ? 0.0
                        : 1.0;
    return mask;
}

Tensor gen_block_mask(const std::vector<int>& shape, double point_ratio,
                      double block_start_prob, int min_len, int max_len, uint64_t seed) {
    expect_bmt(shape);
    const int B = shape[0], M = shape[1], T = shape[2];
    if (min_len < 1 || min_len > max_len) throw std::invalid_argument("gen_block_mask: bad length range");
    if (max_len > T) throw std::invalid_argument("gen_block_mask: max_len exceeds T");
    Tensor mask = gen_point_mask(shape, point_ratio, seed);
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m) {
            int in_block_until = 0;
            for (int t = 0; t < T; ++t) {
                if (t < in_block_until) {
                    mask.at({b, m, t}) = 0.0;
                    continue;
                }
                const double u = rng::uniform(seed, static_cast<uint64_t>(b), static_cast<uint64_t>(m),
                                              static_cast<uint64_t>(t), rng::kBlockStart);
                if (u < block_start_prob) {
                    const double ul = rng::uniform(seed, static_cast<uint64_t>(b), static_cast<uint64_t>(m),
                                                   static_cast<uint64_t>(t), rng::kBlockLen);
                    const int span = max_len - min_len + 1;
                    int len = min_len + static_cast<int>(ul * span);
                    if (len > max_len) len = max_len;  // guard ul == 1-ulp
                    in_block_until = t + len;
                    mask.at({b, m, t}) = 0.0;
                }
            }
        }
    return mask;
}

TrainingMask gen_training_mask(const Tensor& omega, double mask_ratio, uint64_t seed) {
    expect_bmt(omega.shape());
    if (mask_ratio <= 0.0 || mask_ratio >= 1.0)
        throw std::invalid_argument("gen_training_mask: mask_ratio outside (0,1)");
    const int B = omega.dim(0), M = omega.dim(1), T = omega.dim(2);
    TrainingMask out;
    out.psi = Tensor::full({B, M, T}, 1.0);
    for (int b = 0; b < B; ++b) {
        int64_t observed = 0;
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t)
                if (omega.at({b, m, t}) != 0.0) {
                    ++observed;
                    if (rng::uniform(seed, static_cast<uint64_t>(b), static_cast<uint64_t>(m),
                                     static_cast<uint64_t>(t), rng::kTraining) < mask_ratio)
                        out.psi.at({b, m, t}) = 0.0;
                }
        if (observed == 0) out.empty_sample = true;
    }
    return out;
}

CompoundMask compound_mask(const Tensor& natural_omega, double extra_ratio, uint64_t seed) {
    expect_bmt(natural_omega.shape());
    if (extra_ratio < 0.0 || extra_ratio > 1.0)
        throw std::invalid_argument("compound_mask: extra_ratio outside [0,1]");
    const int B = natural_omega.dim(0), M = natural_omega.dim(1), T = natural_omega.dim(2);
    CompoundMask out;
    out.omega = natural_omega;
    out.targets = Tensor({B, M, T});
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t)
                if (natural_omega.at({b, m, t}) != 0.0 &&
                    rng::uniform(seed, static_cast<uint64_t>(b), static_cast<uint64_t>(m),
                                 static_cast<uint64_t>(t), rng::kCompound) < extra_ratio) {
                    out.omega.at({b, m, t}) = 0.0;
                    out.targets.at({b, m, t}) = 1.0;
                }
    return out;
}

CompoundMask gen_eval_mask(const Tensor& natural_omega, const MaskSpec& spec, uint64_t seed) {
    switch (spec.kind) {
        case MaskKind::Point:
            return compound_mask(natural_omega, spec.ratio, seed);
        case MaskKind::Compound:
            return compound_mask(natural_omega, spec.extra_point_ratio, seed);
        case MaskKind::Block: {
            Tensor pattern = gen_block_mask(natural_omega.shape(), spec.ratio, spec.block_start_prob,
                                            spec.min_len, spec.max_len, seed);
            CompoundMask out;
            out.omega = natural_omega;
            out.targets = Tensor(natural_omega.shape());
            for (int64_t i = 0; i < pattern.size(); ++i)
                if (natural_omega[i] != 0.0 && pattern[i] == 0.0) {
                    out.omega[i] = 0.0;
                    out.targets[i] = 1.0;
                }
            return out;
        }
    }
    throw std::logic_error("gen_eval_mask: unreachable");
}

}  // namespace t1
