// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_SERIES_HPP
#define T1_SERIES_HPP

#include <vector>

#include "t1/tensor.hpp"

namespace t1 {

// Batch of multivariate windows. omega: 1 = observed. psi: 0 = artificially
// masked for supervision; empty in evaluation mode. Entries with omega=0 may
// hold any value; the pipeline never reads them.
struct SeriesBatch {
    Tensor x;      // [B,M,T]
    Tensor omega;  // [B,M,T]
    Tensor psi;    // [B,M,T] or empty
    std::vector<int> meta;  // source window ids

    int batch() const { return x.dim(0); }
    int vars() const { return x.dim(1); }
    int len() const { return x.dim(2); }

    // omega AND psi; omega alone when psi is absent.
    Tensor effective_mask() const {
        if (psi.empty()) return omega;
        Tensor eff = omega;
        for (int64_t i = 0; i < eff.size(); ++i)
            if (psi[i] == 0.0) eff[i] = 0.0;
        return eff;
    }
};

}  // namespace t1

#endif
