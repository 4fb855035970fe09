// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_DATA_IO_HPP
#define T1_DATA_IO_HPP

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "t1/series.hpp"
#include "t1/tensor.hpp"

namespace t1 {

// full series, variables as rows.
struct SeriesMatrix {
    Tensor values;  // [M,N], 0 at missing entries
    Tensor omega;   // [M,N]
    std::vector<std::string> names;  // column names, may be empty
};

// Rectangular numeric CSV; empty cells / NaN / nan / null are missing.
// time_column (by name) is dropped; value_columns restricts and orders the
// loaded columns when non-empty.
SeriesMatrix load_csv(const std::string& path, const std::string& time_column = "",
                      const std::vector<std::string>& value_columns = {});
void write_csv(const std::string& path, const SeriesMatrix& series);

struct Window {
    Tensor x;      // [M,T]
    Tensor omega;  // [M,T]
    int start = 0;  // first timestamp within the source series
};
using WindowSet = std::vector<Window>;

struct WindowSplitResult {
    WindowSet train, valid, test;
    std::vector<std::string> warnings;
};

// chronological split into (train,valid,test) fractions, then sliding
// windows within each segment; windows never straddle segment boundaries.
WindowSplitResult window_split(const SeriesMatrix& series, int T, int train_stride,
                               int eval_stride, std::array<double, 3> fractions);

struct SyntheticSpec {
    enum class Kind { CorrelatedSines, ArProcess };
    Kind kind = Kind::CorrelatedSines;
    int num_vars = 8;
    int seq_len = 96;
    int num_windows = 384;
    // correlated sines
    std::vector<double> freqs = {1.0, 2.0, 3.0, 4.0};  // cycles per window, reused mod M
    double phase_coupling = 0.9;  // 1 = shared phase, 0 = independent phases
    double noise_sd = 0.1;
    // AR process
    std::vector<double> ar_coeffs = {0.6, 0.2};
    double cross_coupling = 0.1;
    uint64_t seed = 0;
};

WindowSet gen_synthetic(const SyntheticSpec& spec);

// assemble a batch from windows at the given indices.
SeriesBatch make_batch(const WindowSet& windows, const std::vector<int>& indices);

// raw CSV access (cell text preserved), shared with the impute path.
std::vector<std::vector<std::string>> read_csv_rows(const std::string& path);
bool csv_missing_token(const std::string& cell);
bool csv_header_row(const std::vector<std::string>& row);

}  // namespace t1

#endif
