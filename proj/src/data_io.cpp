// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "t1/masking.hpp"

namespace t1 {

namespace {

bool is_missing_token(const std::string& s) {
    return s.empty() || s == "NaN" || s == "nan" || s == "null";
}

bool parse_number(const std::string& s, double* out) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0') return false;
    *out = v;
    return true;
}

std::vector<std::string> split_row(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream ss(line);
    while (std::getline(ss, field, ',')) {
        // trim spaces and CR
        size_t a = field.find_first_not_of(" \t\r");
        size_t b = field.find_last_not_of(" \t\r");
        out.push_back(a == std::string::npos ? "" : field.substr(a, b - a + 1));
    }
    if (!line.empty() && line.back() == ',') out.push_back("");
    return out;
}

constexpr uint64_t kSynthSharedPhase = 20;
constexpr uint64_t kSynthOwnPhase = 21;
constexpr uint64_t kSynthNoiseA = 22;
constexpr uint64_t kSynthNoiseB = 23;
constexpr uint64_t kSynthInit = 24;

double synth_normal(uint64_t seed, uint64_t w, uint64_t m, uint64_t t) {
    const double u1 = 1.0 - rng::u01(rng::mix(seed, w, m, t * 2, kSynthNoiseA));
    const double u2 = rng::u01(rng::mix(seed, w, m, t * 2 + 1, kSynthNoiseB));
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace

bool csv_missing_token(const std::string& cell) { return is_missing_token(cell); }

std::vector<std::vector<std::string>> read_csv_rows(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("read_csv_rows: cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() && is.peek() == EOF) break;
        rows.push_back(split_row(line));
    }
    return rows;
}

bool csv_header_row(const std::vector<std::string>& row) {
    for (const auto& f : row) {
        double v;
        if (!is_missing_token(f) && !parse_number(f, &v)) return true;
    }
    return false;
}

SeriesMatrix load_csv(const std::string& path, const std::string& time_column,
                      const std::vector<std::string>& value_columns) {
    std::ifstream is(path);
    if (!is) throw std::invalid_argument("load_csv: cannot open " + path);
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() && is.peek() == EOF) break;
        rows.push_back(split_row(line));
    }
    if (rows.empty()) throw std::invalid_argument("load_csv: empty file " + path);
    const size_t ncols = rows[0].size();
    for (size_t r = 0; r < rows.size(); ++r)
        if (rows[r].size() != ncols)
            throw std::invalid_argument("load_csv: ragged row " + std::to_string(r + 1) + " in " + path +
                                     " (" + std::to_string(rows[r].size()) + " fields, expected " +
                                     std::to_string(ncols) + ")");

    // header row iff any first-row field is neither numeric nor a missing token
    bool has_header = false;
    for (const auto& f : rows[0]) {
        double v;
        if (!is_missing_token(f) && !parse_number(f, &v)) {
            has_header = true;
            break;
        }
    }
    std::vector<std::string> header(ncols);
    size_t first_data = 0;
    if (has_header) {
        header = rows[0];
        first_data = 1;
    } else {
        for (size_t c = 0; c < ncols; ++c) header[c] = "v" + std::to_string(c);
    }

    std::vector<size_t> cols;
    if (!value_columns.empty()) {
        for (const auto& want : value_columns) {
            auto it = std::find(header.begin(), header.end(), want);
            if (it == header.end())
                throw std::invalid_argument("load_csv: column '" + want + "' not found in " + path);
            cols.push_back(static_cast<size_t>(it - header.begin()));
        }
    } else {
        for (size_t c = 0; c < ncols; ++c)
            if (time_column.empty() || header[c] != time_column) cols.push_back(c);
    }

    const int M = static_cast<int>(cols.size());
    const int N = static_cast<int>(rows.size() - first_data);
    if (M == 0 || N == 0) throw std::invalid_argument("load_csv: no data in " + path);
    SeriesMatrix out;
    out.values = Tensor({M, N});
    out.omega = Tensor({M, N});
    for (int m = 0; m < M; ++m) out.names.push_back(header[cols[static_cast<size_t>(m)]]);
    for (int n = 0; n < N; ++n) {
        const auto& row = rows[first_data + static_cast<size_t>(n)];
        for (int m = 0; m < M; ++m) {
            const std::string& f = row[cols[static_cast<size_t>(m)]];
            if (is_missing_token(f)) continue;
            double v;
            if (!parse_number(f, &v))
                throw std::invalid_argument("load_csv: non-numeric cell '" + f + "' at row " +
                                         std::to_string(first_data + static_cast<size_t>(n) + 1) +
                                         " in " + path);
            out.values.at({m, n}) = v;
            out.omega.at({m, n}) = 1.0;
        }
    }
    return out;
}

void write_csv(const std::string& path, const SeriesMatrix& series) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_csv: cannot open " + path);
    const int M = series.values.dim(0), N = series.values.dim(1);
    if (!series.names.empty()) {
        for (int m = 0; m < M; ++m) os << (m ? "," : "") << series.names[static_cast<size_t>(m)];
        os << "\n";
    }
    char buf[40];
    for (int n = 0; n < N; ++n) {
        for (int m = 0; m < M; ++m) {
            if (m) os << ",";
            if (series.omega.at({m, n}) != 0.0) {
                std::snprintf(buf, sizeof buf, "%.17g", series.values.at({m, n}));
                os << buf;
            }
        }
        os << "\n";
    }
}

WindowSplitResult window_split(const SeriesMatrix& series, int T, int train_stride,
                               int eval_stride, std::array<double, 3> fractions) {
    const int N = series.values.dim(1);
    const int M = series.values.dim(0);
    const double fsum = fractions[0] + fractions[1] + fractions[2];
    if (std::fabs(fsum - 1.0) > 1e-9)
        throw std::invalid_argument("window_split: fractions must sum to 1");
    if (T < 1 || N < T) throw std::invalid_argument("window_split: series shorter than window");
    if (train_stride < 1 || eval_stride < 1) throw std::invalid_argument("window_split: bad stride");

    const int n_train = static_cast<int>(std::floor(fractions[0] * N));
    const int n_valid = static_cast<int>(std::floor(fractions[1] * N));
    const int starts[3] = {0, n_train, n_train + n_valid};
    const int lens[3] = {n_train, n_valid, N - n_train - n_valid};
    const char* names[3] = {"train", "valid", "test"};

    WindowSplitResult out;
    WindowSet* sets[3] = {&out.train, &out.valid, &out.test};
    for (int s = 0; s < 3; ++s) {
        if (fractions[static_cast<size_t>(s)] == 0.0) continue;
        if (lens[s] < T) {
            out.warnings.push_back(std::string(names[s]) + " segment shorter than window; empty");
            continue;
        }
        const int stride = s == 0 ? train_stride : eval_stride;
        for (int w = starts[s]; w + T <= starts[s] + lens[s]; w += stride) {
            Window win;
            win.x = Tensor({M, T});
            win.omega = Tensor({M, T});
            win.start = w;
            for (int m = 0; m < M; ++m)
                for (int t = 0; t < T; ++t) {
                    win.x.at({m, t}) = series.values.at({m, w + t});
                    win.omega.at({m, t}) = series.omega.at({m, w + t});
                }
            sets[s]->push_back(std::move(win));
        }
    }
    return out;
}

WindowSet gen_synthetic(const SyntheticSpec& spec) {
    if (spec.noise_sd < 0) throw std::invalid_argument("gen_synthetic: negative noise_sd");
    const int M = spec.num_vars, T = spec.seq_len;
    WindowSet out;
    out.reserve(static_cast<size_t>(spec.num_windows));

    if (spec.kind == SyntheticSpec::Kind::ArProcess) {
        // stationarity check: spectral radius of the stacked companion system
        const int p = static_cast<int>(spec.ar_coeffs.size());
        if (p < 1) throw std::invalid_argument("gen_synthetic: empty AR coefficients");
        const int dim = M * p;
        std::vector<double> v(static_cast<size_t>(dim), 1.0), nv(v.size());
        double radius = 0.0;
        for (int it = 0; it < 300; ++it) {
            // state layout: [x_t (M); x_{t-1} (M); ...]
            for (int m = 0; m < M; ++m) {
                double acc = 0.0;
                for (int i = 0; i < p; ++i) acc += spec.ar_coeffs[static_cast<size_t>(i)] * v[static_cast<size_t>(i * M + m)];
                for (int mm = 0; mm < M; ++mm)
                    if (mm != m && M > 1)
                        acc += spec.cross_coupling / (M - 1) * v[static_cast<size_t>(mm)];
                nv[static_cast<size_t>(m)] = acc;
            }
            for (int i = 1; i < p; ++i)
                for (int m = 0; m < M; ++m) nv[static_cast<size_t>(i * M + m)] = v[static_cast<size_t>((i - 1) * M + m)];
            double norm = 0.0;
            for (double x : nv) norm += x * x;
            norm = std::sqrt(norm);
            if (norm == 0.0) break;
            radius = norm;
            for (size_t i = 0; i < v.size(); ++i) v[i] = nv[i] / norm;
        }
        if (radius >= 1.0)
            throw std::invalid_argument("gen_synthetic: AR process is not stationary (spectral radius " +
                                        std::to_string(radius) + ")");
        for (int w = 0; w < spec.num_windows; ++w) {
            Window win;
            win.x = Tensor({M, T});
            win.omega = Tensor::full({M, T}, 1.0);
            win.start = w * T;
            for (int t = 0; t < T; ++t)
                for (int m = 0; m < M; ++m) {
                    double acc = spec.noise_sd * synth_normal(spec.seed, static_cast<uint64_t>(w),
                                                              static_cast<uint64_t>(m),
                                                              static_cast<uint64_t>(t));
                    if (t == 0)
                        acc += synth_normal(spec.seed ^ kSynthInit, static_cast<uint64_t>(w),
                                            static_cast<uint64_t>(m), 0);
                    for (int i = 1; i <= static_cast<int>(spec.ar_coeffs.size()) && t - i >= 0; ++i)
                        acc += spec.ar_coeffs[static_cast<size_t>(i - 1)] * win.x.at({m, t - i});
                    if (M > 1 && t >= 1)
                        for (int mm = 0; mm < M; ++mm)
                            if (mm != m)
                                acc += spec.cross_coupling / (M - 1) * win.x.at({mm, t - 1});
                    win.x.at({m, t}) = acc;
                }
            out.push_back(std::move(win));
        }
        return out;
    }

    // correlated sines
    if (spec.freqs.empty()) throw std::invalid_argument("gen_synthetic: empty freqs");
    for (int w = 0; w < spec.num_windows; ++w) {
        Window win;
        win.x = Tensor({M, T});
        win.omega = Tensor::full({M, T}, 1.0);
        win.start = w * T;
        const double shared =
            2.0 * M_PI * rng::u01(rng::mix(spec.seed, static_cast<uint64_t>(w), 0, 0, kSynthSharedPhase));
        for (int m = 0; m < M; ++m) {
            const double own = 2.0 * M_PI * rng::u01(rng::mix(spec.seed, static_cast<uint64_t>(w),
                                                              static_cast<uint64_t>(m), 0, kSynthOwnPhase));
            const double phase = shared + (1.0 - spec.phase_coupling) * own;
            const double f = spec.freqs[static_cast<size_t>(m) % spec.freqs.size()];
            for (int t = 0; t < T; ++t) {
                double v = std::sin(2.0 * M_PI * f * t / T + phase);
                if (spec.noise_sd > 0)
                    v += spec.noise_sd * synth_normal(spec.seed, static_cast<uint64_t>(w),
                                                      static_cast<uint64_t>(m), static_cast<uint64_t>(t));
                win.x.at({m, t}) = v;
            }
        }
        out.push_back(std::move(win));
    }
    return out;
}

SeriesBatch make_batch(const WindowSet& windows, const std::vector<int>& indices) {
    if (indices.empty()) throw std::invalid_argument("make_batch: empty index list");
    const int B = static_cast<int>(indices.size());
    const int M = windows[0].x.dim(0), T = windows[0].x.dim(1);
    SeriesBatch batch;
    batch.x = Tensor({B, M, T});
    batch.omega = Tensor({B, M, T});
    for (int b = 0; b < B; ++b) {
        const Window& w = windows[static_cast<size_t>(indices[static_cast<size_t>(b)])];
        if (w.x.dim(0) != M || w.x.dim(1) != T)
            throw std::invalid_argument("make_batch: inconsistent window shapes");
        for (int m = 0; m < M; ++m)
            for (int t = 0; t < T; ++t) {
                batch.x.at({b, m, t}) = w.x.at({m, t});
                batch.omega.at({b, m, t}) = w.omega.at({m, t});
            }
        batch.meta.push_back(indices[static_cast<size_t>(b)]);
    }
    return batch;
}

}  // namespace t1
