// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/tensor.hpp"

#include <cmath>
#include <cstdio>
#include <stdexcept>

namespace t1 {

int64_t shape_product(const std::vector<int>& shape) {
    int64_t p = 1;
    for (int d : shape) {
        if (d < 0) throw std::invalid_argument("negative dimension in shape");
        p *= d;
    }
    return p;
}

Tensor::Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    data_.assign(static_cast<size_t>(shape_product(shape_)), 0.0);
}

Tensor::Tensor(std::vector<int> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
    if (static_cast<int64_t>(data_.size()) != shape_product(shape_))
        throw std::invalid_argument("data length does not match shape product");
}

Tensor Tensor::full(std::vector<int> shape, double v) {
    Tensor t(std::move(shape));
    t.fill(v);
    return t;
}

int64_t Tensor::offset(std::initializer_list<int> idx) const {
    if (idx.size() != shape_.size()) throw std::invalid_argument("index rank mismatch");
    int64_t off = 0;
    size_t i = 0;
    for (int v : idx) {
        off = off * shape_[i] + v;
        ++i;
    }
    return off;
}

std::string Tensor::shape_str() const {
    std::string s = "[";
    for (size_t i = 0; i < shape_.size(); ++i) {
        if (i) s += ",";
        s += std::to_string(shape_[i]);
    }
    return s + "]";
}

void Tensor::fill(double v) {
    for (auto& x : data_) x = v;
}

void Tensor::add_(const Tensor& o) {
    if (!same_shape(o)) throw std::invalid_argument("add_: shape mismatch " + shape_str() + " vs " + o.shape_str());
    for (size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
}

void Tensor::scale_(double s) {
    for (auto& x : data_) x *= s;
}

static void expect_ndim(const Tensor& t, int n, const char* what) {
    if (t.ndim() != n)
        throw std::invalid_argument(std::string(what) + ": expected rank " + std::to_string(n) +
                                    ", got " + t.shape_str());
}

Tensor dwconv1d(const Tensor& input, const Tensor& kernel, int stride, bool same_pad) {
    expect_ndim(input, 3, "dwconv1d input");
    expect_ndim(kernel, 2, "dwconv1d kernel");
    const int M = input.dim(0), C = input.dim(1), L = input.dim(2);
    const int k = kernel.dim(1);
    if (kernel.dim(0) != C)
        throw std::invalid_argument("dwconv1d: kernel channels " + std::to_string(kernel.dim(0)) +
                                    " != input channels " + std::to_string(C));
    if (stride < 1) throw std::invalid_argument("dwconv1d: stride must be >= 1");
    auto [pl, pr] = same_pad ? same_pad_split(k) : std::pair<int, int>{0, 0};
    const int Lp = L + pl + pr;
    if (k > Lp) throw std::invalid_argument("dwconv1d: kernel size " + std::to_string(k) +
                                            " exceeds padded length " + std::to_string(Lp));
    const int Lo = (Lp - k) / stride + 1;
    Tensor out({M, C, Lo});
    for (int m = 0; m < M; ++m) {
        for (int c = 0; c < C; ++c) {
            const double* x = input.data() + (static_cast<int64_t>(m) * C + c) * L;
            const double* w = kernel.data() + static_cast<int64_t>(c) * k;
            double* y = out.data() + (static_cast<int64_t>(m) * C + c) * Lo;
            for (int lo = 0; lo < Lo; ++lo) {
                const int start = lo * stride - pl;
                double acc = 0.0;
                const int j0 = start < 0 ? -start : 0;
                const int j1 = start + k > L ? L - start : k;
                for (int j = j0; j < j1; ++j) acc += w[j] * x[start + j];
                y[lo] = acc;
            }
        }
    }
    return out;
}

Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, bool same_pad) {
    expect_ndim(input, 3, "conv1d input");
    expect_ndim(weight, 3, "conv1d weight");
    const int M = input.dim(0), Cin = input.dim(1), L = input.dim(2);
    const int Cout = weight.dim(0), k = weight.dim(2);
    if (weight.dim(1) != Cin)
        throw std::invalid_argument("conv1d: weight Cin " + std::to_string(weight.dim(1)) +
                                    " != input channels " + std::to_string(Cin));
    if (!bias.empty() && (bias.ndim() != 1 || bias.dim(0) != Cout))
        throw std::invalid_argument("conv1d: bias shape mismatch");
    if (stride < 1) throw std::invalid_argument("conv1d: stride must be >= 1");
    auto [pl, pr] = same_pad ? same_pad_split(k) : std::pair<int, int>{0, 0};
    const int Lp = L + pl + pr;
    if (k > Lp) throw std::invalid_argument("conv1d: kernel exceeds padded length");
    const int Lo = (Lp - k) / stride + 1;
    Tensor out({M, Cout, Lo});
    for (int m = 0; m < M; ++m) {
        for (int co = 0; co < Cout; ++co) {
            double* y = out.data() + (static_cast<int64_t>(m) * Cout + co) * Lo;
            const double b = bias.empty() ? 0.0 : bias[co];
            for (int lo = 0; lo < Lo; ++lo) {
                const int start = lo * stride - pl;
                double acc = b;
                for (int ci = 0; ci < Cin; ++ci) {
                    const double* x = input.data() + (static_cast<int64_t>(m) * Cin + ci) * L;
                    const double* w = weight.data() + (static_cast<int64_t>(co) * Cin + ci) * k;
                    const int j0 = start < 0 ? -start : 0;
                    const int j1 = start + k > L ? L - start : k;
                    for (int j = j0; j < j1; ++j) acc += w[j] * x[start + j];
                }
                y[lo] = acc;
            }
        }
    }
    return out;
}

Tensor pwconv1d(const Tensor& input, const Tensor& weight, const Tensor& bias) {
    expect_ndim(input, 3, "pwconv1d input");
    expect_ndim(weight, 2, "pwconv1d weight");
    const int M = input.dim(0), Cin = input.dim(1), L = input.dim(2);
    const int Cout = weight.dim(0);
    if (weight.dim(1) != Cin)
        throw std::invalid_argument("pwconv1d: weight inner dim " + std::to_string(weight.dim(1)) +
                                    " != input channels " + std::to_string(Cin));
    if (!bias.empty() && (bias.ndim() != 1 || bias.dim(0) != Cout))
        throw std::invalid_argument("pwconv1d: bias shape mismatch");
    Tensor out({M, Cout, L});
    for (int m = 0; m < M; ++m) {
        const double* xm = input.data() + static_cast<int64_t>(m) * Cin * L;
        double* ym = out.data() + static_cast<int64_t>(m) * Cout * L;
        for (int co = 0; co < Cout; ++co) {
            double* y = ym + static_cast<int64_t>(co) * L;
            const double b = bias.empty() ? 0.0 : bias[co];
            for (int l = 0; l < L; ++l) y[l] = b;
            const double* w = weight.data() + static_cast<int64_t>(co) * Cin;
            for (int ci = 0; ci < Cin; ++ci) {
                const double wv = w[ci];
                if (wv == 0.0) continue;
                const double* x = xm + static_cast<int64_t>(ci) * L;
                for (int l = 0; l < L; ++l) y[l] += wv * x[l];
            }
        }
    }
    return out;
}

Tensor softmax_rows(const Tensor& input) {
    if (input.ndim() < 1) throw std::invalid_argument("softmax_rows: rank-0 input");
    const int N = input.dim(input.ndim() - 1);
    const int64_t rows = input.size() / N;
    Tensor out(input.shape());
    for (int64_t r = 0; r < rows; ++r) {
        const double* x = input.data() + r * N;
        double* y = out.data() + r * N;
        double mx = x[0];
        for (int i = 1; i < N; ++i) mx = std::max(mx, x[i]);
        double sum = 0.0;
        for (int i = 0; i < N; ++i) {
            y[i] = std::exp(x[i] - mx);
            sum += y[i];
        }
        for (int i = 0; i < N; ++i) y[i] /= sum;
    }
    return out;
}

Tensor layernorm_channels(const Tensor& input, const Tensor& gamma,
                          const Tensor& beta, double eps) {
    expect_ndim(input, 3, "layernorm_channels input");
    const int M = input.dim(0), C = input.dim(1), L = input.dim(2);
    if (gamma.size() != C || beta.size() != C)
        throw std::invalid_argument("layernorm_channels: gamma/beta length != C");
    if (eps <= 0) throw std::invalid_argument("layernorm_channels: eps must be > 0");
    Tensor out({M, C, L});
    for (int m = 0; m < M; ++m) {
        for (int l = 0; l < L; ++l) {
            double mean = 0.0;
            for (int c = 0; c < C; ++c) mean += input.data()[(static_cast<int64_t>(m) * C + c) * L + l];
            mean /= C;
            double var = 0.0;
            for (int c = 0; c < C; ++c) {
                const double d = input.data()[(static_cast<int64_t>(m) * C + c) * L + l] - mean;
                var += d * d;
            }
            var /= C;
            const double inv = 1.0 / std::sqrt(var + eps);
            for (int c = 0; c < C; ++c) {
                const double xn =
                    (input.data()[(static_cast<int64_t>(m) * C + c) * L + l] - mean) * inv;
                out.data()[(static_cast<int64_t>(m) * C + c) * L + l] = gamma[c] * xn + beta[c];
            }
        }
    }
    return out;
}

double gelu_scalar(double x) { return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0))); }

double gelu_grad_scalar(double x) {
    const double cdf = 0.5 * (1.0 + std::erf(x / std::sqrt(2.0)));
    const double pdf = std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
    return cdf + x * pdf;
}

Tensor gelu(const Tensor& input) {
    Tensor out(input.shape());
    for (int64_t i = 0; i < input.size(); ++i) out[i] = gelu_scalar(input[i]);
    return out;
}

Tensor pixel_shuffle_1d(const Tensor& input, int r) {
    expect_ndim(input, 3, "pixel_shuffle_1d input");
    const int M = input.dim(0), C = input.dim(1), L = input.dim(2);
    if (r < 1) throw std::invalid_argument("pixel_shuffle_1d: r must be >= 1");
    if (C % r != 0)
        throw std::invalid_argument("pixel_shuffle_1d: channels " + std::to_string(C) +
                                    " not divisible by r=" + std::to_string(r));
    const int Co = C / r, Lo = L * r;
    Tensor out({M, Co, Lo});
    for (int m = 0; m < M; ++m)
        for (int co = 0; co < Co; ++co)
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < r; ++j)
                    out.data()[(static_cast<int64_t>(m) * Co + co) * Lo + l * r + j] =
                        input.data()[(static_cast<int64_t>(m) * C + co * r + j) * L + l];
    return out;
}

Tensor pixel_unshuffle_1d(const Tensor& input, int r) {
    expect_ndim(input, 3, "pixel_unshuffle_1d input");
    const int M = input.dim(0), Co = input.dim(1), Lo = input.dim(2);
    if (r < 1) throw std::invalid_argument("pixel_unshuffle_1d: r must be >= 1");
    if (Lo % r != 0) throw std::invalid_argument("pixel_unshuffle_1d: length not divisible by r");
    const int C = Co * r, L = Lo / r;
    Tensor out({input.dim(0), C, L});
    const int M_ = M;
    for (int m = 0; m < M_; ++m)
        for (int co = 0; co < Co; ++co)
            for (int l = 0; l < L; ++l)
                for (int j = 0; j < r; ++j)
                    out.data()[(static_cast<int64_t>(m) * C + co * r + j) * L + l] =
                        input.data()[(static_cast<int64_t>(m) * Co + co) * Lo + l * r + j];
    return out;
}

}  // namespace t1
