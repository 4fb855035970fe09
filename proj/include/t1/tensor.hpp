// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_TENSOR_HPP
#define T1_TENSOR_HPP

#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

namespace t1 {

// Dense row-major tensor of 64-bit floats. Copies are deliberate; there are
// no views or strides.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape);
    Tensor(std::vector<int> shape, std::vector<double> data);

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }
    static Tensor full(std::vector<int> shape, double v);

    const std::vector<int>& shape() const { return shape_; }
    int dim(int i) const { return shape_[static_cast<size_t>(i)]; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t size() const { return static_cast<int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    double& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    double operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    double& at(std::initializer_list<int> idx) { return data_[static_cast<size_t>(offset(idx))]; }
    double at(std::initializer_list<int> idx) const { return data_[static_cast<size_t>(offset(idx))]; }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }
    std::string shape_str() const;

    // elementwise in-place helpers
    void fill(double v);
    void add_(const Tensor& o);           // this += o
    void scale_(double s);

private:
    int64_t offset(std::initializer_list<int> idx) const;
    std::vector<int> shape_;
    std::vector<double> data_;
};

int64_t shape_product(const std::vector<int>& shape);

// ---- numerical primitives ----
// All operate on explicit shapes; leading axes named M are folded batch axes
// (anything independent per row).

// input [M,C,L], kernel [C,k]: per-channel cross-correlation, kernel shared
// across the M axis. same_pad pads k-1 zeros split left/right (extra right
// for even k).
Tensor dwconv1d(const Tensor& input, const Tensor& kernel, int stride, bool same_pad);

// input [M,Cin,L], weight [Cout,Cin,k], bias [Cout] (may be empty).
Tensor conv1d(const Tensor& input, const Tensor& weight, const Tensor& bias,
              int stride, bool same_pad);

// input [M,Cin,L], weight [Cout,Cin], bias [Cout] (may be empty).
Tensor pwconv1d(const Tensor& input, const Tensor& weight, const Tensor& bias);

// softmax along the last axis, max-stabilized.
Tensor softmax_rows(const Tensor& input);

// input [M,C,L], gamma/beta [C]: standardize the C-vector at each (m,l).
Tensor layernorm_channels(const Tensor& input, const Tensor& gamma,
                          const Tensor& beta, double eps = 1e-5);

Tensor gelu(const Tensor& input);
double gelu_scalar(double x);
double gelu_grad_scalar(double x);

// input [M,C,L] -> [M,C/r,L*r]; out[m,c,l*r+j] = in[m,c*r+j,l].
Tensor pixel_shuffle_1d(const Tensor& input, int r);
// exact inverse of pixel_shuffle_1d.
Tensor pixel_unshuffle_1d(const Tensor& input, int r);

// same-padding split for kernel k: {left, right}.
inline std::pair<int, int> same_pad_split(int k) {
    int left = (k - 1) / 2;
    return {left, k - 1 - left};
}

}  // namespace t1

#endif
