// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_AUTODIFF_HPP
#define T1_AUTODIFF_HPP

#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "t1/tensor.hpp"

namespace t1 {

struct ParamEntry {
    Tensor value;
    Tensor grad;
    Tensor adam_m;
    Tensor adam_v;
};

// Named, insertion-ordered collection of trainable tensors with paired
// gradient and Adam buffers.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor value);
    bool has(const std::string& name) const { return index_.count(name) != 0; }
    ParamEntry& entry(const std::string& name);
    const ParamEntry& entry(const std::string& name) const;
    Tensor& value(const std::string& name) { return entry(name).value; }
    const Tensor& value(const std::string& name) const { return entry(name).value; }
    Tensor& grad(const std::string& name) { return entry(name).grad; }

    const std::vector<std::string>& names() const { return order_; }
    size_t count() const { return order_.size(); }
    int64_t total_size() const;
    void zero_grad();

    std::vector<Tensor> snapshot_values() const;
    void restore_values(const std::vector<Tensor>& snap);

    ParamStore() = default;
    ParamStore(const ParamStore&) = delete;
    ParamStore& operator=(const ParamStore&) = delete;
    ParamStore(ParamStore&&) = default;
    ParamStore& operator=(ParamStore&&) = default;

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, ParamEntry> index_;
    std::vector<ParamEntry*> entries_;  // insertion order
    friend class Tape;
};

// Append-only tape of tensor ops; backward walks it once in reverse and
// accumulates parameter gradients into the bound ParamStore entries.
class Tape {
public:
    using NodeId = int;

    NodeId leaf(Tensor v);
    NodeId param(ParamStore& ps, const std::string& name);
    NodeId constant(Tensor v);

    NodeId add(NodeId a, NodeId b);
    NodeId mul(NodeId a, NodeId b);
    NodeId scale(NodeId a, double s);
    NodeId sum(NodeId a);  // scalar, shape {1} stored as {}
    NodeId reshape(NodeId a, std::vector<int> shape);

    // x [..,Cin,L] (leading dims folded), weight [Cout,Cin,k], bias [Cout] or -1.
    NodeId conv1d(NodeId x, NodeId w, NodeId b, int stride, bool same_pad);
    // x [..,C,L], kernel [C,k].
    NodeId dwconv(NodeId x, NodeId w, int stride, bool same_pad);
    // x [..,Cin,L], weight [Cout,Cin], bias [Cout] or -1.
    NodeId pwconv(NodeId x, NodeId w, NodeId b);
    NodeId layernorm(NodeId x, NodeId gamma, NodeId beta, double eps = 1e-5);
    NodeId gelu(NodeId x);
    NodeId softmax(NodeId x);
    NodeId pixel_shuffle(NodeId x, int r);
    // append n zeros along the last axis.
    NodeId pad_last(NodeId x, int n);

    // z [B,M,C,L] + e [M,C,L] broadcast over batch.
    NodeId add_var_encoding(NodeId z, NodeId e);
    // q,k,v [B,M,C,L]; g channels per head; writes post-softmax weights
    // [B,n_h,M,M] to *weights_out when non-null.
    NodeId chead_attention(NodeId q, NodeId k, NodeId v, int g, Tensor* weights_out);
    // xn [B,M,T] * sigma[B,M] + mu[B,M]; stats are constants.
    NodeId denorm(NodeId xn, Tensor sigma, Tensor mu);
    // z [B,M,C,L], w [M,T,C*L], b [M,T] -> [B,M,T].
    NodeId var_linear(NodeId z, NodeId w, NodeId b);
    // mean of (pred-target)^2 over mask!=0; count written to *count_out.
    NodeId masked_mse(NodeId pred, Tensor target, Tensor mask, int64_t* count_out = nullptr);

    const Tensor& value(NodeId n) const { return nodes_[static_cast<size_t>(n)].value; }
    const Tensor& grad(NodeId n) const { return nodes_[static_cast<size_t>(n)].grad; }
    size_t num_nodes() const { return nodes_.size(); }

    // Resets node grads, seeds the scalar loss with 1, walks the tape in
    // reverse, then adds every bound parameter's node grad into its
    // ParamStore grad buffer. Calling twice accumulates twice.
    void backward(NodeId loss);

private:
    struct Node {
        Tensor value;
        Tensor grad;
        bool needs_grad = false;
        std::function<void(Tape&)> back;  // empty for leaves/constants
    };
    struct Binding {
        NodeId node;
        ParamStore* store;
        std::string name;
    };
    NodeId push(Tensor value, bool needs_grad, std::function<void(Tape&)> back);
    std::vector<Node> nodes_;
    std::vector<Binding> bindings_;
};

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> per_tensor;
    double max_rel_err = 0.0;
    bool pass(double tol) const { return max_rel_err < tol; }
};

// Central-difference check. Zeroes the gradient buffers, calls f once to
// collect the analytic gradients, then perturbs each sampled element.
// Tensors larger than sample_cap are spot-checked at sample_cap
// deterministically chosen elements.
GradCheckReport grad_check(const std::function<double(ParamStore&)>& f, ParamStore& params,
                           double h = 1e-5, int sample_cap = 64, uint64_t seed = 17);

}  // namespace t1

#endif
