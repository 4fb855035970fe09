// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/autodiff.hpp"

#include <cmath>
#include <stdexcept>

namespace t1 {

Tensor& ParamStore::add(const std::string& name, Tensor value) {
    if (has(name)) throw std::invalid_argument("ParamStore: duplicate parameter " + name);
    ParamEntry e;
    e.grad = Tensor(value.shape());
    e.adam_m = Tensor(value.shape());
    e.adam_v = Tensor(value.shape());
    e.value = std::move(value);
    order_.push_back(name);
    auto& slot = index_[name];
    slot = std::move(e);
    entries_.push_back(&slot);
    return slot.value;
}

ParamEntry& ParamStore::entry(const std::string& name) {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
    return it->second;
}

const ParamEntry& ParamStore::entry(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) throw std::invalid_argument("ParamStore: unknown parameter " + name);
    return it->second;
}

int64_t ParamStore::total_size() const {
    int64_t n = 0;
    for (auto* e : entries_) n += e->value.size();
    return n;
}

void ParamStore::zero_grad() {
    for (auto* e : entries_) e->grad.fill(0.0);
}

std::vector<Tensor> ParamStore::snapshot_values() const {
    std::vector<Tensor> snap;
    snap.reserve(entries_.size());
    for (auto* e : entries_) snap.push_back(e->value);
    return snap;
}

void ParamStore::restore_values(const std::vector<Tensor>& snap) {
    if (snap.size() != entries_.size())
        throw std::invalid_argument("restore_values: snapshot size mismatch");
    for (size_t i = 0; i < snap.size(); ++i) {
        if (!snap[i].same_shape(entries_[i]->value))
            throw std::invalid_argument("restore_values: shape mismatch at " + order_[i]);
        entries_[i]->value = snap[i];
    }
}

// ---- tape ----

static Tensor with_shape(const Tensor& t, std::vector<int> shape) {
    if (shape_product(shape) != t.size())
        throw std::invalid_argument("reshape: element count mismatch");
    std::vector<double> d(t.data(), t.data() + t.size());
    return Tensor(std::move(shape), std::move(d));
}

// fold all leading axes into one row axis, keeping the last two.
static Tensor fold3(const Tensor& t) {
    if (t.ndim() < 2) throw std::invalid_argument("fold3: need rank >= 2");
    const int n = t.ndim();
    int64_t rows = 1;
    for (int i = 0; i + 2 < n; ++i) rows *= t.dim(i);
    return with_shape(t, {static_cast<int>(rows), t.dim(n - 2), t.dim(n - 1)});
}

static std::vector<int> unfold_shape(const std::vector<int>& orig, int c, int l) {
    std::vector<int> s(orig.begin(), orig.end() - 2);
    s.push_back(c);
    s.push_back(l);
    return s;
}

Tape::NodeId Tape::push(Tensor value, bool needs_grad, std::function<void(Tape&)> back) {
    Node n;
    n.value = std::move(value);
    n.needs_grad = needs_grad;
    n.back = std::move(back);
    nodes_.push_back(std::move(n));
    return static_cast<NodeId>(nodes_.size() - 1);
}

Tape::NodeId Tape::leaf(Tensor v) { return push(std::move(v), true, nullptr); }

Tape::NodeId Tape::param(ParamStore& ps, const std::string& name) {
    NodeId id = push(ps.value(name), true, nullptr);
    bindings_.push_back({id, &ps, name});
    return id;
}

Tape::NodeId Tape::constant(Tensor v) { return push(std::move(v), false, nullptr); }

Tape::NodeId Tape::add(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb))
        throw std::invalid_argument("tape add: shape mismatch " + va.shape_str() + " vs " + vb.shape_str());
    Tensor out = va;
    out.add_(vb);
    // each closure reads this node's grad via the id captured before push();
    // push() assigns ids sequentially so nodes_.size() is this node's id.
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, a, b](Tape& t) {
        const Tensor& g = t.nodes_[id].grad;
        if (t.nodes_[a].needs_grad) t.nodes_[a].grad.add_(g);
        if (t.nodes_[b].needs_grad) t.nodes_[b].grad.add_(g);
    });
}

Tape::NodeId Tape::mul(NodeId a, NodeId b) {
    const Tensor& va = value(a);
    const Tensor& vb = value(b);
    if (!va.same_shape(vb)) throw std::invalid_argument("tape mul: shape mismatch");
    Tensor out(va.shape());
    for (int64_t i = 0; i < va.size(); ++i) out[i] = va[i] * vb[i];
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, a, b](Tape& t) {
        const Tensor& g = t.nodes_[id].grad;
        const Tensor& va = t.value(a);
        const Tensor& vb = t.value(b);
        if (t.nodes_[a].needs_grad)
            for (int64_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += g[i] * vb[i];
        if (t.nodes_[b].needs_grad)
            for (int64_t i = 0; i < g.size(); ++i) t.nodes_[b].grad[i] += g[i] * va[i];
    });
}

Tape::NodeId Tape::scale(NodeId a, double s) {
    Tensor out = value(a);
    out.scale_(s);
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, a, s](Tape& t) {
        if (!t.nodes_[a].needs_grad) return;
        const Tensor& g = t.nodes_[id].grad;
        for (int64_t i = 0; i < g.size(); ++i) t.nodes_[a].grad[i] += g[i] * s;
    });
}

Tape::NodeId Tape::sum(NodeId a) {
    double s = 0.0;
    const Tensor& va = value(a);
    for (int64_t i = 0; i < va.size(); ++i) s += va[i];
    Tensor out(std::vector<int>{});
    out[0] = s;
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, a](Tape& t) {
        if (!t.nodes_[a].needs_grad) return;
        const double g = t.nodes_[id].grad[0];
        Tensor& ga = t.nodes_[a].grad;
        for (int64_t i = 0; i < ga.size(); ++i) ga[i] += g;
    });
}

Tape::NodeId Tape::reshape(NodeId a, std::vector<int> shape) {
    Tensor out = with_shape(value(a), std::move(shape));
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, a](Tape& t) {
        if (!t.nodes_[a].needs_grad) return;
        const Tensor& g = t.nodes_[id].grad;
        Tensor& ga = t.nodes_[a].grad;
        for (int64_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Tape::NodeId Tape::conv1d(NodeId x, NodeId w, NodeId b, int stride, bool same_pad) {
    const Tensor x3 = fold3(value(x));
    const Tensor& wt = value(w);
    const Tensor bt = b >= 0 ? value(b) : Tensor();
    Tensor out3 = t1::conv1d(x3, wt, bt, stride, same_pad);
    Tensor out = with_shape(out3, unfold_shape(value(x).shape(), out3.dim(1), out3.dim(2)));
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x, w, b, stride, same_pad](Tape& t) {
        const Tensor g3 = fold3(t.nodes_[id].grad);
        const Tensor x3 = fold3(t.value(x));
        const Tensor& wt = t.value(w);
        const int R = x3.dim(0), Cin = x3.dim(1), L = x3.dim(2);
        const int Cout = wt.dim(0), k = wt.dim(2), Lo = g3.dim(2);
        auto [pl, pr] = same_pad ? same_pad_split(k) : std::pair<int, int>{0, 0};
        (void)pr;
        if (t.nodes_[x].needs_grad) {
            Tensor gx({R, Cin, L});
            for (int m = 0; m < R; ++m)
                for (int co = 0; co < Cout; ++co)
                    for (int lo = 0; lo < Lo; ++lo) {
                        const double gy = g3.data()[(static_cast<int64_t>(m) * Cout + co) * Lo + lo];
                        if (gy == 0.0) continue;
                        const int start = lo * stride - pl;
                        for (int ci = 0; ci < Cin; ++ci) {
                            const double* ww = wt.data() + (static_cast<int64_t>(co) * Cin + ci) * k;
                            const int j0 = start < 0 ? -start : 0;
                            const int j1 = start + k > L ? L - start : k;
                            double* gxp = gx.data() + (static_cast<int64_t>(m) * Cin + ci) * L;
                            for (int j = j0; j < j1; ++j) gxp[start + j] += ww[j] * gy;
                        }
                    }
            Tensor& dst = t.nodes_[x].grad;
            for (int64_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
        }
        if (t.nodes_[w].needs_grad) {
            Tensor& gw = t.nodes_[w].grad;
            for (int co = 0; co < Cout; ++co)
                for (int ci = 0; ci < Cin; ++ci)
                    for (int j = 0; j < k; ++j) {
                        double acc = 0.0;
                        for (int m = 0; m < R; ++m) {
                            const double* xp = x3.data() + (static_cast<int64_t>(m) * Cin + ci) * L;
                            const double* gp = g3.data() + (static_cast<int64_t>(m) * Cout + co) * Lo;
                            for (int lo = 0; lo < Lo; ++lo) {
                                const int pos = lo * stride - pl + j;
                                if (pos >= 0 && pos < L) acc += xp[pos] * gp[lo];
                            }
                        }
                        gw[(static_cast<int64_t>(co) * Cin + ci) * k + j] += acc;
                    }
        }
        if (b >= 0 && t.nodes_[b].needs_grad) {
            Tensor& gb = t.nodes_[b].grad;
            for (int co = 0; co < Cout; ++co) {
                double acc = 0.0;
                for (int m = 0; m < R; ++m) {
                    const double* gp = g3.data() + (static_cast<int64_t>(m) * Cout + co) * Lo;
                    for (int lo = 0; lo < Lo; ++lo) acc += gp[lo];
                }
                gb[co] += acc;
            }
        }
    });
}

Tape::NodeId Tape::dwconv(NodeId x, NodeId w, int stride, bool same_pad) {
    const Tensor x3 = fold3(value(x));
    Tensor out3 = t1::dwconv1d(x3, value(w), stride, same_pad);
    Tensor out = with_shape(out3, unfold_shape(value(x).shape(), out3.dim(1), out3.dim(2)));
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x, w, stride, same_pad](Tape& t) {
        const Tensor g3 = fold3(t.nodes_[id].grad);
        const Tensor x3 = fold3(t.value(x));
        const Tensor& wt = t.value(w);
        const int R = x3.dim(0), C = x3.dim(1), L = x3.dim(2);
        const int k = wt.dim(1), Lo = g3.dim(2);
        auto [pl, pr] = same_pad ? same_pad_split(k) : std::pair<int, int>{0, 0};
        (void)pr;
        if (t.nodes_[x].needs_grad) {
            Tensor gx({R, C, L});
            for (int m = 0; m < R; ++m)
                for (int c = 0; c < C; ++c) {
                    const double* wp = wt.data() + static_cast<int64_t>(c) * k;
                    const double* gp = g3.data() + (static_cast<int64_t>(m) * C + c) * Lo;
                    double* gxp = gx.data() + (static_cast<int64_t>(m) * C + c) * L;
                    for (int lo = 0; lo < Lo; ++lo) {
                        const double gy = gp[lo];
                        if (gy == 0.0) continue;
                        const int start = lo * stride - pl;
                        const int j0 = start < 0 ? -start : 0;
                        const int j1 = start + k > L ? L - start : k;
                        for (int j = j0; j < j1; ++j) gxp[start + j] += wp[j] * gy;
                    }
                }
            Tensor& dst = t.nodes_[x].grad;
            for (int64_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
        }
        if (t.nodes_[w].needs_grad) {
            Tensor& gw = t.nodes_[w].grad;
            for (int c = 0; c < C; ++c)
                for (int j = 0; j < k; ++j) {
                    double acc = 0.0;
                    for (int m = 0; m < R; ++m) {
                        const double* xp = x3.data() + (static_cast<int64_t>(m) * C + c) * L;
                        const double* gp = g3.data() + (static_cast<int64_t>(m) * C + c) * Lo;
                        for (int lo = 0; lo < Lo; ++lo) {
                            const int pos = lo * stride - pl + j;
                            if (pos >= 0 && pos < L) acc += xp[pos] * gp[lo];
                        }
                    }
                    gw[static_cast<int64_t>(c) * k + j] += acc;
                }
        }
    });
}

Tape::NodeId Tape::pwconv(NodeId x, NodeId w, NodeId b) {
    const Tensor x3 = fold3(value(x));
    const Tensor bt = b >= 0 ? value(b) : Tensor();
    Tensor out3 = t1::pwconv1d(x3, value(w), bt);
    Tensor out = with_shape(out3, unfold_shape(value(x).shape(), out3.dim(1), out3.dim(2)));
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x, w, b](Tape& t) {
        const Tensor g3 = fold3(t.nodes_[id].grad);
        const Tensor x3 = fold3(t.value(x));
        const Tensor& wt = t.value(w);
        const int R = x3.dim(0), Cin = x3.dim(1), L = x3.dim(2);
        const int Cout = wt.dim(0);
        if (t.nodes_[x].needs_grad) {
            Tensor gx({R, Cin, L});
            for (int m = 0; m < R; ++m)
                for (int co = 0; co < Cout; ++co) {
                    const double* gp = g3.data() + (static_cast<int64_t>(m) * Cout + co) * L;
                    const double* wp = wt.data() + static_cast<int64_t>(co) * Cin;
                    for (int ci = 0; ci < Cin; ++ci) {
                        const double wv = wp[ci];
                        if (wv == 0.0) continue;
                        double* gxp = gx.data() + (static_cast<int64_t>(m) * Cin + ci) * L;
                        for (int l = 0; l < L; ++l) gxp[l] += wv * gp[l];
                    }
                }
            Tensor& dst = t.nodes_[x].grad;
            for (int64_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
        }
        if (t.nodes_[w].needs_grad) {
            Tensor& gw = t.nodes_[w].grad;
            for (int co = 0; co < Cout; ++co)
                for (int ci = 0; ci < Cin; ++ci) {
                    double acc = 0.0;
                    for (int m = 0; m < R; ++m) {
                        const double* gp = g3.data() + (static_cast<int64_t>(m) * Cout + co) * L;
                        const double* xp = x3.data() + (static_cast<int64_t>(m) * Cin + ci) * L;
                        for (int l = 0; l < L; ++l) acc += gp[l] * xp[l];
                    }
                    gw[static_cast<int64_t>(co) * Cin + ci] += acc;
                }
        }
        if (b >= 0 && t.nodes_[b].needs_grad) {
            Tensor& gb = t.nodes_[b].grad;
            for (int co = 0; co < Cout; ++co) {
                double acc = 0.0;
                for (int m = 0; m < R; ++m) {
                    const double* gp = g3.data() + (static_cast<int64_t>(m) * Cout + co) * L;
                    for (int l = 0; l < L; ++l) acc += gp[l];
                }
                gb[co] += acc;
            }
        }
    });
}

Tape::NodeId Tape::layernorm(NodeId x, NodeId gamma, NodeId beta, double eps) {
    const Tensor x3 = fold3(value(x));
    Tensor out3 = layernorm_channels(x3, value(gamma), value(beta), eps);
    Tensor out = with_shape(out3, value(x).shape());
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x, gamma, beta, eps](Tape& t) {
        const Tensor g3 = fold3(t.nodes_[id].grad);
        const Tensor x3 = fold3(t.value(x));
        const Tensor& gm = t.value(gamma);
        const int R = x3.dim(0), C = x3.dim(1), L = x3.dim(2);
        Tensor gx({R, C, L});
        Tensor ggamma({C}), gbeta({C});
        std::vector<double> xhat(static_cast<size_t>(C));
        for (int m = 0; m < R; ++m)
            for (int l = 0; l < L; ++l) {
                double mean = 0.0;
                for (int c = 0; c < C; ++c) mean += x3.data()[(static_cast<int64_t>(m) * C + c) * L + l];
                mean /= C;
                double var = 0.0;
                for (int c = 0; c < C; ++c) {
                    const double d = x3.data()[(static_cast<int64_t>(m) * C + c) * L + l] - mean;
                    var += d * d;
                }
                var /= C;
                const double inv = 1.0 / std::sqrt(var + eps);
                double mg = 0.0, mgx = 0.0;
                for (int c = 0; c < C; ++c) {
                    xhat[static_cast<size_t>(c)] =
                        (x3.data()[(static_cast<int64_t>(m) * C + c) * L + l] - mean) * inv;
                    const double gy = g3.data()[(static_cast<int64_t>(m) * C + c) * L + l];
                    ggamma[c] += gy * xhat[static_cast<size_t>(c)];
                    gbeta[c] += gy;
                    const double gh = gy * gm[c];
                    mg += gh;
                    mgx += gh * xhat[static_cast<size_t>(c)];
                }
                mg /= C;
                mgx /= C;
                for (int c = 0; c < C; ++c) {
                    const double gy = g3.data()[(static_cast<int64_t>(m) * C + c) * L + l];
                    const double gh = gy * gm[c];
                    gx.data()[(static_cast<int64_t>(m) * C + c) * L + l] =
                        inv * (gh - mg - xhat[static_cast<size_t>(c)] * mgx);
                }
            }
        if (t.nodes_[x].needs_grad) {
            Tensor& dst = t.nodes_[x].grad;
            for (int64_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
        }
        if (t.nodes_[gamma].needs_grad) t.nodes_[gamma].grad.add_(ggamma);
        if (t.nodes_[beta].needs_grad) t.nodes_[beta].grad.add_(gbeta);
    });
}

Tape::NodeId Tape::gelu(NodeId x) {
    Tensor out = t1::gelu(value(x));
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x](Tape& t) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor& g = t.nodes_[id].grad;
        const Tensor& vx = t.value(x);
        Tensor& gx = t.nodes_[x].grad;
        for (int64_t i = 0; i < g.size(); ++i) gx[i] += g[i] * gelu_grad_scalar(vx[i]);
    });
}

Tape::NodeId Tape::softmax(NodeId x) {
    Tensor out = softmax_rows(value(x));
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x](Tape& t) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor& g = t.nodes_[id].grad;
        const Tensor& y = t.value(id);
        Tensor& gx = t.nodes_[x].grad;
        const int N = y.dim(y.ndim() - 1);
        const int64_t rows = y.size() / N;
        for (int64_t r = 0; r < rows; ++r) {
            const double* yp = y.data() + r * N;
            const double* gp = g.data() + r * N;
            double dot = 0.0;
            for (int i = 0; i < N; ++i) dot += yp[i] * gp[i];
            for (int i = 0; i < N; ++i) gx[r * N + i] += yp[i] * (gp[i] - dot);
        }
    });
}

Tape::NodeId Tape::pixel_shuffle(NodeId x, int r) {
    const Tensor x3 = fold3(value(x));
    Tensor out3 = pixel_shuffle_1d(x3, r);
    Tensor out = with_shape(out3, unfold_shape(value(x).shape(), out3.dim(1), out3.dim(2)));
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x, r](Tape& t) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor g3 = fold3(t.nodes_[id].grad);
        Tensor gx = pixel_unshuffle_1d(g3, r);
        Tensor& dst = t.nodes_[x].grad;
        for (int64_t i = 0; i < gx.size(); ++i) dst[i] += gx[i];
    });
}

Tape::NodeId Tape::pad_last(NodeId x, int n) {
    const Tensor& vx = value(x);
    if (n < 0) throw std::invalid_argument("pad_last: negative pad");
    const int L = vx.dim(vx.ndim() - 1);
    const int64_t rows = vx.size() / L;
    std::vector<int> shape = vx.shape();
    shape.back() = L + n;
    Tensor out(shape);
    for (int64_t r = 0; r < rows; ++r)
        for (int l = 0; l < L; ++l) out[r * (L + n) + l] = vx[r * L + l];
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, x, n](Tape& t) {
        if (!t.nodes_[x].needs_grad) return;
        const Tensor& g = t.nodes_[id].grad;
        Tensor& gx = t.nodes_[x].grad;
        const int L = t.value(x).dim(t.value(x).ndim() - 1);
        const int64_t rows = gx.size() / L;
        for (int64_t r = 0; r < rows; ++r)
            for (int l = 0; l < L; ++l) gx[r * L + l] += g[r * (L + n) + l];
    });
}

Tape::NodeId Tape::add_var_encoding(NodeId z, NodeId e) {
    const Tensor& vz = value(z);
    const Tensor& ve = value(e);
    if (vz.ndim() != 4 || ve.ndim() != 3)
        throw std::invalid_argument("add_var_encoding: need z rank 4 and e rank 3");
    const int B = vz.dim(0);
    const int64_t per = ve.size();
    if (vz.size() != B * per) throw std::invalid_argument("add_var_encoding: shape mismatch");
    Tensor out = vz;
    for (int b = 0; b < B; ++b)
        for (int64_t i = 0; i < per; ++i) out[b * per + i] += ve[i];
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, z, e](Tape& t) {
        const Tensor& g = t.nodes_[id].grad;
        const int B = t.value(z).dim(0);
        const int64_t per = t.value(e).size();
        if (t.nodes_[z].needs_grad) {
            Tensor& gz = t.nodes_[z].grad;
            for (int64_t i = 0; i < g.size(); ++i) gz[i] += g[i];
        }
        if (t.nodes_[e].needs_grad) {
            Tensor& ge = t.nodes_[e].grad;
            for (int b = 0; b < B; ++b)
                for (int64_t i = 0; i < per; ++i) ge[i] += g[b * per + i];
        }
    });
}

namespace {

// gather head h of sample b from [B,M,C,L] into [M, g*L]
void gather_head(const Tensor& t, int b, int h, int g, double* out) {
    const int M = t.dim(1), C = t.dim(2), L = t.dim(3);
    for (int m = 0; m < M; ++m)
        for (int cc = 0; cc < g; ++cc)
            for (int l = 0; l < L; ++l)
                out[(static_cast<int64_t>(m) * g + cc) * L + l] =
                    t.data()[((static_cast<int64_t>(b) * M + m) * C + h * g + cc) * L + l];
}

void scatter_head_add(Tensor& t, int b, int h, int g, const double* in) {
    const int M = t.dim(1), C = t.dim(2), L = t.dim(3);
    for (int m = 0; m < M; ++m)
        for (int cc = 0; cc < g; ++cc)
            for (int l = 0; l < L; ++l)
                t.data()[((static_cast<int64_t>(b) * M + m) * C + h * g + cc) * L + l] +=
                    in[(static_cast<int64_t>(m) * g + cc) * L + l];
}

}  // namespace

Tape::NodeId Tape::chead_attention(NodeId q, NodeId k, NodeId v, int g, Tensor* weights_out) {
    const Tensor& vq = value(q);
    if (vq.ndim() != 4) throw std::invalid_argument("chead_attention: need [B,M,C,L]");
    if (!vq.same_shape(value(k)) || !vq.same_shape(value(v)))
        throw std::invalid_argument("chead_attention: Q/K/V shape mismatch");
    const int B = vq.dim(0), M = vq.dim(1), C = vq.dim(2), L = vq.dim(3);
    if (g < 1 || C % g != 0)
        throw std::invalid_argument("chead_attention: C=" + std::to_string(C) +
                                    " not divisible by channels_per_head g=" + std::to_string(g));
    const int nh = C / g, d = g * L;
    const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d));

    Tensor out({B, M, C, L});
    Tensor weights({B, nh, M, M});
    std::vector<double> qh(static_cast<size_t>(M) * d), kh(qh.size()), vh(qh.size()), oh(qh.size());
    for (int b = 0; b < B; ++b)
        for (int h = 0; h < nh; ++h) {
            gather_head(vq, b, h, g, qh.data());
            gather_head(value(k), b, h, g, kh.data());
            gather_head(value(v), b, h, g, vh.data());
            double* w = weights.data() + (static_cast<int64_t>(b) * nh + h) * M * M;
            for (int i = 0; i < M; ++i)
                for (int j = 0; j < M; ++j) {
                    double acc = 0.0;
                    for (int f = 0; f < d; ++f)
                        acc += qh[static_cast<size_t>(i) * d + f] * kh[static_cast<size_t>(j) * d + f];
                    w[static_cast<int64_t>(i) * M + j] = acc * inv_scale;
                }
            // stabilized row softmax in place
            for (int i = 0; i < M; ++i) {
                double* row = w + static_cast<int64_t>(i) * M;
                double mx = row[0];
                for (int j = 1; j < M; ++j) mx = std::max(mx, row[j]);
                double s = 0.0;
                for (int j = 0; j < M; ++j) {
                    row[j] = std::exp(row[j] - mx);
                    s += row[j];
                }
                for (int j = 0; j < M; ++j) row[j] /= s;
            }
            for (int i = 0; i < M; ++i)
                for (int f = 0; f < d; ++f) {
                    double acc = 0.0;
                    for (int j = 0; j < M; ++j)
                        acc += w[static_cast<int64_t>(i) * M + j] * vh[static_cast<size_t>(j) * d + f];
                    oh[static_cast<size_t>(i) * d + f] = acc;
                }
            for (int m = 0; m < M; ++m)
                for (int cc = 0; cc < g; ++cc)
                    for (int l = 0; l < L; ++l)
                        out.data()[((static_cast<int64_t>(b) * M + m) * C + h * g + cc) * L + l] =
                            oh[(static_cast<size_t>(m) * g + cc) * L + l];
        }
    if (weights_out) *weights_out = weights;

    NodeId id = static_cast<NodeId>(nodes_.size());
    Tensor saved_w = std::move(weights);
    return push(std::move(out), true,
                [id, q, k, v, g, saved_w](Tape& t) {
        const Tensor& go = t.nodes_[id].grad;
        const Tensor& vq = t.value(q);
        const Tensor& vk = t.value(k);
        const Tensor& vv = t.value(v);
        const int B = vq.dim(0), M = vq.dim(1), C = vq.dim(2), L = vq.dim(3);
        const int nh = C / g, d = g * L;
        const double inv_scale = 1.0 / std::sqrt(static_cast<double>(d));
        Tensor gq({B, M, C, L}), gk({B, M, C, L}), gv({B, M, C, L});
        std::vector<double> qh(static_cast<size_t>(M) * d), kh(qh.size()), vh(qh.size());
        std::vector<double> goh(qh.size()), gqh(qh.size()), gkh(qh.size()), gvh(qh.size());
        std::vector<double> gw(static_cast<size_t>(M) * M), gs(gw.size());
        for (int b = 0; b < B; ++b)
            for (int h = 0; h < nh; ++h) {
                gather_head(vq, b, h, g, qh.data());
                gather_head(vk, b, h, g, kh.data());
                gather_head(vv, b, h, g, vh.data());
                gather_head(go, b, h, g, goh.data());
                const double* w = saved_w.data() + (static_cast<int64_t>(b) * nh + h) * M * M;
                // dW = dO V^T ; dV = W^T dO
                for (int i = 0; i < M; ++i)
                    for (int j = 0; j < M; ++j) {
                        double acc = 0.0;
                        for (int f = 0; f < d; ++f)
                            acc += goh[static_cast<size_t>(i) * d + f] * vh[static_cast<size_t>(j) * d + f];
                        gw[static_cast<size_t>(i) * M + j] = acc;
                    }
                for (int j = 0; j < M; ++j)
                    for (int f = 0; f < d; ++f) {
                        double acc = 0.0;
                        for (int i = 0; i < M; ++i)
                            acc += w[static_cast<int64_t>(i) * M + j] * goh[static_cast<size_t>(i) * d + f];
                        gvh[static_cast<size_t>(j) * d + f] = acc;
                    }
                // softmax backward per row
                for (int i = 0; i < M; ++i) {
                    double dot = 0.0;
                    for (int j = 0; j < M; ++j)
                        dot += gw[static_cast<size_t>(i) * M + j] * w[static_cast<int64_t>(i) * M + j];
                    for (int j = 0; j < M; ++j)
                        gs[static_cast<size_t>(i) * M + j] =
                            w[static_cast<int64_t>(i) * M + j] * (gw[static_cast<size_t>(i) * M + j] - dot);
                }
                // dQ = dS K / sqrt(d) ; dK = dS^T Q / sqrt(d)
                for (int i = 0; i < M; ++i)
                    for (int f = 0; f < d; ++f) {
                        double acc = 0.0;
                        for (int j = 0; j < M; ++j)
                            acc += gs[static_cast<size_t>(i) * M + j] * kh[static_cast<size_t>(j) * d + f];
                        gqh[static_cast<size_t>(i) * d + f] = acc * inv_scale;
                    }
                for (int j = 0; j < M; ++j)
                    for (int f = 0; f < d; ++f) {
                        double acc = 0.0;
                        for (int i = 0; i < M; ++i)
                            acc += gs[static_cast<size_t>(i) * M + j] * qh[static_cast<size_t>(i) * d + f];
                        gkh[static_cast<size_t>(j) * d + f] = acc * inv_scale;
                    }
                scatter_head_add(gq, b, h, g, gqh.data());
                scatter_head_add(gk, b, h, g, gkh.data());
                scatter_head_add(gv, b, h, g, gvh.data());
            }
        if (t.nodes_[q].needs_grad) t.nodes_[q].grad.add_(gq);
        if (t.nodes_[k].needs_grad) t.nodes_[k].grad.add_(gk);
        if (t.nodes_[v].needs_grad) t.nodes_[v].grad.add_(gv);
    });
}

Tape::NodeId Tape::denorm(NodeId xn, Tensor sigma, Tensor mu) {
    const Tensor& vx = value(xn);
    if (vx.ndim() != 3) throw std::invalid_argument("denorm: need [B,M,T]");
    const int B = vx.dim(0), M = vx.dim(1), T = vx.dim(2);
    if (sigma.size() != static_cast<int64_t>(B) * M || mu.size() != static_cast<int64_t>(B) * M)
        throw std::invalid_argument("denorm: stats shape mismatch");
    Tensor out({B, M, T});
    for (int b = 0; b < B; ++b)
        for (int m = 0; m < M; ++m) {
            const double s = sigma[static_cast<int64_t>(b) * M + m];
            const double u = mu[static_cast<int64_t>(b) * M + m];
            for (int tt = 0; tt < T; ++tt) {
                const int64_t i = (static_cast<int64_t>(b) * M + m) * T + tt;
                out[i] = vx[i] * s + u;
            }
        }
    NodeId id = static_cast<NodeId>(nodes_.size());
    Tensor sig = std::move(sigma);
    return push(std::move(out), true, [id, xn, sig](Tape& t) {
        if (!t.nodes_[xn].needs_grad) return;
        const Tensor& g = t.nodes_[id].grad;
        const Tensor& vx = t.value(xn);
        const int B = vx.dim(0), M = vx.dim(1), T = vx.dim(2);
        Tensor& gx = t.nodes_[xn].grad;
        for (int b = 0; b < B; ++b)
            for (int m = 0; m < M; ++m) {
                const double s = sig[static_cast<int64_t>(b) * M + m];
                for (int tt = 0; tt < T; ++tt) {
                    const int64_t i = (static_cast<int64_t>(b) * M + m) * T + tt;
                    gx[i] += g[i] * s;
                }
            }
    });
}

Tape::NodeId Tape::var_linear(NodeId z, NodeId w, NodeId b) {
    const Tensor& vz = value(z);
    const Tensor& vw = value(w);
    const Tensor& vb = value(b);
    if (vz.ndim() != 4 || vw.ndim() != 3 || vb.ndim() != 2)
        throw std::invalid_argument("var_linear: bad ranks");
    const int B = vz.dim(0), M = vz.dim(1), C = vz.dim(2), L = vz.dim(3);
    const int T = vw.dim(1), F = C * L;
    if (vw.dim(0) != M || vw.dim(2) != F || vb.dim(0) != M || vb.dim(1) != T)
        throw std::invalid_argument("var_linear: weight/bias shape mismatch");
    Tensor out({B, M, T});
    for (int bb = 0; bb < B; ++bb)
        for (int m = 0; m < M; ++m) {
            const double* zf = vz.data() + (static_cast<int64_t>(bb) * M + m) * F;
            for (int tt = 0; tt < T; ++tt) {
                const double* wp = vw.data() + (static_cast<int64_t>(m) * T + tt) * F;
                double acc = vb[static_cast<int64_t>(m) * T + tt];
                for (int f = 0; f < F; ++f) acc += wp[f] * zf[f];
                out[(static_cast<int64_t>(bb) * M + m) * T + tt] = acc;
            }
        }
    NodeId id = static_cast<NodeId>(nodes_.size());
    return push(std::move(out), true, [id, z, w, b](Tape& t) {
        const Tensor& g = t.nodes_[id].grad;
        const Tensor& vz = t.value(z);
        const Tensor& vw = t.value(w);
        const int B = vz.dim(0), M = vz.dim(1), C = vz.dim(2), L = vz.dim(3);
        const int T = vw.dim(1), F = C * L;
        if (t.nodes_[z].needs_grad) {
            Tensor& gz = t.nodes_[z].grad;
            for (int bb = 0; bb < B; ++bb)
                for (int m = 0; m < M; ++m)
                    for (int tt = 0; tt < T; ++tt) {
                        const double gy = g[(static_cast<int64_t>(bb) * M + m) * T + tt];
                        if (gy == 0.0) continue;
                        const double* wp = vw.data() + (static_cast<int64_t>(m) * T + tt) * F;
                        double* gzp = gz.data() + (static_cast<int64_t>(bb) * M + m) * F;
                        for (int f = 0; f < F; ++f) gzp[f] += gy * wp[f];
                    }
        }
        if (t.nodes_[w].needs_grad) {
            Tensor& gw = t.nodes_[w].grad;
            for (int m = 0; m < M; ++m)
                for (int tt = 0; tt < T; ++tt) {
                    double* gwp = gw.data() + (static_cast<int64_t>(m) * T + tt) * F;
                    for (int bb = 0; bb < B; ++bb) {
                        const double gy = g[(static_cast<int64_t>(bb) * M + m) * T + tt];
                        if (gy == 0.0) continue;
                        const double* zf = vz.data() + (static_cast<int64_t>(bb) * M + m) * F;
                        for (int f = 0; f < F; ++f) gwp[f] += gy * zf[f];
                    }
                }
        }
        if (t.nodes_[b].needs_grad) {
            Tensor& gb = t.nodes_[b].grad;
            for (int m = 0; m < M; ++m)
                for (int tt = 0; tt < T; ++tt) {
                    double acc = 0.0;
                    for (int bb = 0; bb < B; ++bb)
                        acc += g[(static_cast<int64_t>(bb) * M + m) * T + tt];
                    gb[static_cast<int64_t>(m) * T + tt] += acc;
                }
        }
    });
}

Tape::NodeId Tape::masked_mse(NodeId pred, Tensor target, Tensor mask, int64_t* count_out) {
    const Tensor& vp = value(pred);
    if (!vp.same_shape(target) || !vp.same_shape(mask))
        throw std::invalid_argument("masked_mse: shape mismatch");
    int64_t count = 0;
    double acc = 0.0;
    for (int64_t i = 0; i < vp.size(); ++i)
        if (mask[i] != 0.0) {
            const double d = vp[i] - target[i];
            acc += d * d;
            ++count;
        }
    if (count_out) *count_out = count;
    Tensor out(std::vector<int>{});
    out[0] = count > 0 ? acc / static_cast<double>(count) : 0.0;
    NodeId id = static_cast<NodeId>(nodes_.size());
    Tensor tgt = std::move(target);
    Tensor msk = std::move(mask);
    return push(std::move(out), true, [id, pred, tgt, msk, count](Tape& t) {
        if (!t.nodes_[pred].needs_grad || count == 0) return;
        const double g = t.nodes_[id].grad[0];
        const Tensor& vp = t.value(pred);
        Tensor& gp = t.nodes_[pred].grad;
        const double scale = 2.0 * g / static_cast<double>(count);
        for (int64_t i = 0; i < vp.size(); ++i)
            if (msk[i] != 0.0) gp[i] += scale * (vp[i] - tgt[i]);
    });
}

void Tape::backward(NodeId loss) {
    if (value(loss).size() != 1)
        throw std::invalid_argument("backward: loss node must be scalar");
    for (auto& n : nodes_) {
        n.grad = Tensor(n.value.shape());
    }
    nodes_[static_cast<size_t>(loss)].grad[0] = 1.0;
    for (int i = loss; i >= 0; --i) {
        auto& n = nodes_[static_cast<size_t>(i)];
        if (n.back) n.back(*this);
    }
    for (const auto& b : bindings_) {
        if (b.node <= loss) b.store->grad(b.name).add_(nodes_[static_cast<size_t>(b.node)].grad);
    }
}

GradCheckReport grad_check(const std::function<double(ParamStore&)>& f, ParamStore& params,
                           double h, int sample_cap, uint64_t seed) {
    GradCheckReport report;
    params.zero_grad();
    f(params);
    std::vector<Tensor> analytic_grads;
    analytic_grads.reserve(params.names().size());
    for (const auto& name : params.names()) analytic_grads.push_back(params.entry(name).grad);
    size_t pi = 0;
    for (const auto& name : params.names()) {
        auto& e = params.entry(name);
        const Tensor& analytic_t = analytic_grads[pi++];
        const int64_t n = e.value.size();
        std::vector<int64_t> idx;
        if (n <= sample_cap) {
            idx.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
        } else {
            // deterministic sample without replacement (hash-probe)
            uint64_t s = seed ^ (0x9E3779B97F4A7C15ULL * (params.names().size() + name.size()));
            for (char c : name) s = (s ^ static_cast<uint64_t>(c)) * 0x100000001B3ULL;
            std::vector<char> taken(static_cast<size_t>(n), 0);
            while (static_cast<int>(idx.size()) < sample_cap) {
                s += 0x9E3779B97F4A7C15ULL;
                uint64_t z = s;
                z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
                z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
                z ^= z >> 31;
                int64_t i = static_cast<int64_t>(z % static_cast<uint64_t>(n));
                if (!taken[static_cast<size_t>(i)]) {
                    taken[static_cast<size_t>(i)] = 1;
                    idx.push_back(i);
                }
            }
        }
        double max_rel = 0.0;
        for (int64_t i : idx) {
            const double orig = e.value[i];
            e.value[i] = orig + h;
            const double fp = f(params);
            e.value[i] = orig - h;
            const double fm = f(params);
            e.value[i] = orig;
            const double numeric = (fp - fm) / (2.0 * h);
            const double analytic = analytic_t[i];
            const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
            max_rel = std::max(max_rel, std::fabs(analytic - numeric) / denom);
        }
        report.per_tensor.push_back({name, max_rel});
        report.max_rel_err = std::max(report.max_rel_err, max_rel);
    }
    return report;
}

}  // namespace t1
