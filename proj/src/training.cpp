// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#include "t1/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "t1/masking.hpp"

namespace t1 {

namespace {
constexpr uint64_t kShuffleTag = 30;
constexpr uint64_t kBatchPsiTag = 31;
constexpr uint64_t kValidPsiTag = 32;
}  // namespace

void TrainConfig::validate() const {
    if (lr < 0) throw std::invalid_argument("train config: negative learning rate");
    if (beta1 <= 0 || beta1 >= 1 || beta2 <= 0 || beta2 >= 1)
        throw std::invalid_argument("train config: betas must be in (0,1)");
    if (batch_size < 1) throw std::invalid_argument("train config: batch_size must be >= 1");
    if (max_epochs < 1) throw std::invalid_argument("train config: max_epochs must be >= 1");
    if (patience < 0 || patience > max_epochs)
        throw std::invalid_argument("train config: patience must be in [0, max_epochs]");
    if (train_mask_ratio <= 0 || train_mask_ratio >= 1)
        throw std::invalid_argument("train config: train_mask_ratio outside (0,1)");
}

Tensor supervision_mask(const Tensor& omega, const Tensor& psi) {
    if (!omega.same_shape(psi)) throw std::invalid_argument("supervision_mask: shape mismatch");
    Tensor s(omega.shape());
    for (int64_t i = 0; i < s.size(); ++i) s[i] = (omega[i] != 0.0 && psi[i] == 0.0) ? 1.0 : 0.0;
    return s;
}

double masked_mse_loss(const Tensor& x_hat, const Tensor& y, const Tensor& omega,
                       const Tensor& psi, int64_t* count) {
    if (!x_hat.same_shape(y) || !x_hat.same_shape(omega) || !x_hat.same_shape(psi))
        throw std::invalid_argument("masked_mse_loss: shape mismatch");
    int64_t n = 0;
    double acc = 0.0;
    for (int64_t i = 0; i < x_hat.size(); ++i)
        if (omega[i] != 0.0 && psi[i] == 0.0) {
            const double d = x_hat[i] - y[i];
            acc += d * d;
            ++n;
        }
    if (count) *count = n;
    return n > 0 ? acc / static_cast<double>(n) : 0.0;
}

void adam_step(ParamStore& params, int64_t t, const TrainConfig& cfg) {
    if (t < 1) throw std::invalid_argument("adam_step: step index must be >= 1");
    const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(t));
    for (const auto& name : params.names()) {
        auto& e = params.entry(name);
        for (int64_t i = 0; i < e.grad.size(); ++i)
            if (!std::isfinite(e.grad[i]))
                throw std::runtime_error("adam_step: non-finite gradient in parameter " + name);
        for (int64_t i = 0; i < e.value.size(); ++i) {
            const double g = e.grad[i];
            e.adam_m[i] = cfg.beta1 * e.adam_m[i] + (1.0 - cfg.beta1) * g;
            e.adam_v[i] = cfg.beta2 * e.adam_v[i] + (1.0 - cfg.beta2) * g * g;
            const double mhat = e.adam_m[i] / bc1;
            const double vhat = e.adam_v[i] / bc2;
            e.value[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.adam_eps);
        }
        e.grad.fill(0.0);
    }
}

namespace {

std::vector<int> shuffled_indices(int n, uint64_t seed, int epoch) {
    std::vector<int> idx(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) idx[static_cast<size_t>(i)] = i;
    for (int i = n - 1; i > 0; --i) {
        const uint64_t h = rng::mix(seed, static_cast<uint64_t>(epoch), static_cast<uint64_t>(i), 0,
                                    kShuffleTag);
        const int j = static_cast<int>(h % static_cast<uint64_t>(i + 1));
        std::swap(idx[static_cast<size_t>(i)], idx[static_cast<size_t>(j)]);
    }
    return idx;
}

// weighted-by-count mean masked MSE over the whole window set
double evaluate_masked_mse(const WindowSet& windows, const ModelConfig& mcfg,
                           ParamStore& params, double mask_ratio, uint64_t psi_seed,
                           int batch_size) {
    double acc = 0.0;
    int64_t total = 0;
    const int n = static_cast<int>(windows.size());
    for (int start = 0; start < n; start += batch_size) {
        std::vector<int> idx;
        for (int i = start; i < std::min(start + batch_size, n); ++i) idx.push_back(i);
        SeriesBatch batch = make_batch(windows, idx);
        // fixed per-window mask: key the generator on the window id
        batch.psi = Tensor(batch.omega.shape());
        const int M = batch.vars(), T = batch.len();
        for (int b = 0; b < static_cast<int>(idx.size()); ++b) {
            Tensor omega_row({1, M, T});
            for (int m = 0; m < M; ++m)
                for (int t = 0; t < T; ++t) omega_row.at({0, m, t}) = batch.omega.at({b, m, t});
            TrainingMask tm = gen_training_mask(
                omega_row, mask_ratio,
                rng::mix(psi_seed, static_cast<uint64_t>(idx[static_cast<size_t>(b)]), 0, 0, kValidPsiTag));
            for (int m = 0; m < M; ++m)
                for (int t = 0; t < T; ++t) batch.psi.at({b, m, t}) = tm.psi.at({0, m, t});
        }
        auto [x_hat, trace] = forward(batch, mcfg, params);
        (void)trace;
        int64_t cnt = 0;
        const double mse = masked_mse_loss(x_hat, batch.x, batch.omega, batch.psi, &cnt);
        acc += mse * static_cast<double>(cnt);
        total += cnt;
    }
    return total > 0 ? acc / static_cast<double>(total) : 0.0;
}

}  // namespace

TrainResult train(const WindowSet& train_windows, const WindowSet& valid_windows,
                  const ModelConfig& mcfg, const TrainConfig& tcfg, ParamStore& params) {
    tcfg.validate();
    mcfg.validate();
    if (train_windows.empty()) throw std::invalid_argument("train: empty training set");

    TrainResult result;
    std::vector<Tensor> best = params.snapshot_values();
    double best_valid = std::numeric_limits<double>::infinity();
    int since_best = 0;
    int64_t step = 0;
    const int n = static_cast<int>(train_windows.size());

    for (int epoch = 0; epoch < tcfg.max_epochs; ++epoch) {
        const std::vector<int> order = shuffled_indices(n, tcfg.seed, epoch);
        double train_acc = 0.0;
        int64_t train_cnt = 0;
        int batch_idx = 0;
        for (int start = 0; start < n; start += tcfg.batch_size, ++batch_idx) {
            std::vector<int> idx(order.begin() + start,
                                 order.begin() + std::min(start + tcfg.batch_size, n));
            SeriesBatch batch = make_batch(train_windows, idx);
            const uint64_t psi_seed = rng::mix(tcfg.seed, static_cast<uint64_t>(epoch),
                                               static_cast<uint64_t>(batch_idx), 0, kBatchPsiTag);
            batch.psi = gen_training_mask(batch.omega, tcfg.train_mask_ratio, psi_seed).psi;
            Tensor sup = supervision_mask(batch.omega, batch.psi);

            Tape tape;
            TapeForward fwd = forward_tape(tape, batch, mcfg, params);
            int64_t cnt = 0;
            Tape::NodeId loss = tape.masked_mse(fwd.x_hat, batch.x, sup, &cnt);
            if (cnt == 0) continue;  // no supervision targets in this batch
            const double loss_v = tape.value(loss)[0];
            if (!std::isfinite(loss_v)) {
                params.restore_values(best);
                result.aborted = true;
                result.abort_reason = "non-finite training loss at epoch " + std::to_string(epoch);
                result.best_epoch = best_valid == std::numeric_limits<double>::infinity() ? -1
                                                                                         : result.best_epoch;
                return result;
            }
            train_acc += loss_v * static_cast<double>(cnt);
            train_cnt += cnt;
            tape.backward(loss);
            try {
                adam_step(params, ++step, tcfg);
            } catch (const std::runtime_error& e) {
                params.restore_values(best);
                result.aborted = true;
                result.abort_reason = e.what();
                return result;
            }
        }

        const double valid_loss =
            valid_windows.empty()
                ? (train_cnt > 0 ? train_acc / static_cast<double>(train_cnt) : 0.0)
                : evaluate_masked_mse(valid_windows, mcfg, params, tcfg.train_mask_ratio,
                                      tcfg.seed, tcfg.batch_size);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = train_cnt > 0 ? train_acc / static_cast<double>(train_cnt) : 0.0;
        rec.valid_loss = valid_loss;
        result.history.push_back(rec);

        if (valid_loss < best_valid) {
            best_valid = valid_loss;
            best = params.snapshot_values();
            result.best_epoch = epoch;
            result.best_valid = valid_loss;
            since_best = 0;
        } else {
            ++since_best;
            if (since_best > tcfg.patience) break;
        }
    }

    params.restore_values(best);
    return result;
}

void write_history(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("write_history: cannot open " + path);
    os << "epoch train_loss valid_loss\n";
    char buf[96];
    for (const auto& r : history) {
        std::snprintf(buf, sizeof buf, "%d %.17g %.17g\n", r.epoch, r.train_loss, r.valid_loss);
        os << buf;
    }
}

}  // namespace t1
