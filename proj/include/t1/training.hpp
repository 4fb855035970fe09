// Copyright 2026 The T1 Authors
// SPDX-License-Identifier: Apache-2.0

#ifndef T1_TRAINING_HPP
#define T1_TRAINING_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "t1/autodiff.hpp"
#include "t1/data_io.hpp"
#include "t1/model.hpp"

namespace t1 {

struct TrainConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_eps = 1e-8;
    int batch_size = 16;
    int max_epochs = 300;
    int patience = 30;
    double train_mask_ratio = 0.4;
    uint64_t seed = 0;
    void validate() const;
};

// mean squared error over the supervision set {omega=1 AND psi=0}; 0 with
// count 0 when the set is empty.
double masked_mse_loss(const Tensor& x_hat, const Tensor& y, const Tensor& omega,
                       const Tensor& psi, int64_t* count = nullptr);

// supervision indicator omega=1 AND psi=0.
Tensor supervision_mask(const Tensor& omega, const Tensor& psi);

// bias-corrected Adam over all parameters in insertion order; zeroes grads.
// Throws on non-finite gradients, naming the parameter.
void adam_step(ParamStore& params, int64_t t, const TrainConfig& cfg);

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double valid_loss = 0.0;
};

struct TrainResult {
    std::vector<EpochRecord> history;
    int best_epoch = -1;
    double best_valid = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

// Masked self-supervised loop: shuffled batches, fresh training mask per
// batch per epoch, Adam, early stopping on a fixed seeded validation mask.
// params holds the best-validation values on return.
TrainResult train(const WindowSet& train_windows, const WindowSet& valid_windows,
                  const ModelConfig& mcfg, const TrainConfig& tcfg, ParamStore& params);

void write_history(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace t1

#endif
