#pragma once

#include <string>
#include <vector>

#include "sdm/matrix.hpp"

namespace sdm {

enum class LossKind { bce, full, full_weighted };

LossKind loss_kind_from_string(const std::string& name);
std::string to_string(LossKind kind);

struct LossConfig {
    LossKind kind = LossKind::full_weighted;
    double lambda = 2048.0; // positive-term boost of the full loss
    double lambda1 = 1.0;   // positive-term scale of the full weighted loss
    double lambda2 = 0.5;   // split between observed-location and random PAs

    bool needs_random_locations() const { return kind != LossKind::bce; }
    void validate() const;
};

// One batch of predictions for the loss: scores at the observed locations,
// scores at the paired random locations, and the single positive species
// per row. weights are the catalog's w_s (full weighted loss only).
struct LossBatchInput {
    const Matrix* yhat = nullptr;
    const Matrix* yhat_prime = nullptr;
    const std::vector<int>* positives = nullptr;
    const std::vector<double>* weights = nullptr;
};

// Scalar is the batch-mean loss; gradients are with respect to the
// predictions, including the 1/batch factor, so they feed backward()
// directly. grad_yhat_prime stays empty for losses that ignore the
// random-location block.
struct LossResult {
    double value = 0.0;
    Matrix grad_yhat;
    Matrix grad_yhat_prime;
};

LossResult bce_loss(const LossBatchInput& input);
LossResult full_loss(const LossBatchInput& input, double lambda);
LossResult full_weighted_loss(const LossBatchInput& input, double lambda1, double lambda2);
LossResult compute_loss(const LossBatchInput& input, const LossConfig& config);

} // namespace sdm
