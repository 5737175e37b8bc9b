#pragma once

#include <string>
#include <vector>

#include "sdm/matrix.hpp"
#include "sdm/rng.hpp"

namespace sdm {

struct MlpConfig {
    int input_dim = 0;
    int hidden_layers = 5;
    int hidden_width = 1000;
    int output_dim = 0;
    double batchnorm_eps = 1e-5;
    double batchnorm_momentum = 0.1;

    void validate() const;
};

struct LinearParams {
    Matrix weight; // in x out
    std::vector<double> bias;
};

struct BatchNormParams {
    std::vector<double> gamma, beta;
    std::vector<double> running_mean, running_var;
};

// Residual MLP: a plain input projection D->H, then L blocks of
// h <- h + relu(batchnorm(W h + b)), then a linear head H->S whose logits
// pass through a clamped sigmoid.
struct Parameters {
    MlpConfig config;
    LinearParams input_proj;
    std::vector<LinearParams> hidden;
    std::vector<BatchNormParams> norms;
    LinearParams head;
};

struct Gradients {
    LinearParams input_proj;
    std::vector<LinearParams> hidden;
    struct NormGrads {
        std::vector<double> gamma, beta;
    };
    std::vector<NormGrads> norms;
    LinearParams head;
};

// Named view over one learnable block, in the canonical block order. Used
// by the SGD update, the checkpoint writer, and gradient checks.
struct BlockRef {
    std::string name;
    double* data;
    size_t size;
};

std::vector<BlockRef> learnable_blocks(Parameters& params);
std::vector<BlockRef> learnable_blocks(Gradients& grads);
// learnable blocks plus batch-norm running statistics; the checkpoint
// block order
std::vector<BlockRef> state_blocks(Parameters& params);

enum class RunMode { train, eval };

struct BatchNormCache {
    std::vector<double> inv_std; // per feature
    Matrix xhat;                 // normalized pre-activation
    Matrix normed;               // gamma * xhat + beta (relu input)
};

struct ForwardCache {
    bool train_mode = false;
    Matrix input;
    std::vector<Matrix> layer_inputs; // h entering each hidden block; [0] = proj output
    std::vector<BatchNormCache> bn;
    Matrix yhat; // clamped sigmoid outputs
};

// Predictions stay inside [kSigmoidClamp, 1 - kSigmoidClamp] so the loss
// logs are always finite.
inline constexpr double kSigmoidClamp = 1e-7;

Parameters init_params(const MlpConfig& config, Rng& rng);

// Returns clamped per-species scores for the batch. Train mode requires
// batch size >= 2, normalizes with batch statistics, and updates the
// running statistics in place; eval mode uses the running statistics and
// treats every row independently. Pass a cache to enable backward().
Matrix forward(Parameters& params, const Matrix& batch, RunMode mode,
               ForwardCache* cache = nullptr);

// Exact reverse-mode gradients of the forward function, given the loss
// gradient with respect to the clamped predictions. The cache must come
// from a train-mode forward on the same batch.
Gradients backward(const Parameters& params, const ForwardCache& cache,
                   const Matrix& grad_predictions);

void add_gradients(Gradients& into, const Gradients& other);

// theta <- theta - lr * g for every learnable block.
void sgd_update(Parameters& params, Gradients& grads, double lr);

// Checkpoint container: 8-byte magic "SDMCKPT1", little-endian uint64 JSON
// header length, the JSON header (config + block list), then raw
// little-endian float64 blocks in the declared order.
void save_checkpoint(Parameters& params, const std::string& path);
Parameters load_checkpoint(const std::string& path);

} // namespace sdm
