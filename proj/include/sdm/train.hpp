#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "sdm/data.hpp"
#include "sdm/geo.hpp"
#include "sdm/losses.hpp"
#include "sdm/model.hpp"

namespace sdm {

struct TrainConfig {
    int epochs = 150;
    double lr = 0.001;
    int batch_size = 256;
    LossConfig loss;
    uint64_t init_seed = 1;
    uint64_t shuffle_seed = 2;
    uint64_t pa_seed = 3;
    // when > 0 and checkpoint_dir is set, an intermediate checkpoint is
    // written every checkpoint_interval epochs
    int checkpoint_interval = 0;
    std::string checkpoint_dir;

    void validate() const;
};

struct EpochStats {
    int epoch = 0;       // 1-based
    double mean_loss = 0.0;
    double seconds = 0.0; // wall time; kept out of the history file
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

// History CSV holds the deterministic columns only (epoch, loss), so two
// identically-seeded runs emit identical bytes.
void save_history_csv(const TrainHistory& history, const std::string& path);

// Uniformly draws cells, jitters a point inside each, and assembles
// feature rows exactly like the observed samples.
Matrix sample_random_locations(int count, const EnvGrid& grid, bool with_encoder, Rng& rng);

// One SGD step: train-mode forward on the observed batch (and on the
// random-location batch when the loss uses one, each normalizing over its
// own rows), exact backward through both, one update. Returns the
// pre-update loss.
double train_step(Parameters& params, const Matrix& batch, const std::vector<int>& positives,
                  const Matrix& pa_batch, const LossConfig& loss_config,
                  const SpeciesCatalog& catalog, double lr);

struct TrainResult {
    Parameters params;
    TrainHistory history;
};

TrainResult train(const Dataset& dataset, const SpeciesCatalog& catalog, const EnvGrid& grid,
                  bool with_encoder, const MlpConfig& model_config, const TrainConfig& config);

} // namespace sdm
