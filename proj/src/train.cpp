#include "sdm/train.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

#include "sdm/errors.hpp"

namespace sdm {

void TrainConfig::validate() const {
    if (epochs < 1) throw ValidationError("train epochs must be >= 1");
    if (!(lr > 0.0)) throw ValidationError("train lr must be > 0");
    if (batch_size < 2) throw ValidationError("train batch_size must be >= 2 (batch norm)");
    if (checkpoint_interval < 0) throw ValidationError("checkpoint_interval must be >= 0");
    loss.validate();
}

void save_history_csv(const TrainHistory& history, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw ValidationError("cannot open history file for writing: " + path);
    out << "epoch,loss\n";
    char buf[96];
    for (const auto& e : history.epochs) {
        std::snprintf(buf, sizeof(buf), "%d,%.17g\n", e.epoch, e.mean_loss);
        out << buf;
    }
    if (!out) throw ValidationError("failed writing history file: " + path);
}

Matrix sample_random_locations(int count, const EnvGrid& grid, bool with_encoder, Rng& rng) {
    grid.validate();
    if (count < 1) throw ValidationError("sample_random_locations needs count >= 1");
    Matrix batch(count, feature_row_dim(grid, with_encoder));
    const int cells = grid.cell_count();
    const double cw = grid.cell_width(), ch = grid.cell_height();
    for (int i = 0; i < count; ++i) {
        const int cell = static_cast<int>(rng.uniform_int(cells));
        const int iy = cell / grid.width, ix = cell % grid.width;
        // jitter in (0, 1] keeps the point inside the drawn cell under the
        // lower-edge tie rule
        const double lon =
            std::min(grid.lon_max, grid.lon_min + (ix + rng.uniform_pos()) * cw);
        const double lat =
            std::min(grid.lat_max, grid.lat_min + (iy + rng.uniform_pos()) * ch);
        assemble_feature_row(grid, with_encoder, lon, lat, batch.row(i));
    }
    return batch;
}

double train_step(Parameters& params, const Matrix& batch, const std::vector<int>& positives,
                  const Matrix& pa_batch, const LossConfig& loss_config,
                  const SpeciesCatalog& catalog, double lr) {
    const bool with_pa = loss_config.needs_random_locations();
    if (with_pa && pa_batch.rows != batch.rows) {
        throw ValidationError("random-location batch must match the observed batch size");
    }

    ForwardCache cache;
    const Matrix yhat = forward(params, batch, RunMode::train, &cache);

    ForwardCache pa_cache;
    Matrix yhat_prime;
    if (with_pa) {
        yhat_prime = forward(params, pa_batch, RunMode::train, &pa_cache);
    }

    LossBatchInput input;
    input.yhat = &yhat;
    input.yhat_prime = with_pa ? &yhat_prime : nullptr;
    input.positives = &positives;
    input.weights = &catalog.weights;
    const LossResult loss = compute_loss(input, loss_config);
    if (!std::isfinite(loss.value)) {
        throw std::runtime_error("non-finite training loss");
    }

    Gradients grads = backward(params, cache, loss.grad_yhat);
    if (with_pa) {
        const Gradients pa_grads = backward(params, pa_cache, loss.grad_yhat_prime);
        add_gradients(grads, pa_grads);
    }
    sgd_update(params, grads, lr);
    return loss.value;
}

TrainResult train(const Dataset& dataset, const SpeciesCatalog& catalog, const EnvGrid& grid,
                  bool with_encoder, const MlpConfig& model_config, const TrainConfig& config) {
    config.validate();
    if (dataset.size() == 0) throw ValidationError("training dataset is empty");
    if (dataset.size() < 2) throw ValidationError("training needs at least 2 samples");
    if (dataset.size() != catalog.total) {
        throw ValidationError("dataset size does not match catalog total");
    }
    if (config.loss.kind == LossKind::full_weighted && catalog.has_singular_weight()) {
        std::ostringstream msg;
        msg << "full-weighted loss singular for species";
        for (int s : catalog.singular_species()) msg << ' ' << s;
        msg << " (n_p(s) = n)";
        throw ValidationError(msg.str());
    }

    MlpConfig cfg = model_config;
    cfg.input_dim = dataset.dim();
    cfg.output_dim = catalog.species_count;
    cfg.validate();

    Rng init_rng(config.init_seed);
    Parameters params = init_params(cfg, init_rng);
    Rng pa_rng(config.pa_seed);

    const int n = dataset.size();
    const int bsz = std::min(config.batch_size, n);
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);

    TrainHistory history;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        Rng shuffle_rng = Rng(config.shuffle_seed).derive(static_cast<uint64_t>(epoch));
        for (int i = n - 1; i > 0; --i) {
            const int j = static_cast<int>(shuffle_rng.uniform_int(i + 1));
            std::swap(order[i], order[j]);
        }

        double loss_sum = 0.0;
        long long rows_seen = 0;
        int start = 0, step = 0;
        while (start < n) {
            int end = std::min(start + bsz, n);
            // batch norm cannot normalize a single row; fold a lone
            // trailing sample into the previous batch boundary
            if (n - end == 1) end = n;
            if (end - start == 1) {
                throw ValidationError("cannot form a training batch of >= 2 rows");
            }
            const int b = end - start;
            Matrix batch(b, dataset.dim());
            std::vector<int> positives(b);
            for (int i = 0; i < b; ++i) {
                const int src = order[start + i];
                const double* from = dataset.features.row(src);
                std::copy(from, from + dataset.dim(), batch.row(i));
                positives[i] = dataset.positives[src];
            }
            Matrix pa_batch;
            if (config.loss.needs_random_locations()) {
                pa_batch = sample_random_locations(b, grid, with_encoder, pa_rng);
            }
            double loss;
            try {
                loss = train_step(params, batch, positives, pa_batch, config.loss, catalog,
                                  config.lr);
            } catch (const ValidationError&) {
                throw;
            } catch (const std::exception& e) {
                throw std::runtime_error("epoch " + std::to_string(epoch + 1) + " step " +
                                         std::to_string(step + 1) + ": " + e.what());
            }
            loss_sum += loss * b;
            rows_seen += b;
            start = end;
            ++step;
        }

        const auto t1 = std::chrono::steady_clock::now();
        EpochStats stats;
        stats.epoch = epoch + 1;
        stats.mean_loss = loss_sum / static_cast<double>(rows_seen);
        stats.seconds = std::chrono::duration<double>(t1 - t0).count();
        history.epochs.push_back(stats);

        if (config.checkpoint_interval > 0 && !config.checkpoint_dir.empty() &&
            (epoch + 1) % config.checkpoint_interval == 0 && epoch + 1 < config.epochs) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_epoch%04d.bin", epoch + 1);
            save_checkpoint(params,
                            (std::filesystem::path(config.checkpoint_dir) / name).string());
        }
    }

    return {std::move(params), std::move(history)};
}

} // namespace sdm
