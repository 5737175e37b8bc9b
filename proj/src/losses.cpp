#include "sdm/losses.hpp"

#include <cmath>

#include "sdm/errors.hpp"

namespace sdm {

LossKind loss_kind_from_string(const std::string& name) {
    if (name == "bce") return LossKind::bce;
    if (name == "full") return LossKind::full;
    if (name == "full_weighted") return LossKind::full_weighted;
    throw ValidationError("unknown loss kind '" + name +
                          "' (expected bce, full, or full_weighted)");
}

std::string to_string(LossKind kind) {
    switch (kind) {
    case LossKind::bce: return "bce";
    case LossKind::full: return "full";
    case LossKind::full_weighted: return "full_weighted";
    }
    return "?";
}

void LossConfig::validate() const {
    if (!(lambda > 0.0)) throw ValidationError("loss lambda must be > 0");
    if (!(lambda1 > 0.0)) throw ValidationError("loss lambda1 must be > 0");
    if (lambda2 < 0.0 || lambda2 > 1.0) throw ValidationError("loss lambda2 must be in [0, 1]");
}

namespace {

void check_observed(const LossBatchInput& input) {
    if (!input.yhat || !input.positives) {
        throw ValidationError("loss input needs predictions and positives");
    }
    const Matrix& y = *input.yhat;
    if (static_cast<int>(input.positives->size()) != y.rows) {
        throw ValidationError("one positive species index per batch row required");
    }
    for (int p : *input.positives) {
        if (p < 0 || p >= y.cols) {
            throw ValidationError("positive species index " + std::to_string(p) +
                                  " outside [0, " + std::to_string(y.cols) + ")");
        }
    }
}

void check_random(const LossBatchInput& input) {
    const Matrix& y = *input.yhat;
    if (!input.yhat_prime) {
        throw ValidationError("this loss requires random-location predictions");
    }
    if (input.yhat_prime->rows != y.rows || input.yhat_prime->cols != y.cols) {
        throw ValidationError("random-location prediction shape does not match observed block");
    }
}

} // namespace

LossResult bce_loss(const LossBatchInput& input) {
    check_observed(input);
    const Matrix& y = *input.yhat;
    const int b = y.rows, s = y.cols;
    const double inv_sb = 1.0 / (static_cast<double>(s) * b);

    LossResult res;
    res.grad_yhat = Matrix(b, s);
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        const int p = (*input.positives)[i];
        const double* yr = y.row(i);
        double* gr = res.grad_yhat.row(i);
        double row = 0.0;
        for (int j = 0; j < s; ++j) {
            if (j == p) {
                row += std::log(yr[j]);
                gr[j] = -inv_sb / yr[j];
            } else {
                row += std::log1p(-yr[j]);
                gr[j] = inv_sb / (1.0 - yr[j]);
            }
        }
        total += row;
    }
    res.value = -total / (s * static_cast<double>(b));
    return res;
}

LossResult full_loss(const LossBatchInput& input, double lambda) {
    check_observed(input);
    check_random(input);
    const Matrix& y = *input.yhat;
    const Matrix& yp = *input.yhat_prime;
    const int b = y.rows, s = y.cols;
    const double inv_sb = 1.0 / (static_cast<double>(s) * b);

    LossResult res;
    res.grad_yhat = Matrix(b, s);
    res.grad_yhat_prime = Matrix(b, s);
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        const int p = (*input.positives)[i];
        const double* yr = y.row(i);
        const double* ypr = yp.row(i);
        double* gr = res.grad_yhat.row(i);
        double* gpr = res.grad_yhat_prime.row(i);
        double row = 0.0;
        for (int j = 0; j < s; ++j) {
            if (j == p) {
                row += lambda * std::log(yr[j]);
                gr[j] = -lambda * inv_sb / yr[j];
            } else {
                row += std::log1p(-yr[j]);
                gr[j] = inv_sb / (1.0 - yr[j]);
            }
            // the random-location term runs over every species, positive
            // included
            row += std::log1p(-ypr[j]);
            gpr[j] = inv_sb / (1.0 - ypr[j]);
        }
        total += row;
    }
    res.value = -total / (s * static_cast<double>(b));
    return res;
}

LossResult full_weighted_loss(const LossBatchInput& input, double lambda1, double lambda2) {
    check_observed(input);
    check_random(input);
    const Matrix& y = *input.yhat;
    const Matrix& yp = *input.yhat_prime;
    const int b = y.rows, s = y.cols;
    if (!input.weights || static_cast<int>(input.weights->size()) != s) {
        throw ValidationError("full-weighted loss requires one species weight per species");
    }
    const std::vector<double>& w = *input.weights;
    for (int j = 0; j < s; ++j) {
        if (!(w[j] > 1.0)) {
            throw ValidationError("full-weighted loss singular for species " + std::to_string(j) +
                                  " (weight " + std::to_string(w[j]) +
                                  " means n_p(s) = n; no other species holds a record)");
        }
    }
    const double inv_sb = 1.0 / (static_cast<double>(s) * b);

    // per-species coefficient of the observed-location PA term
    std::vector<double> neg_coef(s);
    for (int j = 0; j < s; ++j) neg_coef[j] = lambda2 / (1.0 - 1.0 / w[j]);
    const double rand_coef = 1.0 - lambda2;

    LossResult res;
    res.grad_yhat = Matrix(b, s);
    res.grad_yhat_prime = Matrix(b, s);
    double total = 0.0;
    for (int i = 0; i < b; ++i) {
        const int p = (*input.positives)[i];
        const double* yr = y.row(i);
        const double* ypr = yp.row(i);
        double* gr = res.grad_yhat.row(i);
        double* gpr = res.grad_yhat_prime.row(i);
        double row = 0.0;
        for (int j = 0; j < s; ++j) {
            if (j == p) {
                row += lambda1 * w[j] * std::log(yr[j]);
                gr[j] = -lambda1 * w[j] * inv_sb / yr[j];
            } else {
                row += neg_coef[j] * std::log1p(-yr[j]);
                gr[j] = neg_coef[j] * inv_sb / (1.0 - yr[j]);
            }
            row += rand_coef * std::log1p(-ypr[j]);
            gpr[j] = rand_coef * inv_sb / (1.0 - ypr[j]);
        }
        total += row;
    }
    res.value = -total / (s * static_cast<double>(b));
    return res;
}

LossResult compute_loss(const LossBatchInput& input, const LossConfig& config) {
    config.validate();
    switch (config.kind) {
    case LossKind::bce: return bce_loss(input);
    case LossKind::full: return full_loss(input, config.lambda);
    case LossKind::full_weighted:
        return full_weighted_loss(input, config.lambda1, config.lambda2);
    }
    throw ValidationError("unknown loss kind");
}

} // namespace sdm
