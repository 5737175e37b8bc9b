#include <doctest.h>

#include <cmath>
#include <numeric>
#include <vector>

#include "sdm/errors.hpp"
#include "sdm/losses.hpp"
#include "sdm/rng.hpp"

using namespace sdm;

namespace {

struct Batch {
    Matrix yhat, yhat_prime;
    std::vector<int> positives;
    std::vector<double> weights;

    LossBatchInput input(bool with_prime = true, bool with_weights = true) const {
        LossBatchInput in;
        in.yhat = &yhat;
        in.yhat_prime = with_prime ? &yhat_prime : nullptr;
        in.positives = &positives;
        in.weights = with_weights ? &weights : nullptr;
        return in;
    }
};

Batch random_batch(int b, int s, Rng& rng, double lo = 0.1, double hi = 0.9) {
    Batch batch;
    batch.yhat = Matrix(b, s);
    batch.yhat_prime = Matrix(b, s);
    for (double& v : batch.yhat.data) v = rng.uniform(lo, hi);
    for (double& v : batch.yhat_prime.data) v = rng.uniform(lo, hi);
    for (int i = 0; i < b; ++i) {
        batch.positives.push_back(static_cast<int>(rng.uniform_int(s)));
    }
    for (int j = 0; j < s; ++j) batch.weights.push_back(rng.uniform(1.5, 40.0));
    return batch;
}

// test-side decomposition of one batch into the three loss components:
// A = positive log term, B = observed-location PA term, C = random term,
// each with the -(1/(S*B)) factor applied
struct Components {
    double positive, observed_pa, random_pa;
};

Components components(const Batch& batch) {
    const int b = batch.yhat.rows, s = batch.yhat.cols;
    Components c{0.0, 0.0, 0.0};
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < s; ++j) {
            if (j == batch.positives[i]) {
                c.positive += std::log(batch.yhat(i, j));
            } else {
                c.observed_pa += std::log(1.0 - batch.yhat(i, j));
            }
            c.random_pa += std::log(1.0 - batch.yhat_prime(i, j));
        }
    }
    const double scale = -1.0 / (static_cast<double>(s) * b);
    return {c.positive * scale, c.observed_pa * scale, c.random_pa * scale};
}

// central finite differences of a loss scalar with respect to one
// prediction matrix
void check_prediction_gradients(const Batch& base, const LossConfig& config) {
    const double h = 1e-6;
    Batch batch = base;
    const LossResult res = compute_loss(batch.input(), config);
    for (Matrix Batch::*field : {&Batch::yhat, &Batch::yhat_prime}) {
        const Matrix& grad =
            field == &Batch::yhat ? res.grad_yhat : res.grad_yhat_prime;
        if (grad.empty()) continue;
        for (size_t i = 0; i < (batch.*field).data.size(); ++i) {
            const double keep = (batch.*field).data[i];
            (batch.*field).data[i] = keep + h;
            const double plus = compute_loss(batch.input(), config).value;
            (batch.*field).data[i] = keep - h;
            const double minus = compute_loss(batch.input(), config).value;
            (batch.*field).data[i] = keep;
            const double numeric = (plus - minus) / (2.0 * h);
            const double exact = grad.data[i];
            const double denom = std::max({std::abs(numeric), std::abs(exact), 1e-10});
            CHECK(std::abs(numeric - exact) / denom < 1e-6);
        }
    }
}

} // namespace

TEST_CASE("bce matches the symmetric half-probability oracle") {
    Batch batch;
    batch.yhat = Matrix(1, 2);
    batch.yhat.data = {0.5, 0.5};
    batch.positives = {0};
    const LossResult res = bce_loss(batch.input(false, false));
    CHECK(std::abs(res.value - std::log(2.0)) < 1e-9); // exactly log 2
}

TEST_CASE("bce hand-evaluated three-species example") {
    Batch batch;
    batch.yhat = Matrix(1, 3);
    batch.yhat.data = {0.2, 0.7, 0.4};
    batch.positives = {1};
    const double expected = -(std::log(0.7) + std::log(0.8) + std::log(0.6)) / 3.0;
    CHECK(expected == doctest::Approx(0.3635480396729776).epsilon(1e-12));
    const LossResult res = bce_loss(batch.input(false, false));
    CHECK(std::abs(res.value - expected) < 1e-9);
}

TEST_CASE("bce approaches zero for perfect predictions") {
    Batch batch;
    batch.yhat = Matrix(1, 4);
    batch.yhat.data = {1e-7, 1.0 - 1e-7, 1e-7, 1e-7};
    batch.positives = {1};
    CHECK(bce_loss(batch.input(false, false)).value < 1e-5);
}

TEST_CASE("full loss single-species oracle: 2049 log 2") {
    Batch batch;
    batch.yhat = Matrix(1, 1);
    batch.yhat.data = {0.5};
    batch.yhat_prime = Matrix(1, 1);
    batch.yhat_prime.data = {0.5};
    batch.positives = {0};
    const LossResult res = full_loss(batch.input(true, false), 2048.0);
    CHECK(std::abs(res.value - 2049.0 * std::log(2.0)) < 1e-9);
    CHECK(res.value == doctest::Approx(1420.2585729673278).epsilon(1e-12));
}

TEST_CASE("full loss with lambda=1 and vanishing random scores reduces to bce") {
    Rng rng(11);
    Batch batch = random_batch(4, 5, rng);
    batch.yhat_prime.fill(1e-7);
    const double full = full_loss(batch.input(true, false), 1.0).value;
    const double bce = bce_loss(batch.input(false, false)).value;
    CHECK(std::abs(full - bce) < 1e-6);
}

TEST_CASE("full loss random-location gradient is 1/(S B (1 - y'))") {
    Rng rng(13);
    Batch batch = random_batch(3, 4, rng);
    const LossResult res = full_loss(batch.input(true, false), 2048.0);
    const double inv_sb = 1.0 / (4.0 * 3.0);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 4; ++j) {
            const double expected = inv_sb / (1.0 - batch.yhat_prime(i, j));
            CHECK(res.grad_yhat_prime(i, j) == doctest::Approx(expected).epsilon(1e-12));
        }
    }
    check_prediction_gradients(batch, {LossKind::full, 2048.0, 1.0, 0.5});
}

TEST_CASE("full loss requires the random-location block") {
    Rng rng(17);
    Batch batch = random_batch(2, 3, rng);
    CHECK_THROWS_AS(full_loss(batch.input(false, false), 2.0), ValidationError);
}

TEST_CASE("full weighted loss single-species oracle: 5.5 log 2") {
    Batch batch;
    batch.yhat = Matrix(1, 1);
    batch.yhat.data = {0.5};
    batch.yhat_prime = Matrix(1, 1);
    batch.yhat_prime.data = {0.5};
    batch.positives = {0};
    batch.weights = {5.0}; // n = 10, n_p = 2
    const LossResult res = full_weighted_loss(batch.input(), 1.0, 0.5);
    CHECK(std::abs(res.value - 5.5 * std::log(2.0)) < 1e-9);
    CHECK(res.value == doctest::Approx(3.8123094930796992).epsilon(1e-12));
}

TEST_CASE("full weighted loss with lambda2=1 has exactly zero random gradient") {
    Rng rng(19);
    Batch batch = random_batch(4, 6, rng);
    const LossResult res = full_weighted_loss(batch.input(), 1.0, 1.0);
    for (double g : res.grad_yhat_prime.data) CHECK(g == 0.0);
}

TEST_CASE("full weighted loss is singular when any weight is <= 1") {
    Rng rng(23);
    Batch batch = random_batch(2, 3, rng);
    batch.weights[1] = 1.0;
    try {
        full_weighted_loss(batch.input(), 1.0, 0.5);
        FAIL("expected ValidationError");
    } catch (const ValidationError& e) {
        CHECK(std::string(e.what()).find("singular for species 1") != std::string::npos);
    }
}

TEST_CASE("uniform frequencies reduce the weighted loss to rescaled full-loss terms") {
    Rng rng(29);
    for (int trial = 0; trial < 20; ++trial) {
        const int s = 2 + static_cast<int>(rng.uniform_int(7));
        const int b = 1 + static_cast<int>(rng.uniform_int(6));
        Batch batch = random_batch(b, s, rng, 0.05, 0.95);
        batch.weights.assign(s, static_cast<double>(s));
        const double lambda1 = rng.uniform(0.1, 3.0);
        const double lambda2 = rng.uniform(0.0, 1.0);
        const auto c = components(batch);
        const double expected = lambda1 * s * c.positive +
                                lambda2 * s / (s - 1.0) * c.observed_pa +
                                (1.0 - lambda2) * c.random_pa;
        const double actual = full_weighted_loss(batch.input(), lambda1, lambda2).value;
        CHECK(std::abs(actual - expected) < 1e-12);
    }
}

TEST_CASE("component identity: full(lambda=1) = A + B + C and bce = A + B") {
    Rng rng(31);
    Batch batch = random_batch(5, 4, rng);
    const auto c = components(batch);
    CHECK(full_loss(batch.input(true, false), 1.0).value ==
          doctest::Approx(c.positive + c.observed_pa + c.random_pa).epsilon(1e-12));
    CHECK(bce_loss(batch.input(false, false)).value ==
          doctest::Approx(c.positive + c.observed_pa).epsilon(1e-12));
}

TEST_CASE("all three losses are non-negative on interior predictions") {
    Rng rng(37);
    for (int trial = 0; trial < 50; ++trial) {
        Batch batch = random_batch(1 + static_cast<int>(rng.uniform_int(6)),
                                   2 + static_cast<int>(rng.uniform_int(8)), rng, 0.01, 0.99);
        CHECK(bce_loss(batch.input(false, false)).value >= 0.0);
        CHECK(full_loss(batch.input(true, false), rng.uniform(0.1, 3000.0)).value >= 0.0);
        CHECK(full_weighted_loss(batch.input(), rng.uniform(0.1, 3.0), rng.uniform(0.0, 1.0))
                  .value >= 0.0);
    }
}

TEST_CASE("prediction gradients match finite differences for every loss") {
    Rng rng(41);
    for (int trial = 0; trial < 5; ++trial) {
        Batch batch = random_batch(3, 5, rng);
        check_prediction_gradients(batch, {LossKind::bce, 2048.0, 1.0, 0.5});
        check_prediction_gradients(batch, {LossKind::full, 7.5, 1.0, 0.5});
        check_prediction_gradients(batch, {LossKind::full_weighted, 2048.0, 0.7, 0.3});
    }
}

TEST_CASE("permuting species permutes gradients and fixes the scalar") {
    Rng rng(43);
    const int b = 4, s = 6;
    Batch batch = random_batch(b, s, rng);
    std::vector<int> perm(s);
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = s - 1; i > 0; --i) {
        std::swap(perm[i], perm[static_cast<int>(rng.uniform_int(i + 1))]);
    }
    Batch permuted = batch;
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < s; ++j) {
            permuted.yhat(i, perm[j]) = batch.yhat(i, j);
            permuted.yhat_prime(i, perm[j]) = batch.yhat_prime(i, j);
        }
        permuted.positives[i] = perm[batch.positives[i]];
    }
    for (int j = 0; j < s; ++j) permuted.weights[perm[j]] = batch.weights[j];

    const LossResult a = full_weighted_loss(batch.input(), 1.2, 0.4);
    const LossResult p = full_weighted_loss(permuted.input(), 1.2, 0.4);
    CHECK(a.value == doctest::Approx(p.value).epsilon(1e-12));
    for (int i = 0; i < b; ++i) {
        for (int j = 0; j < s; ++j) {
            CHECK(p.grad_yhat(i, perm[j]) == a.grad_yhat(i, j));
            CHECK(p.grad_yhat_prime(i, perm[j]) == a.grad_yhat_prime(i, j));
        }
    }
}

TEST_CASE("batch loss equals the mean of single-row losses") {
    Rng rng(47);
    const int b = 6, s = 4;
    Batch batch = random_batch(b, s, rng);
    for (LossKind kind : {LossKind::bce, LossKind::full, LossKind::full_weighted}) {
        const LossConfig config{kind, 20.0, 0.9, 0.35};
        const double whole = compute_loss(batch.input(), config).value;
        double acc = 0.0;
        for (int i = 0; i < b; ++i) {
            Batch row;
            row.yhat = Matrix(1, s);
            row.yhat_prime = Matrix(1, s);
            for (int j = 0; j < s; ++j) {
                row.yhat(0, j) = batch.yhat(i, j);
                row.yhat_prime(0, j) = batch.yhat_prime(i, j);
            }
            row.positives = {batch.positives[i]};
            row.weights = batch.weights;
            acc += compute_loss(row.input(), config).value;
        }
        CHECK(whole == doctest::Approx(acc / b).epsilon(1e-12));
    }
}

TEST_CASE("gradient doubles exactly when the upstream weight doubles") {
    // scaling every log coefficient is linear; verified through lambda1
    Rng rng(53);
    Batch batch = random_batch(3, 4, rng);
    const LossResult g1 = full_weighted_loss(batch.input(), 1.0, 0.0);
    const LossResult g2 = full_weighted_loss(batch.input(), 2.0, 0.0);
    for (int i = 0; i < 3; ++i) {
        const int p = batch.positives[i];
        CHECK(g2.grad_yhat(i, p) == 2.0 * g1.grad_yhat(i, p));
    }
}
