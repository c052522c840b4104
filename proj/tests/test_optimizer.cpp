#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <functional>
#include <random>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "sarc/model.hpp"
#include "sarc/optimizer.hpp"
#include "test_support.hpp"

using sarc::AdamHyper;
using sarc::AdamState;
using sarc::NamedParam;
using sarc::Tensor;
using sarc::TensorPtr;

namespace {

NamedParam<double> param(const std::string& name, TensorPtr<double> t, int frozen_row = -1) {
    NamedParam<double> p;
    p.name = name;
    p.tensor = std::move(t);
    p.frozen_row = frozen_row;
    return p;
}

void set_grad(const TensorPtr<double>& t, const std::vector<double>& g) {
    t->ensure_grad();
    t->grad = g;
}

}  // namespace

TEST_CASE("hyperparameter validation rejects out-of-range values") {
    AdamHyper h;
    h.validate();  // defaults are the training configuration
    CHECK(h.alpha == 0.001);
    CHECK(h.beta1 == 0.9);
    CHECK(h.beta2 == 0.999);
    CHECK(h.eps == 1e-8);
    CHECK(h.weight_decay == 1e-4);

    AdamHyper bad = h;
    bad.alpha = 0.0;
    CHECK_THROWS_AS(bad.validate(), sarc::ConfigError);
    bad = h;
    bad.beta1 = 1.0;
    CHECK_THROWS_AS(bad.validate(), sarc::ConfigError);
    bad = h;
    bad.beta2 = -0.1;
    CHECK_THROWS_AS(bad.validate(), sarc::ConfigError);
    bad = h;
    bad.eps = 0.0;
    CHECK_THROWS_AS(bad.validate(), sarc::ConfigError);
    bad = h;
    bad.weight_decay = -1e-6;
    CHECK_THROWS_AS(bad.validate(), sarc::ConfigError);
}

TEST_CASE("zero gradient and zero decay is a fixed point") {
    auto t = Tensor<double>::create({1, 3}, {0.5, -1.5, 2.0}, true);
    std::vector<NamedParam<double>> params{param("w", t)};
    auto state = AdamState<double>::init(params);
    AdamHyper h;
    h.weight_decay = 0.0;
    set_grad(t, {0.0, 0.0, 0.0});
    sarc::adam_step(params, state, h);
    CHECK(t->data == std::vector<double>{0.5, -1.5, 2.0});
    CHECK(state.t == 1);
}

TEST_CASE("the first step moves each weight by alpha times g over |g| plus eps") {
    // With bias correction at t=1, m-hat = g and v-hat = g*g, so the update
    // is exactly alpha * g / (|g| + eps).
    auto t = Tensor<double>::create({1, 3}, {1.0, 2.0, -3.0}, true);
    std::vector<NamedParam<double>> params{param("w", t)};
    auto state = AdamState<double>::init(params);
    AdamHyper h;
    h.weight_decay = 0.0;
    const std::vector<double> g{0.4, -0.02, 7.0};
    set_grad(t, g);
    sarc::adam_step(params, state, h);
    for (int j = 0; j < 3; ++j) {
        const double want = (j == 0 ? 1.0 : j == 1 ? 2.0 : -3.0) - h.alpha * g[j] / (std::fabs(g[j]) + h.eps);
        CHECK(t->data[j] == doctest::Approx(want).epsilon(1e-14));
    }
}

TEST_CASE("several steps replay the scalar recurrence exactly") {
    auto t = Tensor<double>::create({2, 2}, {0.5, -0.25, 1.25, 0.0}, true);
    std::vector<NamedParam<double>> params{param("w", t)};
    auto state = AdamState<double>::init(params);
    AdamHyper h;  // includes decoupled decay 1e-4
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> dist(-2.0, 2.0);
    std::vector<std::vector<double>> grads(5);
    for (auto& g : grads) {
        g.resize(4);
        for (auto& v : g) v = dist(rng);
    }
    for (const auto& g : grads) {
        set_grad(t, g);
        sarc::adam_step(params, state, h);
    }
    CHECK(state.t == 5);
    const std::vector<double> theta0{0.5, -0.25, 1.25, 0.0};
    for (int j = 0; j < 4; ++j) {
        oracle::Vec gj;
        for (const auto& g : grads) gj.push_back(g[j]);
        const long double want = oracle::adam_scalar(theta0[j], gj, h.alpha, h.beta1, h.beta2, h.eps, h.weight_decay);
        CHECK(std::fabs(t->data[j] - want) < 1e-13L);
    }
}

TEST_CASE("per-step movement is bounded by roughly alpha") {
    // The adaptive ratio |m-hat| / sqrt(v-hat) stays near 1 for a constant
    // gradient, so no coordinate can jump far regardless of gradient scale.
    auto t = Tensor<double>::create({1, 2}, {0.0, 0.0}, true);
    std::vector<NamedParam<double>> params{param("w", t)};
    auto state = AdamState<double>::init(params);
    AdamHyper h;
    h.weight_decay = 0.0;
    for (int step = 0; step < 50; ++step) {
        double before0 = t->data[0], before1 = t->data[1];
        set_grad(t, {1e6, -1e-4});
        sarc::adam_step(params, state, h);
        CHECK(std::fabs(t->data[0] - before0) <= h.alpha * 1.1);
        CHECK(std::fabs(t->data[1] - before1) <= h.alpha * 1.1);
    }
    // Large positive gradients push the weight down, tiny negative ones up.
    CHECK(t->data[0] < 0.0);
    CHECK(t->data[1] > 0.0);
    for (const auto& v : state.v)
        for (double x : v) CHECK(x >= 0.0);
}

TEST_CASE("a non-finite gradient is reported with the parameter's name") {
    auto a = Tensor<double>::create({1, 2}, {0.0, 0.0}, true);
    auto b = Tensor<double>::create({1, 2}, {0.0, 0.0}, true);
    std::vector<NamedParam<double>> params{param("first.ok", a), param("second.bad", b)};
    auto state = AdamState<double>::init(params);
    set_grad(a, {1.0, 1.0});
    set_grad(b, {1.0, std::numeric_limits<double>::quiet_NaN()});
    try {
        sarc::adam_step(params, state, AdamHyper{});
        FAIL("NaN gradient was accepted");
    } catch (const sarc::NumericError& e) {
        CHECK(std::string(e.what()).find("second.bad") != std::string::npos);
    }
}

TEST_CASE("a frozen row stays at zero through decay and gradients") {
    auto t = Tensor<double>::create({3, 2}, {0, 0, 1, 2, 3, 4}, true);
    std::vector<NamedParam<double>> params{param("embedding.table", t, 0)};
    auto state = AdamState<double>::init(params);
    for (int step = 0; step < 4; ++step) {
        set_grad(t, {5, 5, 1, 1, 1, 1});  // even a bogus gradient on the frozen row
        sarc::adam_step(params, state, AdamHyper{});
    }
    CHECK(t->at(0, 0) == 0.0);
    CHECK(t->at(0, 1) == 0.0);
    CHECK(t->at(1, 0) != 1.0);  // the live rows did move
}

TEST_CASE("adam state must match the parameter list") {
    auto t = Tensor<double>::create({1, 2}, {0.0, 0.0}, true);
    std::vector<NamedParam<double>> params{param("w", t)};
    auto state = AdamState<double>::init(params);
    auto extra = Tensor<double>::create({1, 1}, {0.0}, true);
    params.push_back(param("extra", extra));
    CHECK_THROWS_AS(sarc::adam_step(params, state, AdamHyper{}), sarc::ContractError);
}

TEST_CASE("uniform logits cost ln 2 for two classes") {
    auto logits = Tensor<double>::create({1, 2}, {0.0, 0.0});
    auto loss = sarc::cross_entropy(logits, {0});
    CHECK(loss->data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
    // Any equal pair of logits gives the same cost (shift invariance).
    auto shifted = sarc::cross_entropy(Tensor<double>::create({1, 2}, {3.7, 3.7}), {1});
    CHECK(shifted->data[0] == doctest::Approx(std::log(2.0)).epsilon(1e-15));
}

TEST_CASE("a saturated correct logit costs almost nothing") {
    auto loss = sarc::cross_entropy(Tensor<double>::create({1, 2}, {30.0, 0.0}), {0});
    CHECK(loss->data[0] < 1e-6);
    CHECK(loss->data[0] >= 0.0);
}

TEST_CASE("extreme logits stay finite under the log-sum-exp form") {
    auto loss = sarc::cross_entropy(Tensor<double>::create({2, 2}, {1000.0, -1000.0, -1000.0, 1000.0}), {1, 0});
    CHECK(std::isfinite(loss->data[0]));
    CHECK(loss->data[0] == doctest::Approx(2000.0).epsilon(1e-12));
}

TEST_CASE("labels outside the class range are rejected") {
    auto logits = Tensor<double>::create({2, 2}, {0, 0, 0, 0});
    CHECK_THROWS_AS(sarc::cross_entropy(logits, {0, 2}), sarc::ContractError);
    CHECK_THROWS_AS(sarc::cross_entropy(logits, {-1, 0}), sarc::ContractError);
    CHECK_THROWS_AS(sarc::cross_entropy(logits, {0}), sarc::ShapeError);
}

TEST_CASE("batch cost matches the direct per-example formula") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::uniform_int_distribution<int> db(1, 6), dc(2, 5);
        const int B = db(rng), C = dc(rng);
        auto lm = oracle::random_mat(rng, B, C, -4.0, 4.0);
        std::vector<int> labels(B);
        std::uniform_int_distribution<int> dl(0, C - 1);
        for (auto& l : labels) l = dl(rng);
        auto loss = sarc::cross_entropy(test_support::from_mat<double>(lm), labels);
        CHECK(std::fabs(loss->data[0] - oracle::cross_entropy(lm, labels)) < 1e-13L);
    }
}

TEST_CASE("loss gradient rows sum to zero and match finite differences") {
    std::mt19937_64 rng(6);
    auto logits = test_support::from_mat<double>(oracle::random_mat(rng, 3, 4, -2.0, 2.0), true);
    const std::vector<int> labels{0, 2, 3};
    logits->zero_grad();
    auto loss = sarc::cross_entropy(logits, labels);
    auto tape = sarc::GradTape<double>::record(loss);
    tape.backward();
    for (int b = 0; b < 3; ++b) {
        double row = 0.0;
        for (int c = 0; c < 4; ++c) row += logits->grad[static_cast<std::size_t>(b) * 4 + c];
        CHECK(row == doctest::Approx(0.0).epsilon(1e-15));
        // The true class must be pushed up (negative gradient).
        CHECK(logits->grad[static_cast<std::size_t>(b) * 4 + labels[b]] < 0.0);
    }
    std::vector<double> analytic = logits->grad;
    std::function<double()> f = [&] {
        sarc::NoGradGuard guard;
        return sarc::cross_entropy(logits, labels)->data[0];
    };
    auto numeric = sarc::finite_diff_grad<double>(f, logits, 1e-5);
    for (std::size_t i = 0; i < numeric.size(); ++i)
        CHECK(test_support::rel_err(analytic[i], numeric[i]) < 1e-8L);
    tape.release();
}

TEST_CASE("one optimizer step on the loss itself reduces it") {
    std::mt19937_64 rng(7);
    auto logits = test_support::from_mat<double>(oracle::random_mat(rng, 4, 3, -1.0, 1.0), true);
    const std::vector<int> labels{0, 1, 2, 1};
    std::vector<NamedParam<double>> params{param("logits", logits)};
    auto state = AdamState<double>::init(params);
    AdamHyper h;
    h.alpha = 1e-4;
    h.weight_decay = 0.0;
    const double before = sarc::cross_entropy(logits, labels)->data[0];
    logits->zero_grad();
    auto loss = sarc::cross_entropy(logits, labels);
    auto tape = sarc::GradTape<double>::record(loss);
    tape.backward();
    sarc::adam_step(params, state, h);
    tape.release();
    const double after = sarc::cross_entropy(logits, labels)->data[0];
    CHECK(after < before);
}

TEST_CASE("strictly decreasing validation loss never stops training") {
    sarc::EarlyStopState s;
    CHECK(sarc::early_stop_update(s, 1.0) == sarc::StopDecision::continue_training);
    CHECK(sarc::early_stop_update(s, 0.9) == sarc::StopDecision::continue_training);
    CHECK(sarc::early_stop_update(s, 0.8) == sarc::StopDecision::continue_training);
    CHECK(s.epochs_since_improve == 0);
    CHECK(s.best_val_loss == 0.8);
}

TEST_CASE("five flat epochs after a best trigger the stop") {
    sarc::EarlyStopState s;  // patience 5
    CHECK(sarc::early_stop_update(s, 1.0) == sarc::StopDecision::continue_training);
    for (int i = 0; i < 4; ++i) {
        CHECK(sarc::early_stop_update(s, 1.0) == sarc::StopDecision::continue_training);
        CHECK(s.epochs_since_improve == i + 1);
    }
    CHECK(sarc::early_stop_update(s, 1.0) == sarc::StopDecision::stop);
    CHECK(s.epochs_since_improve == 5);
    CHECK(s.best_val_loss == 1.0);
}

TEST_CASE("matching the best is not an improvement") {
    sarc::EarlyStopState s;
    sarc::early_stop_update(s, 1.0);
    sarc::early_stop_update(s, 1.0);
    CHECK(s.epochs_since_improve == 1);
    // A later strict improvement resets the counter.
    sarc::early_stop_update(s, 0.5);
    CHECK(s.epochs_since_improve == 0);
    CHECK(s.best_val_loss == 0.5);
}

TEST_CASE("an improvement inside the patience window restarts the count") {
    sarc::EarlyStopState s;
    s.patience = 2;
    CHECK(sarc::early_stop_update(s, 1.0) == sarc::StopDecision::continue_training);
    CHECK(sarc::early_stop_update(s, 1.1) == sarc::StopDecision::continue_training);  // 1 stale
    CHECK(sarc::early_stop_update(s, 0.9) == sarc::StopDecision::continue_training);  // reset
    CHECK(sarc::early_stop_update(s, 0.95) == sarc::StopDecision::continue_training);  // 1 stale
    CHECK(sarc::early_stop_update(s, 0.99) == sarc::StopDecision::stop);  // 2 stale
}

TEST_CASE("early stopping refuses non-finite losses") {
    sarc::EarlyStopState s;
    CHECK_THROWS_AS(sarc::early_stop_update(s, std::numeric_limits<double>::quiet_NaN()), sarc::ContractError);
    CHECK_THROWS_AS(sarc::early_stop_update(s, std::numeric_limits<double>::infinity()), sarc::ContractError);
}

TEST_CASE("zero_all_grads clears every accumulated gradient") {
    auto a = Tensor<double>::create({1, 2}, {1.0, 2.0}, true);
    auto b = Tensor<double>::create({2, 1}, {3.0, 4.0}, true);
    std::vector<NamedParam<double>> params{param("a", a), param("b", b)};
    set_grad(a, {5.0, 5.0});
    set_grad(b, {5.0, 5.0});
    sarc::zero_all_grads(params);
    for (double g : a->grad) CHECK(g == 0.0);
    for (double g : b->grad) CHECK(g == 0.0);
}
