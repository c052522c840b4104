#pragma once

#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "sarc/model.hpp"

namespace sarc {

// Adam hyperparameters with decoupled weight decay (decay applied to the
// weights after the adaptive step, not mixed into the gradient).
struct AdamHyper {
    double alpha = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 1e-4;

    void validate() const {
        if (!(alpha > 0.0)) throw ConfigError("adam: alpha must be > 0");
        if (beta1 < 0.0 || beta1 >= 1.0) throw ConfigError("adam: beta1 must lie in [0, 1)");
        if (beta2 < 0.0 || beta2 >= 1.0) throw ConfigError("adam: beta2 must lie in [0, 1)");
        if (!(eps > 0.0)) throw ConfigError("adam: eps must be > 0");
        if (weight_decay < 0.0) throw ConfigError("adam: weight_decay must be >= 0");
    }
};

// Per-parameter first/second moment estimates, parallel to the model's named
// parameter list, plus the shared step counter.
template <typename T>
struct AdamState {
    long long t = 0;
    std::vector<std::vector<T>> m, v;

    static AdamState init(const std::vector<NamedParam<T>>& params) {
        AdamState s;
        s.m.reserve(params.size());
        s.v.reserve(params.size());
        for (const auto& p : params) {
            s.m.emplace_back(p.tensor->size(), T(0));
            s.v.emplace_back(p.tensor->size(), T(0));
        }
        return s;
    }

    bool shapes_match(const std::vector<NamedParam<T>>& params) const {
        if (m.size() != params.size() || v.size() != params.size()) return false;
        for (std::size_t i = 0; i < params.size(); ++i)
            if (m[i].size() != params[i].tensor->size() || v[i].size() != params[i].tensor->size()) return false;
        return true;
    }
};

// One Adam update over every parameter: moment update, bias correction,
// adaptive step, then decoupled decay. A parameter with no accumulated
// gradient is treated as having gradient zero (decay still applies). The
// embedding pad row is re-zeroed after the step. Update arithmetic runs in
// double and is stored back in T, so checkpointed state round-trips exactly.
template <typename T>
void adam_step(const std::vector<NamedParam<T>>& params, AdamState<T>& state, const AdamHyper& hyper) {
    hyper.validate();
    if (!state.shapes_match(params))
        throw ContractError("adam state does not match the parameter list");
    ++state.t;
    const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(state.t));
    const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto& theta = params[i].tensor->data;
        auto& grad = params[i].tensor->grad;
        auto& m = state.m[i];
        auto& v = state.v[i];
        const bool has_grad = !grad.empty();
        for (std::size_t j = 0; j < theta.size(); ++j) {
            const double g = has_grad ? static_cast<double>(grad[j]) : 0.0;
            if (!std::isfinite(g))
                throw NumericError("non-finite gradient in " + params[i].name);
            const double mj = hyper.beta1 * static_cast<double>(m[j]) + (1.0 - hyper.beta1) * g;
            const double vj = hyper.beta2 * static_cast<double>(v[j]) + (1.0 - hyper.beta2) * g * g;
            m[j] = static_cast<T>(mj);
            v[j] = static_cast<T>(vj);
            const double m_hat = mj / c1;
            const double v_hat = vj / c2;
            double th = static_cast<double>(theta[j]);
            th -= hyper.alpha * m_hat / (std::sqrt(v_hat) + hyper.eps);
            th -= hyper.alpha * hyper.weight_decay * th;
            theta[j] = static_cast<T>(th);
        }
        if (params[i].frozen_row >= 0) {
            const int cols = params[i].tensor->cols();
            for (int c = 0; c < cols; ++c) params[i].tensor->at(params[i].frozen_row, c) = T(0);
        }
    }
}

// Mean softmax cross-entropy over the batch, stabilized via log-sum-exp.
// Differentiable: d(loss)/d(logits) = (softmax - onehot) / B.
template <typename T>
TensorPtr<T> cross_entropy(const TensorPtr<T>& logits, const std::vector<int>& labels) {
    detail::require_rank2(logits, "cross_entropy");
    const int B = logits->shape[0];
    const int C = logits->shape[1];
    if (static_cast<int>(labels.size()) != B)
        throw ShapeError("cross_entropy got " + std::to_string(labels.size()) + " labels for logits " +
                         logits->shape_str());
    for (int b = 0; b < B; ++b)
        if (labels[b] < 0 || labels[b] >= C)
            throw ContractError("label " + std::to_string(labels[b]) + " out of range for " + std::to_string(C) +
                                " classes");
    T total = T(0);
    for (int b = 0; b < B; ++b) {
        T mx = logits->at(b, 0);
        for (int c = 1; c < C; ++c) mx = std::max(mx, logits->at(b, c));
        T sum = T(0);
        for (int c = 0; c < C; ++c) sum += std::exp(logits->at(b, c) - mx);
        total += mx + std::log(sum) - logits->at(b, labels[b]);
    }
    auto out = make_node<T>({1}, {total / static_cast<T>(B)}, {logits});
    if (out->requires_grad) {
        auto* node = out.get();
        out->backward_fn = [node, logits, labels, B, C]() {
            const T g = node->grad[0] / static_cast<T>(B);
            logits->ensure_grad();
            for (int b = 0; b < B; ++b) {
                T mx = logits->at(b, 0);
                for (int c = 1; c < C; ++c) mx = std::max(mx, logits->at(b, c));
                T sum = T(0);
                for (int c = 0; c < C; ++c) sum += std::exp(logits->at(b, c) - mx);
                for (int c = 0; c < C; ++c) {
                    const T p = std::exp(logits->at(b, c) - mx) / sum;
                    logits->grad[static_cast<std::size_t>(b) * C + c] += g * (p - (c == labels[b] ? T(1) : T(0)));
                }
            }
        };
    }
    return out;
}

// Validation-loss early stopping with a strict-decrease improvement rule.
struct EarlyStopState {
    double best_val_loss = std::numeric_limits<double>::infinity();
    int epochs_since_improve = 0;
    int patience = 5;
};

enum class StopDecision { continue_training, stop };

inline StopDecision early_stop_update(EarlyStopState& state, double val_loss) {
    if (!std::isfinite(val_loss)) throw ContractError("early stopping requires a finite validation loss");
    if (val_loss < state.best_val_loss) {
        state.best_val_loss = val_loss;
        state.epochs_since_improve = 0;
        return StopDecision::continue_training;
    }
    ++state.epochs_since_improve;
    return state.epochs_since_improve >= state.patience ? StopDecision::stop : StopDecision::continue_training;
}

template <typename T>
void zero_all_grads(const std::vector<NamedParam<T>>& params) {
    for (const auto& p : params) p.tensor->zero_grad();
}

}  // namespace sarc
