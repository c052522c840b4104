#pragma once

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "sarc/optimizer.hpp"

namespace sarc {

// End-to-end gradient verification: the whole model's analytic gradients
// (reverse-mode) are compared against central finite differences of the loss,
// parameter group by parameter group, in the widest precision the platform
// offers. Relative error uses max(|analytic|, |numeric|, 1e-3) as the
// denominator so near-zero coordinates compare on an absolute scale.

struct GradCheckGroup {
    std::string name;
    long double max_rel_err = 0.0L;
    bool pass = false;
};

struct GradCheckReport {
    std::vector<GradCheckGroup> groups;
    long double tolerance = 0.0L;
    bool pass = false;
};

// Test hook: mutates the analytic gradient of the named group before the
// comparison, simulating a wrong backward rule.
using GradTamper = std::function<void(const std::string& name, std::vector<long double>& grad)>;

inline GradCheckReport gradcheck_model(const ModelConfig& config, int batch, std::uint64_t data_seed,
                                       long double tol = 1e-4L, long double h = 1e-4L,
                                       const GradTamper& tamper = nullptr) {
    config.validate();
    if (batch < 1) throw ContractError("gradcheck batch must be >= 1");
    auto params = build_model<long double>(config);

    // Deterministic synthetic batch with varied real lengths so the check
    // covers the pad-carry paths.
    std::mt19937_64 rng(data_seed);
    std::uniform_int_distribution<int> pick_id(2, config.vocab_size - 1);
    std::vector<EncodedExample> examples(batch);
    std::vector<int> labels(batch);
    for (int b = 0; b < batch; ++b) {
        int real = config.max_len - (2 * b) % config.max_len;
        if (real < 1) real = 1;
        auto& ex = examples[b];
        ex.ids.assign(config.max_len, Vocabulary::kPadId);
        ex.mask.assign(config.max_len, 0);
        for (int t = 0; t < real; ++t) {
            ex.ids[t] = pick_id(rng);
            ex.mask[t] = 1;
        }
        ex.label = labels[b] = b % 2;
        examples[b] = ex;
    }

    auto loss_value = [&]() -> long double {
        NoGradGuard no_grad;
        auto logits = forward(params, examples);
        auto loss = cross_entropy(logits, labels);
        return loss->data[0];
    };

    // One analytic pass over the full graph.
    auto named = params.named();
    zero_all_grads(named);
    auto logits = forward(params, examples);
    auto loss = cross_entropy(logits, labels);
    auto tape = GradTape<long double>::record(loss);
    tape.backward();
    std::vector<std::vector<long double>> analytic(named.size());
    for (std::size_t i = 0; i < named.size(); ++i) {
        named[i].tensor->ensure_grad();
        analytic[i] = named[i].tensor->grad;
        if (tamper) tamper(named[i].name, analytic[i]);
    }
    tape.release();

    GradCheckReport report;
    report.tolerance = tol;
    report.pass = true;
    for (std::size_t i = 0; i < named.size(); ++i) {
        auto numeric = finite_diff_grad<long double>(loss_value, named[i].tensor, h);
        GradCheckGroup group;
        group.name = named[i].name;
        for (std::size_t j = 0; j < numeric.size(); ++j) {
            const long double a = analytic[i][j], n = numeric[j];
            const long double denom = std::max({std::fabs(a), std::fabs(n), 1e-3L});
            group.max_rel_err = std::max(group.max_rel_err, std::fabs(a - n) / denom);
        }
        group.pass = group.max_rel_err < tol;
        report.pass = report.pass && group.pass;
        report.groups.push_back(std::move(group));
    }
    return report;
}

}  // namespace sarc
