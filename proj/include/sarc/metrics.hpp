#pragma once

#include <array>
#include <cstdint>

#include "sarc/errors.hpp"

namespace sarc {

// Binary-classification confusion counts, indexed [actual][predicted].
struct ConfusionCounts {
    std::array<std::array<long long, 2>, 2> c{{{0, 0}, {0, 0}}};

    long long& at(int actual, int predicted) { return c[actual][predicted]; }
    long long at(int actual, int predicted) const { return c[actual][predicted]; }
    long long total() const { return c[0][0] + c[0][1] + c[1][0] + c[1][1]; }
    void add(int actual, int predicted) { ++c[actual][predicted]; }
};

struct ClassScore {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

struct MetricsReport {
    double accuracy = 0.0;
    double macro_f1 = 0.0;
    std::array<ClassScore, 2> per_class{};
    ConfusionCounts confusion;
};

inline ClassScore class_score(const ConfusionCounts& m, int k) {
    const long long tp = m.at(k, k);
    const long long fp = m.at(1 - k, k);
    const long long fn = m.at(k, 1 - k);
    ClassScore s;
    s.precision = (tp + fp) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fp) : 0.0;
    s.recall = (tp + fn) > 0 ? static_cast<double>(tp) / static_cast<double>(tp + fn) : 0.0;
    // A class that never occurs and is never predicted scores 0 by convention.
    s.f1 = (s.precision + s.recall) > 0.0 ? 2.0 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
    return s;
}

inline double macro_f1(const ConfusionCounts& m) {
    for (int a = 0; a < 2; ++a)
        for (int p = 0; p < 2; ++p)
            if (m.at(a, p) < 0) throw ContractError("confusion counts must be nonnegative");
    if (m.total() == 0) throw ContractError("macro_f1 of an empty confusion matrix");
    return (class_score(m, 0).f1 + class_score(m, 1).f1) / 2.0;
}

inline MetricsReport compute_metrics(const ConfusionCounts& m) {
    MetricsReport r;
    r.confusion = m;
    r.macro_f1 = macro_f1(m);  // also validates the counts
    r.accuracy = static_cast<double>(m.at(0, 0) + m.at(1, 1)) / static_cast<double>(m.total());
    r.per_class[0] = class_score(m, 0);
    r.per_class[1] = class_score(m, 1);
    return r;
}

}  // namespace sarc
