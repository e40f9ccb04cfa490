#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "ran/param_store.hpp"
#include "ran/rng.hpp"

namespace ran {

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst_param;
    int64_t worst_index = -1;
    int samples = 0;
    double tolerance = 0.0;
    bool passed = false;
};

/// Central-difference check of analytic gradients. `forward` is called as
/// forward(store, with_grads); when with_grads is true it must accumulate
/// gradients into store entries' grad buffers and in all cases return the
/// scalar loss. The forward must be deterministic (dropout in infer mode or
/// with frozen masks); this is verified by evaluating it twice.
///
/// Relative error uses a small-magnitude floor so that near-zero gradients
/// compare absolutely: err = |a - n| / max(|a|, |n|, 1e-3).
template <typename F>
GradCheckReport grad_check(F&& forward, ParamStoreT<double>& store, int sample_count,
                           double tolerance, uint64_t seed = 1234) {
    GradCheckReport report;
    report.tolerance = tolerance;

    const double l0 = forward(store, false);
    const double l1 = forward(store, false);
    if (!(l0 == l1))
        throw Error("grad_check: non-deterministic forward (" + std::to_string(l0) +
                    " != " + std::to_string(l1) + ")");

    store.zero_grads();
    forward(store, true);

    std::vector<std::string> names;
    for (const auto& [name, p] : store.entries)
        if (p.value.numel() > 0) names.push_back(name);
    if (names.empty()) throw Error("grad_check: empty parameter store");

    Rng rng(seed);
    const double h = 1e-5;
    for (int s = 0; s < sample_count; ++s) {
        // Cover every entry once before sampling freely.
        const std::string& name =
            s < static_cast<int>(names.size())
                ? names[static_cast<size_t>(s)]
                : names[static_cast<size_t>(rng.uniform_int(static_cast<int64_t>(names.size())))];
        Param<double>& p = store.param(name);
        const int64_t idx = rng.uniform_int(p.value.numel());
        const double saved = p.value.data[static_cast<size_t>(idx)];

        p.value.data[static_cast<size_t>(idx)] = saved + h;
        const double lp = forward(store, false);
        p.value.data[static_cast<size_t>(idx)] = saved - h;
        const double lm = forward(store, false);
        p.value.data[static_cast<size_t>(idx)] = saved;

        const double numeric = (lp - lm) / (2.0 * h);
        const double analytic = p.value.grad[static_cast<size_t>(idx)];
        const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-3});
        const double rel = std::fabs(analytic - numeric) / denom;
        if (rel > report.max_rel_err) {
            report.max_rel_err = rel;
            report.worst_param = name;
            report.worst_index = idx;
        }
        ++report.samples;
    }
    report.passed = report.max_rel_err <= tolerance;
    return report;
}

} // namespace ran
