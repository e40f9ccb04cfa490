#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "ran/ops.hpp"
#include "ran/tensor.hpp"

namespace ran {

template <typename T>
struct GridLossResult {
    double loss = 0.0;
    TensorT<T> dlogits; // same shape as logits
};

/// Cross-entropy over an N x M grid of 2-class logits, averaged over
/// masked-in cells. Gradient w.r.t. logits is (softmax - onehot) / |mask|.
template <typename T>
GridLossResult<T> grid_cross_entropy_with_logits(const TensorT<T>& logits,
                                                 const std::vector<uint8_t>& labels,
                                                 const std::vector<uint8_t>& mask) {
    if (logits.shape.rank != 3 || logits.shape[2] != 2)
        throw ShapeError("grid_cross_entropy_with_logits: logits must be NxMx2, got " +
                         logits.shape.str());
    const size_t cells = static_cast<size_t>(logits.shape[0]) * logits.shape[1];
    if (labels.size() != cells || mask.size() != cells)
        throw ShapeError("grid_cross_entropy_with_logits: labels/mask size mismatch");
    int64_t included = 0;
    for (uint8_t m : mask) included += m ? 1 : 0;
    if (included == 0) throw Error("grid_cross_entropy_with_logits: empty mask");

    GridLossResult<T> out;
    out.dlogits = TensorT<T>(logits.shape);
    double total = 0.0;
    const double inv = 1.0 / static_cast<double>(included);
    for (size_t c = 0; c < cells; ++c) {
        if (!mask[c]) continue;
        const T z0 = logits.data[2 * c], z1 = logits.data[2 * c + 1];
        const double m = std::max(static_cast<double>(z0), static_cast<double>(z1));
        const double e0 = std::exp(static_cast<double>(z0) - m);
        const double e1 = std::exp(static_cast<double>(z1) - m);
        const double lse = m + std::log(e0 + e1);
        const int y = labels[c] ? 1 : 0;
        total += lse - static_cast<double>(y ? z1 : z0);
        const double p0 = e0 / (e0 + e1), p1 = e1 / (e0 + e1);
        out.dlogits.data[2 * c] = static_cast<T>((p0 - (y == 0 ? 1.0 : 0.0)) * inv);
        out.dlogits.data[2 * c + 1] = static_cast<T>((p1 - (y == 1 ? 1.0 : 0.0)) * inv);
    }
    out.loss = total * inv;
    return out;
}

/// Cross-entropy over already-softmaxed per-cell probabilities. Validates
/// that probabilities are in [0, 1]; the log argument is floored at 1e-300
/// so a hard-zero true-class probability yields a large finite loss.
template <typename T>
double grid_cross_entropy(const TensorT<T>& probs, const std::vector<uint8_t>& labels,
                          const std::vector<uint8_t>& mask) {
    if (probs.shape.rank != 3 || probs.shape[2] != 2)
        throw ShapeError("grid_cross_entropy: probs must be NxMx2, got " + probs.shape.str());
    const size_t cells = static_cast<size_t>(probs.shape[0]) * probs.shape[1];
    if (labels.size() != cells || mask.size() != cells)
        throw ShapeError("grid_cross_entropy: labels/mask size mismatch");
    int64_t included = 0;
    double total = 0.0;
    for (size_t c = 0; c < cells; ++c) {
        const double p0 = probs.data[2 * c], p1 = probs.data[2 * c + 1];
        if (p0 < 0.0 || p0 > 1.0 || p1 < 0.0 || p1 > 1.0)
            throw Error("grid_cross_entropy: probability outside [0,1] at cell " + std::to_string(c));
        if (!mask[c]) continue;
        ++included;
        const double p_true = labels[c] ? p1 : p0;
        total += -std::log(std::max(p_true, 1e-300));
    }
    if (included == 0) throw Error("grid_cross_entropy: empty mask");
    return total / static_cast<double>(included);
}

} // namespace ran
