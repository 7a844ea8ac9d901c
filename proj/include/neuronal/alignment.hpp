#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

#include "neuronal/errors.hpp"
#include "neuronal/profile.hpp"
#include "neuronal/schedules.hpp"

namespace neuronal {

// Summed, dimension-normalized L2 distance between normalized dense and
// sparse profiles; lower means the sparse activations track the dense ones
// more closely.
struct AlignmentValue {
    double total = 0.0;
    std::vector<double> per_layer;  // flat layer index
};

inline AlignmentValue neuron_alignment(const ActivationProfile& dense,
                                       const ActivationProfile& sparse) {
    if (!dense.normalized || !sparse.normalized) {
        throw validation_error("neuron_alignment: profiles must be normalized");
    }
    if (dense.layers.size() != sparse.layers.size()) {
        throw validation_error("neuron_alignment: profiles cover different layer sets");
    }
    AlignmentValue out;
    out.per_layer.resize(dense.layers.size());
    for (std::size_t l = 0; l < dense.layers.size(); ++l) {
        const auto& a = dense.layers[l];
        const auto& b = sparse.layers[l];
        if (a.size() != b.size()) {
            throw validation_error("neuron_alignment: layer " + std::to_string(l) +
                                   " sizes differ");
        }
        double ss = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            const double d = a[i] - b[i];
            ss += d * d;
        }
        const double term = a.empty() ? 0.0 : std::sqrt(ss) / static_cast<double>(a.size());
        out.per_layer[l] = term;
        out.total += term;
    }
    return out;
}

// Per-output-row misalignment of one layer: |dense - sparse| elementwise
// over the normalized profiles.
inline std::vector<double> row_misalignment(const ActivationProfile& dense,
                                            const ActivationProfile& sparse_block,
                                            const LayerId& layer) {
    if (!dense.normalized || !sparse_block.normalized) {
        throw validation_error("row_misalignment: profiles must be normalized");
    }
    const auto& a = dense.layer(layer);
    const auto& b = sparse_block.layer(layer);
    if (a.size() != b.size()) {
        throw validation_error("row_misalignment: layer sizes differ");
    }
    std::vector<double> m(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) m[i] = std::fabs(a[i] - b[i]);
    return m;
}

// Per-row sparsities in [s - lambda, s + lambda] around the layer's target:
// misalignments are min-max normalized (all-equal degenerates to 0.5) and
// the most misaligned rows receive the lowest sparsity, i.e. stay densest.
// Equal-weight mean correction pins the row mean back to the layer target.
inline std::vector<double> row_distribution(const std::vector<double>& misalign,
                                            double layer_sparsity, double lambda) {
    check_sparsity_fraction(layer_sparsity);
    if (lambda < 0.0) throw validation_error("row_distribution: lambda must be >= 0");
    const std::size_t n = misalign.size();
    if (n == 0) return {};
    for (double m : misalign) {
        if (!std::isfinite(m)) throw validation_error("row_distribution: non-finite misalignment");
    }
    double lo = misalign[0], hi = misalign[0];
    for (double m : misalign) {
        lo = std::min(lo, m);
        hi = std::max(hi, m);
    }
    if (lambda == 0.0 || hi == lo) {
        return std::vector<double>(n, layer_sparsity);
    }
    std::vector<double> raw(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double nm = (misalign[i] - lo) / (hi - lo);
        raw[i] = layer_sparsity + lambda * (1.0 - 2.0 * nm);
    }
    return mean_correct(std::move(raw), std::vector<std::int64_t>(n, 1), layer_sparsity);
}

}  // namespace neuronal
