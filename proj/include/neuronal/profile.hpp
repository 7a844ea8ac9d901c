#pragma once

#include <cstdint>
#include <vector>

#include "neuronal/errors.hpp"
#include "neuronal/model.hpp"

namespace neuronal {

// Per-layer aggregated output activations. Unnormalized entries are the
// mean absolute activation of each output neuron over all calibration
// positions; normalized entries sum to one per layer. A layer whose raw
// profile sums to zero normalizes to the uniform vector and is flagged
// degenerate.
struct ActivationProfile {
    int n_blocks = 0;
    bool normalized = false;
    std::vector<std::vector<double>> layers;  // flat layer index -> per-output-neuron value
    std::vector<std::uint8_t> degenerate;     // per flat layer index

    const std::vector<double>& layer(const LayerId& id) const {
        return layers[static_cast<std::size_t>(layer_index(id))];
    }
};

inline ActivationProfile normalize_profile(const ActivationProfile& p) {
    if (p.normalized) return p;
    ActivationProfile out;
    out.n_blocks = p.n_blocks;
    out.normalized = true;
    out.layers.resize(p.layers.size());
    out.degenerate.assign(p.layers.size(), 0);
    for (std::size_t l = 0; l < p.layers.size(); ++l) {
        const auto& a = p.layers[l];
        double sum = 0.0;
        for (double x : a) sum += x;
        auto& na = out.layers[l];
        na.resize(a.size());
        if (sum == 0.0) {
            const double u = a.empty() ? 0.0 : 1.0 / static_cast<double>(a.size());
            for (double& x : na) x = u;
            out.degenerate[l] = 1;
        } else {
            for (std::size_t i = 0; i < a.size(); ++i) na[i] = a[i] / sum;
        }
    }
    return out;
}

}  // namespace neuronal
