#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "neuronal/errors.hpp"
#include "neuronal/model.hpp"

namespace neuronal {

enum class Scorer { magnitude, wanda };

inline const char* scorer_name(Scorer s) {
    return s == Scorer::magnitude ? "magnitude" : "wanda";
}

// Per-weight saliency, shape-matched to the model's prunable layers,
// entries finite and >= 0.
struct SaliencyScores {
    Scorer scorer = Scorer::magnitude;
    std::vector<Mat> layers;  // flat layer index
};

inline SaliencyScores score_magnitude(const ModelBundle& model) {
    SaliencyScores s;
    s.scorer = Scorer::magnitude;
    s.layers.reserve(static_cast<std::size_t>(layer_count(model.dims)));
    for (int idx = 0; idx < layer_count(model.dims); ++idx) {
        const Mat& w = model.layer(layer_from_index(idx));
        Mat sc(w.rows, w.cols);
        for (std::size_t i = 0; i < w.v.size(); ++i) sc.v[i] = std::fabs(w.v[i]);
        s.layers.push_back(std::move(sc));
    }
    return s;
}

// Wanda criterion: score[i][j] = |W[i][j]| * n_j, where n_j is the L2 norm
// of input feature j over the calibration positions at this layer's input.
inline SaliencyScores wanda_combine(const ModelBundle& model,
                                    const std::vector<std::vector<double>>& input_norms) {
    if (input_norms.size() != static_cast<std::size_t>(layer_count(model.dims))) {
        throw validation_error("wanda_combine: norms layer count does not match model");
    }
    SaliencyScores s;
    s.scorer = Scorer::wanda;
    s.layers.reserve(input_norms.size());
    for (int idx = 0; idx < layer_count(model.dims); ++idx) {
        const Mat& w = model.layer(layer_from_index(idx));
        const auto& norms = input_norms[static_cast<std::size_t>(idx)];
        if (norms.size() != w.cols) {
            throw validation_error("wanda_combine: norms for " + layer_name(layer_from_index(idx)) +
                                   " do not match input width");
        }
        Mat sc(w.rows, w.cols);
        for (std::size_t r = 0; r < w.rows; ++r) {
            const float* wr = w.row(r);
            float* sr = sc.row(r);
            for (std::size_t j = 0; j < w.cols; ++j) {
                sr[j] = static_cast<float>(std::fabs(static_cast<double>(wr[j])) * norms[j]);
            }
        }
        s.layers.push_back(std::move(sc));
    }
    return s;
}

}  // namespace neuronal
