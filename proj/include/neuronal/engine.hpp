#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "neuronal/errors.hpp"
#include "neuronal/mask.hpp"
#include "neuronal/model.hpp"
#include "neuronal/profile.hpp"
#include "neuronal/saliency.hpp"
#include "neuronal/tokens.hpp"

namespace neuronal {

// Forward pass conventions, fixed for reproducibility:
//   - pre-norm decoder blocks: x += attn(rmsnorm(x)); x += mlp(rmsnorm(x))
//   - block-internal RMS norms are gainless; only the final norm has a gain
//   - no positional encoding; order information enters via causal masking
//   - float32 weights and activations, float32 dot-product accumulation,
//     fixed loop order; masked and materialized D*M forwards are bit-equal
//   - GELU is the exact erf form; softmax subtracts the row max
inline constexpr float kRmsNormEps = 1e-6f;

inline float gelu(float x) {
    return static_cast<float>(0.5 * static_cast<double>(x) *
                              (1.0 + std::erf(static_cast<double>(x) / std::numbers::sqrt2)));
}

namespace detail {

inline void rmsnorm(const float* x, float* out, std::size_t n) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i) ss += static_cast<double>(x[i]) * x[i];
    const float scale =
        static_cast<float>(1.0 / std::sqrt(ss / static_cast<double>(n) + kRmsNormEps));
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * scale;
}

// out = (W ? W*mask : W) x. The masked path multiplies each weight by its
// 0/1 mask entry before the same multiply-accumulate sequence, so it is
// bit-identical to running the unmasked loop over materialized W*mask.
inline void matvec(const Mat& w, const std::uint8_t* mask, const float* x, float* out) {
    for (std::size_t r = 0; r < w.rows; ++r) {
        const float* wr = w.row(r);
        float acc = 0.0f;
        if (mask) {
            const std::uint8_t* mr = mask + r * w.cols;
            for (std::size_t j = 0; j < w.cols; ++j) acc += (wr[j] * mr[j]) * x[j];
        } else {
            for (std::size_t j = 0; j < w.cols; ++j) acc += wr[j] * x[j];
        }
        out[r] = acc;
    }
}

inline void softmax_inplace(float* a, std::size_t n) {
    float mx = a[0];
    for (std::size_t i = 1; i < n; ++i) mx = std::max(mx, a[i]);
    float sum = 0.0f;
    for (std::size_t i = 0; i < n; ++i) {
        a[i] = std::exp(a[i] - mx);
        sum += a[i];
    }
    const float inv = 1.0f / sum;
    for (std::size_t i = 0; i < n; ++i) a[i] *= inv;
}

}  // namespace detail

// Running sums for the activation profile: per layer, per output neuron,
// sum of |activation| over positions.
struct ActivationAccum {
    std::vector<std::vector<double>> sum_abs;
    std::uint64_t positions = 0;

    explicit ActivationAccum(const ModelDims& d) {
        sum_abs.resize(static_cast<std::size_t>(layer_count(d)));
        for (int idx = 0; idx < layer_count(d); ++idx) {
            sum_abs[static_cast<std::size_t>(idx)].assign(
                layer_rows(d, layer_from_index(idx).kind), 0.0);
        }
    }
};

// Running sums for Wanda input-feature norms: per layer, per input feature,
// sum of squared inputs over positions.
struct WandaAccum {
    std::vector<std::vector<double>> sum_sq;

    explicit WandaAccum(const ModelDims& d) {
        sum_sq.resize(static_cast<std::size_t>(layer_count(d)));
        for (int idx = 0; idx < layer_count(d); ++idx) {
            sum_sq[static_cast<std::size_t>(idx)].assign(layer_cols(d, layer_from_index(idx).kind),
                                                         0.0);
        }
    }
};

namespace detail {

inline void forward_window(const ModelBundle& m, const SparsityMask* mask,
                           const std::uint32_t* tokens, std::size_t T, Mat* logits,
                           std::size_t logits_row0, ActivationAccum* acts, WandaAccum* wanda) {
    const auto dm = static_cast<std::size_t>(m.dims.d_model);
    const auto ff = static_cast<std::size_t>(m.dims.d_ff);
    const auto heads = static_cast<std::size_t>(m.dims.n_heads);
    const std::size_t hd = dm / heads;
    const float att_scale = static_cast<float>(1.0 / std::sqrt(static_cast<double>(hd)));

    auto mask_for = [&](int block, LayerKind kind) -> const std::uint8_t* {
        if (!mask) return nullptr;
        return mask->layer(LayerId{block, kind}).v.data();
    };
    auto tap_out = [&](int block, LayerKind kind, const float* vals, std::size_t n) {
        if (!acts) return;
        auto& s = acts->sum_abs[static_cast<std::size_t>(layer_index({block, kind}))];
        for (std::size_t i = 0; i < n; ++i) s[i] += std::fabs(static_cast<double>(vals[i]));
    };
    auto tap_in = [&](int block, LayerKind kind, const float* vals, std::size_t n) {
        if (!wanda) return;
        auto& s = wanda->sum_sq[static_cast<std::size_t>(layer_index({block, kind}))];
        for (std::size_t i = 0; i < n; ++i) s[i] += static_cast<double>(vals[i]) * vals[i];
    };

    std::vector<float> x(T * dm);
    for (std::size_t t = 0; t < T; ++t) {
        const std::uint32_t id = tokens[t];
        if (id >= static_cast<std::uint32_t>(m.dims.vocab)) {
            throw validation_error("token id " + std::to_string(id) + " out of vocab range");
        }
        const float* e = m.embedding.row(id);
        std::copy(e, e + dm, x.data() + t * dm);
    }

    std::vector<float> h(T * dm), q(T * dm), k(T * dm), v(T * dm), ctx(T * dm);
    std::vector<float> att(T), tmp(dm), u(ff), g(ff);

    for (int b = 0; b < m.dims.n_blocks; ++b) {
        const BlockWeights& blk = m.blocks[static_cast<std::size_t>(b)];

        // attention sublayer
        for (std::size_t t = 0; t < T; ++t) rmsnorm(x.data() + t * dm, h.data() + t * dm, dm);
        for (std::size_t t = 0; t < T; ++t) {
            const float* ht = h.data() + t * dm;
            matvec(blk.attn_q, mask_for(b, LayerKind::attn_q), ht, q.data() + t * dm);
            matvec(blk.attn_k, mask_for(b, LayerKind::attn_k), ht, k.data() + t * dm);
            matvec(blk.attn_v, mask_for(b, LayerKind::attn_v), ht, v.data() + t * dm);
            tap_out(b, LayerKind::attn_q, q.data() + t * dm, dm);
            tap_out(b, LayerKind::attn_k, k.data() + t * dm, dm);
            tap_out(b, LayerKind::attn_v, v.data() + t * dm, dm);
            tap_in(b, LayerKind::attn_q, ht, dm);
            tap_in(b, LayerKind::attn_k, ht, dm);
            tap_in(b, LayerKind::attn_v, ht, dm);
        }
        for (std::size_t t = 0; t < T; ++t) {
            float* ctx_t = ctx.data() + t * dm;
            for (std::size_t hh = 0; hh < heads; ++hh) {
                const float* qh = q.data() + t * dm + hh * hd;
                for (std::size_t s = 0; s <= t; ++s) {
                    const float* kh = k.data() + s * dm + hh * hd;
                    float dot = 0.0f;
                    for (std::size_t d = 0; d < hd; ++d) dot += qh[d] * kh[d];
                    att[s] = dot * att_scale;
                }
                softmax_inplace(att.data(), t + 1);
                float* ch = ctx_t + hh * hd;
                std::fill(ch, ch + hd, 0.0f);
                for (std::size_t s = 0; s <= t; ++s) {
                    const float* vh = v.data() + s * dm + hh * hd;
                    const float w = att[s];
                    for (std::size_t d = 0; d < hd; ++d) ch[d] += w * vh[d];
                }
            }
        }
        for (std::size_t t = 0; t < T; ++t) {
            const float* ctx_t = ctx.data() + t * dm;
            matvec(blk.attn_o, mask_for(b, LayerKind::attn_o), ctx_t, tmp.data());
            tap_out(b, LayerKind::attn_o, tmp.data(), dm);
            tap_in(b, LayerKind::attn_o, ctx_t, dm);
            float* xt = x.data() + t * dm;
            for (std::size_t i = 0; i < dm; ++i) xt[i] += tmp[i];
        }

        // mlp sublayer
        for (std::size_t t = 0; t < T; ++t) {
            float* xt = x.data() + t * dm;
            rmsnorm(xt, h.data(), dm);
            matvec(blk.mlp_fc1, mask_for(b, LayerKind::mlp_fc1), h.data(), u.data());
            tap_out(b, LayerKind::mlp_fc1, u.data(), ff);
            tap_in(b, LayerKind::mlp_fc1, h.data(), dm);
            for (std::size_t i = 0; i < ff; ++i) g[i] = gelu(u[i]);
            matvec(blk.mlp_fc2, mask_for(b, LayerKind::mlp_fc2), g.data(), tmp.data());
            tap_out(b, LayerKind::mlp_fc2, tmp.data(), dm);
            tap_in(b, LayerKind::mlp_fc2, g.data(), ff);
            for (std::size_t i = 0; i < dm; ++i) xt[i] += tmp[i];
        }
    }
    if (acts) acts->positions += T;

    if (logits) {
        for (std::size_t t = 0; t < T; ++t) {
            rmsnorm(x.data() + t * dm, h.data(), dm);
            for (std::size_t i = 0; i < dm; ++i) h[i] *= m.final_norm_gain[i];
            matvec(m.lm_head, nullptr, h.data(), logits->row(logits_row0 + t));
        }
    }
}

inline void check_forward_inputs(const ModelBundle& m, const SparsityMask* mask,
                                 const TokenStream& tokens, int seq_len) {
    if (seq_len < 1) throw validation_error("seq_len must be >= 1");
    if (tokens.ids.empty()) throw validation_error("token stream is empty");
    if (tokens.vocab > static_cast<std::uint32_t>(m.dims.vocab)) {
        throw validation_error("token vocab exceeds model vocab");
    }
    if (mask) validate_mask_shapes(*mask, m.dims);
}

}  // namespace detail

// Causal forward over consecutive windows of seq_len tokens (a shorter
// trailing window is processed as-is). Returns one logits row per input
// position. Deterministic: same inputs give bit-identical logits.
inline Mat forward_logits(const ModelBundle& m, const SparsityMask* mask, const TokenStream& tokens,
                          int seq_len) {
    detail::check_forward_inputs(m, mask, tokens, seq_len);
    Mat logits(tokens.ids.size(), static_cast<std::size_t>(m.dims.vocab));
    std::size_t pos = 0;
    while (pos < tokens.ids.size()) {
        const std::size_t T = std::min<std::size_t>(static_cast<std::size_t>(seq_len),
                                                    tokens.ids.size() - pos);
        detail::forward_window(m, mask, tokens.ids.data() + pos, T, &logits, pos, nullptr, nullptr);
        pos += T;
    }
    return logits;
}

// Unnormalized activation profile: mean |output| per neuron at each prunable
// layer's raw matrix-multiply output, over every position of the stream.
inline ActivationProfile capture_profile(const ModelBundle& m, const SparsityMask* mask,
                                         const TokenStream& calib, int seq_len) {
    detail::check_forward_inputs(m, mask, calib, seq_len);
    ActivationAccum acc(m.dims);
    std::size_t pos = 0;
    while (pos < calib.ids.size()) {
        const std::size_t T =
            std::min<std::size_t>(static_cast<std::size_t>(seq_len), calib.ids.size() - pos);
        detail::forward_window(m, mask, calib.ids.data() + pos, T, nullptr, 0, &acc, nullptr);
        pos += T;
    }
    ActivationProfile p;
    p.n_blocks = m.dims.n_blocks;
    p.normalized = false;
    p.layers.resize(acc.sum_abs.size());
    p.degenerate.assign(acc.sum_abs.size(), 0);
    const double inv = 1.0 / static_cast<double>(acc.positions);
    for (std::size_t l = 0; l < acc.sum_abs.size(); ++l) {
        p.layers[l].resize(acc.sum_abs[l].size());
        for (std::size_t i = 0; i < p.layers[l].size(); ++i) {
            p.layers[l][i] = acc.sum_abs[l][i] * inv;
        }
    }
    return p;
}

// L2 norm of each input feature at each prunable layer's input tap,
// accumulated over every position of the calibration stream (dense model).
inline std::vector<std::vector<double>> wanda_input_norms(const ModelBundle& m,
                                                          const TokenStream& calib, int seq_len) {
    detail::check_forward_inputs(m, nullptr, calib, seq_len);
    WandaAccum acc(m.dims);
    std::size_t pos = 0;
    while (pos < calib.ids.size()) {
        const std::size_t T =
            std::min<std::size_t>(static_cast<std::size_t>(seq_len), calib.ids.size() - pos);
        detail::forward_window(m, nullptr, calib.ids.data() + pos, T, nullptr, 0, nullptr, &acc);
        pos += T;
    }
    std::vector<std::vector<double>> norms(acc.sum_sq.size());
    for (std::size_t l = 0; l < acc.sum_sq.size(); ++l) {
        norms[l].resize(acc.sum_sq[l].size());
        for (std::size_t j = 0; j < norms[l].size(); ++j) norms[l][j] = std::sqrt(acc.sum_sq[l][j]);
    }
    return norms;
}

inline SaliencyScores score_wanda(const ModelBundle& model, const TokenStream& calib, int seq_len) {
    if (calib.ids.empty()) throw validation_error("score_wanda: calibration stream is empty");
    return wanda_combine(model, wanda_input_norms(model, calib, seq_len));
}

}  // namespace neuronal
