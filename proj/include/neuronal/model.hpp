#pragma once

#include <cmath>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neuronal/errors.hpp"
#include "neuronal/prng.hpp"
#include "neuronal/tensor.hpp"

namespace neuronal {

struct ModelDims {
    int d_model = 0;
    int n_heads = 0;
    int d_ff = 0;
    int n_blocks = 0;
    int vocab = 0;

    bool operator==(const ModelDims&) const = default;
};

inline void validate(const ModelDims& d) {
    if (d.d_model < 1 || d.n_heads < 1 || d.d_ff < 1 || d.n_blocks < 1 || d.vocab < 1) {
        throw validation_error("model dims: every field must be >= 1");
    }
    if (d.d_model % d.n_heads != 0) {
        throw validation_error("model dims: d_model must be divisible by n_heads");
    }
}

// The six prunable layers of one transformer block, in pruning order.
enum class LayerKind { attn_q = 0, attn_k, attn_v, attn_o, mlp_fc1, mlp_fc2 };

inline constexpr int kLayersPerBlock = 6;

inline const char* layer_kind_name(LayerKind k) {
    switch (k) {
        case LayerKind::attn_q: return "attn_q";
        case LayerKind::attn_k: return "attn_k";
        case LayerKind::attn_v: return "attn_v";
        case LayerKind::attn_o: return "attn_o";
        case LayerKind::mlp_fc1: return "mlp_fc1";
        case LayerKind::mlp_fc2: return "mlp_fc2";
    }
    return "?";
}

// Identifies one prunable layer. Total order: by block, then by LayerKind.
struct LayerId {
    int block = 0;
    LayerKind kind = LayerKind::attn_q;

    auto operator<=>(const LayerId&) const = default;
};

inline int layer_index(const LayerId& id) {
    return id.block * kLayersPerBlock + static_cast<int>(id.kind);
}

inline LayerId layer_from_index(int idx) {
    return LayerId{idx / kLayersPerBlock, static_cast<LayerKind>(idx % kLayersPerBlock)};
}

inline int layer_count(const ModelDims& d) { return d.n_blocks * kLayersPerBlock; }

inline std::string layer_name(const LayerId& id) {
    return "blk." + std::to_string(id.block) + "." + layer_kind_name(id.kind);
}

// Weight shape of a prunable layer: rows = output dim, cols = input dim.
inline std::size_t layer_rows(const ModelDims& d, LayerKind k) {
    return k == LayerKind::mlp_fc1 ? static_cast<std::size_t>(d.d_ff)
                                   : static_cast<std::size_t>(d.d_model);
}

inline std::size_t layer_cols(const ModelDims& d, LayerKind k) {
    return k == LayerKind::mlp_fc2 ? static_cast<std::size_t>(d.d_ff)
                                   : static_cast<std::size_t>(d.d_model);
}

struct BlockWeights {
    Mat attn_q, attn_k, attn_v, attn_o;  // d_model x d_model
    Mat mlp_fc1;                         // d_ff x d_model
    Mat mlp_fc2;                         // d_model x d_ff

    bool operator==(const BlockWeights&) const = default;
};

// A dense decoder-only model: token embedding, n_blocks transformer blocks
// (six prunable linear layers each), a final RMS-norm gain, and the LM head.
// Embedding, gain, and lm_head are never pruned.
struct ModelBundle {
    ModelDims dims;
    Mat embedding;                       // vocab x d_model
    std::vector<BlockWeights> blocks;
    std::vector<float> final_norm_gain;  // d_model
    Mat lm_head;                         // vocab x d_model
    std::optional<std::uint64_t> seed;   // provenance, recorded when generated

    Mat& layer(const LayerId& id) {
        BlockWeights& b = blocks[static_cast<std::size_t>(id.block)];
        switch (id.kind) {
            case LayerKind::attn_q: return b.attn_q;
            case LayerKind::attn_k: return b.attn_k;
            case LayerKind::attn_v: return b.attn_v;
            case LayerKind::attn_o: return b.attn_o;
            case LayerKind::mlp_fc1: return b.mlp_fc1;
            case LayerKind::mlp_fc2: return b.mlp_fc2;
        }
        return b.attn_q;
    }

    const Mat& layer(const LayerId& id) const {
        return const_cast<ModelBundle*>(this)->layer(id);
    }

    bool operator==(const ModelBundle&) const = default;
};

// Number of prunable parameters per block (equal across blocks for this
// architecture, kept as a vector so schedules can weight by it).
inline std::vector<std::int64_t> block_param_counts(const ModelDims& d) {
    const std::int64_t dm = d.d_model;
    const std::int64_t ff = d.d_ff;
    const std::int64_t per_block = 4 * dm * dm + 2 * dm * ff;
    return std::vector<std::int64_t>(static_cast<std::size_t>(d.n_blocks), per_block);
}

inline std::int64_t prunable_param_count(const ModelDims& d) {
    return static_cast<std::int64_t>(d.n_blocks) * (4ll * d.d_model * d.d_model + 2ll * d.d_model * d.d_ff);
}

struct TensorRef {
    std::string name;
    std::vector<std::size_t> shape;  // {rows, cols} or {len} for 1-D
    float* data;

    std::size_t numel() const {
        std::size_t n = 1;
        for (std::size_t s : shape) n *= s;
        return n;
    }
};

// All tensors of a bundle in serialization order: embedding, then the six
// layers of each block, then final_norm_gain, then lm_head.
inline std::vector<TensorRef> tensor_table(ModelBundle& b) {
    std::vector<TensorRef> t;
    t.push_back({"embedding",
                 {static_cast<std::size_t>(b.dims.vocab), static_cast<std::size_t>(b.dims.d_model)},
                 b.embedding.v.data()});
    for (int i = 0; i < b.dims.n_blocks; ++i) {
        for (int k = 0; k < kLayersPerBlock; ++k) {
            const LayerId id{i, static_cast<LayerKind>(k)};
            Mat& w = b.layer(id);
            t.push_back({layer_name(id), {w.rows, w.cols}, w.v.data()});
        }
    }
    t.push_back({"final_norm_gain", {static_cast<std::size_t>(b.dims.d_model)}, b.final_norm_gain.data()});
    t.push_back({"lm_head",
                 {static_cast<std::size_t>(b.dims.vocab), static_cast<std::size_t>(b.dims.d_model)},
                 b.lm_head.v.data()});
    return t;
}

// Expected (name, shape) table for given dims, without needing a bundle.
inline std::vector<std::pair<std::string, std::vector<std::size_t>>> expected_tensors(const ModelDims& d) {
    std::vector<std::pair<std::string, std::vector<std::size_t>>> t;
    t.push_back({"embedding", {static_cast<std::size_t>(d.vocab), static_cast<std::size_t>(d.d_model)}});
    for (int i = 0; i < d.n_blocks; ++i) {
        for (int k = 0; k < kLayersPerBlock; ++k) {
            const LayerId id{i, static_cast<LayerKind>(k)};
            t.push_back({layer_name(id), {layer_rows(d, id.kind), layer_cols(d, id.kind)}});
        }
    }
    t.push_back({"final_norm_gain", {static_cast<std::size_t>(d.d_model)}});
    t.push_back({"lm_head", {static_cast<std::size_t>(d.vocab), static_cast<std::size_t>(d.d_model)}});
    return t;
}

inline ModelBundle make_empty_bundle(const ModelDims& d) {
    validate(d);
    ModelBundle b;
    b.dims = d;
    const auto dm = static_cast<std::size_t>(d.d_model);
    const auto ff = static_cast<std::size_t>(d.d_ff);
    const auto vb = static_cast<std::size_t>(d.vocab);
    b.embedding = Mat(vb, dm);
    b.blocks.resize(static_cast<std::size_t>(d.n_blocks));
    for (auto& blk : b.blocks) {
        blk.attn_q = Mat(dm, dm);
        blk.attn_k = Mat(dm, dm);
        blk.attn_v = Mat(dm, dm);
        blk.attn_o = Mat(dm, dm);
        blk.mlp_fc1 = Mat(ff, dm);
        blk.mlp_fc2 = Mat(dm, ff);
    }
    b.final_norm_gain.assign(dm, 0.0f);
    b.lm_head = Mat(vb, dm);
    return b;
}

inline void validate(const ModelBundle& b) {
    validate(b.dims);
    const ModelBundle ref = make_empty_bundle(b.dims);
    auto check_shape = [](const Mat& got, const Mat& want, const char* name) {
        if (got.rows != want.rows || got.cols != want.cols || got.v.size() != got.rows * got.cols) {
            throw validation_error(std::string("tensor shape mismatch for ") + name);
        }
    };
    check_shape(b.embedding, ref.embedding, "embedding");
    if (b.blocks.size() != ref.blocks.size()) {
        throw validation_error("block count does not match dims");
    }
    for (int i = 0; i < b.dims.n_blocks; ++i) {
        for (int k = 0; k < kLayersPerBlock; ++k) {
            const LayerId id{i, static_cast<LayerKind>(k)};
            check_shape(b.layer(id), ref.layer(id), layer_name(id).c_str());
        }
    }
    if (b.final_norm_gain.size() != static_cast<std::size_t>(b.dims.d_model)) {
        throw validation_error("tensor shape mismatch for final_norm_gain");
    }
    check_shape(b.lm_head, ref.lm_head, "lm_head");
    for (const TensorRef& t : tensor_table(const_cast<ModelBundle&>(b))) {
        const std::size_t n = t.numel();
        for (std::size_t i = 0; i < n; ++i) {
            if (!std::isfinite(t.data[i])) {
                throw validation_error("non-finite value in tensor " + t.name);
            }
        }
    }
}

// Deterministic synthetic model. One splitmix64-backed normal stream seeded
// with `seed` fills the tensors in serialization order; each draw is scaled
// by 1/sqrt(fan-in), where fan-in is the column count for 2-D tensors and 1
// for the 1-D gain vector. Same (dims, seed) gives a bitwise-identical
// bundle on every run.
inline ModelBundle generate_model(const ModelDims& dims, std::uint64_t seed) {
    ModelBundle b = make_empty_bundle(dims);
    b.seed = seed;
    NormalSampler normals(seed);
    for (TensorRef& t : tensor_table(b)) {
        const std::size_t fan_in = t.shape.size() == 2 ? t.shape[1] : 1;
        const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
        const std::size_t n = t.numel();
        for (std::size_t i = 0; i < n; ++i) {
            t.data[i] = static_cast<float>(normals.next() * scale);
        }
    }
    return b;
}

}  // namespace neuronal
