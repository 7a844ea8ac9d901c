#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuronal/errors.hpp"
#include "neuronal/model.hpp"
#include "neuronal/saliency.hpp"
#include "neuronal/schedules.hpp"

namespace neuronal {

// Binary keep/drop mask for every prunable layer, flat layer order.
struct SparsityMask {
    std::vector<MaskMat> layers;

    int n_blocks() const { return static_cast<int>(layers.size()) / kLayersPerBlock; }

    MaskMat& layer(const LayerId& id) { return layers[static_cast<std::size_t>(layer_index(id))]; }
    const MaskMat& layer(const LayerId& id) const {
        return layers[static_cast<std::size_t>(layer_index(id))];
    }

    bool operator==(const SparsityMask&) const = default;
};

inline void validate_mask_shapes(const SparsityMask& m, const ModelDims& d) {
    if (static_cast<int>(m.layers.size()) != layer_count(d)) {
        throw validation_error("mask layer count does not match model");
    }
    for (int idx = 0; idx < layer_count(d); ++idx) {
        const LayerId id = layer_from_index(idx);
        const MaskMat& mm = m.layers[static_cast<std::size_t>(idx)];
        if (mm.rows != layer_rows(d, id.kind) || mm.cols != layer_cols(d, id.kind) ||
            mm.v.size() != mm.rows * mm.cols) {
            throw validation_error("mask shape mismatch for " + layer_name(id));
        }
    }
}

// Kept count for a comparison group: round-half-up of (1-s)*n.
inline std::size_t kept_count(double sparsity, std::size_t group_size) {
    const double k = std::floor((1.0 - sparsity) * static_cast<double>(group_size) + 0.5);
    if (k <= 0.0) return 0;
    const auto ki = static_cast<std::size_t>(k);
    return std::min(ki, group_size);
}

enum class Group { layer, row };

namespace detail {

// Marks the kept entries of one comparison group. Keeps the k largest
// scores; ties keep the smaller flat index.
inline void mark_top_k(const float* scores, std::uint8_t* mask, std::size_t n, std::size_t k,
                       std::vector<std::uint32_t>& idx_buf) {
    std::fill(mask, mask + n, std::uint8_t{0});
    if (k == 0) return;
    if (k >= n) {
        std::fill(mask, mask + n, std::uint8_t{1});
        return;
    }
    idx_buf.resize(n);
    std::iota(idx_buf.begin(), idx_buf.end(), 0u);
    auto better = [scores](std::uint32_t a, std::uint32_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    };
    std::nth_element(idx_buf.begin(), idx_buf.begin() + static_cast<std::ptrdiff_t>(k - 1),
                     idx_buf.end(), better);
    for (std::size_t i = 0; i < k; ++i) mask[idx_buf[i]] = 1;
}

}  // namespace detail

// Binarizes saliency scores into a keep/drop mask via per-group top-k. With
// Group::layer the whole matrix competes at the layer's block sparsity; with
// Group::row each output row competes at its own target (the plan's per_row
// entry when present, the block target otherwise).
inline SparsityMask topk_mask(const SaliencyScores& scores, const SparsityPlan& plan, Group group) {
    const int n_layers = static_cast<int>(scores.layers.size());
    if (static_cast<int>(plan.per_block.size()) * kLayersPerBlock != n_layers) {
        throw validation_error("topk_mask: plan block count does not match scores");
    }
    for (double s : plan.per_block) check_sparsity_fraction(s);

    SparsityMask mask;
    mask.layers.resize(static_cast<std::size_t>(n_layers));
    std::vector<std::uint32_t> idx_buf;
    for (int idx = 0; idx < n_layers; ++idx) {
        const Mat& sc = scores.layers[static_cast<std::size_t>(idx)];
        for (float x : sc.v) {
            if (!std::isfinite(x)) {
                throw validation_error("topk_mask: non-finite score in " +
                                       layer_name(layer_from_index(idx)));
            }
        }
        const double block_s = plan.per_block[static_cast<std::size_t>(idx / kLayersPerBlock)];
        MaskMat& mm = mask.layers[static_cast<std::size_t>(idx)];
        mm = MaskMat(sc.rows, sc.cols, 0);
        if (group == Group::layer) {
            detail::mark_top_k(sc.v.data(), mm.v.data(), sc.size(),
                               kept_count(block_s, sc.size()), idx_buf);
        } else {
            const std::vector<double>* row_s = nullptr;
            if (!plan.per_row.empty()) {
                if (plan.per_row.size() != static_cast<std::size_t>(n_layers)) {
                    throw validation_error("topk_mask: per-row plan layer count mismatch");
                }
                row_s = &plan.per_row[static_cast<std::size_t>(idx)];
                if (!row_s->empty() && row_s->size() != sc.rows) {
                    throw validation_error("topk_mask: per-row targets for " +
                                           layer_name(layer_from_index(idx)) +
                                           " do not match row count");
                }
            }
            for (std::size_t r = 0; r < sc.rows; ++r) {
                double s_r = block_s;
                if (row_s && !row_s->empty()) {
                    s_r = (*row_s)[r];
                    check_sparsity_fraction(s_r);
                }
                detail::mark_top_k(sc.row(r), mm.row(r), sc.cols, kept_count(s_r, sc.cols),
                                   idx_buf);
            }
        }
    }
    return mask;
}

// Zeroed fraction at global, per-block, and per-layer granularity.
struct SparsityBreakdown {
    double global = 0.0;
    std::vector<double> per_block;
    std::vector<double> per_layer;  // flat layer index
    std::int64_t zeros = 0;
    std::int64_t total = 0;
};

inline SparsityBreakdown achieved_sparsity(const SparsityMask& mask) {
    SparsityBreakdown out;
    const int n_blocks = mask.n_blocks();
    out.per_block.assign(static_cast<std::size_t>(n_blocks), 0.0);
    out.per_layer.assign(mask.layers.size(), 0.0);
    std::vector<std::int64_t> block_zeros(static_cast<std::size_t>(n_blocks), 0);
    std::vector<std::int64_t> block_total(static_cast<std::size_t>(n_blocks), 0);
    for (std::size_t idx = 0; idx < mask.layers.size(); ++idx) {
        const MaskMat& mm = mask.layers[idx];
        std::int64_t zeros = 0;
        for (std::uint8_t b : mm.v) zeros += (b == 0);
        const auto total = static_cast<std::int64_t>(mm.size());
        out.per_layer[idx] = total > 0 ? static_cast<double>(zeros) / static_cast<double>(total) : 0.0;
        const std::size_t blk = idx / kLayersPerBlock;
        block_zeros[blk] += zeros;
        block_total[blk] += total;
        out.zeros += zeros;
        out.total += total;
    }
    for (std::size_t b = 0; b < block_zeros.size(); ++b) {
        out.per_block[b] = block_total[b] > 0
                               ? static_cast<double>(block_zeros[b]) / static_cast<double>(block_total[b])
                               : 0.0;
    }
    out.global = out.total > 0 ? static_cast<double>(out.zeros) / static_cast<double>(out.total) : 0.0;
    return out;
}

// Mask directory layout:
//   mask_manifest.json  version, n_blocks, tensor table {name, shape, offset}
//   mask.bin            packed bits per tensor, row-major, LSB-first within
//                       each byte; every tensor starts on a fresh byte and
//                       offsets are byte offsets into the file
inline void write_mask(const SparsityMask& mask, const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory: " + dir.string());

    nlohmann::ordered_json manifest;
    manifest["version"] = 1;
    manifest["n_blocks"] = mask.n_blocks();
    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    std::vector<std::uint8_t> packed;
    for (std::size_t idx = 0; idx < mask.layers.size(); ++idx) {
        const MaskMat& mm = mask.layers[idx];
        table.push_back({{"name", layer_name(layer_from_index(static_cast<int>(idx)))},
                         {"shape", {mm.rows, mm.cols}},
                         {"offset", packed.size()}});
        const std::size_t n = mm.size();
        const std::size_t bytes = (n + 7) / 8;
        const std::size_t base = packed.size();
        packed.resize(base + bytes, 0);
        for (std::size_t i = 0; i < n; ++i) {
            if (mm.v[i]) packed[base + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
        }
    }
    manifest["tensors"] = std::move(table);

    {
        std::ofstream mf(dir / "mask_manifest.json", std::ios::trunc);
        if (!mf) throw io_error("cannot open for writing: " + (dir / "mask_manifest.json").string());
        mf << manifest.dump(2) << "\n";
        if (!mf) throw io_error("write failed: " + (dir / "mask_manifest.json").string());
    }
    {
        std::ofstream bf(dir / "mask.bin", std::ios::binary | std::ios::trunc);
        if (!bf) throw io_error("cannot open for writing: " + (dir / "mask.bin").string());
        bf.write(reinterpret_cast<const char*>(packed.data()),
                 static_cast<std::streamsize>(packed.size()));
        if (!bf) throw io_error("write failed: " + (dir / "mask.bin").string());
    }
}

inline SparsityMask read_mask(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "mask_manifest.json";
    std::ifstream mf(manifest_path);
    if (!mf) throw io_error("cannot open: " + manifest_path.string());
    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("malformed mask manifest " + manifest_path.string() + ": " + e.what());
    }

    std::ifstream bf(dir / "mask.bin", std::ios::binary);
    if (!bf) throw io_error("cannot open: " + (dir / "mask.bin").string());
    std::vector<std::uint8_t> packed((std::istreambuf_iterator<char>(bf)),
                                     std::istreambuf_iterator<char>());

    SparsityMask mask;
    try {
        const int n_blocks = manifest.at("n_blocks").get<int>();
        const auto& jt = manifest.at("tensors");
        if (static_cast<int>(jt.size()) != n_blocks * kLayersPerBlock) {
            throw validation_error("mask manifest: tensor count does not match n_blocks");
        }
        for (std::size_t idx = 0; idx < jt.size(); ++idx) {
            const auto shape = jt[idx].at("shape").get<std::vector<std::size_t>>();
            const auto offset = jt[idx].at("offset").get<std::size_t>();
            if (shape.size() != 2) throw validation_error("mask manifest: tensor shape must be 2-D");
            MaskMat mm(shape[0], shape[1], 0);
            const std::size_t n = mm.size();
            if (offset + (n + 7) / 8 > packed.size()) {
                throw validation_error("mask.bin truncated: tensor " +
                                       jt[idx].at("name").get<std::string>());
            }
            for (std::size_t i = 0; i < n; ++i) {
                mm.v[i] = (packed[offset + i / 8] >> (i % 8)) & 1u;
            }
            mask.layers.push_back(std::move(mm));
        }
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("malformed mask manifest " + manifest_path.string() + ": " + e.what());
    }
    return mask;
}

}  // namespace neuronal
