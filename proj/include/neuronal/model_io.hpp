#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "neuronal/errors.hpp"
#include "neuronal/model.hpp"

namespace neuronal {

static_assert(std::endian::native == std::endian::little,
              "model files are little-endian; big-endian hosts are unsupported");

// Model directory layout:
//   manifest.json  version, dims, optional generation seed, and a tensor
//                  table of {name, shape, offset} with byte offsets into
//                  the blob, in serialization order
//   weights.bin    all tensors concatenated, row-major little-endian f32
inline void write_model(const ModelBundle& bundle, const std::filesystem::path& dir) {
    validate(bundle);
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw io_error("cannot create directory: " + dir.string());

    auto& b = const_cast<ModelBundle&>(bundle);
    nlohmann::ordered_json manifest;
    manifest["version"] = 1;
    manifest["dims"] = {{"d_model", b.dims.d_model},
                        {"n_heads", b.dims.n_heads},
                        {"d_ff", b.dims.d_ff},
                        {"n_blocks", b.dims.n_blocks},
                        {"vocab", b.dims.vocab}};
    if (b.seed) manifest["seed"] = *b.seed;

    nlohmann::ordered_json table = nlohmann::ordered_json::array();
    std::uint64_t offset = 0;
    for (const TensorRef& t : tensor_table(b)) {
        table.push_back({{"name", t.name}, {"shape", t.shape}, {"offset", offset}});
        offset += 4 * static_cast<std::uint64_t>(t.numel());
    }
    manifest["tensors"] = std::move(table);

    {
        std::ofstream mf(dir / "manifest.json", std::ios::trunc);
        if (!mf) throw io_error("cannot open for writing: " + (dir / "manifest.json").string());
        mf << manifest.dump(2) << "\n";
        if (!mf) throw io_error("write failed: " + (dir / "manifest.json").string());
    }
    {
        std::ofstream wf(dir / "weights.bin", std::ios::binary | std::ios::trunc);
        if (!wf) throw io_error("cannot open for writing: " + (dir / "weights.bin").string());
        for (const TensorRef& t : tensor_table(b)) {
            wf.write(reinterpret_cast<const char*>(t.data),
                     static_cast<std::streamsize>(4 * t.numel()));
        }
        if (!wf) throw io_error("write failed: " + (dir / "weights.bin").string());
    }
}

inline ModelBundle read_model(const std::filesystem::path& dir) {
    const auto manifest_path = dir / "manifest.json";
    const auto blob_path = dir / "weights.bin";
    std::ifstream mf(manifest_path);
    if (!mf) throw io_error("cannot open: " + manifest_path.string());

    nlohmann::json manifest;
    try {
        mf >> manifest;
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("malformed manifest " + manifest_path.string() + ": " + e.what());
    }

    ModelDims dims;
    try {
        if (manifest.at("version").get<int>() != 1) {
            throw validation_error("malformed manifest: unsupported version");
        }
        const auto& jd = manifest.at("dims");
        dims.d_model = jd.at("d_model").get<int>();
        dims.n_heads = jd.at("n_heads").get<int>();
        dims.d_ff = jd.at("d_ff").get<int>();
        dims.n_blocks = jd.at("n_blocks").get<int>();
        dims.vocab = jd.at("vocab").get<int>();
    } catch (const nlohmann::json::exception& e) {
        throw validation_error("malformed manifest " + manifest_path.string() + ": " + e.what());
    }
    validate(dims);

    const auto expected = expected_tensors(dims);
    const auto& jt = manifest.find("tensors") != manifest.end() ? manifest["tensors"]
                                                                : nlohmann::json::array();
    if (!jt.is_array() || jt.size() != expected.size()) {
        throw validation_error("malformed manifest: expected " + std::to_string(expected.size()) +
                               " tensors, found " + std::to_string(jt.size()));
    }

    ModelBundle b = make_empty_bundle(dims);
    if (manifest.contains("seed")) b.seed = manifest["seed"].get<std::uint64_t>();

    std::ifstream wf(blob_path, std::ios::binary);
    if (!wf) throw io_error("cannot open: " + blob_path.string());
    wf.seekg(0, std::ios::end);
    const std::uint64_t blob_size = static_cast<std::uint64_t>(wf.tellg());

    auto table = tensor_table(b);
    std::uint64_t offset = 0;
    for (std::size_t i = 0; i < table.size(); ++i) {
        std::string name;
        std::vector<std::size_t> shape;
        std::uint64_t joffset = 0;
        try {
            name = jt[i].at("name").get<std::string>();
            shape = jt[i].at("shape").get<std::vector<std::size_t>>();
            joffset = jt[i].at("offset").get<std::uint64_t>();
        } catch (const nlohmann::json::exception& e) {
            throw validation_error("malformed manifest entry " + std::to_string(i) + ": " + e.what());
        }
        if (name != expected[i].first) {
            throw validation_error("manifest tensor order mismatch: expected " + expected[i].first +
                                   ", found " + name);
        }
        if (shape != expected[i].second) {
            throw validation_error("tensor shape mismatch for " + name);
        }
        if (joffset != offset) {
            throw validation_error("tensor offset mismatch for " + name);
        }
        const std::uint64_t bytes = 4 * static_cast<std::uint64_t>(table[i].numel());
        if (offset + bytes > blob_size) {
            throw validation_error("weights blob truncated: tensor " + name + " needs bytes [" +
                                   std::to_string(offset) + ", " + std::to_string(offset + bytes) +
                                   ") but the blob has " + std::to_string(blob_size));
        }
        wf.seekg(static_cast<std::streamoff>(offset));
        wf.read(reinterpret_cast<char*>(table[i].data), static_cast<std::streamsize>(bytes));
        if (!wf) throw io_error("read failed: " + blob_path.string());
        offset += bytes;
    }
    if (offset != blob_size) {
        throw validation_error("weights blob has " + std::to_string(blob_size - offset) +
                               " trailing bytes past the tensor table");
    }
    validate(b);
    return b;
}

}  // namespace neuronal
