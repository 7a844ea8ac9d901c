#pragma once

#include <algorithm>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "neuronal/errors.hpp"
#include "neuronal/prng.hpp"

namespace neuronal {

struct TokenStream {
    std::uint32_t vocab = 0;
    std::vector<std::uint32_t> ids;

    bool operator==(const TokenStream&) const = default;
};

inline void validate(const TokenStream& t) {
    if (t.vocab < 2) throw validation_error("token stream: vocab must be >= 2");
    for (std::uint32_t id : t.ids) {
        if (id >= t.vocab) {
            throw validation_error("token stream: id " + std::to_string(id) +
                                   " out of range for vocab " + std::to_string(t.vocab));
        }
    }
}

// Deterministic ids: draw i is splitmix64(seed) draw i reduced mod vocab.
inline TokenStream generate_tokens(std::uint32_t vocab, std::size_t length, std::uint64_t seed) {
    if (vocab < 2) throw validation_error("generate_tokens: vocab must be >= 2");
    if (length < 1) throw validation_error("generate_tokens: length must be >= 1");
    TokenStream t;
    t.vocab = vocab;
    t.ids.resize(length);
    SplitMix64 rng(seed);
    for (std::size_t i = 0; i < length; ++i) {
        t.ids[i] = static_cast<std::uint32_t>(rng.next_u64() % vocab);
    }
    return t;
}

// On-disk format: magic "TOKS", then little-endian u32 vocab, u32 count,
// then count little-endian u32 ids. File size is 12 + 4*count bytes.
inline void write_tokens(const TokenStream& t, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error("cannot open for writing: " + path.string());
    auto put_u32 = [&](std::uint32_t x) {
        unsigned char b[4] = {static_cast<unsigned char>(x & 0xff),
                              static_cast<unsigned char>((x >> 8) & 0xff),
                              static_cast<unsigned char>((x >> 16) & 0xff),
                              static_cast<unsigned char>((x >> 24) & 0xff)};
        out.write(reinterpret_cast<const char*>(b), 4);
    };
    out.write("TOKS", 4);
    put_u32(t.vocab);
    put_u32(static_cast<std::uint32_t>(t.ids.size()));
    for (std::uint32_t id : t.ids) put_u32(id);
    if (!out) throw io_error("write failed: " + path.string());
}

inline TokenStream read_tokens(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path.string());
    char magic[4] = {};
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "TOKS", 4) != 0) {
        throw validation_error("token file: bad magic in " + path.string());
    }
    auto get_u32 = [&]() -> std::uint32_t {
        unsigned char b[4];
        in.read(reinterpret_cast<char*>(b), 4);
        return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
               (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
    };
    TokenStream t;
    t.vocab = get_u32();
    const std::uint32_t count = get_u32();
    if (!in) throw validation_error("token file: truncated header in " + path.string());
    t.ids.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) t.ids[i] = get_u32();
    if (!in) throw validation_error("token file: truncated id table in " + path.string());
    validate(t);
    return t;
}

// First `max_windows` consecutive windows of `seq_len` tokens. Partial
// trailing windows are dropped. max_windows < 0 keeps every full window.
inline TokenStream take_windows(const TokenStream& t, int seq_len, int max_windows) {
    if (seq_len < 1) throw validation_error("take_windows: seq_len must be >= 1");
    const std::size_t full = t.ids.size() / static_cast<std::size_t>(seq_len);
    std::size_t n = max_windows < 0 ? full : std::min<std::size_t>(full, static_cast<std::size_t>(max_windows));
    TokenStream out;
    out.vocab = t.vocab;
    out.ids.assign(t.ids.begin(), t.ids.begin() + static_cast<std::ptrdiff_t>(n * static_cast<std::size_t>(seq_len)));
    return out;
}

}  // namespace neuronal
