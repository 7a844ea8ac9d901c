#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

namespace neuronal {

// Dense row-major float32 matrix.
struct Mat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<float> v;

    Mat() = default;
    Mat(std::size_t r, std::size_t c, float fill = 0.0f) : rows(r), cols(c), v(r * c, fill) {}

    std::size_t size() const { return rows * cols; }
    float& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    float at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    float* row(std::size_t r) { return v.data() + r * cols; }
    const float* row(std::size_t r) const { return v.data() + r * cols; }

    bool operator==(const Mat&) const = default;
};

// Keep/drop matrix, one byte per weight, entries 0 or 1, same layout as Mat.
struct MaskMat {
    std::size_t rows = 0;
    std::size_t cols = 0;
    std::vector<std::uint8_t> v;

    MaskMat() = default;
    MaskMat(std::size_t r, std::size_t c, std::uint8_t fill = 1) : rows(r), cols(c), v(r * c, fill) {}

    std::size_t size() const { return rows * cols; }
    std::uint8_t& at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    std::uint8_t at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    std::uint8_t* row(std::size_t r) { return v.data() + r * cols; }
    const std::uint8_t* row(std::size_t r) const { return v.data() + r * cols; }

    bool operator==(const MaskMat&) const = default;
};

}  // namespace neuronal
