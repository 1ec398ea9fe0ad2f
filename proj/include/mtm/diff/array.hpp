#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <string>
#include <vector>

#include "mtm/errors.hpp"

namespace mtm::diff {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major array of 64-bit floats. Rank 1 and 2 cover everything the
// network needs; elementwise ops accept any rank.
struct Array {
    Shape shape;
    std::vector<double> data;

    Array() = default;
    Array(Shape s, std::vector<double> d);

    static Array zeros(const Shape& s);
    static Array full(const Shape& s, double v);
    static Array vector(std::vector<double> d);
    static Array matrix(std::size_t rows, std::size_t cols, std::vector<double> d);
    static Array scalar(double v);

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }

    // 2-d views; a rank-1 array counts as a single row.
    std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
    std::size_t cols() const { return rank() == 2 ? shape[1] : (shape.empty() ? 0 : shape[0]); }

    double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
    double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

    bool all_finite() const;
};

// Boolean participation mask; true entries take part in the computation.
// Either matches the masked array's shape exactly, or is a rank-1 mask that
// broadcasts along the non-reduced dimension of a rank-2 array.
struct Mask {
    Shape shape;
    std::vector<std::uint8_t> bits;

    Mask() = default;
    Mask(Shape s, std::vector<std::uint8_t> b);

    static Mask full(const Shape& s);
    static Mask of(std::vector<std::uint8_t> b);

    std::size_t size() const { return bits.size(); }
    bool at(std::size_t i) const { return bits[i] != 0; }
};

} // namespace mtm::diff
