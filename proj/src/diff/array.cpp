#include "mtm/diff/array.hpp"

#include <cmath>
#include <sstream>

namespace mtm::diff {

std::size_t numel(const Shape& s) {
    std::size_t n = 1;
    for (std::size_t d : s) n *= d;
    return s.empty() ? 0 : n;
}

std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < s.size(); ++i) {
        if (i) os << "x";
        os << s[i];
    }
    os << ")";
    return os.str();
}

Array::Array(Shape s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
    if (numel(shape) != data.size())
        throw ShapeError("array data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
}

Array Array::zeros(const Shape& s) { return Array(s, std::vector<double>(numel(s), 0.0)); }

Array Array::full(const Shape& s, double v) { return Array(s, std::vector<double>(numel(s), v)); }

Array Array::vector(std::vector<double> d) {
    Shape s{d.size()};
    return Array(std::move(s), std::move(d));
}

Array Array::matrix(std::size_t rows, std::size_t cols, std::vector<double> d) {
    return Array(Shape{rows, cols}, std::move(d));
}

Array Array::scalar(double v) { return Array(Shape{1}, {v}); }

bool Array::all_finite() const {
    for (double v : data)
        if (!std::isfinite(v)) return false;
    return true;
}

Mask::Mask(Shape s, std::vector<std::uint8_t> b) : shape(std::move(s)), bits(std::move(b)) {
    if (numel(shape) != bits.size())
        throw ShapeError("mask bit count " + std::to_string(bits.size()) +
                         " does not match shape " + shape_str(shape));
}

Mask Mask::full(const Shape& s) { return Mask(s, std::vector<std::uint8_t>(numel(s), 1)); }

Mask Mask::of(std::vector<std::uint8_t> b) {
    Shape s{b.size()};
    return Mask(std::move(s), std::move(b));
}

} // namespace mtm::diff
