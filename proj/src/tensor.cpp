#include "vflu/tensor.hpp"

#include <algorithm>
#include <cmath>

#include "vflu/errors.hpp"

namespace vflu {

size_t shape_product(const std::vector<size_t>& shape) {
    size_t n = 1;
    for (size_t d : shape) n *= d;
    return shape.empty() ? 0 : n;
}

std::string shape_to_string(const std::vector<size_t>& shape) {
    std::string s = "[";
    for (size_t i = 0; i < shape.size(); ++i) {
        if (i) s += "x";
        s += std::to_string(shape[i]);
    }
    return s + "]";
}

Tensor::Tensor(std::vector<size_t> s) : shape(std::move(s)), data(shape_product(shape), 0.0) {}

Tensor Tensor::from(std::vector<size_t> s, std::vector<double> d) {
    if (shape_product(s) != d.size()) {
        throw DimensionError("tensor data length " + std::to_string(d.size()) +
                             " does not match shape " + shape_to_string(s));
    }
    Tensor t;
    t.shape = std::move(s);
    t.data = std::move(d);
    return t;
}

bool Tensor::all_finite() const {
    return std::all_of(data.begin(), data.end(), [](double v) { return std::isfinite(v); });
}

void Tensor::fill(double v) { std::fill(data.begin(), data.end(), v); }

std::string Tensor::shape_str() const { return shape_to_string(shape); }

} // namespace vflu
