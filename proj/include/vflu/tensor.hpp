#pragma once

#include <cstddef>
#include <string>
#include <vector>

namespace vflu {

/// Dense row-major tensor of 64-bit floats.
struct Tensor {
    std::vector<size_t> shape;
    std::vector<double> data;

    Tensor() = default;

    /// Zero-filled tensor of the given shape.
    explicit Tensor(std::vector<size_t> s);

    /// Tensor with explicit contents; throws DimensionError if sizes disagree.
    static Tensor from(std::vector<size_t> s, std::vector<double> d);

    size_t size() const { return data.size(); }
    size_t rank() const { return shape.size(); }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

    double& operator[](size_t i) { return data[i]; }
    double operator[](size_t i) const { return data[i]; }

    /// 3-D access helper (channel, row, col); no bounds check in release use.
    double& at3(size_t c, size_t r, size_t col, size_t h, size_t w) {
        return data[(c * h + r) * w + col];
    }

    void fill(double v);
    std::string shape_str() const;
};

size_t shape_product(const std::vector<size_t>& shape);
std::string shape_to_string(const std::vector<size_t>& shape);

} // namespace vflu
