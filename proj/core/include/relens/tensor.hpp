#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace relens {

/// Dense n-dimensional array of doubles, stored flat in row-major order.
/// Carries images, weights, activations, gradients and relevances.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> dims, double fill = 0.0);

    /// Builds a tensor from existing data; throws InputError if the data
    /// length does not match the shape product.
    static Tensor from_data(std::vector<int> dims, std::vector<double> values);

    std::int64_t size() const { return static_cast<std::int64_t>(data.size()); }
    int rank() const { return static_cast<int>(shape.size()); }

    double operator[](std::int64_t i) const { return data[static_cast<std::size_t>(i)]; }
    double& operator[](std::int64_t i) { return data[static_cast<std::size_t>(i)]; }

    // CHW access, valid for rank-3 tensors only.
    double at(int c, int y, int x) const { return data[chw_index(c, y, x)]; }
    double& at(int c, int y, int x) { return data[chw_index(c, y, x)]; }

    bool same_shape(const Tensor& other) const { return shape == other.shape; }
    bool all_finite() const;

  private:
    std::size_t chw_index(int c, int y, int x) const {
        return (static_cast<std::size_t>(c) * shape[1] + y) * shape[2] + x;
    }
};

std::int64_t shape_numel(const std::vector<int>& shape);
std::string shape_to_string(const std::vector<int>& shape);

}  // namespace relens
