#include "relens/tensor.hpp"

#include <cmath>
#include <sstream>

#include "relens/errors.hpp"

namespace relens {

std::int64_t shape_numel(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return n;
}

std::string shape_to_string(const std::vector<int>& shape) {
    std::ostringstream os;
    os << "(";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ",";
        os << shape[i];
    }
    os << ")";
    return os.str();
}

Tensor::Tensor(std::vector<int> dims, double fill) : shape(std::move(dims)) {
    for (int d : shape) {
        if (d <= 0) throw InputError("tensor dimension must be positive, got " + shape_to_string(shape));
    }
    data.assign(static_cast<std::size_t>(shape_numel(shape)), fill);
}

Tensor Tensor::from_data(std::vector<int> dims, std::vector<double> values) {
    Tensor t;
    t.shape = std::move(dims);
    for (int d : t.shape) {
        if (d <= 0) throw InputError("tensor dimension must be positive, got " + shape_to_string(t.shape));
    }
    if (static_cast<std::int64_t>(values.size()) != shape_numel(t.shape)) {
        throw InputError("tensor data length " + std::to_string(values.size()) +
                         " does not match shape " + shape_to_string(t.shape));
    }
    t.data = std::move(values);
    return t;
}

bool Tensor::all_finite() const {
    for (double v : data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace relens
