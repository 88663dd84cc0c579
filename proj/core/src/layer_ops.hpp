#pragma once

// Internal per-layer kernels shared by the forward/backward pass and the LRP
// rules. The max-pool routing is one function on purpose: gradient and
// relevance must pick the same (first row-major) maximum.

#include "relens/model.hpp"

namespace relens::detail {

Tensor conv2d_forward(const Conv2DLayer& conv, const Tensor& in);
Tensor conv2d_backward(const Conv2DLayer& conv, const Tensor& in, const Tensor& grad_out);
Tensor maxpool_forward(const MaxPool2DLayer& pool, const Tensor& in);
Tensor maxpool_route_back(const MaxPool2DLayer& pool, const Tensor& in, const Tensor& grad_out);
Tensor dense_forward(const DenseLayer& dense, const Tensor& in);
Tensor dense_backward(const DenseLayer& dense, const Tensor& in, const Tensor& grad_out);

}  // namespace relens::detail
