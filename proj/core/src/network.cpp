#include "relens/network.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "layer_ops.hpp"
#include "relens/errors.hpp"

namespace relens {

namespace detail {

Tensor conv2d_forward(const Conv2DLayer& conv, const Tensor& in) {
    const int in_ch = in.shape[0], in_h = in.shape[1], in_w = in.shape[2];
    const Conv2DGeometry g = conv2d_geometry(conv, in_h, in_w);
    Tensor out({conv.out_channels, g.out_h, g.out_w});
    for (int oc = 0; oc < conv.out_channels; ++oc) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                double acc = conv.bias[oc];
                for (int c = 0; c < in_ch; ++c) {
                    for (int ky = 0; ky < conv.kernel_h; ++ky) {
                        const int y = oy * conv.stride + ky - g.pad_top;
                        if (y < 0 || y >= in_h) continue;
                        for (int kx = 0; kx < conv.kernel_w; ++kx) {
                            const int x = ox * conv.stride + kx - g.pad_left;
                            if (x < 0 || x >= in_w) continue;
                            const std::size_t widx =
                                ((static_cast<std::size_t>(oc) * in_ch + c) * conv.kernel_h + ky) *
                                    conv.kernel_w + kx;
                            acc += in.at(c, y, x) * conv.weights.data[widx];
                        }
                    }
                }
                out.at(oc, oy, ox) = acc;
            }
        }
    }
    return out;
}

Tensor conv2d_backward(const Conv2DLayer& conv, const Tensor& in, const Tensor& grad_out) {
    const int in_ch = in.shape[0], in_h = in.shape[1], in_w = in.shape[2];
    const Conv2DGeometry g = conv2d_geometry(conv, in_h, in_w);
    Tensor grad_in(in.shape);
    for (int oc = 0; oc < conv.out_channels; ++oc) {
        for (int oy = 0; oy < g.out_h; ++oy) {
            for (int ox = 0; ox < g.out_w; ++ox) {
                const double go = grad_out.at(oc, oy, ox);
                if (go == 0.0) continue;
                for (int c = 0; c < in_ch; ++c) {
                    for (int ky = 0; ky < conv.kernel_h; ++ky) {
                        const int y = oy * conv.stride + ky - g.pad_top;
                        if (y < 0 || y >= in_h) continue;
                        for (int kx = 0; kx < conv.kernel_w; ++kx) {
                            const int x = ox * conv.stride + kx - g.pad_left;
                            if (x < 0 || x >= in_w) continue;
                            const std::size_t widx =
                                ((static_cast<std::size_t>(oc) * in_ch + c) * conv.kernel_h + ky) *
                                    conv.kernel_w + kx;
                            grad_in.at(c, y, x) += conv.weights.data[widx] * go;
                        }
                    }
                }
            }
        }
    }
    return grad_in;
}

Tensor maxpool_forward(const MaxPool2DLayer& pool, const Tensor& in) {
    const int ch = in.shape[0], in_h = in.shape[1], in_w = in.shape[2];
    const int out_h = (in_h - pool.window_h) / pool.stride + 1;
    const int out_w = (in_w - pool.window_w) / pool.stride + 1;
    Tensor out({ch, out_h, out_w});
    for (int c = 0; c < ch; ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                for (int wy = 0; wy < pool.window_h; ++wy) {
                    for (int wx = 0; wx < pool.window_w; ++wx) {
                        const double v = in.at(c, oy * pool.stride + wy, ox * pool.stride + wx);
                        if (v > best) best = v;
                    }
                }
                out.at(c, oy, ox) = best;
            }
        }
    }
    return out;
}

Tensor maxpool_route_back(const MaxPool2DLayer& pool, const Tensor& in, const Tensor& grad_out) {
    const int ch = in.shape[0], in_h = in.shape[1], in_w = in.shape[2];
    const int out_h = (in_h - pool.window_h) / pool.stride + 1;
    const int out_w = (in_w - pool.window_w) / pool.stride + 1;
    Tensor grad_in(in.shape);
    for (int c = 0; c < ch; ++c) {
        for (int oy = 0; oy < out_h; ++oy) {
            for (int ox = 0; ox < out_w; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                int best_y = 0, best_x = 0;
                for (int wy = 0; wy < pool.window_h; ++wy) {
                    for (int wx = 0; wx < pool.window_w; ++wx) {
                        const int y = oy * pool.stride + wy;
                        const int x = ox * pool.stride + wx;
                        const double v = in.at(c, y, x);
                        if (v > best) {  // strict: the first row-major max wins
                            best = v;
                            best_y = y;
                            best_x = x;
                        }
                    }
                }
                grad_in.at(c, best_y, best_x) += grad_out.at(c, oy, ox);
            }
        }
    }
    return grad_in;
}

Tensor dense_forward(const DenseLayer& dense, const Tensor& in) {
    const std::int64_t in_features = in.size();
    Tensor out({dense.out_features});
    for (int o = 0; o < dense.out_features; ++o) {
        double acc = dense.bias[o];
        const double* row = dense.weights.data.data() + static_cast<std::size_t>(o) * in_features;
        for (std::int64_t i = 0; i < in_features; ++i) acc += row[i] * in[i];
        out[o] = acc;
    }
    return out;
}

Tensor dense_backward(const DenseLayer& dense, const Tensor& in, const Tensor& grad_out) {
    const std::int64_t in_features = in.size();
    Tensor grad_in(in.shape);
    for (int o = 0; o < dense.out_features; ++o) {
        const double go = grad_out[o];
        if (go == 0.0) continue;
        const double* row = dense.weights.data.data() + static_cast<std::size_t>(o) * in_features;
        for (std::int64_t i = 0; i < in_features; ++i) grad_in[i] += row[i] * go;
    }
    return grad_in;
}

}  // namespace detail

Tensor preprocess(const Model& model, const Tensor& raw_image) {
    if (raw_image.shape != model.input_shape)
        throw InputError("image shape " + shape_to_string(raw_image.shape) +
                         " does not match model input " + shape_to_string(model.input_shape));
    Tensor out = raw_image;
    const int ch = model.input_shape[0];
    const std::int64_t plane = static_cast<std::int64_t>(model.input_shape[1]) * model.input_shape[2];
    for (int c = 0; c < ch; ++c) {
        const double mean = model.preprocessing.mean[c];
        const double scale = model.preprocessing.scale[c];
        for (std::int64_t i = 0; i < plane; ++i) {
            const std::int64_t idx = c * plane + i;
            out[idx] = (out[idx] - mean) * scale;
        }
    }
    return out;
}

ActivationTrace forward(const Model& model, const Tensor& image) {
    if (image.shape != model.input_shape)
        throw InputError("input shape " + shape_to_string(image.shape) +
                         " does not match model input " + shape_to_string(model.input_shape));
    if (!image.all_finite()) throw InputError("input tensor contains non-finite values");

    ActivationTrace trace;
    trace.records.reserve(model.layers.size());
    Tensor current = image;
    for (const Layer& layer : model.layers) {
        Tensor out;
        if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            out = detail::conv2d_forward(*conv, current);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            out = current;
            for (double& v : out.data) v = v > 0.0 ? v : 0.0;
        } else if (const auto* pool = std::get_if<MaxPool2DLayer>(&layer)) {
            out = detail::maxpool_forward(*pool, current);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            out = current;
            out.shape = {static_cast<int>(current.size())};
        } else {
            out = detail::dense_forward(std::get<DenseLayer>(layer), current);
        }
        trace.records.push_back({std::move(current), out});
        current = std::move(out);
    }
    trace.logits = current;
    if (!trace.logits.all_finite()) throw NumericalError("forward pass produced non-finite logits");
    return trace;
}

Tensor backward(const Model& model, const ActivationTrace& trace, int target_class) {
    if (target_class < 0 || target_class >= model.class_count())
        throw InputError("target class " + std::to_string(target_class) + " out of range [0," +
                         std::to_string(model.class_count()) + ")");
    if (trace.records.size() != model.layers.size())
        throw InputError("activation trace does not match the model's layer count");

    Tensor grad({model.class_count()});
    grad[target_class] = 1.0;

    for (int i = static_cast<int>(model.layers.size()) - 1; i >= 0; --i) {
        const Layer& layer = model.layers[static_cast<std::size_t>(i)];
        const LayerRecord& rec = trace.records[static_cast<std::size_t>(i)];
        if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            grad = detail::conv2d_backward(*conv, rec.input, grad);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            Tensor g(rec.input.shape);
            for (std::int64_t j = 0; j < g.size(); ++j)
                g[j] = rec.input[j] > 0.0 ? grad[j] : 0.0;  // subgradient at 0 is 0
            grad = std::move(g);
        } else if (const auto* pool = std::get_if<MaxPool2DLayer>(&layer)) {
            grad = detail::maxpool_route_back(*pool, rec.input, grad);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            grad.shape = rec.input.shape;
        } else {
            grad = detail::dense_backward(std::get<DenseLayer>(layer), rec.input, grad);
        }
    }
    return grad;
}

Classification classify(const Model& model, const Tensor& image) {
    ActivationTrace trace = forward(model, image);
    int best = 0;
    for (int i = 1; i < static_cast<int>(trace.logits.size()); ++i) {
        if (trace.logits[i] > trace.logits[best]) best = i;  // ties keep the lowest index
    }
    return {best, std::move(trace.logits)};
}

double class_probability(const Tensor& logits, int class_index) {
    double max_logit = logits[0];
    for (std::int64_t i = 1; i < logits.size(); ++i) max_logit = std::max(max_logit, logits[i]);
    double denom = 0.0;
    for (std::int64_t i = 0; i < logits.size(); ++i) denom += std::exp(logits[i] - max_logit);
    return std::exp(logits[class_index] - max_logit) / denom;
}

}  // namespace relens
