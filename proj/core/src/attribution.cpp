#include "relens/attribution.hpp"

#include <algorithm>
#include <cmath>

#include "layer_ops.hpp"
#include "relens/errors.hpp"

namespace relens {

std::string AttributionMethod::name() const {
    switch (kind) {
        case Kind::Gradient: return "gradient";
        case Kind::LrpZ: return "lrp-z";
        case Kind::LrpEpsilon: return "lrp-epsilon";
    }
    return "?";
}

std::optional<AttributionMethod> attribution_method_from_name(const std::string& name) {
    if (name == "gradient") return AttributionMethod::gradient();
    if (name == "lrp-z") return AttributionMethod::lrp_z();
    if (name == "lrp-epsilon") return AttributionMethod::lrp_epsilon();
    return std::nullopt;
}

namespace {

Heatmap heatmap_shell(const Model& model, const std::string& method, int target_class) {
    Heatmap h;
    h.width = model.input_shape[2];
    h.height = model.input_shape[1];
    h.values.assign(static_cast<std::size_t>(h.width) * h.height, 0.0);
    h.method = method;
    h.target_class = target_class;
    return h;
}

// d_j for one pre-activation under the chosen rule. LrpZ rejects vanishing
// denominators by contract; the epsilon rule cannot vanish since |d| >= eps.
double stabilized_denominator(double z, const AttributionMethod& method, int layer_index,
                              const char* kind) {
    if (method.kind == AttributionMethod::Kind::LrpZ) {
        if (std::abs(z) < 1e-12)
            throw NumericalError("lrp-z: denominator magnitude below 1e-12 at layer " +
                                 std::to_string(layer_index) + " (" + kind +
                                 "); the epsilon rule (lrp-epsilon) is the remedy");
        return z;
    }
    const double sign = z < 0.0 ? -1.0 : 1.0;  // sign(0) := +1
    return z + method.epsilon * sign;
}

}  // namespace

Heatmap gradient_saliency(const Model& model, const Tensor& image, int target_class) {
    const ActivationTrace trace = forward(model, image);
    const Tensor grad = backward(model, trace, target_class);

    Heatmap h = heatmap_shell(model, "gradient", target_class);
    const int ch = model.input_shape[0];
    for (int y = 0; y < h.height; ++y) {
        for (int x = 0; x < h.width; ++x) {
            double best = 0.0;
            for (int c = 0; c < ch; ++c) best = std::max(best, std::abs(grad.at(c, y, x)));
            h.values[static_cast<std::size_t>(y) * h.width + x] = best;
        }
    }
    return h;
}

Heatmap lrp(const Model& model, const Tensor& image, int target_class,
            const AttributionMethod& method) {
    if (method.kind == AttributionMethod::Kind::Gradient)
        throw InputError("lrp() requires the lrp-z or lrp-epsilon method");
    if (method.kind == AttributionMethod::Kind::LrpEpsilon && !(method.epsilon > 0.0))
        throw InputError("lrp-epsilon requires epsilon > 0");
    if (target_class < 0 || target_class >= model.class_count())
        throw InputError("target class " + std::to_string(target_class) + " out of range [0," +
                         std::to_string(model.class_count()) + ")");

    const ActivationTrace trace = forward(model, image);

    // Relevance starts as the raw logit at the target, zero elsewhere.
    Tensor relevance({model.class_count()});
    relevance[target_class] = trace.logits[target_class];

    for (int i = static_cast<int>(model.layers.size()) - 1; i >= 0; --i) {
        const Layer& layer = model.layers[static_cast<std::size_t>(i)];
        const LayerRecord& rec = trace.records[static_cast<std::size_t>(i)];

        if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            Tensor ratio = relevance;
            for (std::int64_t j = 0; j < ratio.size(); ++j)
                ratio[j] = relevance[j] / stabilized_denominator(rec.output[j], method, i, "conv2d");
            Tensor back = detail::conv2d_backward(*conv, rec.input, ratio);
            for (std::int64_t j = 0; j < back.size(); ++j) back[j] *= rec.input[j];
            relevance = std::move(back);
        } else if (std::holds_alternative<ReluLayer>(layer)) {
            relevance.shape = rec.input.shape;  // pass-through
        } else if (const auto* pool = std::get_if<MaxPool2DLayer>(&layer)) {
            relevance = detail::maxpool_route_back(*pool, rec.input, relevance);
        } else if (std::holds_alternative<FlattenLayer>(layer)) {
            relevance.shape = rec.input.shape;
        } else {
            const auto& dense = std::get<DenseLayer>(layer);
            Tensor ratio = relevance;
            for (std::int64_t j = 0; j < ratio.size(); ++j)
                ratio[j] = relevance[j] / stabilized_denominator(rec.output[j], method, i, "dense");
            Tensor back = detail::dense_backward(dense, rec.input, ratio);
            for (std::int64_t j = 0; j < back.size(); ++j) back[j] *= rec.input[j];
            relevance = std::move(back);
        }
    }

    Heatmap h = heatmap_shell(model, method.name(), target_class);
    if (method.kind == AttributionMethod::Kind::LrpEpsilon) h.epsilon = method.epsilon;
    const int ch = model.input_shape[0];
    for (int y = 0; y < h.height; ++y) {
        for (int x = 0; x < h.width; ++x) {
            double sum = 0.0;
            for (int c = 0; c < ch; ++c) sum += relevance.at(c, y, x);  // signed channel sum
            h.values[static_cast<std::size_t>(y) * h.width + x] = sum;
        }
    }
    if (!std::all_of(h.values.begin(), h.values.end(), [](double v) { return std::isfinite(v); }))
        throw NumericalError(method.name() + " produced non-finite relevance");
    return h;
}

Heatmap attribute(const Model& model, const Tensor& image, int target_class,
                  const AttributionMethod& method) {
    if (method.kind == AttributionMethod::Kind::Gradient)
        return gradient_saliency(model, image, target_class);
    return lrp(model, image, target_class, method);
}

Heatmap normalize_heatmap(const Heatmap& h) {
    Heatmap out = h;
    if (h.values.empty()) return out;
    double lo = h.values[0], hi = h.values[0];
    for (double v : h.values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    out.norm_min = lo;
    out.norm_max = hi;
    if (hi == lo) {
        std::fill(out.values.begin(), out.values.end(), 0.0);  // degenerate: constant map
        return out;
    }
    const double range = hi - lo;
    for (double& v : out.values) v = (v - lo) / range;
    return out;
}

}  // namespace relens
