#pragma once

#include <optional>
#include <string>

#include "relens/network.hpp"

namespace relens {

struct AttributionMethod {
    enum class Kind { Gradient, LrpZ, LrpEpsilon };

    Kind kind = Kind::Gradient;
    double epsilon = 0.01;  // LrpEpsilon stabilizer, must be > 0

    static AttributionMethod gradient() { return {Kind::Gradient, 0.0}; }
    static AttributionMethod lrp_z() { return {Kind::LrpZ, 0.0}; }
    static AttributionMethod lrp_epsilon(double eps = 0.01) { return {Kind::LrpEpsilon, eps}; }

    std::string name() const;
};

std::optional<AttributionMethod> attribution_method_from_name(const std::string& name);

/// Per-pixel relevance map over the model input's spatial grid, with
/// provenance. Values are raw until normalize_heatmap(); once normalized,
/// norm_min/norm_max record the original range so raw values stay
/// recoverable as v * (norm_max - norm_min) + norm_min.
struct Heatmap {
    int width = 0;
    int height = 0;
    std::vector<double> values;  // row-major, width*height

    std::string method;
    std::optional<double> epsilon;
    int target_class = -1;
    std::string image_id;
    std::optional<double> norm_min;
    std::optional<double> norm_max;

    double value_at(int y, int x) const {
        return values[static_cast<std::size_t>(y) * width + x];
    }
};

/// Heatmap from the input gradient: value at (y,x) is the maximum over input
/// channels of |d logit_target / d x[c,y,x]|.
Heatmap gradient_saliency(const Model& model, const Tensor& image, int target_class);

/// Layer-wise relevance propagation with the z-rule (LrpZ) or the
/// epsilon-stabilized rule (LrpEpsilon). Relevance starts as the raw target
/// logit at the output and flows backward:
///
///   R_i = sum_j (x_i * w_ij / d_j) * R_j
///
/// with d_j = z_j for LrpZ and d_j = z_j + eps*sign(z_j) for LrpEpsilon
/// (sign(0) := +1), applied at Dense and Conv2D layers. ReLU passes relevance
/// through, max-pool routes it to the pooled maximum (first row-major element
/// on ties), Flatten reshapes. Per-channel input relevances are summed into
/// the 2D map. LrpZ throws NumericalError, naming the layer, whenever any
/// |d_j| < 1e-12.
Heatmap lrp(const Model& model, const Tensor& image, int target_class,
            const AttributionMethod& method);

/// Dispatch on method.kind.
Heatmap attribute(const Model& model, const Tensor& image, int target_class,
                  const AttributionMethod& method);

/// Affine map of values onto [0,1]: (v - min) / (max - min); a constant
/// heatmap maps to all zeros. Records the original range in norm_min/max.
Heatmap normalize_heatmap(const Heatmap& h);

}  // namespace relens
