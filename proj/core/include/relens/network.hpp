#pragma once

#include "relens/model.hpp"

namespace relens {

struct LayerRecord {
    Tensor input;
    Tensor output;
};

/// Per-layer (input, output) pairs captured during one forward pass, plus the
/// final logits. Record count always equals the model's layer count.
struct ActivationTrace {
    std::vector<LayerRecord> records;
    Tensor logits;
};

/// Applies the model's per-channel preprocessing to a raw [0,1] image.
Tensor preprocess(const Model& model, const Tensor& raw_image);

/// Runs the network on a conforming (already preprocessed) input.
/// Deterministic: identical input gives bit-identical output.
ActivationTrace forward(const Model& model, const Tensor& image);

/// Gradient of the pre-softmax logit of `target_class` with respect to the
/// model input, evaluated on a recorded trace. ReLU subgradient at 0 is 0;
/// max-pool routes to the first row-major maximum on ties.
Tensor backward(const Model& model, const ActivationTrace& trace, int target_class);

struct Classification {
    int predicted_class = 0;
    Tensor logits;
};

/// Argmax of the logits; ties broken by lowest index.
Classification classify(const Model& model, const Tensor& image);

/// Softmax probability of one class, computed with the usual max-shift.
double class_probability(const Tensor& logits, int class_index);

}  // namespace relens
