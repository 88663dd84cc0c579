#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <variant>
#include <vector>

#include "relens/tensor.hpp"

namespace relens {

enum class Padding { Same, Valid };

/// 2D convolution. Weights are [out_ch][in_ch][kh][kw], bias [out_ch].
/// "same" padding zero-pads symmetrically with the extra pixel on the
/// bottom/right; "valid" drops overhang.
struct Conv2DLayer {
    int out_channels = 0;
    int kernel_h = 0;
    int kernel_w = 0;
    int stride = 1;
    Padding padding = Padding::Valid;
    Tensor weights;
    Tensor bias;
};

struct ReluLayer {};

struct MaxPool2DLayer {
    int window_h = 0;
    int window_w = 0;
    int stride = 1;
};

struct FlattenLayer {};

/// Fully connected layer. Weights are [out][in], bias [out]. Accepts input
/// of any rank; the input is consumed in row-major order, so `in` equals the
/// element count of the incoming tensor.
struct DenseLayer {
    int out_features = 0;
    Tensor weights;
    Tensor bias;
};

using Layer = std::variant<Conv2DLayer, ReluLayer, MaxPool2DLayer, FlattenLayer, DenseLayer>;

const char* layer_kind_name(const Layer& layer);

/// Per-channel affine preprocessing applied to raw [0,1] pixel values:
/// x' = (x - mean[c]) * scale[c].
struct Preprocessing {
    std::vector<double> mean;
    std::vector<double> scale;
};

/// Ordered layer list with weights; treated as immutable after a successful
/// load and safely shareable across threads.
struct Model {
    std::vector<int> input_shape;  // {channels, height, width}
    Preprocessing preprocessing;
    std::vector<std::string> class_labels;
    std::vector<Layer> layers;

    // Filled by validate_model(): output shape of every layer.
    std::vector<std::vector<int>> output_shapes;

    int class_count() const { return static_cast<int>(class_labels.size()); }
    std::int64_t parameter_count() const;
};

/// Spatial geometry of a convolution over an in_h x in_w input; padding
/// offsets are 0 under valid padding.
struct Conv2DGeometry {
    int out_h = 0;
    int out_w = 0;
    int pad_top = 0;
    int pad_left = 0;
};

Conv2DGeometry conv2d_geometry(const Conv2DLayer& conv, int in_h, int in_w);

/// Output shape of one layer given its input shape. Throws ValidationError
/// naming `layer_index` on any inconsistency.
std::vector<int> layer_output_shape(const Layer& layer, const std::vector<int>& in_shape,
                                    int layer_index);

/// Verifies the shape chain, weight tensor shapes, preprocessing lengths and
/// weight finiteness, and fills model.output_shapes. Throws ValidationError.
void validate_model(Model& model);

// ---------------------------------------------------------------------------
// Model file format ("RLNS", version 1)
//
//   bytes 0-3    magic "RLNS"
//   bytes 4-7    version, little-endian u32, must be 1
//   bytes 8-11   header length H, little-endian u32
//   bytes 12..   UTF-8 JSON header of H bytes declaring input_shape,
//                preprocessing {mean, scale}, class_labels and the ordered
//                layer list; each weighted layer declares the element counts
//                of its weight and bias blobs
//   then         all weight blobs concatenated in declaration order as
//                little-endian IEEE-754 float32 (per weighted layer: weights,
//                then bias; Conv2D row-major [out_ch][in_ch][kh][kw], Dense
//                [out][in])
//
// The file ends exactly at the last declared blob byte; trailing bytes are a
// format error.
// ---------------------------------------------------------------------------

Model decode_model(const std::vector<std::uint8_t>& bytes);
std::vector<std::uint8_t> encode_model(const Model& model);

Model load_model(const std::filesystem::path& path);
void save_model(const std::filesystem::path& path, const Model& model);

}  // namespace relens
