#include "relens/model.hpp"

#include <bit>
#include <cmath>
#include <cstring>

#include <nlohmann/json.hpp>

#include "relens/errors.hpp"
#include "relens/textfmt.hpp"

namespace relens {

using json = nlohmann::json;

namespace {

constexpr char kMagic[4] = {'R', 'L', 'N', 'S'};
constexpr std::uint32_t kVersion = 1;

std::string layer_label(int index, const Layer& layer) {
    return "layer " + std::to_string(index) + " (" + layer_kind_name(layer) + ")";
}

}  // namespace

const char* layer_kind_name(const Layer& layer) {
    switch (layer.index()) {
        case 0: return "conv2d";
        case 1: return "relu";
        case 2: return "maxpool2d";
        case 3: return "flatten";
        case 4: return "dense";
    }
    return "?";
}

std::int64_t Model::parameter_count() const {
    std::int64_t n = 0;
    for (const Layer& layer : layers) {
        if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            n += conv->weights.size() + conv->bias.size();
        } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            n += dense->weights.size() + dense->bias.size();
        }
    }
    return n;
}

Conv2DGeometry conv2d_geometry(const Conv2DLayer& conv, int in_h, int in_w) {
    Conv2DGeometry g;
    if (conv.padding == Padding::Valid) {
        g.out_h = (in_h - conv.kernel_h) / conv.stride + 1;
        g.out_w = (in_w - conv.kernel_w) / conv.stride + 1;
        g.pad_top = 0;
        g.pad_left = 0;
    } else {
        g.out_h = (in_h + conv.stride - 1) / conv.stride;
        g.out_w = (in_w + conv.stride - 1) / conv.stride;
        const int pad_h = std::max((g.out_h - 1) * conv.stride + conv.kernel_h - in_h, 0);
        const int pad_w = std::max((g.out_w - 1) * conv.stride + conv.kernel_w - in_w, 0);
        g.pad_top = pad_h / 2;  // extra pixel goes to the bottom/right
        g.pad_left = pad_w / 2;
    }
    return g;
}

std::vector<int> layer_output_shape(const Layer& layer, const std::vector<int>& in_shape,
                                    int layer_index) {
    const std::string label = layer_label(layer_index, layer);

    if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
        if (in_shape.size() != 3)
            throw ValidationError(label + ": expects a rank-3 input, got " + shape_to_string(in_shape));
        if (conv->stride < 1) throw ValidationError(label + ": stride must be >= 1");
        if (conv->kernel_h < 1 || conv->kernel_w < 1)
            throw ValidationError(label + ": kernel dims must be >= 1");
        if (conv->out_channels < 1) throw ValidationError(label + ": out_channels must be >= 1");
        if (conv->padding == Padding::Valid &&
            (in_shape[1] < conv->kernel_h || in_shape[2] < conv->kernel_w))
            throw ValidationError(label + ": kernel larger than input under valid padding");
        const Conv2DGeometry g = conv2d_geometry(*conv, in_shape[1], in_shape[2]);
        if (g.out_h < 1 || g.out_w < 1)
            throw ValidationError(label + ": output would be empty");
        return {conv->out_channels, g.out_h, g.out_w};
    }
    if (std::holds_alternative<ReluLayer>(layer)) {
        return in_shape;
    }
    if (const auto* pool = std::get_if<MaxPool2DLayer>(&layer)) {
        if (in_shape.size() != 3)
            throw ValidationError(label + ": expects a rank-3 input, got " + shape_to_string(in_shape));
        if (pool->stride < 1) throw ValidationError(label + ": stride must be >= 1");
        if (pool->window_h < 1 || pool->window_w < 1)
            throw ValidationError(label + ": window dims must be >= 1");
        if (in_shape[1] < pool->window_h || in_shape[2] < pool->window_w)
            throw ValidationError(label + ": window larger than input");
        const int out_h = (in_shape[1] - pool->window_h) / pool->stride + 1;
        const int out_w = (in_shape[2] - pool->window_w) / pool->stride + 1;
        return {in_shape[0], out_h, out_w};
    }
    if (std::holds_alternative<FlattenLayer>(layer)) {
        return {static_cast<int>(shape_numel(in_shape))};
    }
    const auto& dense = std::get<DenseLayer>(layer);
    if (dense.out_features < 1) throw ValidationError(label + ": out_features must be >= 1");
    return {dense.out_features};
}

void validate_model(Model& model) {
    if (model.input_shape.size() != 3)
        throw ValidationError("model input shape must be rank 3 (channels,height,width), got " +
                              shape_to_string(model.input_shape));
    for (int d : model.input_shape) {
        if (d < 1) throw ValidationError("model input shape has a non-positive dimension");
    }
    if (model.class_labels.empty()) throw ValidationError("model declares no class labels");
    const int channels = model.input_shape[0];
    if (static_cast<int>(model.preprocessing.mean.size()) != channels ||
        static_cast<int>(model.preprocessing.scale.size()) != channels)
        throw ValidationError("preprocessing mean/scale length must equal channel count " +
                              std::to_string(channels));
    for (double v : model.preprocessing.mean)
        if (!std::isfinite(v)) throw ValidationError("non-finite preprocessing mean");
    for (double v : model.preprocessing.scale)
        if (!std::isfinite(v)) throw ValidationError("non-finite preprocessing scale");

    model.output_shapes.clear();
    model.output_shapes.reserve(model.layers.size());

    std::vector<int> shape = model.input_shape;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        Layer& layer = model.layers[i];
        const std::string label = layer_label(static_cast<int>(i), layer);

        // Weight blobs arrive flat from the file; fix their shapes once the
        // incoming shape is known, rejecting declared-count mismatches.
        if (auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            if (shape.size() != 3)
                throw ValidationError(label + ": expects a rank-3 input, got " + shape_to_string(shape));
            const std::int64_t want_w = static_cast<std::int64_t>(conv->out_channels) * shape[0] *
                                        conv->kernel_h * conv->kernel_w;
            if (conv->weights.size() != want_w)
                throw ValidationError(label + ": weight blob has " + std::to_string(conv->weights.size()) +
                                      " elements, layer requires " + std::to_string(want_w));
            if (conv->bias.size() != conv->out_channels)
                throw ValidationError(label + ": bias blob has " + std::to_string(conv->bias.size()) +
                                      " elements, layer requires " + std::to_string(conv->out_channels));
            conv->weights.shape = {conv->out_channels, shape[0], conv->kernel_h, conv->kernel_w};
            conv->bias.shape = {conv->out_channels};
            if (!conv->weights.all_finite() || !conv->bias.all_finite())
                throw ValidationError(label + ": non-finite weight");
        } else if (auto* dense = std::get_if<DenseLayer>(&layer)) {
            const std::int64_t in_features = shape_numel(shape);
            const std::int64_t want_w = static_cast<std::int64_t>(dense->out_features) * in_features;
            if (dense->weights.size() != want_w)
                throw ValidationError(label + ": weight blob has " + std::to_string(dense->weights.size()) +
                                      " elements, but " + std::to_string(dense->out_features) + "x" +
                                      std::to_string(in_features) + " = " + std::to_string(want_w) +
                                      " are required");
            if (dense->bias.size() != dense->out_features)
                throw ValidationError(label + ": bias blob has " + std::to_string(dense->bias.size()) +
                                      " elements, layer requires " + std::to_string(dense->out_features));
            dense->weights.shape = {dense->out_features, static_cast<int>(in_features)};
            dense->bias.shape = {dense->out_features};
            if (!dense->weights.all_finite() || !dense->bias.all_finite())
                throw ValidationError(label + ": non-finite weight");
        }

        shape = layer_output_shape(layer, shape, static_cast<int>(i));
        model.output_shapes.push_back(shape);
    }

    if (shape.size() != 1 || shape[0] != model.class_count())
        throw ValidationError("final layer output " + shape_to_string(shape) +
                              " does not match the " + std::to_string(model.class_count()) +
                              " declared class labels");
}

namespace {

std::uint32_t read_u32le(const std::uint8_t* p) {
    return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
           (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

void append_u32le(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
    out.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
}

std::int64_t get_count(const json& j, const char* key, const char* kind) {
    if (!j.contains(key) || !j[key].is_number_unsigned())
        throw FormatError(std::string("model header: ") + kind + " layer missing unsigned \"" + key + "\"");
    const std::uint64_t v = j[key].get<std::uint64_t>();
    if (v > (1ull << 31)) throw FormatError(std::string("model header: implausible ") + key + " count");
    return static_cast<std::int64_t>(v);
}

int get_int(const json& j, const char* key, const char* kind) {
    if (!j.contains(key) || !j[key].is_number_integer())
        throw FormatError(std::string("model header: ") + kind + " layer missing integer \"" + key + "\"");
    return j[key].get<int>();
}

// Reads `count` little-endian float32 values starting at `offset`, widening
// to double.
Tensor read_blob(const std::vector<std::uint8_t>& bytes, std::size_t& offset, std::int64_t count) {
    const std::size_t need = static_cast<std::size_t>(count) * 4;
    if (offset + need > bytes.size()) throw FormatError("unexpected end of weights");
    std::vector<double> values(static_cast<std::size_t>(count));
    for (std::int64_t i = 0; i < count; ++i) {
        std::uint32_t u = read_u32le(bytes.data() + offset + static_cast<std::size_t>(i) * 4);
        values[static_cast<std::size_t>(i)] = static_cast<double>(std::bit_cast<float>(u));
    }
    offset += need;
    if (count == 0) return Tensor{};
    return Tensor::from_data({static_cast<int>(count)}, std::move(values));
}

void append_blob(std::vector<std::uint8_t>& out, const Tensor& t) {
    for (double v : t.data) {
        const std::uint32_t u = std::bit_cast<std::uint32_t>(static_cast<float>(v));
        append_u32le(out, u);
    }
}

}  // namespace

Model decode_model(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 12) throw FormatError("model file too short for RLNS header");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0)
        throw FormatError("bad magic: not an RLNS model file");
    const std::uint32_t version = read_u32le(bytes.data() + 4);
    if (version != kVersion)
        throw FormatError("unsupported RLNS version " + std::to_string(version));
    const std::uint32_t header_len = read_u32le(bytes.data() + 8);
    if (12 + static_cast<std::size_t>(header_len) > bytes.size())
        throw FormatError("truncated model header");

    json header;
    try {
        header = json::parse(bytes.begin() + 12, bytes.begin() + 12 + header_len);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("model header is not valid JSON: ") + e.what());
    }

    Model model;
    try {
        model.input_shape = header.at("input_shape").get<std::vector<int>>();
        model.preprocessing.mean = header.at("preprocessing").at("mean").get<std::vector<double>>();
        model.preprocessing.scale = header.at("preprocessing").at("scale").get<std::vector<double>>();
        model.class_labels = header.at("class_labels").get<std::vector<std::string>>();
        if (!header.at("layers").is_array()) throw FormatError("model header: \"layers\" must be an array");
    } catch (const json::exception& e) {
        throw FormatError(std::string("model header missing required field: ") + e.what());
    }

    struct PendingBlob {
        std::int64_t weights = 0;
        std::int64_t bias = 0;
    };
    std::vector<PendingBlob> pending;

    for (const json& jl : header["layers"]) {
        if (!jl.is_object() || !jl.contains("kind") || !jl["kind"].is_string())
            throw FormatError("model header: each layer needs a string \"kind\"");
        const std::string kind = jl["kind"].get<std::string>();
        if (kind == "conv2d") {
            Conv2DLayer conv;
            conv.out_channels = get_int(jl, "out_channels", "conv2d");
            if (!jl.contains("kernel") || !jl["kernel"].is_array() || jl["kernel"].size() != 2)
                throw FormatError("model header: conv2d layer needs \"kernel\": [kh, kw]");
            conv.kernel_h = jl["kernel"][0].get<int>();
            conv.kernel_w = jl["kernel"][1].get<int>();
            conv.stride = get_int(jl, "stride", "conv2d");
            const std::string pad = jl.value("padding", std::string());
            if (pad == "same") {
                conv.padding = Padding::Same;
            } else if (pad == "valid") {
                conv.padding = Padding::Valid;
            } else {
                throw FormatError("model header: conv2d padding must be \"same\" or \"valid\"");
            }
            pending.push_back({get_count(jl, "weights", "conv2d"), get_count(jl, "bias", "conv2d")});
            model.layers.emplace_back(std::move(conv));
        } else if (kind == "relu") {
            model.layers.emplace_back(ReluLayer{});
            pending.push_back({});
        } else if (kind == "maxpool2d") {
            MaxPool2DLayer pool;
            if (!jl.contains("window") || !jl["window"].is_array() || jl["window"].size() != 2)
                throw FormatError("model header: maxpool2d layer needs \"window\": [h, w]");
            pool.window_h = jl["window"][0].get<int>();
            pool.window_w = jl["window"][1].get<int>();
            pool.stride = get_int(jl, "stride", "maxpool2d");
            model.layers.emplace_back(pool);
            pending.push_back({});
        } else if (kind == "flatten") {
            model.layers.emplace_back(FlattenLayer{});
            pending.push_back({});
        } else if (kind == "dense") {
            DenseLayer dense;
            dense.out_features = get_int(jl, "out_features", "dense");
            pending.push_back({get_count(jl, "weights", "dense"), get_count(jl, "bias", "dense")});
            model.layers.emplace_back(std::move(dense));
        } else {
            throw FormatError("model header: unknown layer kind \"" + kind + "\"");
        }
    }

    std::size_t offset = 12 + header_len;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (auto* conv = std::get_if<Conv2DLayer>(&model.layers[i])) {
            conv->weights = read_blob(bytes, offset, pending[i].weights);
            conv->bias = read_blob(bytes, offset, pending[i].bias);
        } else if (auto* dense = std::get_if<DenseLayer>(&model.layers[i])) {
            dense->weights = read_blob(bytes, offset, pending[i].weights);
            dense->bias = read_blob(bytes, offset, pending[i].bias);
        }
    }
    if (offset != bytes.size())
        throw FormatError("trailing bytes after the last declared weight blob");

    validate_model(model);
    return model;
}

std::vector<std::uint8_t> encode_model(const Model& model) {
    json header;
    header["input_shape"] = model.input_shape;
    header["preprocessing"] = {{"mean", model.preprocessing.mean},
                               {"scale", model.preprocessing.scale}};
    header["class_labels"] = model.class_labels;
    json layers = json::array();
    for (const Layer& layer : model.layers) {
        json jl;
        jl["kind"] = layer_kind_name(layer);
        if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            jl["out_channels"] = conv->out_channels;
            jl["kernel"] = {conv->kernel_h, conv->kernel_w};
            jl["stride"] = conv->stride;
            jl["padding"] = conv->padding == Padding::Same ? "same" : "valid";
            jl["weights"] = static_cast<std::uint64_t>(conv->weights.size());
            jl["bias"] = static_cast<std::uint64_t>(conv->bias.size());
        } else if (const auto* pool = std::get_if<MaxPool2DLayer>(&layer)) {
            jl["window"] = {pool->window_h, pool->window_w};
            jl["stride"] = pool->stride;
        } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            jl["out_features"] = dense->out_features;
            jl["weights"] = static_cast<std::uint64_t>(dense->weights.size());
            jl["bias"] = static_cast<std::uint64_t>(dense->bias.size());
        }
        layers.push_back(std::move(jl));
    }
    header["layers"] = std::move(layers);

    const std::string header_text = header.dump();

    std::vector<std::uint8_t> out;
    out.reserve(12 + header_text.size() + static_cast<std::size_t>(model.parameter_count()) * 4);
    out.insert(out.end(), kMagic, kMagic + 4);
    append_u32le(out, kVersion);
    append_u32le(out, static_cast<std::uint32_t>(header_text.size()));
    out.insert(out.end(), header_text.begin(), header_text.end());
    for (const Layer& layer : model.layers) {
        if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            append_blob(out, conv->weights);
            append_blob(out, conv->bias);
        } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            append_blob(out, dense->weights);
            append_blob(out, dense->bias);
        }
    }
    return out;
}

Model load_model(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw InputError("model file not found: " + path.string());
    return decode_model(read_binary_file(path));
}

void save_model(const std::filesystem::path& path, const Model& model) {
    write_binary_file(path, encode_model(model));
}

}  // namespace relens
