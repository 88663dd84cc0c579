#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relens/evaluation.hpp"
#include "relens/model.hpp"

namespace relens {

struct RgbImage {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> pixels;  // RGB interleaved, row-major

    std::uint8_t at(int y, int x, int ch) const {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
    }
    std::uint8_t& at(int y, int x, int ch) {
        return pixels[(static_cast<std::size_t>(y) * width + x) * 3 + ch];
    }
};

RgbImage load_png_rgb(const std::filesystem::path& path);
void write_png_rgb(const std::filesystem::path& path, const RgbImage& img);

/// Annotation masks are strict 8-bit grayscale PNGs whose sample values are
/// exactly {0,1,2,3}; anything else is an input error.
AnnotationMask load_annotation_mask(const std::filesystem::path& path);
void write_annotation_mask(const std::filesystem::path& path, const AnnotationMask& mask);

/// Scales 8-bit pixels to a raw [0,1] CHW tensor without preprocessing.
/// channels must be 3 (RGB) or 1 (mean of R,G,B).
Tensor image_to_raw(const RgbImage& img, int channels);

/// The model-ready input: [0,1] scaling followed by the model's per-channel
/// preprocessing. Dimensions must match the model input; no silent resizing.
Tensor to_tensor(const RgbImage& img, const Model& model);

RgbImage resize_bilinear(const RgbImage& img, int new_width, int new_height);

// ---------------------------------------------------------------------------
// Dataset manifest: CSV with header image_id,path,label,magnification[,annotation]
// ---------------------------------------------------------------------------

struct ManifestRow {
    std::string image_id;
    std::string path;
    int label = 0;
    int magnification = 40;  // one of {40, 100, 200, 400}
    std::optional<std::string> annotation;
};

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path);
void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows);

/// Fields parsed from a BreakHis-style filename such as
/// "SOB-M-DC-14-16716-40-01011": procedure, tumor class (B/M), subtype, year,
/// slide id, magnification, sequence. Returns nullopt if the name does not
/// follow the grammar.
struct BreakhisName {
    std::string procedure;
    char tumor_class = '?';
    std::string subtype;
    std::string year;
    std::string slide_id;
    int magnification = 0;
    std::string sequence;
};

std::optional<BreakhisName> parse_breakhis_filename(std::string_view stem);

}  // namespace relens
