#include "relens/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <png.h>

#include "relens/errors.hpp"
#include "relens/textfmt.hpp"

namespace relens {

namespace {

struct PngRead {
    std::FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngRead() {
        if (png) png_destroy_read_struct(&png, info ? &info : nullptr, nullptr);
        if (fp) std::fclose(fp);
    }
};

struct PngWrite {
    std::FILE* fp = nullptr;
    png_structp png = nullptr;
    png_infop info = nullptr;
    ~PngWrite() {
        if (png) png_destroy_write_struct(&png, info ? &info : nullptr);
        if (fp) std::fclose(fp);
    }
};

void open_read(PngRead& ctx, const std::filesystem::path& path) {
    ctx.fp = std::fopen(path.string().c_str(), "rb");
    if (!ctx.fp) throw InputError("cannot open " + path.string());
    ctx.png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw Error("libpng: failed to allocate read struct");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw Error("libpng: failed to allocate info struct");
}

}  // namespace

RgbImage load_png_rgb(const std::filesystem::path& path) {
    PngRead ctx;
    open_read(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw FormatError("not a readable PNG: " + path.string());

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);

    // Normalize every input variant to 8-bit RGB.
    if (png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_PALETTE)
        png_set_palette_to_rgb(ctx.png);
    if (png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_GRAY &&
        png_get_bit_depth(ctx.png, ctx.info) < 8)
        png_set_expand_gray_1_2_4_to_8(ctx.png);
    if (png_get_valid(ctx.png, ctx.info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(ctx.png);
    if (png_get_bit_depth(ctx.png, ctx.info) == 16) png_set_strip_16(ctx.png);
    png_set_strip_alpha(ctx.png);
    if (png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_GRAY ||
        png_get_color_type(ctx.png, ctx.info) == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(ctx.png);
    png_read_update_info(ctx.png, ctx.info);

    RgbImage img;
    img.width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    img.height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    if (png_get_rowbytes(ctx.png, ctx.info) != static_cast<std::size_t>(img.width) * 3)
        throw FormatError("PNG did not decode to 8-bit RGB: " + path.string());

    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] = img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);
    return img;
}

void write_png_rgb(const std::filesystem::path& path, const RgbImage& img) {
    if (img.width <= 0 || img.height <= 0 ||
        img.pixels.size() != static_cast<std::size_t>(img.width) * img.height * 3)
        throw InputError("write_png_rgb: malformed image");
    PngWrite ctx;
    ctx.fp = std::fopen(path.string().c_str(), "wb");
    if (!ctx.fp) throw InputError("cannot write " + path.string());
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw Error("libpng: failed to allocate write struct");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw Error("libpng: failed to allocate info struct");
    if (setjmp(png_jmpbuf(ctx.png))) throw Error("libpng: write failed for " + path.string());

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(img.width),
                 static_cast<png_uint_32>(img.height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(img.pixels.data() + static_cast<std::size_t>(y) * img.width * 3);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

AnnotationMask load_annotation_mask(const std::filesystem::path& path) {
    PngRead ctx;
    open_read(ctx, path);
    if (setjmp(png_jmpbuf(ctx.png))) throw FormatError("not a readable PNG: " + path.string());

    png_init_io(ctx.png, ctx.fp);
    png_read_info(ctx.png, ctx.info);
    if (png_get_color_type(ctx.png, ctx.info) != PNG_COLOR_TYPE_GRAY ||
        png_get_bit_depth(ctx.png, ctx.info) != 8)
        throw InputError("annotation mask must be an 8-bit grayscale PNG: " + path.string());

    AnnotationMask mask;
    mask.width = static_cast<int>(png_get_image_width(ctx.png, ctx.info));
    mask.height = static_cast<int>(png_get_image_height(ctx.png, ctx.info));
    mask.levels.resize(static_cast<std::size_t>(mask.width) * mask.height);
    std::vector<png_bytep> rows(static_cast<std::size_t>(mask.height));
    for (int y = 0; y < mask.height; ++y)
        rows[static_cast<std::size_t>(y)] = mask.levels.data() + static_cast<std::size_t>(y) * mask.width;
    png_read_image(ctx.png, rows.data());
    png_read_end(ctx.png, nullptr);

    for (std::uint8_t v : mask.levels) {
        if (v > 3)
            throw InputError("annotation mask value " + std::to_string(v) +
                             " outside {0,1,2,3}: " + path.string());
    }
    return mask;
}

void write_annotation_mask(const std::filesystem::path& path, const AnnotationMask& mask) {
    if (mask.width <= 0 || mask.height <= 0 ||
        mask.levels.size() != static_cast<std::size_t>(mask.width) * mask.height)
        throw InputError("write_annotation_mask: malformed mask");
    for (std::uint8_t v : mask.levels)
        if (v > 3) throw InputError("write_annotation_mask: level outside {0,1,2,3}");

    PngWrite ctx;
    ctx.fp = std::fopen(path.string().c_str(), "wb");
    if (!ctx.fp) throw InputError("cannot write " + path.string());
    ctx.png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!ctx.png) throw Error("libpng: failed to allocate write struct");
    ctx.info = png_create_info_struct(ctx.png);
    if (!ctx.info) throw Error("libpng: failed to allocate info struct");
    if (setjmp(png_jmpbuf(ctx.png))) throw Error("libpng: write failed for " + path.string());

    png_init_io(ctx.png, ctx.fp);
    png_set_IHDR(ctx.png, ctx.info, static_cast<png_uint_32>(mask.width),
                 static_cast<png_uint_32>(mask.height), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(ctx.png, ctx.info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(mask.height));
    for (int y = 0; y < mask.height; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(mask.levels.data() + static_cast<std::size_t>(y) * mask.width);
    png_write_image(ctx.png, rows.data());
    png_write_end(ctx.png, nullptr);
}

Tensor image_to_raw(const RgbImage& img, int channels) {
    if (channels != 1 && channels != 3)
        throw InputError("image_to_raw: model channel count must be 1 or 3, got " +
                         std::to_string(channels));
    Tensor t({channels, img.height, img.width});
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            if (channels == 3) {
                for (int c = 0; c < 3; ++c) t.at(c, y, x) = img.at(y, x, c) / 255.0;
            } else {
                const int sum = img.at(y, x, 0) + img.at(y, x, 1) + img.at(y, x, 2);
                t.at(0, y, x) = static_cast<double>(sum) / 765.0;
            }
        }
    }
    return t;
}

Tensor to_tensor(const RgbImage& img, const Model& model) {
    if (img.width != model.input_shape[2] || img.height != model.input_shape[1])
        throw InputError("image is " + std::to_string(img.width) + "x" + std::to_string(img.height) +
                         " but the model expects " + std::to_string(model.input_shape[2]) + "x" +
                         std::to_string(model.input_shape[1]) +
                         "; pass --resize to resample explicitly");
    return preprocess(model, image_to_raw(img, model.input_shape[0]));
}

RgbImage resize_bilinear(const RgbImage& img, int new_width, int new_height) {
    if (new_width < 1 || new_height < 1) throw InputError("resize: target dims must be positive");
    RgbImage out;
    out.width = new_width;
    out.height = new_height;
    out.pixels.resize(static_cast<std::size_t>(new_width) * new_height * 3);
    const double sx = static_cast<double>(img.width) / new_width;
    const double sy = static_cast<double>(img.height) / new_height;
    for (int y = 0; y < new_height; ++y) {
        const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, static_cast<double>(img.height - 1));
        const int y0 = static_cast<int>(fy);
        const int y1 = std::min(y0 + 1, img.height - 1);
        const double wy = fy - y0;
        for (int x = 0; x < new_width; ++x) {
            const double fx = std::clamp((x + 0.5) * sx - 0.5, 0.0, static_cast<double>(img.width - 1));
            const int x0 = static_cast<int>(fx);
            const int x1 = std::min(x0 + 1, img.width - 1);
            const double wx = fx - x0;
            for (int c = 0; c < 3; ++c) {
                const double top = (1.0 - wx) * img.at(y0, x0, c) + wx * img.at(y0, x1, c);
                const double bot = (1.0 - wx) * img.at(y1, x0, c) + wx * img.at(y1, x1, c);
                const double v = (1.0 - wy) * top + wy * bot;
                out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(v));
            }
        }
    }
    return out;
}

namespace {

std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> fields;
    std::string field;
    for (char c : line) {
        if (c == ',') {
            fields.push_back(field);
            field.clear();
        } else if (c != '\r') {
            field.push_back(c);
        }
    }
    fields.push_back(field);
    return fields;
}

bool valid_magnification(int m) { return m == 40 || m == 100 || m == 200 || m == 400; }

}  // namespace

std::vector<ManifestRow> load_manifest(const std::filesystem::path& path) {
    std::istringstream in(read_text_file(path));
    std::string line;
    if (!std::getline(in, line)) throw FormatError("manifest is empty: " + path.string());
    const auto header = split_csv_line(line);
    const bool has_annotation = header.size() == 5 && header[4] == "annotation";
    if (!(header.size() == 4 || has_annotation) || header[0] != "image_id" || header[1] != "path" ||
        header[2] != "label" || header[3] != "magnification")
        throw FormatError("manifest header must be image_id,path,label,magnification[,annotation]");

    std::vector<ManifestRow> rows;
    std::set<std::string> seen;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        if (fields.size() != header.size())
            throw FormatError("manifest line " + std::to_string(line_no) + ": expected " +
                              std::to_string(header.size()) + " fields, got " +
                              std::to_string(fields.size()));
        ManifestRow row;
        row.image_id = fields[0];
        row.path = fields[1];
        try {
            row.label = std::stoi(fields[2]);
            row.magnification = std::stoi(fields[3]);
        } catch (const std::exception&) {
            throw FormatError("manifest line " + std::to_string(line_no) +
                              ": label and magnification must be integers");
        }
        if (row.label < 0)
            throw FormatError("manifest line " + std::to_string(line_no) + ": negative label");
        if (!valid_magnification(row.magnification))
            throw FormatError("manifest line " + std::to_string(line_no) + ": magnification " +
                              std::to_string(row.magnification) + " not in {40,100,200,400}");
        if (has_annotation && !fields[4].empty()) row.annotation = fields[4];
        if (!seen.insert(row.image_id).second)
            throw FormatError("manifest line " + std::to_string(line_no) + ": duplicate image_id \"" +
                              row.image_id + "\"");
        rows.push_back(std::move(row));
    }
    return rows;
}

void write_manifest(const std::filesystem::path& path, const std::vector<ManifestRow>& rows) {
    bool any_annotation = false;
    for (const ManifestRow& row : rows) any_annotation = any_annotation || row.annotation.has_value();
    std::string out = "image_id,path,label,magnification";
    if (any_annotation) out += ",annotation";
    out += '\n';
    for (const ManifestRow& row : rows) {
        out += row.image_id + ',' + row.path + ',' + std::to_string(row.label) + ',' +
               std::to_string(row.magnification);
        if (any_annotation) {
            out += ',';
            if (row.annotation) out += *row.annotation;
        }
        out += '\n';
    }
    write_text_file(path, out);
}

std::optional<BreakhisName> parse_breakhis_filename(std::string_view stem) {
    // e.g. "SOB-M-DC-14-16716-40-01011" (an extension, if present, is ignored)
    if (const auto dot = stem.find('.'); dot != std::string_view::npos) stem = stem.substr(0, dot);

    std::vector<std::string> tokens;
    std::string token;
    for (char c : stem) {
        if (c == '-') {
            tokens.push_back(token);
            token.clear();
        } else {
            token.push_back(c);
        }
    }
    tokens.push_back(token);
    if (tokens.size() != 7) return std::nullopt;
    if (tokens[1] != "B" && tokens[1] != "M") return std::nullopt;

    BreakhisName name;
    name.procedure = tokens[0];
    name.tumor_class = tokens[1][0];
    name.subtype = tokens[2];
    name.year = tokens[3];
    name.slide_id = tokens[4];
    try {
        name.magnification = std::stoi(tokens[5]);
    } catch (const std::exception&) {
        return std::nullopt;
    }
    if (!valid_magnification(name.magnification)) return std::nullopt;
    name.sequence = tokens[6];
    return name;
}

}  // namespace relens
