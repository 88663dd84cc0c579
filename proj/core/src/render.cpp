#include "relens/render.hpp"

#include <algorithm>
#include <cmath>

#include "relens/errors.hpp"

namespace relens {

const std::array<std::array<std::uint8_t, 3>, 256>& diverging_palette() {
    static const auto table = [] {
        std::array<std::array<std::uint8_t, 3>, 256> t{};
        for (int i = 0; i < 256; ++i) {
            const double v = i / 255.0;
            if (v <= 0.5) {
                const auto ramp = static_cast<std::uint8_t>(std::lround(510.0 * v));
                t[static_cast<std::size_t>(i)] = {ramp, ramp, 255};
            } else {
                const auto ramp = static_cast<std::uint8_t>(std::lround(510.0 * (1.0 - v)));
                t[static_cast<std::size_t>(i)] = {255, ramp, ramp};
            }
        }
        return t;
    }();
    return table;
}

namespace {

void require_normalized_map(const Heatmap& h, const char* op) {
    if (h.width <= 0 || h.height <= 0 ||
        h.values.size() != static_cast<std::size_t>(h.width) * h.height)
        throw InputError(std::string(op) + ": malformed heatmap");
    for (double v : h.values) {
        if (!(v >= 0.0 && v <= 1.0))
            throw InputError(std::string(op) + ": heatmap must be normalized to [0,1]");
    }
}

}  // namespace

RgbImage render_heatmap(const Heatmap& normalized, Palette palette) {
    require_normalized_map(normalized, "render_heatmap");
    RgbImage img;
    img.width = normalized.width;
    img.height = normalized.height;
    img.pixels.resize(static_cast<std::size_t>(img.width) * img.height * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const double v = normalized.value_at(y, x);
            if (palette == Palette::Grayscale) {
                const auto g = static_cast<std::uint8_t>(std::lround(255.0 * v));
                img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = g;
            } else {
                const auto& rgb = diverging_palette()[static_cast<std::size_t>(std::lround(255.0 * v))];
                img.at(y, x, 0) = rgb[0];
                img.at(y, x, 1) = rgb[1];
                img.at(y, x, 2) = rgb[2];
            }
        }
    }
    return img;
}

RgbImage overlay(const RgbImage& base, const Heatmap& normalized, double alpha) {
    require_normalized_map(normalized, "overlay");
    if (base.width != normalized.width || base.height != normalized.height)
        throw InputError("overlay: image and heatmap dimensions differ");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw InputError("overlay: alpha must lie in [0,1]");

    RgbImage out = base;
    if (alpha == 0.0) return out;  // bit-identical base
    for (int y = 0; y < base.height; ++y) {
        for (int x = 0; x < base.width; ++x) {
            const double v = normalized.value_at(y, x);
            const double blend = alpha * v;
            const auto& rgb = diverging_palette()[static_cast<std::size_t>(std::lround(255.0 * v))];
            for (int c = 0; c < 3; ++c) {
                const double mixed = (1.0 - blend) * base.at(y, x, c) + blend * rgb[static_cast<std::size_t>(c)];
                out.at(y, x, c) = static_cast<std::uint8_t>(std::lround(mixed));
            }
        }
    }
    return out;
}

std::vector<RgbImage> render_occlusion_series(const RgbImage& img, const ClusterSelection& sel,
                                              int steps, OcclusionMode mode) {
    if (steps < 0) throw InputError("render_occlusion_series: steps must be >= 0");
    const std::int64_t plane = static_cast<std::int64_t>(img.width) * img.height;

    std::vector<RgbImage> frames;
    frames.reserve(static_cast<std::size_t>(steps));

    std::vector<std::int64_t> cumulative;
    RgbImage current = img;
    int min_y = img.height, max_y = -1, min_x = img.width, max_x = -1;

    for (int t = 1; t <= steps; ++t) {
        if (t <= static_cast<int>(sel.clusters.size())) {
            const Cluster& cluster = sel.clusters[static_cast<std::size_t>(t - 1)];
            for (std::int64_t p : cluster.pixels) {
                if (p < 0 || p >= plane)
                    throw InputError("render_occlusion_series: pixel index " + std::to_string(p) +
                                     " outside the image");
                const int y = static_cast<int>(p / img.width);
                const int x = static_cast<int>(p % img.width);
                if (mode == OcclusionMode::Mask) {
                    current.at(y, x, 0) = current.at(y, x, 1) = current.at(y, x, 2) = 0;
                } else {
                    min_y = std::min(min_y, y);
                    max_y = std::max(max_y, y);
                    min_x = std::min(min_x, x);
                    max_x = std::max(max_x, x);
                }
            }
            if (mode == OcclusionMode::Square && max_y >= 0) {
                for (int y = min_y; y <= max_y; ++y)
                    for (int x = min_x; x <= max_x; ++x)
                        current.at(y, x, 0) = current.at(y, x, 1) = current.at(y, x, 2) = 0;
            }
        }
        frames.push_back(current);  // past the last cluster the state repeats
    }
    return frames;
}

}  // namespace relens
