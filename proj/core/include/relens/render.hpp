#pragma once

#include <array>

#include "relens/image.hpp"
#include "relens/selection.hpp"

namespace relens {

enum class Palette { Grayscale, Diverging };

/// 256-entry blue -> white -> red lookup. Entry i, with t = i/255:
///   t <= 0.5: (round(510t), round(510t), 255)
///   t >  0.5: (255, round(510(1-t)), round(510(1-t)))
/// so entry 0 is pure blue and entry 255 pure red.
const std::array<std::array<std::uint8_t, 3>, 256>& diverging_palette();

/// Renders a normalized heatmap. Grayscale maps v to (round(255v),)x3;
/// diverging indexes the palette with round(255v). Rounding is half-up.
RgbImage render_heatmap(const Heatmap& normalized, Palette palette);

/// Per-pixel, per-channel blend with the diverging palette:
///   out = round((1 - alpha*v) * base + alpha*v * palette(v))
/// alpha = 0 returns the base image bit-identically.
RgbImage overlay(const RgbImage& base, const Heatmap& normalized, double alpha);

/// Frame t (1-based) shows the cumulative occlusion of clusters 1..t; the
/// series has `steps` frames, repeating the fully occluded state for images
/// with fewer clusters.
std::vector<RgbImage> render_occlusion_series(const RgbImage& img, const ClusterSelection& sel,
                                              int steps,
                                              OcclusionMode mode = OcclusionMode::Mask);

}  // namespace relens
