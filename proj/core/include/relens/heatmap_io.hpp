#pragma once

#include <filesystem>

#include "relens/attribution.hpp"

namespace relens {

// Heatmap files are 16-bit binary PGM ("P5", maxval 65535) quantized from the
// normalized [0,1] map by round(v*65535), plus a sidecar JSON at
// "<path>.json" recording method, epsilon, target class, image id and the
// min/max used for normalization so raw values stay recoverable.

/// Writes the heatmap, normalizing first unless it already carries
/// norm_min/norm_max from an earlier normalization or read.
void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& h);

/// Reads a heatmap written by write_heatmap_pgm. Values come back in [0,1];
/// provenance and the normalization range are restored from the sidecar when
/// present (a missing sidecar leaves provenance empty).
Heatmap read_heatmap_pgm(const std::filesystem::path& path);

std::filesystem::path heatmap_sidecar_path(const std::filesystem::path& pgm_path);

}  // namespace relens
