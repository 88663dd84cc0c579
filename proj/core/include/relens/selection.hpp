#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "relens/attribution.hpp"

namespace relens {

enum class SelectionMethod { Bins, KMeans, MeanShift };

std::string selection_method_name(SelectionMethod m);
std::optional<SelectionMethod> selection_method_from_name(std::string_view name);

struct SelectionConfig {
    SelectionMethod method = SelectionMethod::Bins;
    int bins = 10;
    int kmeans_k = 10;
    std::uint64_t kmeans_seed = 0;
    std::optional<double> meanshift_bandwidth;  // nullopt = auto: (max-min)/10
    int meanshift_top = 10;
};

struct Cluster {
    int rank = 0;  // 1 = most relevant
    double mean_relevance = 0.0;
    std::vector<std::int64_t> pixels;  // row-major indices, sorted ascending
};

/// Ordered, pairwise-disjoint pixel clusters ranked by mean relevance
/// descending (ties broken by the smaller minimum pixel index). Bins and
/// k-means cover every pixel; mean-shift keeps only the top clusters.
struct ClusterSelection {
    std::string method;
    SelectionConfig config;  // parameters actually used (bandwidth resolved)
    std::string heatmap_id;
    std::vector<Cluster> clusters;
};

/// Pixel with value v goes to bin floor(v*bins), with v = 1.0 clamped into
/// the top bin. Empty bins are omitted.
ClusterSelection select_bins(const Heatmap& h, int bins);

/// Lloyd's algorithm on the 1-D pixel relevance values with seeded k-means++
/// initialization. Converges when no assignment changes, capped at 300
/// iterations; an emptied cluster is re-seeded with the point farthest from
/// its centroid. If k exceeds the number of distinct values, one cluster per
/// distinct value is returned and a warning is appended to `warnings`.
ClusterSelection select_kmeans(const Heatmap& h, int k, std::uint64_t seed,
                               std::vector<std::string>* warnings = nullptr);

/// Flat-kernel mean shift on the 1-D relevance values: each value is shifted
/// to the mean of the data within `bandwidth` until the shift drops below
/// 1e-6 (at most 500 iterations); converged modes closer than bandwidth/2 are
/// merged; only the `top` highest-relevance clusters are retained.
ClusterSelection select_meanshift(const Heatmap& h, std::optional<double> bandwidth, int top);

ClusterSelection select(const Heatmap& h, const SelectionConfig& config,
                        std::vector<std::string>* warnings = nullptr);

// JSON serialization:
//   {method, params, heatmap_id, clusters: [{rank, mean_relevance, pixels}]}
// with pixel indices sorted ascending for canonical output.
std::string selection_to_json(const ClusterSelection& sel);
ClusterSelection selection_from_json(const std::string& text);
void write_selection_json(const std::filesystem::path& path, const ClusterSelection& sel);
ClusterSelection read_selection_json(const std::filesystem::path& path);

}  // namespace relens
