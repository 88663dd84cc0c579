#include "relens/selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <random>

#include <nlohmann/json.hpp>

#include "relens/errors.hpp"
#include "relens/textfmt.hpp"

namespace relens {

using json = nlohmann::json;

std::string selection_method_name(SelectionMethod m) {
    switch (m) {
        case SelectionMethod::Bins: return "bins";
        case SelectionMethod::KMeans: return "kmeans";
        case SelectionMethod::MeanShift: return "meanshift";
    }
    return "?";
}

std::optional<SelectionMethod> selection_method_from_name(std::string_view name) {
    if (name == "bins") return SelectionMethod::Bins;
    if (name == "kmeans") return SelectionMethod::KMeans;
    if (name == "meanshift") return SelectionMethod::MeanShift;
    return std::nullopt;
}

namespace {

void require_normalized(const Heatmap& h, const char* op) {
    if (h.values.empty()) throw InputError(std::string(op) + ": heatmap is empty");
    for (double v : h.values) {
        if (!(v >= 0.0 && v <= 1.0))
            throw InputError(std::string(op) + ": heatmap values must lie in [0,1]; normalize first");
    }
}

// Shared ordering: mean relevance descending, ties broken by the smaller
// minimum pixel index. Pixels inside each cluster are already ascending, so
// pixels[0] is the minimum.
void rank_clusters(std::vector<Cluster>& clusters) {
    for (Cluster& c : clusters) std::sort(c.pixels.begin(), c.pixels.end());
    std::sort(clusters.begin(), clusters.end(), [](const Cluster& a, const Cluster& b) {
        if (a.mean_relevance != b.mean_relevance) return a.mean_relevance > b.mean_relevance;
        return a.pixels.front() < b.pixels.front();
    });
    for (std::size_t i = 0; i < clusters.size(); ++i) clusters[i].rank = static_cast<int>(i) + 1;
}

double mean_of(const Heatmap& h, const std::vector<std::int64_t>& pixels) {
    double sum = 0.0;
    for (std::int64_t p : pixels) sum += h.values[static_cast<std::size_t>(p)];
    return sum / static_cast<double>(pixels.size());
}

// Uniform double in [0,1) built from the top 53 bits of the generator, so
// results do not depend on the standard library's distribution internals.
double uniform01(std::mt19937_64& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace

ClusterSelection select_bins(const Heatmap& h, int bins) {
    if (bins < 1) throw InputError("select_bins: bin count must be >= 1");
    require_normalized(h, "select_bins");

    std::map<int, std::vector<std::int64_t>, std::greater<int>> by_bin;
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(h.values.size()); ++p) {
        int b = static_cast<int>(std::floor(h.values[static_cast<std::size_t>(p)] * bins));
        if (b >= bins) b = bins - 1;  // v == 1.0 belongs to the top bin
        by_bin[b].push_back(p);
    }

    ClusterSelection sel;
    sel.method = "bins";
    sel.config.method = SelectionMethod::Bins;
    sel.config.bins = bins;
    sel.heatmap_id = h.image_id;
    for (auto& [bin, pixels] : by_bin) {
        Cluster c;
        c.pixels = std::move(pixels);
        c.mean_relevance = mean_of(h, c.pixels);
        sel.clusters.push_back(std::move(c));
    }
    rank_clusters(sel.clusters);
    return sel;
}

ClusterSelection select_kmeans(const Heatmap& h, int k, std::uint64_t seed,
                               std::vector<std::string>* warnings) {
    if (k < 1) throw InputError("select_kmeans: k must be >= 1");
    require_normalized(h, "select_kmeans");

    const std::vector<double>& values = h.values;
    const std::int64_t n = static_cast<std::int64_t>(values.size());

    std::vector<double> distinct(values);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());

    ClusterSelection sel;
    sel.method = "kmeans";
    sel.config.method = SelectionMethod::KMeans;
    sel.config.kmeans_k = k;
    sel.config.kmeans_seed = seed;
    sel.heatmap_id = h.image_id;

    if (static_cast<std::int64_t>(distinct.size()) < k) {
        // Fewer distinct values than clusters: fall back to one cluster per
        // distinct value and tell the caller.
        if (warnings)
            warnings->push_back("kmeans: requested " + std::to_string(k) + " clusters but only " +
                                std::to_string(distinct.size()) +
                                " distinct values exist; returning distinct-value clusters");
        std::map<double, std::vector<std::int64_t>> groups;
        for (std::int64_t p = 0; p < n; ++p) groups[values[static_cast<std::size_t>(p)]].push_back(p);
        for (auto& [value, pixels] : groups) {
            Cluster c;
            c.mean_relevance = value;
            c.pixels = std::move(pixels);
            sel.clusters.push_back(std::move(c));
        }
        rank_clusters(sel.clusters);
        return sel;
    }

    // k-means++ seeding on the 1-D values.
    std::mt19937_64 rng(seed);
    std::vector<double> centroids;
    centroids.reserve(static_cast<std::size_t>(k));
    centroids.push_back(values[static_cast<std::size_t>(rng() % static_cast<std::uint64_t>(n))]);
    std::vector<double> min_sq(static_cast<std::size_t>(n));
    while (static_cast<int>(centroids.size()) < k) {
        double total = 0.0;
        for (std::int64_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            for (double c : centroids) {
                const double d = values[static_cast<std::size_t>(i)] - c;
                best = std::min(best, d * d);
            }
            min_sq[static_cast<std::size_t>(i)] = best;
            total += best;
        }
        double r = uniform01(rng) * total;
        std::int64_t chosen = n - 1;
        for (std::int64_t i = 0; i < n; ++i) {
            r -= min_sq[static_cast<std::size_t>(i)];
            if (r <= 0.0) {
                chosen = i;
                break;
            }
        }
        centroids.push_back(values[static_cast<std::size_t>(chosen)]);
    }

    // Lloyd iterations: assign to the nearest centroid (ties to the lowest
    // index), recompute means, re-seed any emptied cluster with the point
    // farthest from its own centroid.
    std::vector<int> assign(static_cast<std::size_t>(n), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        double best = std::numeric_limits<double>::infinity();
        int arg = 0;
        for (int c = 0; c < k; ++c) {
            const double d = std::abs(values[static_cast<std::size_t>(i)] - centroids[static_cast<std::size_t>(c)]);
            if (d < best) {
                best = d;
                arg = c;
            }
        }
        assign[static_cast<std::size_t>(i)] = arg;
    }

    for (int iter = 0; iter < 300; ++iter) {
        std::vector<double> sum(static_cast<std::size_t>(k), 0.0);
        std::vector<std::int64_t> count(static_cast<std::size_t>(k), 0);
        for (std::int64_t i = 0; i < n; ++i) {
            sum[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += values[static_cast<std::size_t>(i)];
            count[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])] += 1;
        }
        for (int c = 0; c < k; ++c) {
            if (count[static_cast<std::size_t>(c)] > 0)
                centroids[static_cast<std::size_t>(c)] =
                    sum[static_cast<std::size_t>(c)] / static_cast<double>(count[static_cast<std::size_t>(c)]);
        }
        for (int c = 0; c < k; ++c) {
            if (count[static_cast<std::size_t>(c)] > 0) continue;
            std::int64_t farthest = 0;
            double best = -1.0;
            for (std::int64_t i = 0; i < n; ++i) {
                const double d = std::abs(values[static_cast<std::size_t>(i)] -
                                          centroids[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])]);
                if (d > best) {
                    best = d;
                    farthest = i;
                }
            }
            centroids[static_cast<std::size_t>(c)] = values[static_cast<std::size_t>(farthest)];
            assign[static_cast<std::size_t>(farthest)] = c;
        }

        bool changed = false;
        for (std::int64_t i = 0; i < n; ++i) {
            double best = std::numeric_limits<double>::infinity();
            int arg = 0;
            for (int c = 0; c < k; ++c) {
                const double d =
                    std::abs(values[static_cast<std::size_t>(i)] - centroids[static_cast<std::size_t>(c)]);
                if (d < best) {
                    best = d;
                    arg = c;
                }
            }
            if (arg != assign[static_cast<std::size_t>(i)]) {
                assign[static_cast<std::size_t>(i)] = arg;
                changed = true;
            }
        }
        if (!changed) break;
    }

    std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(k));
    for (std::int64_t i = 0; i < n; ++i)
        members[static_cast<std::size_t>(assign[static_cast<std::size_t>(i)])].push_back(i);
    for (auto& pixels : members) {
        if (pixels.empty()) continue;
        Cluster c;
        c.pixels = std::move(pixels);
        c.mean_relevance = mean_of(h, c.pixels);
        sel.clusters.push_back(std::move(c));
    }
    rank_clusters(sel.clusters);
    return sel;
}

ClusterSelection select_meanshift(const Heatmap& h, std::optional<double> bandwidth, int top) {
    if (top < 1) throw InputError("select_meanshift: top must be >= 1");
    require_normalized(h, "select_meanshift");
    if (bandwidth && !(*bandwidth > 0.0))
        throw InputError("select_meanshift: bandwidth must be > 0");

    const std::vector<double>& values = h.values;
    double lo = values[0], hi = values[0];
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    // auto bandwidth: a tenth of the value range (0.1 on a fully normalized
    // map); constant maps fall back to 0.1 and yield a single cluster.
    const double bw = bandwidth ? *bandwidth : (hi > lo ? (hi - lo) / 10.0 : 0.1);

    // Pixels sharing a value follow identical trajectories, so the shift
    // iteration runs once per distinct value with multiplicity weights.
    std::vector<double> distinct(values);
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    const std::size_t m = distinct.size();

    std::vector<double> weight(m, 0.0);
    for (double v : values) {
        const std::size_t i = static_cast<std::size_t>(
            std::lower_bound(distinct.begin(), distinct.end(), v) - distinct.begin());
        weight[i] += 1.0;
    }
    std::vector<double> cum_w(m + 1, 0.0), cum_wx(m + 1, 0.0);
    for (std::size_t i = 0; i < m; ++i) {
        cum_w[i + 1] = cum_w[i] + weight[i];
        cum_wx[i + 1] = cum_wx[i] + weight[i] * distinct[i];
    }

    // Flat kernel: the new position is the mean of all data within bw.
    const auto window_mean = [&](double x) {
        const std::size_t a = static_cast<std::size_t>(
            std::lower_bound(distinct.begin(), distinct.end(), x - bw) - distinct.begin());
        const std::size_t b = static_cast<std::size_t>(
            std::upper_bound(distinct.begin(), distinct.end(), x + bw) - distinct.begin());
        const double w = cum_w[b] - cum_w[a];
        return w > 0.0 ? (cum_wx[b] - cum_wx[a]) / w : x;
    };

    std::vector<double> modes(m);
    for (std::size_t i = 0; i < m; ++i) {
        double x = distinct[i];
        for (int iter = 0; iter < 500; ++iter) {
            const double next = window_mean(x);
            const double shift = std::abs(next - x);
            x = next;
            if (shift < 1e-6) break;
        }
        modes[i] = x;
    }

    // Merge modes closer than bw/2; modes are monotone in 1-D, so a single
    // sorted sweep chains the merges.
    std::vector<int> group(m, 0);
    int groups = 0;
    for (std::size_t i = 1; i < m; ++i) {
        if (std::abs(modes[i] - modes[i - 1]) < bw / 2.0) {
            group[i] = groups;
        } else {
            group[i] = ++groups;
        }
    }

    std::vector<std::vector<std::int64_t>> members(static_cast<std::size_t>(groups + 1));
    for (std::int64_t p = 0; p < static_cast<std::int64_t>(values.size()); ++p) {
        const std::size_t i = static_cast<std::size_t>(
            std::lower_bound(distinct.begin(), distinct.end(), values[static_cast<std::size_t>(p)]) -
            distinct.begin());
        members[static_cast<std::size_t>(group[i])].push_back(p);
    }

    ClusterSelection sel;
    sel.method = "meanshift";
    sel.config.method = SelectionMethod::MeanShift;
    sel.config.meanshift_bandwidth = bw;
    sel.config.meanshift_top = top;
    sel.heatmap_id = h.image_id;
    for (auto& pixels : members) {
        if (pixels.empty()) continue;
        Cluster c;
        c.pixels = std::move(pixels);
        c.mean_relevance = mean_of(h, c.pixels);
        sel.clusters.push_back(std::move(c));
    }
    rank_clusters(sel.clusters);
    if (static_cast<int>(sel.clusters.size()) > top) sel.clusters.resize(static_cast<std::size_t>(top));
    return sel;
}

ClusterSelection select(const Heatmap& h, const SelectionConfig& config,
                        std::vector<std::string>* warnings) {
    switch (config.method) {
        case SelectionMethod::Bins: return select_bins(h, config.bins);
        case SelectionMethod::KMeans:
            return select_kmeans(h, config.kmeans_k, config.kmeans_seed, warnings);
        case SelectionMethod::MeanShift:
            return select_meanshift(h, config.meanshift_bandwidth, config.meanshift_top);
    }
    throw InputError("unknown selection method");
}

std::string selection_to_json(const ClusterSelection& sel) {
    json j;
    j["method"] = sel.method;
    json params;
    switch (sel.config.method) {
        case SelectionMethod::Bins:
            params["bins"] = sel.config.bins;
            break;
        case SelectionMethod::KMeans:
            params["k"] = sel.config.kmeans_k;
            params["seed"] = sel.config.kmeans_seed;
            break;
        case SelectionMethod::MeanShift:
            params["bandwidth"] = sel.config.meanshift_bandwidth.value_or(0.0);
            params["top"] = sel.config.meanshift_top;
            break;
    }
    j["params"] = std::move(params);
    j["heatmap_id"] = sel.heatmap_id;
    json clusters = json::array();
    for (const Cluster& c : sel.clusters) {
        json jc;
        jc["rank"] = c.rank;
        jc["mean_relevance"] = c.mean_relevance;
        jc["pixels"] = c.pixels;
        clusters.push_back(std::move(jc));
    }
    j["clusters"] = std::move(clusters);
    return j.dump(2) + "\n";
}

ClusterSelection selection_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("selection JSON parse error: ") + e.what());
    }
    ClusterSelection sel;
    try {
        sel.method = j.at("method").get<std::string>();
        sel.heatmap_id = j.at("heatmap_id").get<std::string>();
        const auto method = selection_method_from_name(sel.method);
        if (!method) throw FormatError("selection JSON: unknown method \"" + sel.method + "\"");
        sel.config.method = *method;
        const json& params = j.at("params");
        switch (*method) {
            case SelectionMethod::Bins:
                sel.config.bins = params.at("bins").get<int>();
                break;
            case SelectionMethod::KMeans:
                sel.config.kmeans_k = params.at("k").get<int>();
                sel.config.kmeans_seed = params.at("seed").get<std::uint64_t>();
                break;
            case SelectionMethod::MeanShift:
                sel.config.meanshift_bandwidth = params.at("bandwidth").get<double>();
                sel.config.meanshift_top = params.at("top").get<int>();
                break;
        }
        for (const json& jc : j.at("clusters")) {
            Cluster c;
            c.rank = jc.at("rank").get<int>();
            c.mean_relevance = jc.at("mean_relevance").get<double>();
            c.pixels = jc.at("pixels").get<std::vector<std::int64_t>>();
            sel.clusters.push_back(std::move(c));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("selection JSON missing required field: ") + e.what());
    }
    return sel;
}

void write_selection_json(const std::filesystem::path& path, const ClusterSelection& sel) {
    write_text_file(path, selection_to_json(sel));
}

ClusterSelection read_selection_json(const std::filesystem::path& path) {
    return selection_from_json(read_text_file(path));
}

}  // namespace relens
