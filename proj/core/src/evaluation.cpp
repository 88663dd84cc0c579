#include "relens/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "relens/errors.hpp"
#include "relens/parallel.hpp"
#include "relens/textfmt.hpp"

namespace relens {

using json = nlohmann::json;

Tensor occlude(const Tensor& raw_image, const std::vector<std::int64_t>& pixels,
               OcclusionMode mode) {
    if (raw_image.rank() != 3)
        throw InputError("occlude: expected a rank-3 raw image, got " + shape_to_string(raw_image.shape));
    const int ch = raw_image.shape[0], h = raw_image.shape[1], w = raw_image.shape[2];
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;

    Tensor out = raw_image;
    if (pixels.empty()) return out;

    for (std::int64_t p : pixels) {
        if (p < 0 || p >= plane)
            throw InputError("occlude: pixel index " + std::to_string(p) + " outside the " +
                             std::to_string(h) + "x" + std::to_string(w) + " grid");
    }

    if (mode == OcclusionMode::Mask) {
        for (std::int64_t p : pixels) {
            const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
            for (int c = 0; c < ch; ++c) out.at(c, y, x) = 0.0;
        }
        return out;
    }

    // Square: fill the bounding box of the set with black.
    int min_y = h, max_y = -1, min_x = w, max_x = -1;
    for (std::int64_t p : pixels) {
        const int y = static_cast<int>(p / w), x = static_cast<int>(p % w);
        min_y = std::min(min_y, y);
        max_y = std::max(max_y, y);
        min_x = std::min(min_x, x);
        max_x = std::max(max_x, x);
    }
    for (int y = min_y; y <= max_y; ++y)
        for (int x = min_x; x <= max_x; ++x)
            for (int c = 0; c < ch; ++c) out.at(c, y, x) = 0.0;
    return out;
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    if (predictions.size() != labels.size())
        throw InputError("accuracy: predictions and labels differ in length");
    if (predictions.empty()) throw InputError("accuracy: empty inputs");
    std::int64_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) correct += predictions[i] == labels[i];
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size())
        throw InputError("roc_auc: scores and labels differ in length");
    const std::size_t n = scores.size();
    std::int64_t positives = 0;
    for (int l : labels) positives += l != 0;
    const std::int64_t negatives = static_cast<std::int64_t>(n) - positives;
    if (positives == 0 || negatives == 0)
        throw UndefinedMetricError("roc_auc: labels contain a single class; AUC is undefined");

    // Rank-based Mann-Whitney with midranks for ties: the numerator equals
    // wins + 0.5*ties exactly, so the result matches pairwise counting.
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    std::vector<double> rank(n, 0.0);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double mid = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t t = i; t <= j; ++t) rank[order[t]] = mid;
        i = j + 1;
    }

    double rank_sum = 0.0;
    for (std::size_t t = 0; t < n; ++t)
        if (labels[t] != 0) rank_sum += rank[t];
    const double u = rank_sum - static_cast<double>(positives) * (static_cast<double>(positives) + 1.0) / 2.0;
    return u / (static_cast<double>(positives) * static_cast<double>(negatives));
}

int positive_class_index(const Model& model) {
    for (int i = 0; i < model.class_count(); ++i) {
        std::string lower = model.class_labels[static_cast<std::size_t>(i)];
        std::transform(lower.begin(), lower.end(), lower.begin(),
                       [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
        if (lower == "malignant") return i;
    }
    return model.class_count() - 1;
}

namespace {

struct ImageRecord {
    std::string id;
    int label = 0;
    int cluster_count = 0;
    // index t = metrics after occluding clusters 1..t (0 = baseline).
    std::vector<double> target_logit;
    std::vector<int> predicted;
    std::vector<double> positive_score;
};

}  // namespace

ErasureCurve erasure_curve(const Model& model, const std::vector<DatasetItem>& dataset,
                           const AttributionMethod& method, const SelectionConfig& config,
                           int steps, OcclusionMode mode, int threads) {
    if (dataset.empty()) throw InputError("erasure_curve: empty dataset");
    if (steps < 0) throw InputError("erasure_curve: steps must be >= 0");
    for (const DatasetItem& item : dataset) {
        if (item.label < 0 || item.label >= model.class_count())
            throw InputError("erasure_curve: label " + std::to_string(item.label) + " of image \"" +
                             item.id + "\" outside the model's " +
                             std::to_string(model.class_count()) + " classes");
    }

    const int positive = positive_class_index(model);
    std::vector<ImageRecord> records(dataset.size());

    parallel_for(static_cast<std::int64_t>(dataset.size()), threads, [&](std::int64_t idx) {
        const DatasetItem& item = dataset[static_cast<std::size_t>(idx)];
        ImageRecord rec;
        rec.id = item.id;
        rec.label = item.label;

        // Baseline pass fixes the attribution target for all erasure steps.
        const Tensor clean_input = preprocess(model, item.raw);
        const Classification clean = classify(model, clean_input);
        const int target = clean.predicted_class;

        rec.target_logit.push_back(clean.logits[target]);
        rec.predicted.push_back(clean.predicted_class);
        rec.positive_score.push_back(class_probability(clean.logits, positive));

        const Heatmap raw_map = attribute(model, clean_input, target, method);
        const ClusterSelection sel = select(normalize_heatmap(raw_map), config, nullptr);
        rec.cluster_count = static_cast<int>(sel.clusters.size());

        const int depth = std::min(steps, rec.cluster_count);
        std::vector<std::int64_t> cumulative;
        for (int t = 1; t <= depth; ++t) {
            const Cluster& cluster = sel.clusters[static_cast<std::size_t>(t - 1)];
            cumulative.insert(cumulative.end(), cluster.pixels.begin(), cluster.pixels.end());
            const Tensor occluded = occlude(item.raw, cumulative, mode);
            const Classification c = classify(model, preprocess(model, occluded));
            rec.target_logit.push_back(c.logits[target]);
            rec.predicted.push_back(c.predicted_class);
            rec.positive_score.push_back(class_probability(c.logits, positive));
        }
        records[static_cast<std::size_t>(idx)] = std::move(rec);
    });

    std::sort(records.begin(), records.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.id < b.id; });

    int max_clusters = 0;
    for (const ImageRecord& rec : records) max_clusters = std::max(max_clusters, rec.cluster_count);
    const int total_steps = std::min(steps, max_clusters);

    ErasureCurve curve;
    curve.positive_class = positive;
    bool both_classes_present = false;
    {
        bool has_pos = false, has_neg = false;
        for (const ImageRecord& rec : records) (rec.label == positive ? has_pos : has_neg) = true;
        both_classes_present = has_pos && has_neg;
    }

    for (int t = 0; t <= total_steps; ++t) {
        CurveStep step;
        step.step = t;
        step.clusters_erased = t;
        std::vector<int> preds, labels;
        std::vector<double> scores;
        std::vector<int> binary;
        double logit_sum = 0.0;
        for (const ImageRecord& rec : records) {
            // Images with fewer clusters hold their fully occluded state.
            const std::size_t idx = static_cast<std::size_t>(std::min(t, static_cast<int>(rec.predicted.size()) - 1));
            preds.push_back(rec.predicted[idx]);
            labels.push_back(rec.label);
            scores.push_back(rec.positive_score[idx]);
            binary.push_back(rec.label == positive ? 1 : 0);
            logit_sum += rec.target_logit[idx];
        }
        step.accuracy = accuracy(preds, labels);
        step.roc_auc = both_classes_present ? roc_auc(scores, binary)
                                            : std::numeric_limits<double>::quiet_NaN();
        step.mean_target_logit = logit_sum / static_cast<double>(records.size());
        curve.steps.push_back(step);

        for (const ImageRecord& rec : records) {
            const std::size_t idx = static_cast<std::size_t>(std::min(t, static_cast<int>(rec.predicted.size()) - 1));
            ImageStep is;
            is.image_id = rec.id;
            is.step = t;
            is.target_logit = rec.target_logit[idx];
            is.predicted_class = rec.predicted[idx];
            is.positive_score = rec.positive_score[idx];
            curve.detail.push_back(std::move(is));
        }
    }

    std::sort(curve.detail.begin(), curve.detail.end(), [](const ImageStep& a, const ImageStep& b) {
        if (a.image_id != b.image_id) return a.image_id < b.image_id;
        return a.step < b.step;
    });
    return curve;
}

AgreementReport agreement(const std::vector<std::vector<std::int64_t>>& cumulative_sets,
                          const AnnotationMask& mask) {
    const std::int64_t plane = static_cast<std::int64_t>(mask.width) * mask.height;
    if (plane <= 0 || static_cast<std::int64_t>(mask.levels.size()) != plane)
        throw InputError("agreement: malformed annotation mask");

    std::int64_t region_red = 0, region_red_orange = 0, region_annotated = 0;
    for (std::uint8_t level : mask.levels) {
        if (level > 3) throw InputError("agreement: mask level outside {0,1,2,3}");
        region_red += level == 3;
        region_red_orange += level >= 2;
        region_annotated += level >= 1;
    }

    const auto iou = [](std::int64_t inter, std::int64_t region, std::int64_t occluded) {
        const std::int64_t uni = region + occluded - inter;
        return uni > 0 ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
    };

    AgreementReport report;
    int step = 1;
    for (const std::vector<std::int64_t>& set : cumulative_sets) {
        AgreementStep as;
        as.step = step++;
        std::int64_t count_level[4] = {0, 0, 0, 0};
        for (std::int64_t p : set) {
            if (p < 0 || p >= plane)
                throw InputError("agreement: pixel index " + std::to_string(p) +
                                 " outside the mask grid");
            count_level[mask.levels[static_cast<std::size_t>(p)]] += 1;
        }
        const std::int64_t occluded = static_cast<std::int64_t>(set.size());
        as.occluded_pixels = occluded;
        const std::int64_t in_red = count_level[3];
        const std::int64_t in_red_orange = count_level[3] + count_level[2];
        const std::int64_t in_annotated = in_red_orange + count_level[1];
        if (occluded > 0) {
            for (int l = 0; l < 4; ++l)
                as.level_fraction[l] = static_cast<double>(count_level[l]) / static_cast<double>(occluded);
            as.weighted_agreement =
                static_cast<double>(3 * count_level[3] + 2 * count_level[2] + count_level[1]) /
                static_cast<double>(3 * occluded);
        }
        as.iou_red = iou(in_red, region_red, occluded);
        as.iou_red_orange = iou(in_red_orange, region_red_orange, occluded);
        as.iou_annotated = iou(in_annotated, region_annotated, occluded);
        report.steps.push_back(as);
    }
    return report;
}

std::string curve_to_csv(const ErasureCurve& curve) {
    std::string out = "step,clusters_erased,accuracy,roc_auc,mean_target_logit\n";
    for (const CurveStep& s : curve.steps) {
        out += std::to_string(s.step);
        out += ',';
        out += std::to_string(s.clusters_erased);
        out += ',';
        out += format_double(s.accuracy);
        out += ',';
        out += format_double(s.roc_auc);
        out += ',';
        out += format_double(s.mean_target_logit);
        out += '\n';
    }
    return out;
}

std::string detail_to_csv(const ErasureCurve& curve) {
    std::string out = "image_id,step,target_logit,predicted_class\n";
    for (const ImageStep& s : curve.detail) {
        out += s.image_id;
        out += ',';
        out += std::to_string(s.step);
        out += ',';
        out += format_double(s.target_logit);
        out += ',';
        out += std::to_string(s.predicted_class);
        out += '\n';
    }
    return out;
}

std::string agreement_to_json(const AgreementReport& report) {
    json j;
    json steps = json::array();
    for (const AgreementStep& s : report.steps) {
        json js;
        js["step"] = s.step;
        js["occluded_pixels"] = s.occluded_pixels;
        js["fractions"] = {{"unannotated", s.level_fraction[0]},
                           {"blue", s.level_fraction[1]},
                           {"orange", s.level_fraction[2]},
                           {"red", s.level_fraction[3]}};
        js["iou_red"] = s.iou_red;
        js["iou_red_orange"] = s.iou_red_orange;
        js["iou_annotated"] = s.iou_annotated;
        js["weighted_agreement"] = s.weighted_agreement;
        steps.push_back(std::move(js));
    }
    j["steps"] = std::move(steps);
    return j.dump(2) + "\n";
}

}  // namespace relens
