#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "relens/selection.hpp"

namespace relens {

enum class OcclusionMode { Mask, Square };

/// Blacks out pixels of a raw [0,1] CHW image. `pixels` are row-major indices
/// into the HxW grid; every channel at a listed pixel is set to 0. Square
/// mode fills the axis-aligned bounding box of the set instead. Idempotent.
Tensor occlude(const Tensor& raw_image, const std::vector<std::int64_t>& pixels,
               OcclusionMode mode = OcclusionMode::Mask);

struct DatasetItem {
    std::string id;
    Tensor raw;  // {C,H,W}, values in [0,1], not preprocessed
    int label = 0;
};

struct CurveStep {
    int step = 0;  // 0 = unoccluded baseline
    int clusters_erased = 0;
    double accuracy = 0.0;
    double roc_auc = 0.0;  // NaN when the dataset holds a single class
    double mean_target_logit = 0.0;
};

struct ImageStep {
    std::string image_id;
    int step = 0;
    double target_logit = 0.0;
    int predicted_class = 0;
    double positive_score = 0.0;  // softmax probability of the positive class
};

/// Cumulative-occlusion faithfulness curve. steps has T+1 entries with
/// T = min(requested steps, max cluster count over the dataset); detail rows
/// are sorted by (image_id, step).
struct ErasureCurve {
    std::vector<CurveStep> steps;
    std::vector<ImageStep> detail;
    int positive_class = 0;
};

/// For each image: attribute against the clean-image argmax, select clusters,
/// then cumulatively occlude clusters 1..t in raw space, re-preprocess and
/// re-classify. Images with fewer than t clusters stay at their fully
/// occluded state. Parallel over images; aggregation is ordered by image id
/// and therefore independent of `threads`.
ErasureCurve erasure_curve(const Model& model, const std::vector<DatasetItem>& dataset,
                           const AttributionMethod& method, const SelectionConfig& config,
                           int steps, OcclusionMode mode = OcclusionMode::Mask,
                           int threads = 1);

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

/// Mann-Whitney statistic: over all (positive, negative) pairs, the mean of
/// 1 for s_pos > s_neg, 0.5 for ties, 0 otherwise. Labels are binary (1 =
/// positive); throws UndefinedMetricError when only one class is present.
double roc_auc(const std::vector<double>& scores, const std::vector<int>& labels);

/// The class whose score feeds the ROC-AUC: a label spelled "malignant"
/// (case-insensitive) when present, otherwise the last class index.
int positive_class_index(const Model& model);

/// Pathologist annotation levels: 0 unannotated, 1 blue, 2 orange, 3 red.
struct AnnotationMask {
    int width = 0;
    int height = 0;
    std::vector<std::uint8_t> levels;
};

struct AgreementStep {
    int step = 0;
    std::int64_t occluded_pixels = 0;
    // Fraction of occluded pixels per level, indexed 0..3.
    double level_fraction[4] = {0.0, 0.0, 0.0, 0.0};
    double iou_red = 0.0;
    double iou_red_orange = 0.0;
    double iou_annotated = 0.0;
    // sum of occluded level weights (red 3, orange 2, blue 1) over
    // 3 * occluded count; 1 exactly when every occluded pixel is red.
    double weighted_agreement = 0.0;
};

struct AgreementReport {
    std::vector<AgreementStep> steps;
};

/// Quantifies overlap between cumulative occluded pixel sets (one per step)
/// and the annotation mask. An empty occluded set reports all-zero fractions.
AgreementReport agreement(const std::vector<std::vector<std::int64_t>>& cumulative_sets,
                          const AnnotationMask& mask);

// Text outputs. Curve CSV header:
//   step,clusters_erased,accuracy,roc_auc,mean_target_logit
// per-image detail CSV header:
//   image_id,step,target_logit,predicted_class
std::string curve_to_csv(const ErasureCurve& curve);
std::string detail_to_csv(const ErasureCurve& curve);
std::string agreement_to_json(const AgreementReport& report);

}  // namespace relens
