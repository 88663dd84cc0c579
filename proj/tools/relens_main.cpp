// relens: CNN attribution toolkit command-line interface.
//
// Subcommands: model-info, classify, attribute, select, erase, evaluate,
// agreement, overlay. Exit codes: 0 success, 1 input/validation error,
// 2 internal/numerical error. Diagnostics go to stderr; machine-readable
// output goes to declared files or stdout only.

#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "relens/attribution.hpp"
#include "relens/errors.hpp"
#include "relens/evaluation.hpp"
#include "relens/heatmap_io.hpp"
#include "relens/image.hpp"
#include "relens/model.hpp"
#include "relens/parallel.hpp"
#include "relens/render.hpp"
#include "relens/selection.hpp"
#include "relens/textfmt.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace relens;

namespace {

struct GlobalOpts {
    std::string threads = "1";
    std::uint64_t seed = 0;
};

RgbImage load_image_for_model(const std::string& path, const Model& model, bool resize) {
    RgbImage img = load_png_rgb(path);
    if (resize && (img.width != model.input_shape[2] || img.height != model.input_shape[1]))
        img = resize_bilinear(img, model.input_shape[2], model.input_shape[1]);
    return img;
}

std::string file_stem(const std::string& path) { return fs::path(path).stem().string(); }

int parse_target(const std::string& spec, const Model& model, const Tensor& input) {
    if (spec == "argmax") return classify(model, input).predicted_class;
    int target = 0;
    try {
        target = std::stoi(spec);
    } catch (const std::exception&) {
        throw InputError("--target must be \"argmax\" or a class index, got \"" + spec + "\"");
    }
    if (target < 0 || target >= model.class_count())
        throw InputError("--target " + std::to_string(target) + " out of range [0," +
                         std::to_string(model.class_count()) + ")");
    return target;
}

AttributionMethod resolve_method(const std::string& name, double epsilon) {
    auto method = attribution_method_from_name(name);
    if (!method) throw InputError("unknown attribution method \"" + name + "\"");
    if (method->kind == AttributionMethod::Kind::LrpEpsilon) {
        if (!(epsilon > 0.0)) throw InputError("--epsilon must be > 0");
        method->epsilon = epsilon;
    }
    return *method;
}

SelectionConfig resolve_selection(const std::string& name, int clusters,
                                  const std::string& bandwidth, std::uint64_t seed) {
    auto method = selection_method_from_name(name);
    if (!method) throw InputError("unknown selection method \"" + name + "\"");
    if (clusters < 1) throw InputError("--clusters must be >= 1");
    SelectionConfig config;
    config.method = *method;
    config.bins = clusters;
    config.kmeans_k = clusters;
    config.kmeans_seed = seed;
    config.meanshift_top = clusters;
    if (bandwidth != "auto") {
        double bw = 0.0;
        try {
            bw = std::stod(bandwidth);
        } catch (const std::exception&) {
            throw InputError("--bandwidth must be \"auto\" or a positive number");
        }
        if (!(bw > 0.0)) throw InputError("--bandwidth must be > 0");
        config.meanshift_bandwidth = bw;
    }
    return config;
}

void cmd_model_info(const std::string& model_path) {
    const Model model = load_model(model_path);
    std::cout << "RLNS model: " << model_path << "\n";
    std::cout << "input: " << model.input_shape[0] << "x" << model.input_shape[1] << "x"
              << model.input_shape[2] << " (channels x height x width)\n";
    std::cout << "classes:";
    for (const std::string& label : model.class_labels) std::cout << " " << label;
    std::cout << "\npreprocessing mean:";
    for (double v : model.preprocessing.mean) std::cout << " " << format_double(v);
    std::cout << "\npreprocessing scale:";
    for (double v : model.preprocessing.scale) std::cout << " " << format_double(v);
    std::cout << "\n\nidx  kind       params                           output\n";
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        const Layer& layer = model.layers[i];
        std::string params;
        if (const auto* conv = std::get_if<Conv2DLayer>(&layer)) {
            params = "out=" + std::to_string(conv->out_channels) + " kernel=" +
                     std::to_string(conv->kernel_h) + "x" + std::to_string(conv->kernel_w) +
                     " stride=" + std::to_string(conv->stride) +
                     (conv->padding == Padding::Same ? " same" : " valid");
        } else if (const auto* pool = std::get_if<MaxPool2DLayer>(&layer)) {
            params = "window=" + std::to_string(pool->window_h) + "x" +
                     std::to_string(pool->window_w) + " stride=" + std::to_string(pool->stride);
        } else if (const auto* dense = std::get_if<DenseLayer>(&layer)) {
            params = "out=" + std::to_string(dense->out_features);
        }
        std::string out_shape;
        for (std::size_t d = 0; d < model.output_shapes[i].size(); ++d) {
            if (d) out_shape += "x";
            out_shape += std::to_string(model.output_shapes[i][d]);
        }
        std::printf("%-4zu %-10s %-32s %s\n", i, layer_kind_name(layer), params.c_str(),
                    out_shape.c_str());
    }
    std::cout << "\nparameters: " << model.parameter_count() << "\n";
}

void cmd_classify(const std::string& model_path, const std::string& image_path, bool resize) {
    const Model model = load_model(model_path);
    const RgbImage img = load_image_for_model(image_path, model, resize);
    const Classification result = classify(model, to_tensor(img, model));
    json out;
    out["predicted_class"] = result.predicted_class;
    out["predicted_label"] = model.class_labels[static_cast<std::size_t>(result.predicted_class)];
    out["logits"] = result.logits.data;
    std::cout << out.dump(2) << "\n";
}

void cmd_attribute(const std::string& model_path, const std::string& image_path,
                   const std::string& method_name, double epsilon, const std::string& target_spec,
                   const std::string& out_path, bool resize) {
    const Model model = load_model(model_path);
    const RgbImage img = load_image_for_model(image_path, model, resize);
    const Tensor input = to_tensor(img, model);
    const AttributionMethod method = resolve_method(method_name, epsilon);
    const int target = parse_target(target_spec, model, input);
    Heatmap h = attribute(model, input, target, method);
    h.image_id = file_stem(image_path);
    write_heatmap_pgm(out_path, h);
}

void cmd_select(const std::string& heatmap_path, const std::string& method_name, int clusters,
                const std::string& bandwidth, std::uint64_t seed, const std::string& out_path) {
    Heatmap h = read_heatmap_pgm(heatmap_path);
    if (h.image_id.empty()) h.image_id = file_stem(heatmap_path);
    const SelectionConfig config = resolve_selection(method_name, clusters, bandwidth, seed);
    std::vector<std::string> warnings;
    const ClusterSelection sel = select(h, config, &warnings);
    for (const std::string& w : warnings) std::cerr << "warning: " << w << "\n";
    write_selection_json(out_path, sel);
}

void cmd_erase(const std::string& model_path, const std::string& image_path,
               const std::string& selection_path, int steps, const std::string& mode_name,
               const std::string& out_dir, bool resize) {
    if (steps < 0) throw InputError("--steps must be >= 0");
    const OcclusionMode mode =
        mode_name == "square" ? OcclusionMode::Square : OcclusionMode::Mask;
    if (mode_name != "mask" && mode_name != "square")
        throw InputError("--mode must be mask or square");

    const Model model = load_model(model_path);
    const RgbImage img = load_image_for_model(image_path, model, resize);
    const ClusterSelection sel = read_selection_json(selection_path);
    const Tensor raw = image_to_raw(img, model.input_shape[0]);

    fs::create_directories(out_dir);
    const int depth = std::min(steps, static_cast<int>(sel.clusters.size()));

    const std::vector<RgbImage> frames = render_occlusion_series(img, sel, depth, mode);
    for (int t = 1; t <= depth; ++t) {
        char name[32];
        std::snprintf(name, sizeof(name), "step_%02d.png", t);
        write_png_rgb(fs::path(out_dir) / name, frames[static_cast<std::size_t>(t - 1)]);
    }

    // Per-step classification of the occluded input, target fixed at the
    // clean argmax.
    const Classification clean = classify(model, preprocess(model, raw));
    const int target = clean.predicted_class;
    const std::string image_id = file_stem(image_path);

    std::string csv = "image_id,step,target_logit,predicted_class\n";
    csv += image_id + ",0," + format_double(clean.logits[target]) + "," +
           std::to_string(clean.predicted_class) + "\n";
    std::vector<std::int64_t> cumulative;
    for (int t = 1; t <= depth; ++t) {
        const Cluster& cluster = sel.clusters[static_cast<std::size_t>(t - 1)];
        cumulative.insert(cumulative.end(), cluster.pixels.begin(), cluster.pixels.end());
        const Classification c = classify(model, preprocess(model, occlude(raw, cumulative, mode)));
        csv += image_id + "," + std::to_string(t) + "," + format_double(c.logits[target]) + "," +
               std::to_string(c.predicted_class) + "\n";
    }
    write_text_file(fs::path(out_dir) / "steps.csv", csv);
}

void cmd_evaluate(const std::string& model_path, const std::string& manifest_path,
                  const std::string& method_name, const std::string& select_name, int steps,
                  const std::string& mode_name, int clusters, const std::string& bandwidth,
                  double epsilon, const std::string& out_dir, const GlobalOpts& global) {
    if (steps < 0) throw InputError("--steps must be >= 0");
    if (mode_name != "mask" && mode_name != "square")
        throw InputError("--mode must be mask or square");
    const OcclusionMode mode =
        mode_name == "square" ? OcclusionMode::Square : OcclusionMode::Mask;
    const int threads = resolve_thread_count(global.threads);

    const Model model = load_model(model_path);
    const std::vector<ManifestRow> rows = load_manifest(manifest_path);
    if (rows.empty()) throw InputError("manifest lists no images");

    const fs::path manifest_dir = fs::path(manifest_path).parent_path();
    std::vector<DatasetItem> dataset;
    dataset.reserve(rows.size());
    for (const ManifestRow& row : rows) {
        fs::path img_path = row.path;
        if (img_path.is_relative()) img_path = manifest_dir / img_path;
        const RgbImage img = load_png_rgb(img_path);
        if (img.width != model.input_shape[2] || img.height != model.input_shape[1])
            throw InputError("image \"" + row.image_id + "\" is " + std::to_string(img.width) + "x" +
                             std::to_string(img.height) + " but the model expects " +
                             std::to_string(model.input_shape[2]) + "x" +
                             std::to_string(model.input_shape[1]));
        dataset.push_back({row.image_id, image_to_raw(img, model.input_shape[0]), row.label});
    }

    std::vector<AttributionMethod> methods;
    if (method_name == "all") {
        methods = {AttributionMethod::gradient(), AttributionMethod::lrp_z(),
                   AttributionMethod::lrp_epsilon(epsilon)};
    } else {
        methods = {resolve_method(method_name, epsilon)};
    }
    std::vector<std::string> selections;
    if (select_name == "all") {
        selections = {"bins", "kmeans", "meanshift"};
    } else {
        selections = {select_name};
    }

    fs::create_directories(out_dir);

    struct SummaryRow {
        std::string selection;
        std::string method;
        double mean_roc_auc = 0.0;
        double final_roc_auc = 0.0;
        double baseline_accuracy = 0.0;
        double final_accuracy = 0.0;
        int steps = 0;
    };
    std::vector<SummaryRow> summary;

    for (const std::string& sel_name : selections) {
        for (const AttributionMethod& method : methods) {
            const SelectionConfig config =
                resolve_selection(sel_name, clusters, bandwidth, global.seed);
            const ErasureCurve curve =
                erasure_curve(model, dataset, method, config, steps, mode, threads);
            const std::string base = method.name() + "_" + sel_name;
            write_text_file(fs::path(out_dir) / ("curve_" + base + ".csv"), curve_to_csv(curve));
            write_text_file(fs::path(out_dir) / ("detail_" + base + ".csv"), detail_to_csv(curve));

            SummaryRow row;
            row.selection = sel_name;
            row.method = method.name();
            row.steps = static_cast<int>(curve.steps.size()) - 1;
            row.baseline_accuracy = curve.steps.front().accuracy;
            row.final_accuracy = curve.steps.back().accuracy;
            row.final_roc_auc = curve.steps.back().roc_auc;
            if (row.steps > 0) {
                double sum = 0.0;
                for (std::size_t t = 1; t < curve.steps.size(); ++t) sum += curve.steps[t].roc_auc;
                row.mean_roc_auc = sum / row.steps;
            } else {
                row.mean_roc_auc = std::numeric_limits<double>::quiet_NaN();
            }
            summary.push_back(std::move(row));
        }
    }

    // Summary grid mirroring the selection x method comparison: one row per
    // selection, one column per method, cells hold the mean ROC-AUC over
    // erasure steps 1..T.
    std::string grid = "selection";
    for (const AttributionMethod& method : methods) grid += "," + method.name();
    grid += "\n";
    for (const std::string& sel_name : selections) {
        grid += sel_name;
        for (const AttributionMethod& method : methods) {
            for (const SummaryRow& row : summary) {
                if (row.selection == sel_name && row.method == method.name()) {
                    grid += "," + format_double(row.mean_roc_auc);
                    break;
                }
            }
        }
        grid += "\n";
    }
    write_text_file(fs::path(out_dir) / "summary.csv", grid);

    json jsummary;
    jsummary["steps"] = steps;
    jsummary["positive_class"] = positive_class_index(model);
    json pairs = json::array();
    for (const SummaryRow& row : summary) {
        json jp;
        jp["selection"] = row.selection;
        jp["method"] = row.method;
        jp["effective_steps"] = row.steps;
        jp["mean_roc_auc"] = row.mean_roc_auc;
        jp["final_roc_auc"] = row.final_roc_auc;
        jp["baseline_accuracy"] = row.baseline_accuracy;
        jp["final_accuracy"] = row.final_accuracy;
        pairs.push_back(std::move(jp));
    }
    jsummary["pairs"] = std::move(pairs);
    write_text_file(fs::path(out_dir) / "summary.json", jsummary.dump(2) + "\n");
}

void cmd_agreement(const std::string& selection_path, const std::string& mask_path,
                   const std::string& out_path) {
    const ClusterSelection sel = read_selection_json(selection_path);
    const AnnotationMask mask = load_annotation_mask(mask_path);
    std::vector<std::vector<std::int64_t>> cumulative_sets;
    std::vector<std::int64_t> cumulative;
    for (const Cluster& cluster : sel.clusters) {
        cumulative.insert(cumulative.end(), cluster.pixels.begin(), cluster.pixels.end());
        cumulative_sets.push_back(cumulative);
    }
    const AgreementReport report = agreement(cumulative_sets, mask);
    write_text_file(out_path, agreement_to_json(report));
}

void cmd_overlay(const std::string& image_path, const std::string& heatmap_path, double alpha,
                 const std::string& out_path) {
    const RgbImage base = load_png_rgb(image_path);
    const Heatmap h = read_heatmap_pgm(heatmap_path);
    write_png_rgb(out_path, overlay(base, h, alpha));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"relens: CNN attribution, cluster selection and occlusion-based evaluation"};
    app.require_subcommand(1);
    app.fallthrough(true);

    GlobalOpts global;
    app.add_option("--threads", global.threads, "Worker threads for dataset commands (N or auto)")
        ->envname("RELEVANCE_LENS_THREADS");
    app.add_option("--seed", global.seed, "Seed for seeded selection methods");

    std::function<void()> action;

    // model-info
    {
        auto* sub = app.add_subcommand("model-info", "Print layer table, parameters and classes");
        auto model_path = std::make_shared<std::string>();
        sub->add_option("model", *model_path, "RLNS model file")->required();
        sub->callback([&action, model_path] { action = [=] { cmd_model_info(*model_path); }; });
    }
    // classify
    {
        auto* sub = app.add_subcommand("classify", "Classify one image");
        struct O { std::string model, image; bool resize = false; };
        auto o = std::make_shared<O>();
        sub->add_option("--model", o->model)->required();
        sub->add_option("--image", o->image)->required();
        sub->add_flag("--resize", o->resize, "Bilinear-resize the image to the model input");
        sub->callback([&action, o] { action = [=] { cmd_classify(o->model, o->image, o->resize); }; });
    }
    // attribute
    {
        auto* sub = app.add_subcommand("attribute", "Compute a relevance heatmap");
        struct O {
            std::string model, image, method, target = "argmax", out;
            double epsilon = 0.01;
            bool resize = false;
        };
        auto o = std::make_shared<O>();
        sub->add_option("--model", o->model)->required();
        sub->add_option("--image", o->image)->required();
        sub->add_option("--method", o->method, "gradient, lrp-z or lrp-epsilon")->required();
        sub->add_option("--epsilon", o->epsilon, "LRP-epsilon stabilizer (default 0.01)");
        sub->add_option("--target", o->target, "argmax or a class index (default argmax)");
        sub->add_option("--out", o->out, "Output heatmap (16-bit PGM + JSON sidecar)")->required();
        sub->add_flag("--resize", o->resize);
        sub->callback([&action, o] {
            action = [=] {
                cmd_attribute(o->model, o->image, o->method, o->epsilon, o->target, o->out, o->resize);
            };
        });
    }
    // select
    {
        auto* sub = app.add_subcommand("select", "Group heatmap pixels into ranked clusters");
        struct O {
            std::string heatmap, method, bandwidth = "auto", out;
            int clusters = 10;
        };
        auto o = std::make_shared<O>();
        sub->add_option("--heatmap", o->heatmap, "Heatmap PGM")->required();
        sub->add_option("--method", o->method, "bins, kmeans or meanshift")->required();
        sub->add_option("--clusters", o->clusters, "Bin/cluster count (default 10)");
        sub->add_option("--bandwidth", o->bandwidth, "Mean-shift bandwidth or auto");
        sub->add_option("--out", o->out, "Output cluster JSON")->required();
        sub->callback([&action, o, &global] {
            action = [=, &global] {
                cmd_select(o->heatmap, o->method, o->clusters, o->bandwidth, global.seed, o->out);
            };
        });
    }
    // erase
    {
        auto* sub = app.add_subcommand("erase", "Write the cumulative occlusion series");
        struct O {
            std::string model, image, selection, mode = "mask", out_dir;
            int steps = 10;
            bool resize = false;
        };
        auto o = std::make_shared<O>();
        sub->add_option("--model", o->model)->required();
        sub->add_option("--image", o->image)->required();
        sub->add_option("--selection", o->selection, "Cluster JSON from `select`")->required();
        sub->add_option("--steps", o->steps, "Erasure steps (default 10)");
        sub->add_option("--mode", o->mode, "mask or square (default mask)");
        sub->add_option("--out-dir", o->out_dir)->required();
        sub->add_flag("--resize", o->resize);
        sub->callback([&action, o] {
            action = [=] {
                cmd_erase(o->model, o->image, o->selection, o->steps, o->mode, o->out_dir, o->resize);
            };
        });
    }
    // evaluate
    {
        auto* sub = app.add_subcommand("evaluate", "Erasure curves over a dataset manifest");
        struct O {
            std::string model, manifest, method, select, mode = "mask", bandwidth = "auto", out_dir;
            int steps = 10;
            int clusters = 10;
            double epsilon = 0.01;
        };
        auto o = std::make_shared<O>();
        sub->add_option("--model", o->model)->required();
        sub->add_option("--manifest", o->manifest, "Dataset CSV")->required();
        sub->add_option("--method", o->method, "gradient, lrp-z, lrp-epsilon or all")->required();
        sub->add_option("--select", o->select, "bins, kmeans, meanshift or all")->required();
        sub->add_option("--steps", o->steps, "Erasure steps (default 10)");
        sub->add_option("--mode", o->mode, "mask or square (default mask)");
        sub->add_option("--clusters", o->clusters, "Bin/cluster count (default 10)");
        sub->add_option("--bandwidth", o->bandwidth, "Mean-shift bandwidth or auto");
        sub->add_option("--epsilon", o->epsilon, "LRP-epsilon stabilizer (default 0.01)");
        sub->add_option("--out-dir", o->out_dir)->required();
        sub->callback([&action, o, &global] {
            action = [=, &global] {
                cmd_evaluate(o->model, o->manifest, o->method, o->select, o->steps, o->mode,
                             o->clusters, o->bandwidth, o->epsilon, o->out_dir, global);
            };
        });
    }
    // agreement
    {
        auto* sub = app.add_subcommand("agreement", "Overlap vs a pathologist annotation mask");
        struct O { std::string selection, mask, out; };
        auto o = std::make_shared<O>();
        sub->add_option("--selection", o->selection)->required();
        sub->add_option("--mask", o->mask, "8-bit grayscale PNG, values {0,1,2,3}")->required();
        sub->add_option("--out", o->out, "Output agreement JSON")->required();
        sub->callback([&action, o] {
            action = [=] { cmd_agreement(o->selection, o->mask, o->out); };
        });
    }
    // overlay
    {
        auto* sub = app.add_subcommand("overlay", "Blend a heatmap over an image");
        struct O {
            std::string image, heatmap, out;
            double alpha = 0.5;
        };
        auto o = std::make_shared<O>();
        sub->add_option("--image", o->image)->required();
        sub->add_option("--heatmap", o->heatmap)->required();
        sub->add_option("--alpha", o->alpha, "Blend strength in [0,1]")->required();
        sub->add_option("--out", o->out)->required();
        sub->callback([&action, o] {
            action = [=] { cmd_overlay(o->image, o->heatmap, o->alpha, o->out); };
        });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n";
        std::cerr << "Run 'relens --help' for usage.\n";
        return 1;
    }

    try {
        if (action) action();
    } catch (const NumericalError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const InputError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const FormatError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
