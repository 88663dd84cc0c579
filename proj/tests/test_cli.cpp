#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "relens/heatmap_io.hpp"
#include "relens/image.hpp"
#include "relens/model.hpp"
#include "relens/selection.hpp"
#include "relens/textfmt.hpp"
#include "support/builders.hpp"

using namespace relens;

namespace {

struct RunResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr
};

RunResult run_cli(const std::string& args, const std::filesystem::path& capture_dir) {
    const std::filesystem::path log = capture_dir / "cli_output.txt";
    const std::string cmd = std::string(RELENS_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
    const int status = std::system(cmd.c_str());
    RunResult result;
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    result.output = read_text_file(log);
    return result;
}

// 1-channel planted model plus a matching image on disk.
struct CliFixture {
    builders::TempDir tmp{"cli"};
    builders::PlantedModel planted = builders::make_planted_model(8, 8, 2, 2, 4, 4);
    std::filesystem::path model_path;
    std::filesystem::path image_path;

    CliFixture() {
        model_path = tmp.path() / "planted.rlns";
        save_model(model_path, planted.model);

        RgbImage img;
        img.width = 8;
        img.height = 8;
        img.pixels.assign(8 * 8 * 3, 30);
        for (std::int64_t p : planted.patch) {
            const int y = static_cast<int>(p / 8), x = static_cast<int>(p % 8);
            img.at(y, x, 0) = img.at(y, x, 1) = img.at(y, x, 2) = 255;
        }
        image_path = tmp.path() / "img.png";
        write_png_rgb(image_path, img);
    }
};

int count_lines(const std::string& text) {
    return static_cast<int>(std::count(text.begin(), text.end(), '\n'));
}

}  // namespace

TEST_CASE("model-info prints the layer table and exits 0") {
    CliFixture fx;
    const RunResult r = run_cli("model-info " + fx.model_path.string(), fx.tmp.path());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("dense") != std::string::npos);
    CHECK(r.output.find("benign") != std::string::npos);
    CHECK(r.output.find("parameters: 130") != std::string::npos);
}

TEST_CASE("unknown subcommands and missing files exit 1") {
    CliFixture fx;
    CHECK(run_cli("no-such-command", fx.tmp.path()).exit_code == 1);
    CHECK(run_cli("model-info /nonexistent/m.rlns", fx.tmp.path()).exit_code == 1);
    const RunResult r = run_cli("classify --model " + fx.model_path.string() + " --image /nope.png",
                                fx.tmp.path());
    CHECK(r.exit_code == 1);
}

TEST_CASE("classify reports the planted class as JSON") {
    CliFixture fx;
    const RunResult r = run_cli(
        "classify --model " + fx.model_path.string() + " --image " + fx.image_path.string(),
        fx.tmp.path());
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("\"predicted_class\": 1") != std::string::npos);
    CHECK(r.output.find("malignant") != std::string::npos);
}

TEST_CASE("attribute writes a heatmap with sidecar provenance") {
    CliFixture fx;
    const auto out = fx.tmp.path() / "h.pgm";
    const RunResult r = run_cli("attribute --model " + fx.model_path.string() + " --image " +
                                    fx.image_path.string() + " --method gradient --out " +
                                    out.string(),
                                fx.tmp.path());
    REQUIRE(r.exit_code == 0);
    const Heatmap h = read_heatmap_pgm(out);
    CHECK(h.method == "gradient");
    CHECK(h.target_class == 1);
    CHECK(h.image_id == "img");
    CHECK(h.width == 8);
    CHECK(h.height == 8);
}

TEST_CASE("attribute on a zero denominator suggests lrp-epsilon and exits 2") {
    builders::TempDir tmp("clizero");
    // x = (1,1) against weights (1,-1) puts z exactly at 0
    const Model model =
        builders::single_dense_model({1, 1, 2}, 2, {1.0, -1.0, 1.0, 1.0}, {0.0, 0.0});
    const auto model_path = tmp.path() / "zero.rlns";
    save_model(model_path, model);

    RgbImage img;
    img.width = 2;
    img.height = 1;
    img.pixels.assign(2 * 1 * 3, 255);
    const auto image_path = tmp.path() / "ones.png";
    write_png_rgb(image_path, img);

    const RunResult r = run_cli("attribute --model " + model_path.string() + " --image " +
                                    image_path.string() + " --method lrp-z --out " +
                                    (tmp.path() / "h.pgm").string(),
                                tmp.path());
    CHECK(r.exit_code == 2);
    CHECK(r.output.find("layer 1") != std::string::npos);
    CHECK(r.output.find("lrp-epsilon") != std::string::npos);

    const RunResult ok = run_cli("attribute --model " + model_path.string() + " --image " +
                                     image_path.string() + " --method lrp-epsilon --out " +
                                     (tmp.path() / "h2.pgm").string(),
                                 tmp.path());
    CHECK(ok.exit_code == 0);
}

TEST_CASE("select, erase and agreement chain through their file formats") {
    CliFixture fx;
    const auto heatmap_path = fx.tmp.path() / "h.pgm";
    REQUIRE(run_cli("attribute --model " + fx.model_path.string() + " --image " +
                        fx.image_path.string() + " --method gradient --out " + heatmap_path.string(),
                    fx.tmp.path())
                .exit_code == 0);

    const auto sel_path = fx.tmp.path() / "c.json";
    REQUIRE(run_cli("select --heatmap " + heatmap_path.string() +
                        " --method meanshift --out " + sel_path.string(),
                    fx.tmp.path())
                .exit_code == 0);
    const ClusterSelection sel = read_selection_json(sel_path);
    CHECK(sel.method == "meanshift");
    CHECK_FALSE(sel.clusters.empty());
    CHECK(sel.heatmap_id == "img");

    // explicit bandwidth is recorded in the params block
    const auto sel_bw_path = fx.tmp.path() / "c_bw.json";
    REQUIRE(run_cli("select --heatmap " + heatmap_path.string() +
                        " --method meanshift --bandwidth 0.2 --out " + sel_bw_path.string(),
                    fx.tmp.path())
                .exit_code == 0);
    CHECK(read_selection_json(sel_bw_path).config.meanshift_bandwidth.value() == 0.2);
    CHECK(run_cli("select --heatmap " + heatmap_path.string() +
                      " --method meanshift --bandwidth -1 --out " + sel_bw_path.string(),
                  fx.tmp.path())
              .exit_code == 1);

    const auto erase_dir = fx.tmp.path() / "erased";
    const RunResult er = run_cli("erase --model " + fx.model_path.string() + " --image " +
                                     fx.image_path.string() + " --selection " + sel_path.string() +
                                     " --steps 10 --out-dir " + erase_dir.string(),
                                 fx.tmp.path());
    REQUIRE(er.exit_code == 0);
    CHECK(std::filesystem::exists(erase_dir / "step_01.png"));
    CHECK(std::filesystem::exists(erase_dir / "steps.csv"));
    const std::string steps_csv = read_text_file(erase_dir / "steps.csv");
    CHECK(steps_csv.rfind("image_id,step,target_logit,predicted_class\n", 0) == 0);

    // mask equal to the patch marked red
    AnnotationMask mask;
    mask.width = 8;
    mask.height = 8;
    mask.levels.assign(64, 0);
    for (std::int64_t p : fx.planted.patch) mask.levels[static_cast<std::size_t>(p)] = 3;
    const auto mask_path = fx.tmp.path() / "mask.png";
    write_annotation_mask(mask_path, mask);

    const auto agree_path = fx.tmp.path() / "a.json";
    REQUIRE(run_cli("agreement --selection " + sel_path.string() + " --mask " + mask_path.string() +
                        " --out " + agree_path.string(),
                    fx.tmp.path())
                .exit_code == 0);
    const std::string agree = read_text_file(agree_path);
    CHECK(agree.find("weighted_agreement") != std::string::npos);
    CHECK(agree.find("iou_red") != std::string::npos);
}

TEST_CASE("overlay writes a blended PNG") {
    CliFixture fx;
    const auto heatmap_path = fx.tmp.path() / "h.pgm";
    REQUIRE(run_cli("attribute --model " + fx.model_path.string() + " --image " +
                        fx.image_path.string() + " --method lrp-epsilon --out " +
                        heatmap_path.string(),
                    fx.tmp.path())
                .exit_code == 0);
    const Heatmap h = read_heatmap_pgm(heatmap_path);
    CHECK(h.method == "lrp-epsilon");
    CHECK(h.epsilon.value() == 0.01);

    const auto out = fx.tmp.path() / "ov.png";
    const RunResult r = run_cli("overlay --image " + fx.image_path.string() + " --heatmap " +
                                    heatmap_path.string() + " --alpha 0.5 --out " + out.string(),
                                fx.tmp.path());
    CHECK(r.exit_code == 0);
    const RgbImage img = load_png_rgb(out);
    CHECK(img.width == 8);
    CHECK(img.height == 8);
}

namespace {

// Ten distinct positive weight levels make the gradient heatmap 10-modal, so
// mean-shift forms ten clusters and the curve reaches the full ten steps.
void write_ten_level_fixture(const std::filesystem::path& dir,
                             std::filesystem::path& model_path,
                             std::filesystem::path& manifest_path) {
    const int h = 10, w = 10;
    // class 0 gets small uniform weights (a zero row would zero out its
    // logit, which lrp-z rejects); class 1 carries the ten levels.
    std::vector<double> rows(static_cast<std::size_t>(2) * h * w, 0.05);
    for (int p = 0; p < h * w; ++p)
        rows[static_cast<std::size_t>(h * w + p)] = 1.0 + static_cast<double>(p / 10);
    Model model = builders::single_dense_model({1, h, w}, 2, rows, {0.0, 0.0});
    model.class_labels = {"benign", "malignant"};
    model_path = dir / "ten.rlns";
    save_model(model_path, model);

    std::mt19937_64 rng(2027);
    std::vector<ManifestRow> manifest;
    for (int i = 0; i < 4; ++i) {
        RgbImage img;
        img.width = w;
        img.height = h;
        img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
        for (auto& px : img.pixels) px = static_cast<std::uint8_t>(40 + rng() % 200);
        const std::string name = "img" + std::to_string(i) + ".png";
        write_png_rgb(dir / name, img);
        manifest.push_back({"img" + std::to_string(i), name, i % 2, 40, std::nullopt});
    }
    manifest_path = dir / "data.csv";
    write_manifest(manifest_path, manifest);
}

}  // namespace

TEST_CASE("evaluate emits a curve with baseline plus ten steps") {
    builders::TempDir tmp("clieval");
    std::filesystem::path model_path, manifest_path;
    write_ten_level_fixture(tmp.path(), model_path, manifest_path);

    const auto out_dir = tmp.path() / "out";
    const RunResult r = run_cli("evaluate --model " + model_path.string() + " --manifest " +
                                    manifest_path.string() +
                                    " --method gradient --select meanshift --steps 10 --out-dir " +
                                    out_dir.string(),
                                tmp.path());
    REQUIRE(r.exit_code == 0);

    const std::string curve = read_text_file(out_dir / "curve_gradient_meanshift.csv");
    CHECK(count_lines(curve) == 12);  // header + baseline + 10 steps
    CHECK(curve.rfind("step,clusters_erased,accuracy,roc_auc,mean_target_logit\n", 0) == 0);
    CHECK(std::filesystem::exists(out_dir / "detail_gradient_meanshift.csv"));
    CHECK(std::filesystem::exists(out_dir / "summary.csv"));
    CHECK(std::filesystem::exists(out_dir / "summary.json"));
}

TEST_CASE("evaluate with method and selection grids emits one curve per pair") {
    builders::TempDir tmp("clievalall");
    std::filesystem::path model_path, manifest_path;
    write_ten_level_fixture(tmp.path(), model_path, manifest_path);

    const auto out_dir = tmp.path() / "out";
    const RunResult r = run_cli("evaluate --model " + model_path.string() + " --manifest " +
                                    manifest_path.string() +
                                    " --method all --select all --steps 3 --out-dir " +
                                    out_dir.string(),
                                tmp.path());
    REQUIRE(r.exit_code == 0);
    for (const char* m : {"gradient", "lrp-z", "lrp-epsilon"})
        for (const char* s : {"bins", "kmeans", "meanshift"})
            CHECK(std::filesystem::exists(out_dir / ("curve_" + std::string(m) + "_" + s + ".csv")));

    const std::string summary = read_text_file(out_dir / "summary.csv");
    CHECK(summary.rfind("selection,gradient,lrp-z,lrp-epsilon\n", 0) == 0);
    CHECK(count_lines(summary) == 4);
}

TEST_CASE("thread count does not change evaluate output bytes") {
    builders::TempDir tmp("clidet");
    std::filesystem::path model_path, manifest_path;
    write_ten_level_fixture(tmp.path(), model_path, manifest_path);

    const auto out1 = tmp.path() / "out1";
    const auto out2 = tmp.path() / "out2";
    REQUIRE(run_cli("evaluate --model " + model_path.string() + " --manifest " +
                        manifest_path.string() +
                        " --method gradient --select kmeans --steps 5 --threads 1 --out-dir " +
                        out1.string(),
                    tmp.path())
                .exit_code == 0);
    REQUIRE(run_cli("evaluate --model " + model_path.string() + " --manifest " +
                        manifest_path.string() +
                        " --method gradient --select kmeans --steps 5 --threads 8 --out-dir " +
                        out2.string(),
                    tmp.path())
                .exit_code == 0);

    for (const auto& entry : std::filesystem::directory_iterator(out1)) {
        const auto other = out2 / entry.path().filename();
        REQUIRE(std::filesystem::exists(other));
        CHECK(read_binary_file(entry.path()) == read_binary_file(other));
    }
}

TEST_CASE("RELEVANCE_LENS_THREADS env var feeds the threads option") {
    builders::TempDir tmp("clienv");
    std::filesystem::path model_path, manifest_path;
    write_ten_level_fixture(tmp.path(), model_path, manifest_path);

    const auto out_env = tmp.path() / "out_env";
    const std::string cmd = "RELEVANCE_LENS_THREADS=4 " + std::string(RELENS_CLI_PATH) +
                            " evaluate --model " + model_path.string() + " --manifest " +
                            manifest_path.string() +
                            " --method gradient --select bins --steps 2 --out-dir " +
                            out_env.string() + " > /dev/null 2>&1";
    const int status = std::system(cmd.c_str());
    CHECK(WIFEXITED(status));
    CHECK(WEXITSTATUS(status) == 0);
    CHECK(std::filesystem::exists(out_env / "curve_gradient_bins.csv"));
}
