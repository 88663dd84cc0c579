#include <doctest.h>

#include <png.h>

#include <cmath>
#include <cstdio>
#include <numeric>

#include "relens/errors.hpp"
#include "relens/image.hpp"
#include "relens/textfmt.hpp"
#include "relens/render.hpp"
#include "support/builders.hpp"

using namespace relens;

namespace {

// Raw gray8 PNG writer so tests can produce masks our own writer refuses.
void write_gray8_png(const std::filesystem::path& path, int w, int h,
                     const std::vector<std::uint8_t>& samples) {
    std::FILE* fp = std::fopen(path.string().c_str(), "wb");
    REQUIRE(fp != nullptr);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png_create_info_struct(png);
    REQUIRE(setjmp(png_jmpbuf(png)) == 0);
    png_init_io(png, fp);
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_bytep> rows(static_cast<std::size_t>(h));
    for (int y = 0; y < h; ++y)
        rows[static_cast<std::size_t>(y)] =
            const_cast<png_bytep>(samples.data() + static_cast<std::size_t>(y) * w);
    png_write_image(png, rows.data());
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

RgbImage solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    RgbImage img;
    img.width = w;
    img.height = h;
    img.pixels.resize(static_cast<std::size_t>(w) * h * 3);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
            img.at(y, x, 0) = r;
            img.at(y, x, 1) = g;
            img.at(y, x, 2) = b;
        }
    return img;
}

double luminance(const RgbImage& img) {
    double sum = 0.0;
    for (std::uint8_t v : img.pixels) sum += v;
    return sum;
}

}  // namespace

TEST_CASE("png round-trip preserves pixel bytes") {
    builders::TempDir tmp("png");
    std::mt19937_64 rng(811);
    RgbImage img;
    img.width = 9;
    img.height = 7;
    img.pixels.resize(9 * 7 * 3);
    for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() % 256);

    const auto path = tmp.path() / "img.png";
    write_png_rgb(path, img);
    const RgbImage back = load_png_rgb(path);
    CHECK(back.width == img.width);
    CHECK(back.height == img.height);
    CHECK(back.pixels == img.pixels);

    CHECK_THROWS_AS(load_png_rgb(tmp.path() / "missing.png"), InputError);
}

TEST_CASE("image_to_raw scales 8-bit pixels into [0,1]") {
    const RgbImage white = solid(2, 2, 255, 255, 255);
    const Tensor t = image_to_raw(white, 3);
    CHECK(t.shape == std::vector<int>{3, 2, 2});
    for (double v : t.data) CHECK(v == 1.0);

    const RgbImage black = solid(2, 2, 0, 0, 0);
    for (double v : image_to_raw(black, 3).data) CHECK(v == 0.0);

    const RgbImage gray = solid(1, 1, 128, 128, 128);
    CHECK(image_to_raw(gray, 3)[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));
    CHECK(image_to_raw(gray, 1)[0] == doctest::Approx(128.0 / 255.0).epsilon(1e-15));

    CHECK_THROWS_AS(image_to_raw(gray, 2), InputError);
}

TEST_CASE("raw scaling inverts exactly for every 8-bit value") {
    RgbImage strip;
    strip.width = 256;
    strip.height = 1;
    strip.pixels.resize(256 * 3);
    for (int x = 0; x < 256; ++x)
        for (int c = 0; c < 3; ++c) strip.pixels[static_cast<std::size_t>(x * 3 + c)] = static_cast<std::uint8_t>(x);

    const Tensor raw3 = image_to_raw(strip, 3);
    for (int x = 0; x < 256; ++x)
        CHECK(std::lround(raw3.at(0, 0, x) * 255.0) == x);
    const Tensor raw1 = image_to_raw(strip, 1);
    for (int x = 0; x < 256; ++x)
        CHECK(std::lround(raw1.at(0, 0, x) * 255.0) == x);
}

TEST_CASE("to_tensor rejects mismatched dimensions without resize") {
    const Model model = builders::single_dense_model({1, 2, 2}, 2, {1, 0, 0, 0, 0, 0, 0, 1},
                                                     {0.0, 0.0});
    CHECK_THROWS_WITH_AS(to_tensor(solid(3, 3, 10, 10, 10), model), doctest::Contains("--resize"),
                         InputError);
    CHECK_NOTHROW(to_tensor(solid(2, 2, 10, 10, 10), model));
}

TEST_CASE("annotation masks enforce the level alphabet") {
    builders::TempDir tmp("mask");
    AnnotationMask mask;
    mask.width = 3;
    mask.height = 2;
    mask.levels = {0, 1, 2, 3, 0, 2};
    const auto path = tmp.path() / "mask.png";
    write_annotation_mask(path, mask);
    const AnnotationMask back = load_annotation_mask(path);
    CHECK(back.width == 3);
    CHECK(back.height == 2);
    CHECK(back.levels == mask.levels);

    AnnotationMask bad = mask;
    bad.levels[2] = 7;
    CHECK_THROWS_AS(write_annotation_mask(tmp.path() / "bad.png", bad), InputError);

    // a gray PNG with out-of-alphabet samples is rejected on load
    write_gray8_png(tmp.path() / "bad_levels.png", 2, 2, {0, 1, 9, 3});
    CHECK_THROWS_AS(load_annotation_mask(tmp.path() / "bad_levels.png"), InputError);

    // non-grayscale files are rejected outright
    write_png_rgb(tmp.path() / "rgb.png", solid(2, 2, 1, 1, 1));
    CHECK_THROWS_AS(load_annotation_mask(tmp.path() / "rgb.png"), InputError);
}

TEST_CASE("manifest parses, validates and round-trips") {
    builders::TempDir tmp("manifest");
    const auto path = tmp.path() / "data.csv";

    std::vector<ManifestRow> rows = {
        {"img_a", "a.png", 0, 40, std::nullopt},
        {"img_b", "b.png", 1, 400, std::string("b_mask.png")},
    };
    write_manifest(path, rows);
    const auto back = load_manifest(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].image_id == "img_a");
    CHECK(back[0].label == 0);
    CHECK(back[0].magnification == 40);
    CHECK_FALSE(back[0].annotation.has_value());
    CHECK(back[1].annotation.value() == "b_mask.png");

    write_text_file(path, "image_id,path,label,magnification\nx,a.png,0,55\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
    write_text_file(path, "image_id,path,label,magnification\nx,a.png,0,40\nx,b.png,1,40\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
    write_text_file(path, "wrong,header\n");
    CHECK_THROWS_AS(load_manifest(path), FormatError);
}

TEST_CASE("breakhis filenames parse into their fields") {
    const auto a = parse_breakhis_filename("SOB-M-DC-14-16716-40-01011");
    REQUIRE(a.has_value());
    CHECK(a->procedure == "SOB");
    CHECK(a->tumor_class == 'M');
    CHECK(a->subtype == "DC");
    CHECK(a->magnification == 40);
    CHECK(a->sequence == "01011");

    const auto b = parse_breakhis_filename("SOB-B-A-14-22549G-400-009.png");
    REQUIRE(b.has_value());
    CHECK(b->tumor_class == 'B');
    CHECK(b->slide_id == "22549G");
    CHECK(b->magnification == 400);

    const auto c = parse_breakhis_filename("SOB-M-DC-14-11520-100-019");
    REQUIRE(c.has_value());
    CHECK(c->magnification == 100);

    CHECK_FALSE(parse_breakhis_filename("SOB-X-DC-14-1-40-01").has_value());
    CHECK_FALSE(parse_breakhis_filename("random_name").has_value());
    CHECK_FALSE(parse_breakhis_filename("SOB-M-DC-14-1-41-01").has_value());
}

TEST_CASE("grayscale rendering quantizes with round-half-up") {
    Heatmap h;
    h.width = 3;
    h.height = 1;
    h.values = {0.0, 0.5, 1.0};
    const RgbImage img = render_heatmap(h, Palette::Grayscale);
    CHECK(img.at(0, 0, 0) == 0);
    CHECK(img.at(0, 1, 0) == 128);  // 127.5 rounds up
    CHECK(img.at(0, 1, 1) == 128);
    CHECK(img.at(0, 2, 0) == 255);
}

TEST_CASE("diverging palette endpoints are pure blue and pure red") {
    const auto& pal = diverging_palette();
    CHECK(pal[0] == std::array<std::uint8_t, 3>{0, 0, 255});
    CHECK(pal[255] == std::array<std::uint8_t, 3>{255, 0, 0});

    Heatmap h;
    h.width = 2;
    h.height = 1;
    h.values = {0.0, 1.0};
    const RgbImage img = render_heatmap(h, Palette::Diverging);
    CHECK(img.at(0, 0, 2) == 255);  // blue end
    CHECK(img.at(0, 1, 0) == 255);  // red end
    CHECK(img.at(0, 1, 2) == 0);
}

TEST_CASE("overlay with alpha 0 returns the base image bit-identically") {
    std::mt19937_64 rng(907);
    RgbImage base;
    base.width = 5;
    base.height = 4;
    base.pixels.resize(5 * 4 * 3);
    for (auto& p : base.pixels) p = static_cast<std::uint8_t>(rng() % 256);

    Heatmap h;
    h.width = 5;
    h.height = 4;
    h.values.assign(20, 0.0);
    for (double& v : h.values) v = builders::urand(rng);

    const RgbImage out = overlay(base, h, 0.0);
    CHECK(out.pixels == base.pixels);
}

TEST_CASE("overlay blends toward the palette color") {
    // alpha 0.5, v = 1 everywhere, white base, palette red -> (255,128,128)
    const RgbImage base = solid(2, 2, 255, 255, 255);
    Heatmap h;
    h.width = 2;
    h.height = 2;
    h.values.assign(4, 1.0);
    const RgbImage out = overlay(base, h, 0.5);
    CHECK(out.at(0, 0, 0) == 255);
    CHECK(out.at(0, 0, 1) == 128);
    CHECK(out.at(0, 0, 2) == 128);

    const RgbImage full = overlay(base, h, 1.0);
    CHECK(full.at(0, 0, 0) == 255);
    CHECK(full.at(0, 0, 1) == 0);
    CHECK(full.at(0, 0, 2) == 0);

    CHECK_THROWS_AS(overlay(solid(3, 3, 0, 0, 0), h, 0.5), InputError);
    CHECK_THROWS_AS(overlay(base, h, 1.5), InputError);
}

TEST_CASE("occlusion series accumulates and darkens monotonically") {
    const builders::PlantedModel planted = builders::make_planted_model(8, 8, 2, 2, 4, 4);
    Tensor raw({1, 8, 8}, 0.0);
    for (std::int64_t p : planted.patch) raw[p] = 1.0;

    const Tensor input = preprocess(planted.model, raw);
    const Heatmap map = normalize_heatmap(gradient_saliency(planted.model, input, 1));
    const ClusterSelection sel = select_meanshift(map, std::nullopt, 10);

    RgbImage img = solid(8, 8, 200, 200, 200);
    const auto frames = render_occlusion_series(img, sel, 10);
    REQUIRE(frames.size() == 10);

    double prev = luminance(img);
    for (const RgbImage& frame : frames) {
        const double lum = luminance(frame);
        CHECK(lum <= prev);
        prev = lum;
    }

    // every planted pixel is black by the final frame
    const RgbImage& last = frames.back();
    for (std::int64_t p : planted.patch) {
        const int y = static_cast<int>(p / 8), x = static_cast<int>(p % 8);
        CHECK(last.at(y, x, 0) == 0);
        CHECK(last.at(y, x, 1) == 0);
        CHECK(last.at(y, x, 2) == 0);
    }

    // cumulative: each frame's black set contains the previous one
    for (std::size_t t = 1; t < frames.size(); ++t) {
        for (int i = 0; i < 8 * 8; ++i) {
            const int y = i / 8, x = i % 8;
            if (frames[t - 1].at(y, x, 0) == 0 && frames[t - 1].at(y, x, 1) == 0 &&
                frames[t - 1].at(y, x, 2) == 0) {
                CHECK(frames[t].at(y, x, 0) == 0);
            }
        }
    }
}

TEST_CASE("square-mode series fills the growing bounding box") {
    ClusterSelection sel;
    sel.method = "bins";
    Cluster c1;
    c1.rank = 1;
    c1.mean_relevance = 1.0;
    c1.pixels = {5};  // (1,1) of a 4x4 image
    Cluster c2;
    c2.rank = 2;
    c2.mean_relevance = 0.5;
    c2.pixels = {10};  // (2,2)
    sel.clusters = {c1, c2};

    const RgbImage img = solid(4, 4, 100, 100, 100);
    const auto frames = render_occlusion_series(img, sel, 2, OcclusionMode::Square);
    REQUIRE(frames.size() == 2);
    CHECK(frames[0].at(1, 1, 0) == 0);
    CHECK(frames[0].at(2, 2, 0) == 100);  // not yet in the box
    // second frame: bbox of {(1,1),(2,2)} covers the 2x2 middle block
    CHECK(frames[1].at(1, 1, 0) == 0);
    CHECK(frames[1].at(1, 2, 0) == 0);
    CHECK(frames[1].at(2, 1, 0) == 0);
    CHECK(frames[1].at(2, 2, 0) == 0);
    CHECK(frames[1].at(0, 0, 0) == 100);
}

TEST_CASE("empty top cluster leaves the first frame untouched") {
    ClusterSelection sel;
    sel.method = "bins";
    Cluster empty_cluster;
    empty_cluster.rank = 1;
    empty_cluster.mean_relevance = 1.0;
    sel.clusters.push_back(empty_cluster);

    const RgbImage img = solid(3, 3, 77, 77, 77);
    const auto frames = render_occlusion_series(img, sel, 1);
    REQUIRE(frames.size() == 1);
    CHECK(frames[0].pixels == img.pixels);
}

TEST_CASE("bilinear resize hits exact dimensions and preserves constants") {
    const RgbImage base = solid(4, 3, 90, 120, 200);
    const RgbImage up = resize_bilinear(base, 9, 5);
    CHECK(up.width == 9);
    CHECK(up.height == 5);
    for (int y = 0; y < up.height; ++y)
        for (int x = 0; x < up.width; ++x) {
            CHECK(up.at(y, x, 0) == 90);
            CHECK(up.at(y, x, 1) == 120);
            CHECK(up.at(y, x, 2) == 200);
        }
}
