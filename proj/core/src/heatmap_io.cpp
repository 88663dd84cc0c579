#include "relens/heatmap_io.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "relens/errors.hpp"
#include "relens/textfmt.hpp"

namespace relens {

using json = nlohmann::json;

std::filesystem::path heatmap_sidecar_path(const std::filesystem::path& pgm_path) {
    std::filesystem::path p = pgm_path;
    p += ".json";
    return p;
}

void write_heatmap_pgm(const std::filesystem::path& path, const Heatmap& h) {
    if (h.width <= 0 || h.height <= 0 ||
        h.values.size() != static_cast<std::size_t>(h.width) * h.height)
        throw InputError("write_heatmap_pgm: malformed heatmap");

    double lo, hi;
    std::vector<double> normalized;
    const std::vector<double>* values = &h.values;
    if (h.norm_min && h.norm_max) {
        // Already normalized (attribution output after normalize_heatmap, or
        // a previous read); reuse the recorded range verbatim so a
        // write -> read -> write cycle is byte-identical.
        lo = *h.norm_min;
        hi = *h.norm_max;
        for (double v : h.values) {
            if (!(v >= 0.0 && v <= 1.0))
                throw InputError("write_heatmap_pgm: normalized heatmap has values outside [0,1]");
        }
    } else {
        lo = hi = h.values[0];
        for (double v : h.values) {
            if (!std::isfinite(v)) throw InputError("write_heatmap_pgm: non-finite heatmap value");
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        normalized.reserve(h.values.size());
        const double range = hi - lo;
        for (double v : h.values) normalized.push_back(range > 0.0 ? (v - lo) / range : 0.0);
        values = &normalized;
    }

    std::string header = "P5\n" + std::to_string(h.width) + " " + std::to_string(h.height) + "\n65535\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    bytes.reserve(bytes.size() + values->size() * 2);
    for (double v : *values) {
        const unsigned q = static_cast<unsigned>(std::lround(v * 65535.0));
        bytes.push_back(static_cast<std::uint8_t>(q >> 8));  // PGM samples are big-endian
        bytes.push_back(static_cast<std::uint8_t>(q & 0xff));
    }
    write_binary_file(path, bytes);

    json sidecar;
    sidecar["method"] = h.method;
    if (h.epsilon) sidecar["epsilon"] = *h.epsilon;
    sidecar["target_class"] = h.target_class;
    sidecar["image_id"] = h.image_id;
    sidecar["min"] = lo;
    sidecar["max"] = hi;
    write_text_file(heatmap_sidecar_path(path), sidecar.dump(2) + "\n");
}

namespace {

// Reads one whitespace-delimited PGM header token, skipping '#' comments.
std::string next_token(const std::vector<std::uint8_t>& bytes, std::size_t& pos) {
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == '#') {
            while (pos < bytes.size() && static_cast<char>(bytes[pos]) != '\n') ++pos;
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            ++pos;
        } else {
            break;
        }
    }
    std::string token;
    while (pos < bytes.size()) {
        const char c = static_cast<char>(bytes[pos]);
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') break;
        token.push_back(c);
        ++pos;
    }
    return token;
}

}  // namespace

Heatmap read_heatmap_pgm(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_binary_file(path);
    std::size_t pos = 0;
    if (next_token(bytes, pos) != "P5") throw FormatError("not a binary PGM (P5): " + path.string());
    int width = 0, height = 0;
    long maxval = 0;
    try {
        width = std::stoi(next_token(bytes, pos));
        height = std::stoi(next_token(bytes, pos));
        maxval = std::stol(next_token(bytes, pos));
    } catch (const std::exception&) {
        throw FormatError("unparseable PGM header: " + path.string());
    }
    if (width < 1 || height < 1) throw FormatError("PGM with empty dimensions: " + path.string());
    if (maxval != 65535)
        throw FormatError("heatmap PGM must use maxval 65535, got " + std::to_string(maxval));
    if (pos >= bytes.size() ||
        !(bytes[pos] == '\n' || bytes[pos] == ' ' || bytes[pos] == '\t' || bytes[pos] == '\r'))
        throw FormatError("PGM header not terminated by whitespace: " + path.string());
    ++pos;  // single whitespace byte separates header from samples

    const std::size_t count = static_cast<std::size_t>(width) * height;
    if (bytes.size() - pos != count * 2)
        throw FormatError("PGM sample data has wrong length: " + path.string());

    Heatmap h;
    h.width = width;
    h.height = height;
    h.values.resize(count);
    for (std::size_t i = 0; i < count; ++i) {
        const unsigned q = (static_cast<unsigned>(bytes[pos + i * 2]) << 8) |
                           static_cast<unsigned>(bytes[pos + i * 2 + 1]);
        h.values[i] = static_cast<double>(q) / 65535.0;
    }

    const std::filesystem::path sidecar_path = heatmap_sidecar_path(path);
    if (std::filesystem::exists(sidecar_path)) {
        json sidecar;
        try {
            sidecar = json::parse(read_text_file(sidecar_path));
        } catch (const json::parse_error& e) {
            throw FormatError("heatmap sidecar is not valid JSON: " + sidecar_path.string());
        }
        h.method = sidecar.value("method", std::string());
        if (sidecar.contains("epsilon")) h.epsilon = sidecar["epsilon"].get<double>();
        h.target_class = sidecar.value("target_class", -1);
        h.image_id = sidecar.value("image_id", std::string());
        if (sidecar.contains("min")) h.norm_min = sidecar["min"].get<double>();
        if (sidecar.contains("max")) h.norm_max = sidecar["max"].get<double>();
    } else {
        h.norm_min = 0.0;
        h.norm_max = 1.0;
    }
    return h;
}

}  // namespace relens
