#include "c4av/synthetic.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

#include "c4av/geometry.hpp"
#include "c4av/image.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace c4av {

bool SyntheticConfig::valid() const {
    return num_images > 0 && image_size > 0 && shapes_min > 0 && shapes_max >= shapes_min &&
           !colors.empty() && !shapes.empty() && proposal_jitter >= 0.0 &&
           proposal_jitter <= 0.5 && distractor_proposals >= 0;
}

namespace {

struct Rgb {
    float r, g, b;
};

Rgb color_rgb(const std::string& name) {
    if (name == "red") return {0.86f, 0.16f, 0.16f};
    if (name == "green") return {0.16f, 0.67f, 0.24f};
    if (name == "blue") return {0.20f, 0.31f, 0.86f};
    if (name == "yellow") return {0.90f, 0.82f, 0.16f};
    if (name == "magenta") return {0.78f, 0.24f, 0.78f};
    if (name == "cyan") return {0.24f, 0.78f, 0.78f};
    if (name == "orange") return {0.94f, 0.55f, 0.16f};
    if (name == "purple") return {0.51f, 0.24f, 0.71f};
    if (name == "pink") return {0.94f, 0.60f, 0.71f};
    if (name == "teal") return {0.16f, 0.51f, 0.51f};
    if (name == "olive") return {0.55f, 0.55f, 0.16f};
    if (name == "navy") return {0.12f, 0.16f, 0.47f};
    if (name == "maroon") return {0.55f, 0.12f, 0.16f};
    if (name == "lime") return {0.62f, 0.94f, 0.24f};
    if (name == "brown") return {0.55f, 0.35f, 0.16f};
    if (name == "gray") return {0.35f, 0.35f, 0.35f};
    throw std::runtime_error("unknown color name: " + name);
}

struct ShapeInstance {
    Box box;
    std::string color;
    std::string shape;
};

bool inside_shape(const std::string& shape, const Box& b, double px, double py) {
    if (shape == "square") return true;
    double cx = b.x + b.w / 2.0, cy = b.y + b.h / 2.0;
    if (shape == "circle") {
        double nx = (px - cx) / (b.w / 2.0), ny = (py - cy) / (b.h / 2.0);
        return nx * nx + ny * ny <= 1.0;
    }
    if (shape == "triangle") {
        // apex at top center, base along the bottom edge
        double t = (py - b.y) / b.h;  // 0 at apex row, 1 at base
        if (t < 0.0 || t > 1.0) return false;
        return std::fabs(px - cx) <= t * b.w / 2.0;
    }
    throw std::runtime_error("unknown shape name: " + shape);
}

void draw_shape(ImageBuffer& img, const ShapeInstance& s) {
    Rgb c = color_rgb(s.color);
    int x0 = std::max(0, static_cast<int>(std::floor(s.box.x)));
    int y0 = std::max(0, static_cast<int>(std::floor(s.box.y)));
    int x1 = std::min(img.width, static_cast<int>(std::ceil(s.box.x2())));
    int y1 = std::min(img.height, static_cast<int>(std::ceil(s.box.y2())));
    for (int y = y0; y < y1; ++y)
        for (int x = x0; x < x1; ++x)
            if (inside_shape(s.shape, s.box, x + 0.5, y + 0.5)) {
                std::size_t o = (static_cast<std::size_t>(y) * img.width + x) * 3;
                img.rgb[o + 0] = c.r;
                img.rgb[o + 1] = c.g;
                img.rgb[o + 2] = c.b;
            }
}

const std::array<const char*, 5> kVerbPhrases = {
    "stop next to", "park near", "drive towards", "pull up beside", "wait behind"};

double round3(double v) { return std::round(v * 1000.0) / 1000.0; }

json box_json(const Box& b) {
    return json::array({round3(b.x), round3(b.y), round3(b.w), round3(b.h)});
}

void generate_split(const SyntheticConfig& cfg, const fs::path& dir, int count, int id_offset,
                    std::mt19937& rng) {
    fs::create_directories(dir / "images");
    json jimages = json::array();
    json jcommands = json::array();
    json jproposals = json::object();
    const bool with_gt = dir.filename() != "test";
    const double S = cfg.image_size;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int n = 0; n < count; ++n) {
        char id[32];
        std::snprintf(id, sizeof(id), "img_%06d", id_offset + n);
        char cmd_id[32];
        std::snprintf(cmd_id, sizeof(cmd_id), "cmd_%06d", id_offset + n);
        std::string file = std::string(id) + ".png";

        ImageBuffer img;
        img.width = cfg.image_size;
        img.height = cfg.image_size;
        img.rgb.assign(static_cast<std::size_t>(cfg.image_size) * cfg.image_size * 3, 0.82f);

        int num_shapes =
            cfg.shapes_min + static_cast<int>(unit(rng) * (cfg.shapes_max - cfg.shapes_min + 1));
        num_shapes = std::min(num_shapes, cfg.shapes_max);
        num_shapes = std::min<int>(num_shapes, static_cast<int>(cfg.colors.size()));

        // distinct colors per image so color+shape is unambiguous
        std::vector<std::string> colors = cfg.colors;
        std::shuffle(colors.begin(), colors.end(), rng);

        std::vector<ShapeInstance> shapes;
        for (int si = 0; si < num_shapes; ++si) {
            for (int attempt = 0; attempt < 200; ++attempt) {
                double side = (0.18 + 0.14 * unit(rng)) * S;
                Box b{unit(rng) * (S - side), unit(rng) * (S - side), side, side};
                bool overlaps = false;
                for (const auto& other : shapes)
                    if (iou(b, other.box) > 0.0) overlaps = true;
                if (overlaps) continue;
                shapes.push_back({b, colors[si], cfg.shapes[static_cast<std::size_t>(
                                                     unit(rng) * cfg.shapes.size()) %
                                                 cfg.shapes.size()]});
                break;
            }
        }
        if (shapes.empty())
            throw std::runtime_error("failed to place any shape (image too small?)");

        // Decoys are extra shapes drawn in the palette colors this image's
        // shapes do not use: every proposal crop then contains a colored
        // shape, so an untrained ranker has no structural reason to prefer
        // the named shapes, and shape alone does not separate the target
        // from the decoys. The command's color+shape pair stays unique.
        std::vector<std::string> unused_colors(colors.begin() + num_shapes, colors.end());
        std::shuffle(unused_colors.begin(), unused_colors.end(), rng);
        std::vector<ShapeInstance> decoys;
        for (int d = 0; d < cfg.distractor_proposals && !unused_colors.empty(); ++d) {
            for (int attempt = 0; attempt < 200; ++attempt) {
                double side = (0.12 + 0.18 * unit(rng)) * S;
                Box b{unit(rng) * (S - side), unit(rng) * (S - side), side, side};
                bool overlaps = false;
                for (const auto& other : shapes)
                    if (iou(b, other.box) > 0.0) overlaps = true;
                for (const auto& other : decoys)
                    if (iou(b, other.box) > 0.0) overlaps = true;
                if (overlaps) continue;
                decoys.push_back(
                    {b, unused_colors[static_cast<std::size_t>(d) % unused_colors.size()],
                     cfg.shapes[static_cast<std::size_t>(unit(rng) * cfg.shapes.size()) %
                                cfg.shapes.size()]});
                break;
            }
        }
        for (const auto& d : decoys) draw_shape(img, d);
        for (const auto& s : shapes) draw_shape(img, s);
        save_image((dir / "images" / file).string(), img);

        int target = static_cast<int>(unit(rng) * shapes.size()) % static_cast<int>(shapes.size());
        const ShapeInstance& t = shapes[target];
        std::string text = std::string(kVerbPhrases[static_cast<std::size_t>(unit(rng) *
                                                                             kVerbPhrases.size()) %
                                                    kVerbPhrases.size()]) +
                           " the " + t.color + " " + t.shape;

        json props = json::array();
        std::uniform_real_distribution<double> jit(-cfg.proposal_jitter, cfg.proposal_jitter);
        for (const auto& s : shapes) {
            Box b = s.box;
            Box jb{b.x + jit(rng) * b.w, b.y + jit(rng) * b.h, b.w * (1.0 + jit(rng)),
                   b.h * (1.0 + jit(rng))};
            jb = jb.clamped(S, S);
            props.push_back({{"box", box_json(jb)}, {"score", round3(0.5 + 0.5 * unit(rng))}});
        }
        for (const auto& d : decoys) {
            const Box& db = d.box;
            Box jb{db.x + jit(rng) * db.w, db.y + jit(rng) * db.h, db.w * (1.0 + jit(rng)),
                   db.h * (1.0 + jit(rng))};
            jb = jb.clamped(S, S);
            props.push_back({{"box", box_json(jb)}, {"score", round3(0.05 + 0.9 * unit(rng))}});
        }

        jimages.push_back(
            {{"id", id}, {"file", file}, {"width", cfg.image_size}, {"height", cfg.image_size}});
        json jc = {{"id", cmd_id}, {"image_id", id}, {"text", text}};
        if (with_gt) jc["gt_box"] = box_json(t.box);
        jcommands.push_back(jc);
        jproposals[id] = props;
    }

    auto dump = [&](const char* name, const json& j) {
        std::ofstream out(dir / name, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write " + (dir / name).string());
        out << j.dump(2) << "\n";
    };
    dump("images.json", jimages);
    dump("commands.json", jcommands);
    dump("proposals.json", jproposals);
}

}  // namespace

SyntheticSummary generate_synthetic(const SyntheticConfig& config, const std::string& out) {
    if (!config.valid()) throw std::runtime_error("invalid synthetic dataset config");
    fs::path root(out);
    std::error_code ec;
    fs::create_directories(root, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + root.string());

    SyntheticSummary sum;
    int tenth = std::max(config.num_images >= 10 ? config.num_images / 10 : 1, 1);
    sum.val_images = config.val_count > 0 ? config.val_count : tenth;
    sum.test_images = config.test_count > 0 ? config.test_count : tenth;
    sum.train_images = config.num_images - sum.val_images - sum.test_images;
    if (sum.train_images < 1)
        throw std::runtime_error("num_images too small to form train/val/test splits");

    std::mt19937 rng(config.seed);
    generate_split(config, root / "train", sum.train_images, 0, rng);
    generate_split(config, root / "val", sum.val_images, sum.train_images, rng);
    generate_split(config, root / "test", sum.test_images, sum.train_images + sum.val_images, rng);
    return sum;
}

}  // namespace c4av
