#include "fpm/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <stdexcept>

#include "json.hpp"

#include "fpm/io.hpp"
#include "fpm/rng.hpp"

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace fpm {

namespace {

void check_bbox(const RealImage& img, const BBox& b) {
    if (b.w <= 0 || b.h <= 0 || b.x < 0 || b.y < 0 || b.x + b.w > img.width ||
        b.y + b.h > img.height)
        throw std::invalid_argument("bbox out of bounds");
}

bool inside_any(const std::vector<BBox>& boxes, int r, int c) {
    for (const BBox& b : boxes)
        if (c >= b.x && c < b.x + b.w && r >= b.y && r < b.y + b.h) return true;
    return false;
}

bool intersects(const BBox& a, const BBox& b) {
    return a.x < b.x + b.w && b.x < a.x + a.w && a.y < b.y + b.h && b.y < a.y + a.h;
}

}  // namespace

RealImage apply_transform(const RealImage& patch, Rotation rot, Flip flip) {
    const int h = patch.height, w = patch.width;
    RealImage rotated;
    switch (rot) {
        case Rotation::R0:
            rotated = patch;
            break;
        case Rotation::R90:
            rotated = RealImage(w, h);
            for (int r = 0; r < w; ++r)
                for (int c = 0; c < h; ++c) rotated.at(r, c) = patch.at(h - 1 - c, r);
            break;
        case Rotation::R180:
            rotated = RealImage(h, w);
            for (int r = 0; r < h; ++r)
                for (int c = 0; c < w; ++c) rotated.at(r, c) = patch.at(h - 1 - r, w - 1 - c);
            break;
        case Rotation::R270:
            rotated = RealImage(w, h);
            for (int r = 0; r < w; ++r)
                for (int c = 0; c < h; ++c) rotated.at(r, c) = patch.at(c, w - 1 - r);
            break;
    }
    if (flip == Flip::None) return rotated;
    RealImage out(rotated.height, rotated.width);
    for (int r = 0; r < out.height; ++r)
        for (int c = 0; c < out.width; ++c)
            out.at(r, c) = flip == Flip::Horizontal ? rotated.at(r, out.width - 1 - c)
                                                    : rotated.at(out.height - 1 - r, c);
    return out;
}

RealImage extract_background(const RealImage& gt, const std::vector<BBox>& bboxes) {
    for (const BBox& b : bboxes) check_bbox(gt, b);
    RealImage out = gt;
    for (const BBox& b : bboxes) {
        std::vector<double> ring;
        for (int r = std::max(0, b.y - 2); r < std::min(gt.height, b.y + b.h + 2); ++r)
            for (int c = std::max(0, b.x - 2); c < std::min(gt.width, b.x + b.w + 2); ++c)
                if (!inside_any(bboxes, r, c)) ring.push_back(gt.at(r, c));
        if (ring.empty())
            throw std::invalid_argument("extract_background: bbox ring has no pixels");
        size_t mid = (ring.size() - 1) / 2;  // lower median
        std::nth_element(ring.begin(), ring.begin() + mid, ring.end());
        double fill = ring[mid];
        for (int r = b.y; r < b.y + b.h; ++r)
            for (int c = b.x; c < b.x + b.w; ++c) out.at(r, c) = fill;
    }
    return out;
}

std::vector<RoiSpec> extract_rois(const RealImage& gt, const std::vector<BBox>& bboxes) {
    std::vector<RoiSpec> rois;
    rois.reserve(bboxes.size());
    for (const BBox& b : bboxes) {
        check_bbox(gt, b);
        RoiSpec roi;
        roi.patch = RealImage(b.h, b.w);
        for (int r = 0; r < b.h; ++r)
            for (int c = 0; c < b.w; ++c) roi.patch.at(r, c) = gt.at(b.y + r, b.x + c);
        roi.origin = b;
        roi.paste_x = b.x;
        roi.paste_y = b.y;
        rois.push_back(std::move(roi));
    }
    return rois;
}

RealImage composite(const RealImage& background, const std::vector<RoiSpec>& rois) {
    RealImage out = background;
    for (const RoiSpec& roi : rois) {
        RealImage t = apply_transform(roi.patch, roi.rotation, roi.flip);
        if (roi.paste_x < 0 || roi.paste_y < 0 || roi.paste_x + t.width > out.width ||
            roi.paste_y + t.height > out.height)
            throw std::invalid_argument("composite: transformed ROI does not fit at paste position");
        for (int r = 0; r < t.height; ++r)
            for (int c = 0; c < t.width; ++c) out.at(roi.paste_y + r, roi.paste_x + c) = t.at(r, c);
    }
    return out;
}

Complexity classify_complexity(int roi_count, int simple_threshold) {
    return roi_count <= simple_threshold ? Complexity::Simple : Complexity::Complex;
}

Phantom usaf_phantom(int n) {
    if (n < 48) throw std::invalid_argument("usaf_phantom: need n >= 48");
    const double bg = 0.9, bar = 0.15;
    Phantom ph;
    ph.amplitude = RealImage(n, n, bg);
    ph.blank = BBox{n - n / 5 - 2, n - n / 9 - 2, n / 5, n / 9};

    const int m = n / 16;
    const int origins[4][2] = {{m, m}, {n / 2 + m, m}, {m, n / 2 + m}, {n / 2 + m, n / 2 + m}};
    const int widths[4] = {n / 24, n / 32, n / 48, n / 64};

    for (int k = 0; k < 4; ++k) {
        int w = widths[k];
        if (w < 2) continue;
        BBox group{origins[k][0], origins[k][1], 5 * w, 11 * w};
        if (group.x + group.w > n || group.y + group.h > n) continue;
        if (intersects(group, ph.blank)) continue;
        for (int j = 0; j < 3; ++j) {
            // vertical triplet
            for (int r = group.y; r < group.y + 5 * w; ++r)
                for (int c = group.x + 2 * j * w; c < group.x + 2 * j * w + w; ++c)
                    ph.amplitude.at(r, c) = bar;
            // horizontal triplet below it
            for (int r = group.y + 6 * w + 2 * j * w; r < group.y + 6 * w + 2 * j * w + w; ++r)
                for (int c = group.x; c < group.x + 5 * w; ++c) ph.amplitude.at(r, c) = bar;
        }
        ph.rois.push_back(group);
    }
    if (ph.rois.empty()) throw std::invalid_argument("usaf_phantom: no bar group fits");
    return ph;
}

AugmentedScene augment_scene(const SourceImage& source, Rng& rng) {
    RealImage background = extract_background(source.gt, source.rois);
    std::vector<RoiSpec> inventory = extract_rois(source.gt, source.rois);

    int k = 0;
    std::vector<RoiSpec> placed;
    if (!inventory.empty()) {
        k = 1 + static_cast<int>(rng.below(2 * inventory.size()));
        for (int j = 0; j < k; ++j) {
            RoiSpec roi = inventory[rng.below(inventory.size())];
            roi.rotation = static_cast<Rotation>(rng.below(4));
            roi.flip = static_cast<Flip>(rng.below(3));
            RealImage t = apply_transform(roi.patch, roi.rotation, roi.flip);
            roi.paste_x = static_cast<int>(rng.below(background.width - t.width + 1));
            roi.paste_y = static_cast<int>(rng.below(background.height - t.height + 1));
            placed.push_back(std::move(roi));
        }
    }
    return AugmentedScene{composite(background, placed), k};
}

Dataset generate_dataset(const std::vector<SourceImage>& variants, const OpticalConfig& cfg,
                         const std::vector<IlluminationPattern>& patterns, int count,
                         uint64_t seed) {
    if (count < 1) throw std::invalid_argument("generate_dataset: count must be >= 1");
    if (variants.empty()) throw std::invalid_argument("generate_dataset: no source variants");
    cfg.validate();

    Dataset ds;
    ds.samples.resize(count);
    ds.split.resize(count);
    const int n_train = count * 4 / 6;
    const int n_val = count / 6;

    for (int i = 0; i < count; ++i) {
        Rng rng = Rng(seed).fork(static_cast<uint64_t>(i));
        const SourceImage& var = variants[static_cast<size_t>(i) % variants.size()];
        AugmentedScene aug = augment_scene(var, rng);
        RealImage& scene = aug.scene;

        DatasetSample& s = ds.samples[i];
        s.roi_count = aug.roi_count;
        s.label = classify_complexity(aug.roi_count);
        s.seed = static_cast<uint64_t>(i);
        s.target = ComplexImage(scene.height, scene.width);
        for (size_t p = 0; p < scene.size(); ++p) s.target.data[p] = {scene.data[p], 0.0};
        s.stack = simulate_capture(s.target, cfg, patterns);

        ds.split[i] = i < n_train ? Split::Train : (i < n_train + n_val ? Split::Val : Split::Test);
    }
    return ds;
}

namespace {

const char* split_dir(Split s) {
    switch (s) {
        case Split::Train: return "train";
        case Split::Val: return "val";
        default: return "test";
    }
}

}  // namespace

void save_dataset(const std::string& dir, const Dataset& ds) {
    if (ds.samples.size() != ds.split.size())
        throw std::invalid_argument("save_dataset: samples/split size mismatch");
    for (size_t i = 0; i < ds.samples.size(); ++i) {
        char name[32];
        std::snprintf(name, sizeof(name), "sample_%04zu", i);
        fs::path sdir = fs::path(dir) / split_dir(ds.split[i]) / name;
        fs::create_directories(sdir);
        const DatasetSample& s = ds.samples[i];
        write_complex_image((sdir / "target.fpmc").string(), s.target);
        write_stack((sdir / "stack.fpms").string(), s.stack);
        json meta = {{"label", s.label == Complexity::Simple ? "simple" : "complex"},
                     {"roi_count", s.roi_count},
                     {"seed", s.seed}};
        std::ofstream out(sdir / "meta.json", std::ios::trunc);
        if (!out) throw std::runtime_error("save_dataset: cannot write meta.json");
        out << meta.dump(2) << "\n";
    }
}

Dataset load_dataset(const std::string& dir) {
    struct Row {
        size_t index;
        Split split;
        DatasetSample sample;
    };
    std::vector<Row> rows;
    for (Split sp : {Split::Train, Split::Val, Split::Test}) {
        fs::path sub = fs::path(dir) / split_dir(sp);
        if (!fs::exists(sub)) continue;
        for (const auto& entry : fs::directory_iterator(sub)) {
            if (!entry.is_directory()) continue;
            std::string name = entry.path().filename().string();
            size_t idx = 0;
            if (std::sscanf(name.c_str(), "sample_%zu", &idx) != 1)
                throw std::runtime_error("load_dataset: unexpected entry " + name);
            Row row;
            row.index = idx;
            row.split = sp;
            row.sample.target = read_complex_image((entry.path() / "target.fpmc").string());
            row.sample.stack = read_stack((entry.path() / "stack.fpms").string());
            std::ifstream in(entry.path() / "meta.json");
            if (!in) throw std::runtime_error("load_dataset: missing meta.json in " + name);
            json meta = json::parse(in);
            row.sample.label = meta.at("label").get<std::string>() == "simple"
                                   ? Complexity::Simple
                                   : Complexity::Complex;
            row.sample.roi_count = meta.at("roi_count").get<int>();
            row.sample.seed = meta.at("seed").get<uint64_t>();
            rows.push_back(std::move(row));
        }
    }
    if (rows.empty()) throw std::runtime_error("load_dataset: no samples under " + dir);
    std::sort(rows.begin(), rows.end(), [](const Row& a, const Row& b) { return a.index < b.index; });
    Dataset ds;
    for (size_t i = 0; i < rows.size(); ++i) {
        if (rows[i].index != i)
            throw std::runtime_error("load_dataset: sample indices are not contiguous");
        ds.samples.push_back(std::move(rows[i].sample));
        ds.split.push_back(rows[i].split);
    }
    return ds;
}

std::vector<RealImage> tile_split(const RealImage& image, int tiles_per_side) {
    if (tiles_per_side < 1) throw std::invalid_argument("tile_split: need tiles_per_side >= 1");
    if (image.height % tiles_per_side != 0 || image.width % tiles_per_side != 0)
        throw std::invalid_argument("tile_split: dimensions not divisible by tiles_per_side");
    int th = image.height / tiles_per_side;
    int tw = image.width / tiles_per_side;
    std::vector<RealImage> tiles;
    tiles.reserve(static_cast<size_t>(tiles_per_side) * tiles_per_side);
    for (int ty = 0; ty < tiles_per_side; ++ty)
        for (int tx = 0; tx < tiles_per_side; ++tx) {
            RealImage tile(th, tw);
            for (int r = 0; r < th; ++r)
                for (int c = 0; c < tw; ++c) tile.at(r, c) = image.at(ty * th + r, tx * tw + c);
            tiles.push_back(std::move(tile));
        }
    return tiles;
}

std::vector<RealImage> contrast_filter(const std::vector<RealImage>& tiles, double keep_fraction) {
    if (keep_fraction < 0.0 || keep_fraction > 1.0)
        throw std::invalid_argument("contrast_filter: keep_fraction must lie in [0, 1]");
    size_t n = tiles.size();
    size_t keep = static_cast<size_t>(std::ceil(keep_fraction * static_cast<double>(n)));
    if (keep > n) keep = n;

    std::vector<double> contrast(n);
    for (size_t i = 0; i < n; ++i) {
        const auto& d = tiles[i].data;
        double mean = std::accumulate(d.begin(), d.end(), 0.0) / static_cast<double>(d.size());
        double sq = 0.0;
        for (double v : d) sq += (v - mean) * (v - mean);
        contrast[i] = std::sqrt(sq / static_cast<double>(d.size()));
    }

    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(),
                     [&](size_t a, size_t b) { return contrast[a] > contrast[b]; });
    order.resize(keep);
    std::sort(order.begin(), order.end());

    std::vector<RealImage> kept;
    kept.reserve(keep);
    for (size_t i : order) kept.push_back(tiles[i]);
    return kept;
}

}  // namespace fpm
