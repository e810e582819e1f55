#ifndef FPM_DATASET_HPP
#define FPM_DATASET_HPP

#include <cstdint>
#include <string>
#include <vector>

#include "fpm/forward.hpp"
#include "fpm/image.hpp"
#include "fpm/rng.hpp"

namespace fpm {

/// Quarter-turn rotations. Counterclockwise in conventional (y up) axes,
/// which on row-major images maps the 2x1 column [a;b] to the 1x2 row
/// [b,a]: out(r, c) = in(H-1-c, r).
enum class Rotation { R0, R90, R180, R270 };

/// Mirror axis; Horizontal mirrors columns (left/right), Vertical rows.
enum class Flip { None, Horizontal, Vertical };

/// One region of interest lifted from a source image: the verbatim crop,
/// its origin, the transform to apply, and where to paste the result.
/// The flip applies after the rotation.
struct RoiSpec {
    RealImage patch;
    BBox origin;
    Rotation rotation = Rotation::R0;
    Flip flip = Flip::None;
    int paste_x = 0;
    int paste_y = 0;
};

/// Exact index permutation, rotation then flip.
RealImage apply_transform(const RealImage& patch, Rotation rot, Flip flip);

/// gt with each bbox interior replaced by the median of the two-pixel ring
/// around it (clipped to the image, all bbox interiors excluded). Even
/// counts take the lower median. Throws when a bbox is out of bounds or its
/// ring has no pixels left.
RealImage extract_background(const RealImage& gt, const std::vector<BBox>& bboxes);

/// Verbatim crops, identity transform, paste position = origin.
std::vector<RoiSpec> extract_rois(const RealImage& gt, const std::vector<BBox>& bboxes);

/// Pastes each transformed ROI onto the background in list order; later
/// ROIs overwrite earlier ones where they overlap. Throws when a
/// transformed patch does not fit at its paste position.
RealImage composite(const RealImage& background, const std::vector<RoiSpec>& rois);

enum class Complexity { Simple, Complex };

/// Simple iff roi_count <= simple_threshold.
Complexity classify_complexity(int roi_count, int simple_threshold = 1);

/// Procedural resolution target: three-bar groups (vertical triplet over
/// horizontal triplet) at decreasing scales on a flat bright background,
/// with the group bounding boxes and one guaranteed-blank region. Requires
/// n >= 48.
struct Phantom {
    RealImage amplitude;
    std::vector<BBox> rois;
    BBox blank;
};
Phantom usaf_phantom(int n);

struct DatasetSample {
    ComplexImage target;   // zero-phase HR field of the composited scene
    IntensityStack stack;  // simulated captures of that target
    Complexity label = Complexity::Simple;
    int roi_count = 0;
    uint64_t seed = 0;  // per-sample stream salt
};

enum class Split { Train, Val, Test };

struct Dataset {
    std::vector<DatasetSample> samples;
    std::vector<Split> split;  // parallel to samples
};

/// A ground-truth image together with its ROI inventory.
struct SourceImage {
    RealImage gt;
    std::vector<BBox> rois;
};

/// One augmented composite plus how many ROIs were placed on it.
struct AugmentedScene {
    RealImage scene;
    int roi_count = 0;
};

/// Single draw of the augmentation policy: 1 to 2x the inventory size ROI
/// picks with replacement, each with a uniform rotation/flip and a uniform
/// in-bounds paste position. An empty inventory yields the bare background.
/// The rng stream fully determines the result.
AugmentedScene augment_scene(const SourceImage& source, Rng& rng);

/// count samples, sample i built from variants[i % variants.size()] with
/// an Rng(seed).fork(i) stream: ROI picks are uniform with replacement
/// (1 to 2x the inventory), each with a uniform rotation/flip and a
/// uniform in-bounds paste position; the composite gets zero phase and is
/// pushed through the forward model. Split is train:val:test = 4:1:1
/// (floors, remainder to test), assigned in sample order.
Dataset generate_dataset(const std::vector<SourceImage>& variants, const OpticalConfig& cfg,
                         const std::vector<IlluminationPattern>& patterns, int count,
                         uint64_t seed);

/// Directory layout: <dir>/<train|val|test>/sample_NNNN/ holding
/// target.fpmc, stack.fpms, and meta.json (label, roi_count, seed). NNNN
/// is the global sample index, so loading restores the original order.
void save_dataset(const std::string& dir, const Dataset& ds);
Dataset load_dataset(const std::string& dir);

/// Row-major equal tiles; each side must divide evenly.
std::vector<RealImage> tile_split(const RealImage& image, int tiles_per_side);

/// Keeps the ceil(keep_fraction * n) highest-contrast tiles (contrast =
/// per-tile standard deviation, biased) in their original relative order;
/// ties keep the earlier tile. keep_fraction in [0, 1].
std::vector<RealImage> contrast_filter(const std::vector<RealImage>& tiles,
                                       double keep_fraction);

}  // namespace fpm

#endif
