#pragma once

// Materializes a manifest into in-memory training samples: images resolved
// through a pluggable loader, labels mapped into head spaces, and the
// stride-resolution supervision rasters precomputed. "synth:" URIs decode a
// deterministic generated image so the whole pipeline runs without any image
// files on disk.

#include <functional>
#include <optional>
#include <set>

#include "lrds/heads.hpp"
#include "lrds/manifest.hpp"
#include "lrds/model.hpp"

namespace lrds {

struct SampleObject {
    std::int64_t instance_id = 0;
    std::int64_t category_id = 0;
    Subset subset = Subset::base_train;
    int cls_label = -1;  // base-class index; -1 for novel instances
    Box region;
    Box tight;
    std::vector<std::uint8_t> attr_bits;  // empty when the category has none
    std::array<int, 4> hier_labels{};
    bool hier_valid = false;
    std::vector<std::uint8_t> part_bits;
    std::optional<RleMask> mask;
    std::set<HeadKind> masked;
};

struct TrainSample {
    std::int64_t image_id = 0;
    Tensor image;  // C x H x W, already resized if the dataset was built so
    std::vector<SampleObject> objects;
    std::optional<int> scene_label;
    std::optional<LabelRaster> seg_fcn_labels;   // base-class indices at stride resolution
    std::optional<LabelRaster> stuff_plain;      // 1 object / 0 stuff / ignore
    std::optional<LabelRaster> stuff_combined;   // [base classes | stuff classes] indices
    std::set<HeadKind> masked;  // image-level supervision withheld

    bool has_train_objects() const;
};

using ImageLoader = std::function<Tensor(const ImageRecord&)>;

// Deterministic generated image: uri "synth:size=HxW;seed=S;boxes=x,y,w,h,k|..."
// paints class-coded rectangles over seeded noise.
Tensor synth_image(const std::string& uri);
bool is_synth_uri(const std::string& uri);
// Writes / reads binary PPM (P6), scaled to [0, 1] doubles.
Tensor load_ppm(const std::string& path);
void save_ppm(const Tensor& img, const std::string& path);

// Resolves synth: URIs internally, otherwise loads "<data_root>/<uri>" as PPM.
ImageLoader default_image_loader(const std::string& data_root);

struct DatasetOptions {
    int resize_short = 0;  // 0 keeps original resolution
    // Resolves stuff_mask_uri relative to this root; empty disables file lookup.
    std::string raster_root;
    // In-memory stuff rasters (e.g. straight from build_manifest); takes
    // precedence over raster_root.
    std::function<std::optional<LabelRaster>(const ImageRecord&)> stuff_loader;
};

struct Dataset {
    std::vector<TrainSample> samples;
    HeadSpaces spaces;
    int stride = 8;

    std::vector<int> sample_indices_with_train_objects() const;
    std::vector<int> all_indices() const;

    static Dataset from_manifest(const BenchmarkManifest& manifest, const HeadSpaces& spaces,
                                 const ModelConfig& model_cfg, const ImageLoader& loader,
                                 const DatasetOptions& opts = {});
};

// Synthetic fixture generation for demos and tests: n_classes base classes
// with train_per_class + val instances each, plus novel classes for few-shot
// evaluation. Images carry synth: URIs whose painted content encodes the
// class, so models can actually fit the data.
struct ToyFixtureOptions {
    int base_classes = 3;
    int base_instances_per_class = 134;  // > 100 so the frequency split keeps them base
    int objects_per_image = 2;
    int novel_classes = 4;
    int novel_per_class = 16;
    int image_size = 32;
    int box_size = 12;
    bool with_scenes = true;
    bool with_parts = true;
    bool with_stuff = false;
    std::uint64_t seed = 1;
};
std::string toy_fixture_json(const ToyFixtureOptions& opts);

}  // namespace lrds
