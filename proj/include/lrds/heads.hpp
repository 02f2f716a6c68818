#pragma once

// Supervision heads. Object-level heads consume a region feature vector f,
// image-level heads consume the whole feature map, and the self-supervised
// heads consume feature maps of edited images; the signatures enforce the
// distinction. Every forward returns the loss and, when a gradient sink is
// given, adds weight * dLoss/dInput into it and weight * dLoss/dParams into
// the head's parameter gradients. Passing a null sink makes the call pure.

#include <array>
#include <optional>

#include <json.hpp>

#include "lrds/manifest.hpp"
#include "lrds/nn.hpp"
#include "lrds/roi.hpp"

namespace lrds {

// Label spaces derived from a manifest. Classification and hierarchy indices
// are positions in the sorted base-category list; part and stuff vocabularies
// are the corresponding category-id lists.
struct HeadSpaces {
    std::vector<std::int64_t> base_ids;  // sorted; cls label = index
    int num_attributes = 0;
    std::array<std::vector<std::string>, 4> level_vocab;  // sorted unique labels per level
    std::vector<std::int64_t> part_ids;   // sorted part-category ids
    std::vector<std::int64_t> stuff_ids;  // sorted stuff-category ids
    int num_scenes = 0;

    static HeadSpaces from_manifest(const BenchmarkManifest& m);

    int num_base() const { return static_cast<int>(base_ids.size()); }
    int num_parts() const { return static_cast<int>(part_ids.size()); }
    int num_stuff() const { return static_cast<int>(stuff_ids.size()); }

    // -1 when the category is not a base class.
    int cls_label(std::int64_t category_id) const;
    // Throws if a level label is outside that level's vocabulary.
    std::array<int, 4> hierarchy_labels(const CategoryRecord& cat) const;
    std::vector<std::uint8_t> part_bits(const std::vector<std::int64_t>& part_labels) const;
    int stuff_index(std::int64_t category_id) const;  // -1 when unknown

    nlohmann::json to_json() const;
    static HeadSpaces from_json(const nlohmann::json& j);
};

// ---- Object-level heads (Eq. 1 and Eq. 2) ----

struct ClsHead {
    nn::Linear fc;
    void build(int feature_dim, int num_base, Rng& rng) { fc.build(feature_dim, num_base, rng); }
    double forward(const Tensor& f, int label, Tensor* df, double weight);
};

// Shared by attributes and parts: per-bit sigmoid BCE, summed over the
// vocabulary (sums keep the reference loss weights portable).
struct MultiLabelHead {
    nn::Linear fc;
    void build(int feature_dim, int vocab, Rng& rng) { fc.build(feature_dim, vocab, rng); }
    double forward(const Tensor& f, const std::vector<std::uint8_t>& bits, Tensor* df, double weight);
};

struct HierarchyHead {
    std::array<nn::Linear, 4> fc;
    void build(int feature_dim, const std::array<int, 4>& level_sizes, Rng& rng);
    double forward(const Tensor& f, const std::array<int, 4>& labels, Tensor* df, double weight);
};

struct BboxHead {
    nn::Linear fc;  // d -> 4 offsets (tx, ty, tw, th)
    void build(int feature_dim, Rng& rng);
    // R-CNN offsets of the tight box relative to the region box.
    static Tensor regression_targets(const Box& region, const Box& tight);
    double forward(const Tensor& f, const Box& region, const Box& tight, Tensor* df, double weight);
};

struct SegRegionHead {
    nn::Linear fc;  // flattened aligned crop -> M*M mask logits
    int mask_res = 14;
    void build(int crop_numel, int mask_resolution, Rng& rng);
    // crop is the pre-projection RoI-aligned [C, P, P] tensor.
    double forward(const Tensor& crop, const std::vector<std::uint8_t>& cell_targets, Tensor* dcrop,
                   double weight);
};

// Area-majority downsampling of an instance mask onto the M x M grid of the
// region box. Throws on an empty region.
std::vector<std::uint8_t> region_mask_targets(const RleMask& mask, const Box& region, int mask_res);

// ---- Image-level heads (Eq. 3) ----

struct SegFcnHead {
    nn::Conv2d conv;  // 1x1, D -> num_base
    void build(int map_channels, int num_base, Rng& rng) { conv.build(map_channels, num_base, 1, 1, 0, rng); }
    // labels is a stride-resolution raster of base-class indices with
    // kIgnoreLabel elsewhere; loss is the mean CE over labeled cells.
    // n_valid reports the number of contributing cells (0 => loss 0).
    double forward(const Tensor& map, const LabelRaster& labels, Tensor* dmap, double weight,
                   int* n_valid = nullptr);
};

struct StuffHead {
    nn::Conv2d conv;
    bool combined = false;
    int num_foreground = 0;  // combined mode: logits are [base classes | stuff classes]
    double background_weight = 0.1;
    void build(int map_channels, bool combined_mode, int num_base, int num_stuff, Rng& rng);
    // Plain mode labels: 1 = object, 0 = stuff, kIgnoreLabel = unknown.
    // Combined mode labels: base-class index, or num_foreground + stuff index.
    double forward(const Tensor& map, const LabelRaster& labels, Tensor* dmap, double weight,
                   int* n_valid = nullptr);
};

struct SceneHead {
    nn::Linear fc;
    void build(int map_channels, int num_scenes, Rng& rng) { fc.build(map_channels, num_scenes, rng); }
    double forward(const Tensor& map, int label, Tensor* dmap, double weight);
};

// ---- Self-supervised heads (Eq. 4) ----

struct RotationHead {
    nn::Linear fc;  // pooled features -> 4 rotation classes
    void build(int map_channels, Rng& rng) { fc.build(map_channels, 4, rng); }
    double forward(const Tensor& rotated_map, int k, Tensor* dmap, double weight);
};

struct PatchLocationHead {
    nn::Linear fc;  // concat(pooled center, pooled neighbor) -> 8
    void build(int map_channels, Rng& rng) { fc.build(2 * map_channels, 8, rng); }
    double forward(const Tensor& center_map, const Tensor& neighbor_map, int label,
                   Tensor* dcenter_map, Tensor* dneighbor_map, double weight);
};

}  // namespace lrds
