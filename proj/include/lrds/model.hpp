#pragma once

// Full region-classification model: extractor -> feature map -> RoI-Align ->
// flatten+linear region feature f -> supervision heads. Parameters persist in
// a binary checkpoint (JSON descriptor + raw little-endian doubles) keyed by
// name, carrying the config hash for provenance.

#include <string>
#include <vector>

#include <json.hpp>

#include "lrds/extractor.hpp"
#include "lrds/heads.hpp"
#include "lrds/roi.hpp"

namespace lrds {

struct ModelConfig {
    ExtractorConfig extractor = tiny_extractor();
    int feature_dim = 64;  // d
    RoiSpec roi{8, 7, 2};  // stride is overwritten from the extractor config
    int mask_res = 14;     // M
    bool stuff_combined = false;
    int crop_size = 224;   // object-crop baseline input
    std::uint64_t init_seed = 1;

    nlohmann::json to_json() const;
    static ModelConfig from_json(const nlohmann::json& j);
    std::string hash() const;  // fnv1a64 of the canonical JSON dump
};

struct Model {
    ModelConfig config;
    HeadSpaces spaces;

    Extractor extractor;
    nn::Linear region_proj;  // P*P*D -> d
    ClsHead cls;
    MultiLabelHead attribute;
    HierarchyHead hierarchy;
    MultiLabelHead part;
    BboxHead bbox;
    SegRegionHead seg_region;
    SegFcnHead seg_fcn;
    StuffHead stuff;
    SceneHead scene;
    RotationHead rotation;
    PatchLocationHead patch_location;

    static Model build(const ModelConfig& cfg, const HeadSpaces& spaces);

    std::vector<std::pair<std::string, nn::Param*>> named_params();
    std::vector<nn::Param*> params();
    void zero_grads();
    std::uint64_t param_hash() const;  // fnv1a64 over raw parameter bytes

    Tensor feature_map(const Tensor& image, Extractor::State* state = nullptr) const;
    // Pre-projection aligned crop [D, P, P].
    Tensor aligned_crop(const Tensor& map, const Box& region) const;
    // Region feature f of dimension d.
    Tensor region_feature_from_crop(const Tensor& crop) const;
    Tensor region_feature(const Tensor& image, const Box& region) const;

    void save(const std::string& path, const std::string& command = "") const;
    static Model load(const std::string& path);
};

}  // namespace lrds
