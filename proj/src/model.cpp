#include "lrds/model.hpp"

#include <cmath>
#include <cstring>

#include "lrds/checkpoint.hpp"
#include "lrds/error.hpp"

namespace lrds {

using nlohmann::json;

json ModelConfig::to_json() const {
    json j;
    j["extractor"] = extractor.to_json();
    j["feature_dim"] = feature_dim;
    j["roi"] = json{{"pooled", roi.pooled}, {"samples", roi.samples}};
    j["mask_res"] = mask_res;
    j["stuff_combined"] = stuff_combined;
    j["crop_size"] = crop_size;
    j["init_seed"] = init_seed;
    return j;
}

ModelConfig ModelConfig::from_json(const json& j) {
    ModelConfig cfg;
    cfg.extractor = ExtractorConfig::from_json(j.at("extractor"));
    cfg.feature_dim = j.at("feature_dim").get<int>();
    cfg.roi.pooled = j.at("roi").at("pooled").get<int>();
    cfg.roi.samples = j.at("roi").at("samples").get<int>();
    cfg.mask_res = j.at("mask_res").get<int>();
    cfg.stuff_combined = j.value("stuff_combined", false);
    cfg.crop_size = j.value("crop_size", 224);
    cfg.init_seed = j.value("init_seed", std::uint64_t{1});
    cfg.roi.stride = cfg.extractor.stride();
    return cfg;
}

std::string ModelConfig::hash() const {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx",
                  static_cast<unsigned long long>(fnv1a64(to_json().dump())));
    return buf;
}

Model Model::build(const ModelConfig& cfg, const HeadSpaces& spaces) {
    Model m;
    m.config = cfg;
    m.config.roi.stride = cfg.extractor.stride();
    m.spaces = spaces;
    Rng rng(derive_seed(cfg.init_seed, "model_init"));
    m.extractor.build(cfg.extractor, rng);
    const int map_ch = m.extractor.out_channels();
    const int crop_numel = map_ch * cfg.roi.pooled * cfg.roi.pooled;
    m.region_proj.build(crop_numel, cfg.feature_dim, rng);
    m.cls.build(cfg.feature_dim, std::max(1, spaces.num_base()), rng);
    m.attribute.build(cfg.feature_dim, std::max(1, spaces.num_attributes), rng);
    std::array<int, 4> level_sizes{};
    for (int l = 0; l < 4; ++l)
        level_sizes[static_cast<std::size_t>(l)] =
            std::max<int>(1, static_cast<int>(spaces.level_vocab[static_cast<std::size_t>(l)].size()));
    m.hierarchy.build(cfg.feature_dim, level_sizes, rng);
    m.part.build(cfg.feature_dim, std::max(1, spaces.num_parts()), rng);
    m.bbox.build(cfg.feature_dim, rng);
    m.seg_region.build(crop_numel, cfg.mask_res, rng);
    m.seg_fcn.build(map_ch, std::max(1, spaces.num_base()), rng);
    m.stuff.build(map_ch, cfg.stuff_combined, spaces.num_base(), std::max(1, spaces.num_stuff()), rng);
    m.scene.build(map_ch, std::max(1, spaces.num_scenes), rng);
    m.rotation.build(map_ch, rng);
    m.patch_location.build(map_ch, rng);
    return m;
}

std::vector<std::pair<std::string, nn::Param*>> Model::named_params() {
    std::vector<std::pair<std::string, nn::Param*>> out = extractor.named_params();
    const auto add_linear = [&out](const std::string& name, nn::Linear& lin) {
        out.emplace_back(name + ".weight", &lin.weight);
        out.emplace_back(name + ".bias", &lin.bias);
    };
    const auto add_conv = [&out](const std::string& name, nn::Conv2d& conv) {
        out.emplace_back(name + ".weight", &conv.weight);
        out.emplace_back(name + ".bias", &conv.bias);
    };
    add_linear("region_proj", region_proj);
    add_linear("cls.fc", cls.fc);
    add_linear("attribute.fc", attribute.fc);
    for (int l = 0; l < 4; ++l)
        add_linear("hierarchy.fc" + std::to_string(l), hierarchy.fc[static_cast<std::size_t>(l)]);
    add_linear("part.fc", part.fc);
    add_linear("bbox.fc", bbox.fc);
    add_linear("seg_region.fc", seg_region.fc);
    add_conv("seg_fcn.conv", seg_fcn.conv);
    add_conv("stuff.conv", stuff.conv);
    add_linear("scene.fc", scene.fc);
    add_linear("rotation.fc", rotation.fc);
    add_linear("patch_location.fc", patch_location.fc);
    return out;
}

std::vector<nn::Param*> Model::params() {
    std::vector<nn::Param*> out;
    for (auto& [name, p] : named_params()) out.push_back(p);
    return out;
}

void Model::zero_grads() {
    for (nn::Param* p : params()) p->zero_grad();
}

std::uint64_t Model::param_hash() const {
    std::uint64_t h = 1469598103934665603ull;
    for (const auto& [name, p] : const_cast<Model*>(this)->named_params()) {
        h ^= fnv1a64(name);
        h *= 1099511628211ull;
        for (double v : p->value.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &v, sizeof bits);
            h ^= bits;
            h *= 1099511628211ull;
        }
    }
    return h;
}

Tensor Model::feature_map(const Tensor& image, Extractor::State* state) const {
    return extractor.forward(image, state);
}

Tensor Model::aligned_crop(const Tensor& map, const Box& region) const {
    return roi_align(map, region, config.roi);
}

Tensor Model::region_feature_from_crop(const Tensor& crop) const {
    // Normalized to the unit sphere so no head can grow the shared feature
    // scale unboundedly and per-entry magnitudes stay ~1/sqrt(d).
    Tensor f = nn::layer_norm(region_proj.forward(flatten(crop)));
    f.scale(1.0 / std::sqrt(static_cast<double>(config.feature_dim)));
    return f;
}

Tensor Model::region_feature(const Tensor& image, const Box& region) const {
    return region_feature_from_crop(aligned_crop(feature_map(image), region));
}

void Model::save(const std::string& path, const std::string& command) const {
    Model& self = const_cast<Model&>(*this);
    json meta;
    meta["config"] = config.to_json();
    meta["config_hash"] = config.hash();
    meta["spaces"] = spaces.to_json();
    if (!command.empty()) meta["command"] = command;
    std::vector<std::pair<std::string, const Tensor*>> arrays;
    for (const auto& [name, p] : self.named_params()) arrays.emplace_back(name, &p->value);
    save_checkpoint(path, meta, arrays);
}

Model Model::load(const std::string& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    Model m = Model::build(ModelConfig::from_json(ckpt.meta.at("config")),
                           HeadSpaces::from_json(ckpt.meta.at("spaces")));
    check(ckpt.meta.at("config_hash").get<std::string>() == m.config.hash(), path,
          ": config hash mismatch");
    for (auto& [name, p] : m.named_params()) {
        const Tensor& t = ckpt.require(name);
        check(t.shape == p->value.shape, path, ": shape mismatch for '", name, "'");
        p->value = t;
    }
    return m;
}

}  // namespace lrds
