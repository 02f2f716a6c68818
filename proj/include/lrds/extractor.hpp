#pragma once

// Configurable convolutional feature extractor. The architecture is a
// descriptor (plain convs and residual blocks), so desk-scale tests run a
// tiny stack while the reference configuration is a stride-8 ResNet-18-style
// network. Spatial semantics: stride-2 layers use k3/p1 so every stage maps
// n -> ceil(n/2) and a stride-8 stack yields ceil(dim/8) feature maps.

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrds/geometry.hpp"
#include "lrds/nn.hpp"
#include "lrds/tensor.hpp"

namespace lrds {

struct ExtractorLayerCfg {
    std::string type;  // "conv" | "block"
    int out = 0;
    int stride = 1;
    int ksize = 3;     // conv only
    bool relu = true;  // conv only
};

struct ExtractorConfig {
    int in_channels = 3;
    bool norm = false;  // per-channel spatial normalization after each conv
    std::vector<ExtractorLayerCfg> layers;

    int stride() const;
    int out_channels() const;
    nlohmann::json to_json() const;
    static ExtractorConfig from_json(const nlohmann::json& j);
};

// Three stride-2 convs; D = channels of the last one.
ExtractorConfig tiny_extractor(int in_channels = 3, int c1 = 8, int c2 = 16, int c3 = 32);
// Stride-8 residual stack in the ResNet-18 layout (stage four keeps stride 1).
ExtractorConfig resnet18_stride8(int in_channels = 3);

class Extractor {
public:
    void build(const ExtractorConfig& cfg, Rng& rng);

    // Activations saved during forward, consumed by backward.
    struct State {
        std::vector<std::vector<Tensor>> per_unit;
    };

    Tensor forward(const Tensor& image, State* state = nullptr) const;
    // Accumulates parameter gradients; returns the gradient w.r.t. the input.
    Tensor backward(const State& state, const Tensor& grad_out);

    std::vector<std::pair<std::string, nn::Param*>> named_params();
    const ExtractorConfig& config() const { return cfg_; }
    int stride() const { return cfg_.stride(); }
    int out_channels() const { return cfg_.out_channels(); }

private:
    struct Unit {
        bool is_block = false;
        bool relu = true;  // conv units
        nn::Conv2d conv1;
        nn::Conv2d conv2;               // blocks
        std::optional<nn::Conv2d> proj;  // blocks with stride or channel change
    };
    ExtractorConfig cfg_;
    std::vector<Unit> units_;
};

// Object-crop baseline: crop the box, resize to crop_size, run the extractor,
// global-average-pool to a vector of the extractor's channel count.
Tensor crop_and_pool(const Extractor& extractor, const Tensor& img, const Box& box, int crop_size);

}  // namespace lrds
