#include "lrds/extractor.hpp"

#include "lrds/error.hpp"
#include "lrds/image.hpp"

namespace lrds {

using nlohmann::json;

int ExtractorConfig::stride() const {
    int s = 1;
    for (const auto& l : layers) s *= l.stride;
    return s;
}

int ExtractorConfig::out_channels() const {
    check(!layers.empty(), "extractor config has no layers");
    return layers.back().out;
}

json ExtractorConfig::to_json() const {
    json doc;
    doc["in_channels"] = in_channels;
    doc["norm"] = norm;
    json ls = json::array();
    for (const auto& l : layers) {
        json jl{{"type", l.type}, {"out", l.out}, {"stride", l.stride}};
        if (l.type == "conv") {
            jl["ksize"] = l.ksize;
            jl["relu"] = l.relu;
        }
        ls.push_back(std::move(jl));
    }
    doc["layers"] = std::move(ls);
    return doc;
}

ExtractorConfig ExtractorConfig::from_json(const json& j) {
    ExtractorConfig cfg;
    cfg.in_channels = j.at("in_channels").get<int>();
    cfg.norm = j.value("norm", false);
    for (const auto& jl : j.at("layers")) {
        ExtractorLayerCfg l;
        l.type = jl.at("type").get<std::string>();
        check(l.type == "conv" || l.type == "block", "extractor layer type '", l.type, "'");
        l.out = jl.at("out").get<int>();
        l.stride = jl.value("stride", 1);
        l.ksize = jl.value("ksize", 3);
        l.relu = jl.value("relu", true);
        cfg.layers.push_back(std::move(l));
    }
    return cfg;
}

ExtractorConfig tiny_extractor(int in_channels, int c1, int c2, int c3) {
    ExtractorConfig cfg;
    cfg.in_channels = in_channels;
    cfg.norm = true;
    cfg.layers = {{"conv", c1, 2, 3, true}, {"conv", c2, 2, 3, true}, {"conv", c3, 2, 3, true}};
    return cfg;
}

ExtractorConfig resnet18_stride8(int in_channels) {
    ExtractorConfig cfg;
    cfg.in_channels = in_channels;
    cfg.norm = true;
    cfg.layers.push_back({"conv", 64, 1, 3, true});
    const int stage_channels[4] = {64, 128, 256, 512};
    for (int stage = 0; stage < 4; ++stage) {
        const int s = stage < 3 ? 2 : 1;  // first three stages halve, total stride 8
        cfg.layers.push_back({"block", stage_channels[stage], s, 3, true});
        cfg.layers.push_back({"block", stage_channels[stage], 1, 3, true});
    }
    return cfg;
}

void Extractor::build(const ExtractorConfig& cfg, Rng& rng) {
    cfg_ = cfg;
    units_.clear();
    int in = cfg.in_channels;
    for (const auto& l : cfg.layers) {
        Unit u;
        if (l.type == "conv") {
            u.is_block = false;
            u.relu = l.relu;
            u.conv1.build(in, l.out, l.ksize, l.stride, (l.ksize - 1) / 2, rng);
        } else {
            u.is_block = true;
            u.conv1.build(in, l.out, 3, l.stride, 1, rng);
            u.conv2.build(l.out, l.out, 3, 1, 1, rng);
            if (l.stride != 1 || in != l.out) {
                u.proj.emplace();
                u.proj->build(in, l.out, 1, l.stride, 0, rng);
            }
        }
        in = l.out;
        units_.push_back(std::move(u));
    }
}

Tensor Extractor::forward(const Tensor& image, State* state) const {
    check(!units_.empty(), "extractor not built");
    if (state) state->per_unit.assign(units_.size(), {});
    Tensor x = image;
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const Unit& u = units_[i];
        if (!u.is_block) {
            Tensor pre = u.conv1.forward(x);
            Tensor act = cfg_.norm ? nn::instance_norm(pre) : pre;
            Tensor out = u.relu ? nn::relu(act) : act;
            if (state) state->per_unit[i] = {std::move(x), std::move(pre), std::move(act)};
            x = std::move(out);
        } else {
            Tensor a1 = u.conv1.forward(x);
            Tensor n1 = cfg_.norm ? nn::instance_norm(a1) : a1;
            Tensor r1 = nn::relu(n1);
            Tensor a2 = u.conv2.forward(r1);
            Tensor sum = cfg_.norm ? nn::instance_norm(a2) : a2;
            if (u.proj)
                sum += u.proj->forward(x);
            else
                sum += x;
            Tensor out = nn::relu(sum);
            if (state)
                state->per_unit[i] = {std::move(x), std::move(a1), std::move(n1),
                                      std::move(r1), std::move(a2), std::move(sum)};
            x = std::move(out);
        }
    }
    return x;
}

Tensor Extractor::backward(const State& state, const Tensor& grad_out) {
    check(state.per_unit.size() == units_.size(), "extractor backward: stale state");
    Tensor g = grad_out;
    for (std::size_t k = units_.size(); k-- > 0;) {
        Unit& u = units_[k];
        const auto& saved = state.per_unit[k];
        if (!u.is_block) {
            const Tensor& x = saved[0];
            const Tensor& pre = saved[1];
            const Tensor& act = saved[2];
            Tensor ga = u.relu ? nn::relu_backward(act, g) : g;
            Tensor gp = cfg_.norm ? nn::instance_norm_backward(pre, ga) : std::move(ga);
            g = u.conv1.backward(x, gp);
        } else {
            const Tensor& x = saved[0];
            const Tensor& a1 = saved[1];
            const Tensor& n1 = saved[2];
            const Tensor& r1 = saved[3];
            const Tensor& a2 = saved[4];
            const Tensor& sum = saved[5];
            Tensor gsum = nn::relu_backward(sum, g);
            Tensor ga2 = cfg_.norm ? nn::instance_norm_backward(a2, gsum) : gsum;
            Tensor gr1 = u.conv2.backward(r1, ga2);
            Tensor gn1 = nn::relu_backward(n1, gr1);
            Tensor ga1 = cfg_.norm ? nn::instance_norm_backward(a1, gn1) : std::move(gn1);
            Tensor gx = u.conv1.backward(x, ga1);
            if (u.proj)
                gx += u.proj->backward(x, gsum);
            else
                gx += gsum;
            g = std::move(gx);
        }
    }
    return g;
}

std::vector<std::pair<std::string, nn::Param*>> Extractor::named_params() {
    std::vector<std::pair<std::string, nn::Param*>> out;
    for (std::size_t i = 0; i < units_.size(); ++i) {
        const std::string prefix = "extractor." + std::to_string(i) + ".";
        Unit& u = units_[i];
        out.emplace_back(prefix + "conv1.weight", &u.conv1.weight);
        out.emplace_back(prefix + "conv1.bias", &u.conv1.bias);
        if (u.is_block) {
            out.emplace_back(prefix + "conv2.weight", &u.conv2.weight);
            out.emplace_back(prefix + "conv2.bias", &u.conv2.bias);
            if (u.proj) {
                out.emplace_back(prefix + "proj.weight", &u.proj->weight);
                out.emplace_back(prefix + "proj.bias", &u.proj->bias);
            }
        }
    }
    return out;
}

Tensor crop_and_pool(const Extractor& extractor, const Tensor& img, const Box& box, int crop_size) {
    check(box.w > 1e-9 && box.h > 1e-9, "crop_and_pool: degenerate box");
    const Tensor crop = crop_resize(img, box, crop_size);
    return nn::global_avg_pool(extractor.forward(crop));
}

}  // namespace lrds
