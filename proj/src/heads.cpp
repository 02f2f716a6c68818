#include "lrds/heads.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lrds/error.hpp"

namespace lrds {

using nlohmann::json;

HeadSpaces HeadSpaces::from_manifest(const BenchmarkManifest& m) {
    HeadSpaces s;
    std::array<std::set<std::string>, 4> levels;
    for (const auto& c : m.categories) {
        switch (c.split) {
            case Split::base:
                s.base_ids.push_back(c.category_id);
                for (std::size_t l = 0; l < 4 && l < c.hierarchy_path.size(); ++l)
                    levels[l].insert(c.hierarchy_path[l]);
                s.num_attributes = std::max(s.num_attributes, static_cast<int>(c.attributes.size()));
                break;
            default:
                break;
        }
        if (c.kind == Kind::part) s.part_ids.push_back(c.category_id);
        if (c.kind == Kind::stuff) s.stuff_ids.push_back(c.category_id);
    }
    std::sort(s.base_ids.begin(), s.base_ids.end());
    std::sort(s.part_ids.begin(), s.part_ids.end());
    std::sort(s.stuff_ids.begin(), s.stuff_ids.end());
    for (int l = 0; l < 4; ++l) s.level_vocab[l].assign(levels[l].begin(), levels[l].end());
    s.num_scenes = static_cast<int>(m.scene_names.size());
    return s;
}

int HeadSpaces::cls_label(std::int64_t category_id) const {
    const auto it = std::lower_bound(base_ids.begin(), base_ids.end(), category_id);
    if (it == base_ids.end() || *it != category_id) return -1;
    return static_cast<int>(it - base_ids.begin());
}

std::array<int, 4> HeadSpaces::hierarchy_labels(const CategoryRecord& cat) const {
    check(cat.hierarchy_path.size() == 4, "hierarchy path of '", cat.name, "' has ",
          cat.hierarchy_path.size(), " levels");
    std::array<int, 4> out{};
    for (int l = 0; l < 4; ++l) {
        const auto& vocab = level_vocab[static_cast<std::size_t>(l)];
        const auto it = std::lower_bound(vocab.begin(), vocab.end(), cat.hierarchy_path[l]);
        check(it != vocab.end() && *it == cat.hierarchy_path[l], "hierarchy label '",
              cat.hierarchy_path[l], "' outside level-", l, " vocabulary");
        out[static_cast<std::size_t>(l)] = static_cast<int>(it - vocab.begin());
    }
    return out;
}

std::vector<std::uint8_t> HeadSpaces::part_bits(const std::vector<std::int64_t>& part_labels) const {
    std::vector<std::uint8_t> bits(part_ids.size(), 0);
    for (std::int64_t id : part_labels) {
        const auto it = std::lower_bound(part_ids.begin(), part_ids.end(), id);
        if (it != part_ids.end() && *it == id)
            bits[static_cast<std::size_t>(it - part_ids.begin())] = 1;
    }
    return bits;
}

int HeadSpaces::stuff_index(std::int64_t category_id) const {
    const auto it = std::lower_bound(stuff_ids.begin(), stuff_ids.end(), category_id);
    if (it == stuff_ids.end() || *it != category_id) return -1;
    return static_cast<int>(it - stuff_ids.begin());
}

json HeadSpaces::to_json() const {
    json j;
    j["base_ids"] = base_ids;
    j["num_attributes"] = num_attributes;
    for (int l = 0; l < 4; ++l) j["level_vocab"].push_back(level_vocab[static_cast<std::size_t>(l)]);
    j["part_ids"] = part_ids;
    j["stuff_ids"] = stuff_ids;
    j["num_scenes"] = num_scenes;
    return j;
}

HeadSpaces HeadSpaces::from_json(const json& j) {
    HeadSpaces s;
    s.base_ids = j.at("base_ids").get<std::vector<std::int64_t>>();
    s.num_attributes = j.at("num_attributes").get<int>();
    for (int l = 0; l < 4; ++l)
        s.level_vocab[static_cast<std::size_t>(l)] =
            j.at("level_vocab")[static_cast<std::size_t>(l)].get<std::vector<std::string>>();
    s.part_ids = j.at("part_ids").get<std::vector<std::int64_t>>();
    s.stuff_ids = j.at("stuff_ids").get<std::vector<std::int64_t>>();
    s.num_scenes = j.at("num_scenes").get<int>();
    return s;
}

double ClsHead::forward(const Tensor& f, int label, Tensor* df, double weight) {
    const Tensor logits = fc.forward(f);
    if (!df) return nn::softmax_cross_entropy(logits, label, nullptr, 0);
    Tensor dlogits({fc.out_dim});
    const double loss = nn::softmax_cross_entropy(logits, label, &dlogits, weight);
    *df += fc.backward(f, dlogits);
    return loss;
}

double MultiLabelHead::forward(const Tensor& f, const std::vector<std::uint8_t>& bits, Tensor* df,
                               double weight) {
    const Tensor logits = fc.forward(f);
    if (!df) return nn::sigmoid_bce_sum(logits, bits, nullptr, 0);
    Tensor dlogits({fc.out_dim});
    const double loss = nn::sigmoid_bce_sum(logits, bits, &dlogits, weight);
    *df += fc.backward(f, dlogits);
    return loss;
}

void HierarchyHead::build(int feature_dim, const std::array<int, 4>& level_sizes, Rng& rng) {
    for (int l = 0; l < 4; ++l)
        fc[static_cast<std::size_t>(l)].build(feature_dim, level_sizes[static_cast<std::size_t>(l)], rng);
}

double HierarchyHead::forward(const Tensor& f, const std::array<int, 4>& labels, Tensor* df,
                              double weight) {
    double loss = 0;
    for (int l = 0; l < 4; ++l) {
        nn::Linear& lin = fc[static_cast<std::size_t>(l)];
        const Tensor logits = lin.forward(f);
        if (!df) {
            loss += nn::softmax_cross_entropy(logits, labels[static_cast<std::size_t>(l)], nullptr, 0);
        } else {
            Tensor dlogits({lin.out_dim});
            loss += nn::softmax_cross_entropy(logits, labels[static_cast<std::size_t>(l)], &dlogits,
                                              weight);
            *df += lin.backward(f, dlogits);
        }
    }
    return loss;
}

void BboxHead::build(int feature_dim, Rng& rng) {
    fc.build(feature_dim, 4, rng);
    // Near-zero init: offsets start at 0 so the regression term cannot swamp
    // the shared feature gradients at the reference loss weight.
    for (double& v : fc.weight.value.data) v = rng.uniform(-1e-3, 1e-3);
    fc.bias.value.zero();
}

Tensor BboxHead::regression_targets(const Box& region, const Box& tight) {
    check(region.w > 0 && region.h > 0 && tight.w > 0 && tight.h > 0,
          "bbox targets: non-positive box dimensions");
    Tensor t({4});
    t[0] = (tight.cx() - region.cx()) / region.w;
    t[1] = (tight.cy() - region.cy()) / region.h;
    t[2] = std::log(tight.w / region.w);
    t[3] = std::log(tight.h / region.h);
    return t;
}

double BboxHead::forward(const Tensor& f, const Box& region, const Box& tight, Tensor* df,
                         double weight) {
    const Tensor targets = regression_targets(region, tight);
    const Tensor pred = fc.forward(f);
    if (!df) return nn::smooth_l1_sum(pred, targets, nullptr, 0);
    Tensor dpred({4});
    const double loss = nn::smooth_l1_sum(pred, targets, &dpred, weight);
    *df += fc.backward(f, dpred);
    return loss;
}

void SegRegionHead::build(int crop_numel, int mask_resolution, Rng& rng) {
    mask_res = mask_resolution;
    fc.build(crop_numel, mask_res * mask_res, rng);
}

double SegRegionHead::forward(const Tensor& crop, const std::vector<std::uint8_t>& cell_targets,
                              Tensor* dcrop, double weight) {
    check(static_cast<int>(cell_targets.size()) == mask_res * mask_res,
          "seg_region: expected ", mask_res * mask_res, " cell targets");
    const Tensor flat = flatten(crop);
    const Tensor logits = fc.forward(flat);
    if (!dcrop) return nn::sigmoid_bce_sum(logits, cell_targets, nullptr, 0);
    Tensor dlogits({fc.out_dim});
    const double loss = nn::sigmoid_bce_sum(logits, cell_targets, &dlogits, weight);
    Tensor dflat = fc.backward(flat, dlogits);
    Tensor reshaped = reshape(dflat, crop.shape);
    *dcrop += reshaped;
    return loss;
}

std::vector<std::uint8_t> region_mask_targets(const RleMask& mask, const Box& region, int mask_res) {
    check(region.w > 1e-9 && region.h > 1e-9, "region_mask_targets: empty region");
    const MaskIntegral integral(mask);
    std::vector<std::uint8_t> cells(static_cast<std::size_t>(mask_res) * mask_res, 0);
    const double ch = region.h / mask_res;
    const double cw = region.w / mask_res;
    for (int r = 0; r < mask_res; ++r) {
        for (int c = 0; c < mask_res; ++c) {
            const double frac = integral.fraction(region.y + r * ch, region.x + c * cw,
                                                  region.y + (r + 1) * ch, region.x + (c + 1) * cw);
            cells[static_cast<std::size_t>(r) * mask_res + c] = frac >= 0.5 ? 1 : 0;
        }
    }
    return cells;
}

namespace {

// Mean cross entropy over labeled raster cells through a 1x1 conv head.
// Per-cell weights scale both the loss term and its gradient; normalization
// is by cell count, so uniformly down-weighted labels scale the loss exactly.
double raster_ce(nn::Conv2d& conv, const Tensor& map, const LabelRaster& labels,
                 const std::vector<double>& cell_weights, Tensor* dmap, double weight,
                 int* n_valid) {
    const Tensor logits = conv.forward(map);
    const int k = logits.dim(0), h = logits.dim(1), w = logits.dim(2);
    check(labels.height == h && labels.width == w, "raster labels are ", labels.width, "x",
          labels.height, ", feature map is ", w, "x", h);
    int count = 0;
    double total = 0;
    Tensor dlogits;
    if (dmap) dlogits = Tensor(logits.shape);
    Tensor cell({k}), dcell({k});
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const std::int32_t label = labels.at(y, x);
            if (label == kIgnoreLabel) continue;
            check(label >= 0 && label < k, "raster label ", label, " outside vocabulary of ", k);
            const double cw = cell_weights.empty() ? 1.0 : cell_weights[static_cast<std::size_t>(label)];
            for (int ch = 0; ch < k; ++ch) cell[static_cast<std::size_t>(ch)] = logits.at3(ch, y, x);
            ++count;
            if (!dmap) {
                total += cw * nn::softmax_cross_entropy(cell, label, nullptr, 0);
            } else {
                dcell.zero();
                total += cw * nn::softmax_cross_entropy(cell, label, &dcell, cw);
                for (int ch = 0; ch < k; ++ch) dlogits.at3(ch, y, x) = dcell[static_cast<std::size_t>(ch)];
            }
        }
    }
    if (n_valid) *n_valid = count;
    if (count == 0) return 0.0;
    const double loss = total / count;
    if (dmap) {
        dlogits.scale(weight / count);
        *dmap += conv.backward(map, dlogits);
    }
    return loss;
}

}  // namespace

double SegFcnHead::forward(const Tensor& map, const LabelRaster& labels, Tensor* dmap, double weight,
                           int* n_valid) {
    return raster_ce(conv, map, labels, {}, dmap, weight, n_valid);
}

void StuffHead::build(int map_channels, bool combined_mode, int num_base, int num_stuff, Rng& rng) {
    combined = combined_mode;
    num_foreground = combined_mode ? num_base : 0;
    const int out = combined_mode ? num_base + num_stuff : 2;
    conv.build(map_channels, out, 1, 1, 0, rng);
}

double StuffHead::forward(const Tensor& map, const LabelRaster& labels, Tensor* dmap, double weight,
                          int* n_valid) {
    std::vector<double> cell_weights;
    if (combined) {
        cell_weights.assign(static_cast<std::size_t>(conv.out_ch), 1.0);
        for (int i = num_foreground; i < conv.out_ch; ++i)
            cell_weights[static_cast<std::size_t>(i)] = background_weight;
    }
    return raster_ce(conv, map, labels, cell_weights, dmap, weight, n_valid);
}

double SceneHead::forward(const Tensor& map, int label, Tensor* dmap, double weight) {
    const Tensor pooled = nn::global_avg_pool(map);
    const Tensor logits = fc.forward(pooled);
    if (!dmap) return nn::softmax_cross_entropy(logits, label, nullptr, 0);
    Tensor dlogits({fc.out_dim});
    const double loss = nn::softmax_cross_entropy(logits, label, &dlogits, weight);
    const Tensor dpooled = fc.backward(pooled, dlogits);
    *dmap += nn::global_avg_pool_backward(map.shape, dpooled);
    return loss;
}

double RotationHead::forward(const Tensor& rotated_map, int k, Tensor* dmap, double weight) {
    check(k >= 0 && k < 4, "rotation label must be in {0,1,2,3}");
    const Tensor pooled = nn::global_avg_pool(rotated_map);
    const Tensor logits = fc.forward(pooled);
    if (!dmap) return nn::softmax_cross_entropy(logits, k, nullptr, 0);
    Tensor dlogits({4});
    const double loss = nn::softmax_cross_entropy(logits, k, &dlogits, weight);
    const Tensor dpooled = fc.backward(pooled, dlogits);
    *dmap += nn::global_avg_pool_backward(rotated_map.shape, dpooled);
    return loss;
}

double PatchLocationHead::forward(const Tensor& center_map, const Tensor& neighbor_map, int label,
                                  Tensor* dcenter_map, Tensor* dneighbor_map, double weight) {
    check(label >= 0 && label < 8, "patch location label must be in 0..7");
    const Tensor pc = nn::global_avg_pool(center_map);
    const Tensor pn = nn::global_avg_pool(neighbor_map);
    const int c = static_cast<int>(pc.numel());
    Tensor joint({2 * c});
    for (int i = 0; i < c; ++i) {
        joint[static_cast<std::size_t>(i)] = pc[static_cast<std::size_t>(i)];
        joint[static_cast<std::size_t>(c + i)] = pn[static_cast<std::size_t>(i)];
    }
    const Tensor logits = fc.forward(joint);
    if (!dcenter_map) return nn::softmax_cross_entropy(logits, label, nullptr, 0);
    Tensor dlogits({8});
    const double loss = nn::softmax_cross_entropy(logits, label, &dlogits, weight);
    const Tensor djoint = fc.backward(joint, dlogits);
    Tensor dpc({c}), dpn({c});
    for (int i = 0; i < c; ++i) {
        dpc[static_cast<std::size_t>(i)] = djoint[static_cast<std::size_t>(i)];
        dpn[static_cast<std::size_t>(i)] = djoint[static_cast<std::size_t>(c + i)];
    }
    *dcenter_map += nn::global_avg_pool_backward(center_map.shape, dpc);
    if (dneighbor_map) *dneighbor_map += nn::global_avg_pool_backward(neighbor_map.shape, dpn);
    return loss;
}

}  // namespace lrds
