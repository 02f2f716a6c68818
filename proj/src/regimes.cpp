#include "lrds/regimes.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "lrds/error.hpp"
#include "lrds/rng.hpp"

namespace lrds {

using nlohmann::json;

namespace {

void require_full(const BenchmarkManifest& m, const char* op) {
    check(m.is_full(), op, ": input manifest already carries regime '", m.regime->op,
          "'; regimes derive from full manifests only");
}

void require_ratio(double r, const char* op) {
    check(r > 0.0 && r <= 1.0, op, ": keep ratio ", r, " outside (0, 1]");
}

std::int64_t round_half_up(double x) { return static_cast<std::int64_t>(std::floor(x + 0.5)); }

// Images that contribute base-training instances.
std::vector<std::int64_t> training_image_ids(const BenchmarkManifest& m) {
    std::set<std::int64_t> ids;
    for (const auto& inst : m.instances)
        if (inst.subset == Subset::base_train) ids.insert(inst.image_id);
    return {ids.begin(), ids.end()};
}

// Removes the given instances, prunes images that end up empty, and refreshes
// the zero_train flags on base categories.
void drop_instances(BenchmarkManifest& m, const std::set<std::int64_t>& removed) {
    if (!removed.empty()) {
        std::erase_if(m.instances,
                      [&](const ObjectInstance& o) { return removed.count(o.instance_id) > 0; });
        for (auto& im : m.images)
            std::erase_if(im.instance_ids, [&](std::int64_t id) { return removed.count(id) > 0; });
        std::erase_if(m.images, [](const ImageRecord& im) { return im.instance_ids.empty(); });
    }
    std::map<std::int64_t, std::int64_t> train_count;
    for (const auto& inst : m.instances)
        if (inst.subset == Subset::base_train) train_count[inst.category_id]++;
    for (auto& c : m.categories)
        if (c.split == Split::base) c.zero_train = train_count[c.category_id] == 0;
}

BenchmarkManifest derive(const BenchmarkManifest& full, const char* op, json params) {
    BenchmarkManifest out = full;
    out.regime = RegimeProvenance{manifest_hash(full), op, std::move(params)};
    out.command.clear();
    return out;
}

}  // namespace

BenchmarkManifest scarce_class(const BenchmarkManifest& full, double keep_ratio) {
    require_full(full, "scarce_class");
    require_ratio(keep_ratio, "scarce_class");
    BenchmarkManifest out = derive(full, "scarce_class", json{{"keep_ratio", keep_ratio}});

    std::vector<const CategoryRecord*> base;
    for (const auto& c : out.categories)
        if (c.split == Split::base) base.push_back(&c);
    std::sort(base.begin(), base.end(), [](const CategoryRecord* a, const CategoryRecord* b) {
        if (a->instance_count != b->instance_count) return a->instance_count < b->instance_count;
        return a->category_id < b->category_id;
    });
    const auto n_remove = static_cast<std::size_t>(
        std::floor((1.0 - keep_ratio) * static_cast<double>(base.size())));
    std::set<std::int64_t> removed_cats;
    for (std::size_t i = 0; i < n_remove; ++i) removed_cats.insert(base[i]->category_id);

    std::set<std::int64_t> removed_insts;
    for (const auto& inst : out.instances)
        if (removed_cats.count(inst.category_id)) removed_insts.insert(inst.instance_id);
    std::erase_if(out.categories,
                  [&](const CategoryRecord& c) { return removed_cats.count(c.category_id) > 0; });
    drop_instances(out, removed_insts);
    return out;
}

BenchmarkManifest scarce_image(const BenchmarkManifest& full, double keep_ratio, std::uint64_t seed) {
    require_full(full, "scarce_image");
    require_ratio(keep_ratio, "scarce_image");
    BenchmarkManifest out =
        derive(full, "scarce_image", json{{"keep_ratio", keep_ratio}, {"seed", seed}});

    const auto train_images = training_image_ids(out);
    const auto n_keep = static_cast<std::size_t>(
        round_half_up(keep_ratio * static_cast<double>(train_images.size())));
    Rng rng(derive_seed(seed, "scarce_image"));
    const auto order = rng.sample_indices(train_images.size(), train_images.size());
    std::set<std::int64_t> kept_images;
    for (std::size_t i = 0; i < n_keep; ++i) kept_images.insert(train_images[order[i]]);

    std::set<std::int64_t> removed_insts;
    for (const auto& inst : out.instances)
        if (inst.subset == Subset::base_train && !kept_images.count(inst.image_id))
            removed_insts.insert(inst.instance_id);
    drop_instances(out, removed_insts);
    return out;
}

BenchmarkManifest scarce_class_adjust(const BenchmarkManifest& full, double keep_ratio,
                                      std::uint64_t seed) {
    require_full(full, "scarce_class_adjust");
    require_ratio(keep_ratio, "scarce_class_adjust");
    const std::int64_t target = scarce_image(full, keep_ratio, seed).count_subset(Subset::base_train);

    BenchmarkManifest out = scarce_class(full, keep_ratio);
    out.regime = RegimeProvenance{manifest_hash(full), "scarce_class_adjust",
                                  json{{"keep_ratio", keep_ratio}, {"seed", seed}}};
    const std::int64_t current = out.count_subset(Subset::base_train);
    check(target <= current, "scarce_class_adjust: scarce_image target ", target,
          " exceeds scarce_class training total ", current);
    const double rate = current == 0 ? 1.0 : static_cast<double>(target) / static_cast<double>(current);

    std::map<std::int64_t, std::vector<std::int64_t>> train_by_cat;  // sorted ids per category
    for (const auto& inst : out.instances)
        if (inst.subset == Subset::base_train)
            train_by_cat[inst.category_id].push_back(inst.instance_id);

    const std::uint64_t adjust_seed = derive_seed(seed, "scarce_adjust");
    std::vector<std::int64_t> kept, dropped;
    for (const auto& [cat_id, ids] : train_by_cat) {
        const std::int64_t n_keep = round_half_up(rate * static_cast<double>(ids.size()));
        Rng rng(derive_seed(adjust_seed, static_cast<std::uint64_t>(cat_id)));
        const auto order = rng.sample_indices(ids.size(), ids.size());
        for (std::size_t i = 0; i < ids.size(); ++i) {
            if (static_cast<std::int64_t>(i) < n_keep)
                kept.push_back(ids[order[i]]);
            else
                dropped.push_back(ids[order[i]]);
        }
    }
    std::sort(kept.begin(), kept.end());
    std::sort(dropped.begin(), dropped.end());

    // Per-category rounding drifts by a few instances; correct one draw at a
    // time so the total matches the scarce_image counterpart exactly.
    Rng drift(derive_seed(adjust_seed, "drift"));
    while (static_cast<std::int64_t>(kept.size()) > target) {
        const std::size_t i = static_cast<std::size_t>(drift.next_below(kept.size()));
        dropped.push_back(kept[i]);
        kept.erase(kept.begin() + static_cast<std::ptrdiff_t>(i));
    }
    while (static_cast<std::int64_t>(kept.size()) < target) {
        check(!dropped.empty(), "scarce_class_adjust: nothing left to restore");
        const std::size_t i = static_cast<std::size_t>(drift.next_below(dropped.size()));
        kept.push_back(dropped[i]);
        dropped.erase(dropped.begin() + static_cast<std::ptrdiff_t>(i));
    }

    std::set<std::int64_t> removed(dropped.begin(), dropped.end());
    drop_instances(out, removed);
    return out;
}

BenchmarkManifest subsample_supervision(const BenchmarkManifest& full, HeadKind head,
                                        double fraction, std::uint64_t seed) {
    require_full(full, "subsample_supervision");
    check(fraction >= 0.0 && fraction <= 1.0, "subsample_supervision: fraction ", fraction,
          " outside [0, 1]");
    check(head != HeadKind::cls && !is_self_supervised(head),
          "subsample_supervision: head ", to_string(head), " has no annotation to subsample");

    BenchmarkManifest out = derive(
        full, "supervision_fraction",
        json{{"head", to_string(head)}, {"fraction", fraction}, {"seed", seed}});
    Rng rng(derive_seed(derive_seed(seed, "supervision_fraction"), fnv1a64(to_string(head))));

    if (is_object_level(head)) {
        std::vector<std::size_t> unit_idx;
        for (std::size_t i = 0; i < out.instances.size(); ++i)
            if (out.instances[i].subset == Subset::base_train) unit_idx.push_back(i);
        const auto n_keep = static_cast<std::size_t>(
            round_half_up(fraction * static_cast<double>(unit_idx.size())));
        const auto order = rng.sample_indices(unit_idx.size(), unit_idx.size());
        for (std::size_t k = n_keep; k < order.size(); ++k)
            out.instances[unit_idx[order[k]]].masked_heads.insert(head);
    } else {
        const auto train_images = training_image_ids(out);
        const auto n_keep = static_cast<std::size_t>(
            round_half_up(fraction * static_cast<double>(train_images.size())));
        const auto order = rng.sample_indices(train_images.size(), train_images.size());
        std::set<std::int64_t> masked;
        for (std::size_t k = n_keep; k < order.size(); ++k) masked.insert(train_images[order[k]]);
        for (auto& im : out.images)
            if (masked.count(im.image_id)) im.masked_heads.insert(head);
    }
    return out;
}

PortionRow instance_portion_report(const BenchmarkManifest& derived, const BenchmarkManifest& full) {
    check(full.is_full(), "instance_portion_report: reference manifest is not full");
    PortionRow row;
    const std::int64_t full_train = full.count_subset(Subset::base_train);
    check(full_train > 0, "instance_portion_report: full manifest has no training instances");
    if (derived.is_full()) {
        row.regime = "full";
        row.ratio = 1.0;
        row.instances = full_train;
        row.portion_pct = 100.0;
        check(manifest_hash(derived) == manifest_hash(full),
              "instance_portion_report: manifests differ but derived one has no provenance");
        return row;
    }
    check(derived.regime->base_hash == manifest_hash(full),
          "instance_portion_report: derived manifest was built from base ",
          derived.regime->base_hash, ", not from the given full manifest");
    row.regime = derived.regime->op;
    if (derived.regime->params.contains("keep_ratio"))
        row.ratio = derived.regime->params["keep_ratio"].get<double>();
    else if (derived.regime->params.contains("fraction"))
        row.ratio = derived.regime->params["fraction"].get<double>();
    row.instances = derived.count_subset(Subset::base_train);
    row.portion_pct = 100.0 * static_cast<double>(row.instances) / static_cast<double>(full_train);
    return row;
}

std::string portion_csv(const std::vector<PortionRow>& rows) {
    std::ostringstream os;
    os << "regime,ratio,instances,portion_pct\n";
    for (const auto& r : rows) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%.4f,%lld,%.4f", r.ratio,
                      static_cast<long long>(r.instances), r.portion_pct);
        os << r.regime << "," << buf << "\n";
    }
    return os.str();
}

}  // namespace lrds
