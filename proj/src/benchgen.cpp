#include "lrds/benchgen.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "lrds/error.hpp"
#include "lrds/rng.hpp"

namespace lrds {

namespace {

// Tight bounding box of the mask foreground, in real coordinates where pixel
// (r, c) occupies [c, c+1) x [r, r+1).
Box mask_bbox(const RleMask& mask) {
    const auto pixels = rle_decode(mask);
    int min_r = mask.height, max_r = -1, min_c = mask.width, max_c = -1;
    for (int r = 0; r < mask.height; ++r) {
        for (int c = 0; c < mask.width; ++c) {
            if (!pixels[static_cast<std::size_t>(r) * mask.width + c]) continue;
            min_r = std::min(min_r, r);
            max_r = std::max(max_r, r);
            min_c = std::min(min_c, c);
            max_c = std::max(max_c, c);
        }
    }
    check(max_r >= 0, "mask_bbox: empty mask");
    return Box{static_cast<double>(min_c), static_cast<double>(min_r),
               static_cast<double>(max_c + 1 - min_c), static_cast<double>(max_r + 1 - min_r)};
}

}  // namespace

std::vector<std::string> normalize_hierarchy(std::vector<std::string> path, const std::string& name) {
    if (path.empty()) path.push_back(name);
    if (path.size() < 4) {
        path.resize(4, path.back());
    } else if (path.size() > 4) {
        std::vector<std::string> kept;
        const std::size_t last = path.size() - 1;
        for (int i = 0; i < 4; ++i) {
            const std::size_t idx =
                static_cast<std::size_t>(std::llround(static_cast<double>(i) * last / 3.0));
            kept.push_back(path[idx]);
        }
        path = std::move(kept);
    }
    return path;
}

std::vector<CategoryRecord> filter_categories(const RawAnnotationSet& raw) {
    raw.validate();
    std::map<std::string, std::int64_t> counts;
    for (const auto& [name, meta] : raw.category_meta) counts[name] = 0;
    for (const auto& im : raw.images) {
        for (const auto& o : im.objects) {
            counts[o.name]++;
            for (const auto& p : o.parts) counts[p]++;
        }
        for (const auto& s : im.stuff) counts[s.name]++;
    }

    const std::size_t attr_len = raw.attribute_names.size();
    std::vector<CategoryRecord> cats;
    std::int64_t next_id = 0;
    for (const auto& [name, count] : counts) {  // map order: ascending name
        const RawCategoryMeta& meta = raw.category_meta.at(name);
        CategoryRecord c;
        c.category_id = next_id++;
        c.name = name;
        c.kind = meta.kind;
        c.instance_count = count;
        if (meta.kind == Kind::object) {
            c.attributes = meta.attributes;
            if (attr_len > 0) {
                check(c.attributes.empty() || c.attributes.size() == attr_len, "category '", name,
                      "': attribute vector length ", c.attributes.size(),
                      " != vocabulary size ", attr_len);
                c.attributes.resize(attr_len, 0);
            }
            c.hierarchy_path = normalize_hierarchy(meta.hierarchy, name);
        }
        const bool kept = meta.kind == Kind::object && count >= kMinInstances;
        if (kept)
            c.split = count > kBaseThreshold ? Split::base : Split::novel_val;  // partition pending
        else
            c.split = Split::dropped;
        cats.push_back(std::move(c));
    }
    return cats;
}

SplitSummary split_base_novel(std::vector<CategoryRecord>& categories, std::uint64_t novel_split_seed) {
    SplitSummary summary;
    std::vector<std::size_t> novel_idx;
    for (std::size_t i = 0; i < categories.size(); ++i) {
        CategoryRecord& c = categories[i];
        if (c.split == Split::dropped) {
            summary.dropped++;
            continue;
        }
        if (c.instance_count > kBaseThreshold) {
            c.split = Split::base;
            summary.base++;
        } else {
            novel_idx.push_back(i);
        }
    }
    Rng rng(novel_split_seed);
    const std::int64_t n_novel = static_cast<std::int64_t>(novel_idx.size());
    const std::int64_t n_val =
        static_cast<std::int64_t>(std::floor(kNovelValShare * static_cast<double>(n_novel) + 0.5));
    const auto order = rng.sample_indices(novel_idx.size(), novel_idx.size());
    for (std::int64_t k = 0; k < n_novel; ++k) {
        CategoryRecord& c = categories[novel_idx[order[static_cast<std::size_t>(k)]]];
        c.split = k < n_val ? Split::novel_val : Split::novel_test;
    }
    summary.novel_val = n_val;
    summary.novel_test = n_novel - n_val;
    summary.novel_empty_warning = n_novel == 0;
    return summary;
}

void assign_subsets(BenchmarkManifest& m, std::uint64_t global_seed) {
    const std::uint64_t base_val_seed = derive_seed(global_seed, "base_val");
    const std::uint64_t support_seed = derive_seed(global_seed, "support");

    std::map<std::int64_t, std::vector<ObjectInstance*>> by_category;
    for (auto& inst : m.instances) by_category[inst.category_id].push_back(&inst);

    for (auto& [cat_id, insts] : by_category) {
        const CategoryRecord* cat = m.find_category(cat_id);
        check(cat, "assign_subsets: instance references missing category ", cat_id);
        std::sort(insts.begin(), insts.end(), [](const ObjectInstance* a, const ObjectInstance* b) {
            return a->instance_id < b->instance_id;
        });
        const std::size_t n = insts.size();
        if (cat->split == Split::base) {
            const std::size_t n_val = n / 6;
            Rng rng(derive_seed(base_val_seed, static_cast<std::uint64_t>(cat_id)));
            const auto chosen = rng.sample_indices(n, n_val);
            for (auto* inst : insts) inst->subset = Subset::base_train;
            for (std::size_t idx : chosen) insts[idx]->subset = Subset::base_val;
        } else if (cat->split == Split::novel_val || cat->split == Split::novel_test) {
            check(n >= kSupportPerNovel + 1, "novel category '", cat->name, "' has only ", n,
                  " instances; needs ", kSupportPerNovel, " support plus at least one query");
            Rng rng(derive_seed(support_seed, static_cast<std::uint64_t>(cat_id)));
            const auto chosen = rng.sample_indices(n, kSupportPerNovel);
            for (auto* inst : insts) inst->subset = Subset::novel_query;
            for (std::size_t idx : chosen) insts[idx]->subset = Subset::novel_support;
        } else {
            raise("assign_subsets: instance of dropped category '", cat->name, "'");
        }
    }
}

BuildResult build_manifest(const RawAnnotationSet& raw, double gamma, std::uint64_t global_seed) {
    check(gamma >= 1.0, "context ratio must be >= 1, got ", gamma);
    BuildResult result;
    BenchmarkManifest& m = result.manifest;
    m.context_ratio = gamma;
    m.attribute_names = raw.attribute_names;
    m.seeds["global"] = global_seed;
    for (const char* tag : {"novel_split", "base_val", "support", "jitter"})
        m.seeds[tag] = derive_seed(global_seed, tag);

    m.categories = filter_categories(raw);
    split_base_novel(m.categories, m.seeds["novel_split"]);

    std::map<std::string, std::int64_t> cat_id_by_name;
    for (const auto& c : m.categories) cat_id_by_name[c.name] = c.category_id;

    // Scene vocabulary: sorted unique names.
    std::set<std::string> scenes;
    for (const auto& im : raw.images)
        if (im.scene) scenes.insert(*im.scene);
    m.scene_names.assign(scenes.begin(), scenes.end());
    std::map<std::string, int> scene_index;
    for (std::size_t i = 0; i < m.scene_names.size(); ++i)
        scene_index[m.scene_names[i]] = static_cast<int>(i);

    const std::uint64_t jitter_seed = m.seeds["jitter"];
    for (const auto& rim : raw.images) {
        ImageRecord im;
        im.image_id = rim.image_id;
        im.uri = rim.uri;
        im.width = rim.width;
        im.height = rim.height;
        if (rim.scene) im.scene_label = scene_index.at(*rim.scene);
        if (rim.stuff_mask_uri) im.stuff_mask_uri = rim.stuff_mask_uri;

        for (const auto& ro : rim.objects) {
            const std::int64_t cat_id = cat_id_by_name.at(ro.name);
            const CategoryRecord* cat = m.find_category(cat_id);
            if (!cat || cat->split == Split::dropped) continue;

            ObjectInstance inst;
            inst.instance_id = ro.object_id;
            inst.image_id = rim.image_id;
            inst.category_id = cat_id;
            inst.tight_box = mask_bbox(ro.mask);
            Rng rng(derive_seed(jitter_seed, static_cast<std::uint64_t>(ro.object_id)));
            inst.region_box = enlarge_and_jitter(inst.tight_box, rim.width, rim.height, gamma, rng);
            inst.mask = ro.mask;
            std::set<std::int64_t> part_ids;
            for (const auto& pname : ro.parts) part_ids.insert(cat_id_by_name.at(pname));
            inst.part_labels.assign(part_ids.begin(), part_ids.end());
            im.instance_ids.push_back(inst.instance_id);
            m.instances.push_back(std::move(inst));
        }

        if (!rim.stuff.empty() && !rim.stuff_mask_uri) {
            LabelRaster raster = make_raster(rim.height, rim.width);
            for (const auto& s : rim.stuff) {  // later regions overwrite earlier on overlap
                const auto pixels = rle_decode(s.mask);
                const std::int32_t label = static_cast<std::int32_t>(cat_id_by_name.at(s.name));
                for (std::size_t p = 0; p < pixels.size(); ++p)
                    if (pixels[p]) raster.labels[p] = label;
            }
            result.stuff_rasters.emplace(rim.image_id, std::move(raster));
        }
        m.images.push_back(std::move(im));
    }

    std::sort(m.images.begin(), m.images.end(),
              [](const ImageRecord& a, const ImageRecord& b) { return a.image_id < b.image_id; });
    std::sort(m.instances.begin(), m.instances.end(),
              [](const ObjectInstance& a, const ObjectInstance& b) {
                  return a.instance_id < b.instance_id;
              });

    assign_subsets(m, global_seed);

    const auto violations = validate_manifest(m);
    if (!violations.empty())
        raise("build_manifest produced an inconsistent manifest: ", violations.front(), " (",
              violations.size(), " violations total)");
    return result;
}

}  // namespace lrds
