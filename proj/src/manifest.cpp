#include "lrds/manifest.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lrds/error.hpp"
#include "lrds/rng.hpp"

namespace lrds {

using nlohmann::json;

const char* to_string(Kind k) {
    switch (k) {
        case Kind::object: return "object";
        case Kind::part: return "part";
        case Kind::stuff: return "stuff";
    }
    return "?";
}

const char* to_string(Split s) {
    switch (s) {
        case Split::base: return "base";
        case Split::novel_val: return "novel_val";
        case Split::novel_test: return "novel_test";
        case Split::dropped: return "dropped";
    }
    return "?";
}

const char* to_string(Subset s) {
    switch (s) {
        case Subset::base_train: return "base_train";
        case Subset::base_val: return "base_val";
        case Subset::novel_support: return "novel_support";
        case Subset::novel_query: return "novel_query";
    }
    return "?";
}

const char* to_string(HeadKind h) {
    switch (h) {
        case HeadKind::cls: return "cls";
        case HeadKind::attribute: return "attribute";
        case HeadKind::hierarchy: return "hierarchy";
        case HeadKind::part: return "part";
        case HeadKind::bbox: return "bbox";
        case HeadKind::seg_region: return "seg_region";
        case HeadKind::seg_fcn: return "seg_fcn";
        case HeadKind::stuff: return "stuff";
        case HeadKind::scene: return "scene";
        case HeadKind::rotation: return "rotation";
        case HeadKind::patch_location: return "patch_location";
    }
    return "?";
}

namespace {
template <typename E>
E enum_from_string(const std::string& s, const std::vector<E>& values, const char* what) {
    for (E v : values)
        if (s == to_string(v)) return v;
    raise("unknown ", what, ": '", s, "'");
}
}  // namespace

Kind kind_from_string(const std::string& s) {
    return enum_from_string<Kind>(s, {Kind::object, Kind::part, Kind::stuff}, "kind");
}

Split split_from_string(const std::string& s) {
    return enum_from_string<Split>(
        s, {Split::base, Split::novel_val, Split::novel_test, Split::dropped}, "split");
}

Subset subset_from_string(const std::string& s) {
    return enum_from_string<Subset>(
        s, {Subset::base_train, Subset::base_val, Subset::novel_support, Subset::novel_query},
        "subset");
}

HeadKind head_from_string(const std::string& s) {
    return enum_from_string<HeadKind>(s, all_heads(), "head");
}

const std::vector<HeadKind>& all_heads() {
    static const std::vector<HeadKind> heads = {
        HeadKind::cls,      HeadKind::attribute, HeadKind::hierarchy, HeadKind::part,
        HeadKind::bbox,     HeadKind::seg_region, HeadKind::seg_fcn,  HeadKind::stuff,
        HeadKind::scene,    HeadKind::rotation,  HeadKind::patch_location};
    return heads;
}

bool is_object_level(HeadKind h) {
    return h == HeadKind::cls || h == HeadKind::attribute || h == HeadKind::hierarchy ||
           h == HeadKind::part || h == HeadKind::bbox || h == HeadKind::seg_region;
}

bool is_image_level(HeadKind h) {
    return h == HeadKind::seg_fcn || h == HeadKind::stuff || h == HeadKind::scene;
}

bool is_self_supervised(HeadKind h) {
    return h == HeadKind::rotation || h == HeadKind::patch_location;
}

double default_head_weight(HeadKind h) {
    switch (h) {
        case HeadKind::cls: return 1.0;
        case HeadKind::attribute: return 25.0;
        case HeadKind::hierarchy: return 1.0;
        case HeadKind::scene: return 0.2;
        case HeadKind::part: return 25.0;
        case HeadKind::bbox: return 5.0;
        case HeadKind::seg_region: return 0.5;
        case HeadKind::seg_fcn: return 0.5;
        case HeadKind::stuff: return 0.5;
        case HeadKind::rotation: return 10.0;
        case HeadKind::patch_location: return 1.0;
    }
    return 1.0;
}

const CategoryRecord* BenchmarkManifest::find_category(std::int64_t id) const {
    auto it = std::lower_bound(categories.begin(), categories.end(), id,
                               [](const CategoryRecord& c, std::int64_t v) { return c.category_id < v; });
    return (it != categories.end() && it->category_id == id) ? &*it : nullptr;
}

const ImageRecord* BenchmarkManifest::find_image(std::int64_t id) const {
    auto it = std::lower_bound(images.begin(), images.end(), id,
                               [](const ImageRecord& r, std::int64_t v) { return r.image_id < v; });
    return (it != images.end() && it->image_id == id) ? &*it : nullptr;
}

const ObjectInstance* BenchmarkManifest::find_instance(std::int64_t id) const {
    auto it = std::lower_bound(instances.begin(), instances.end(), id,
                               [](const ObjectInstance& o, std::int64_t v) { return o.instance_id < v; });
    return (it != instances.end() && it->instance_id == id) ? &*it : nullptr;
}

std::int64_t BenchmarkManifest::count_subset(Subset s) const {
    std::int64_t n = 0;
    for (const auto& inst : instances)
        if (inst.subset == s) ++n;
    return n;
}

namespace {

json box_to_json(const Box& b) { return json::array({b.x, b.y, b.w, b.h}); }

Box box_from_json(const json& j) {
    check(j.is_array() && j.size() == 4, "box must be [x, y, w, h]");
    return Box{j[0].get<double>(), j[1].get<double>(), j[2].get<double>(), j[3].get<double>()};
}

json mask_to_json(const RleMask& m) {
    return json{{"h", m.height}, {"w", m.width}, {"counts", m.counts}};
}

RleMask mask_from_json(const json& j) {
    RleMask m;
    m.height = j.at("h").get<int>();
    m.width = j.at("w").get<int>();
    m.counts = j.at("counts").get<std::vector<std::int64_t>>();
    return m;
}

std::string bits_to_string(const std::vector<std::uint8_t>& bits) {
    std::string s(bits.size(), '0');
    for (std::size_t i = 0; i < bits.size(); ++i)
        if (bits[i]) s[i] = '1';
    return s;
}

std::vector<std::uint8_t> bits_from_string(const std::string& s) {
    std::vector<std::uint8_t> bits(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) {
        check(s[i] == '0' || s[i] == '1', "attribute bit string may contain only 0/1");
        bits[i] = s[i] == '1' ? 1 : 0;
    }
    return bits;
}

json masked_to_json(const std::set<HeadKind>& heads) {
    json a = json::array();
    for (HeadKind h : all_heads())
        if (heads.count(h)) a.push_back(to_string(h));
    return a;
}

std::set<HeadKind> masked_from_json(const json& a) {
    std::set<HeadKind> heads;
    for (const auto& s : a) heads.insert(head_from_string(s.get<std::string>()));
    return heads;
}

}  // namespace

std::string serialize_manifest(const BenchmarkManifest& m) {
    json doc;
    doc["schema_version"] = m.schema_version;
    doc["context_ratio"] = m.context_ratio;
    doc["seeds"] = json::object();
    for (const auto& [tag, seed] : m.seeds) doc["seeds"][tag] = seed;
    if (m.regime) {
        doc["regime"] = json{{"base_hash", m.regime->base_hash},
                             {"op", m.regime->op},
                             {"params", m.regime->params}};
    } else {
        doc["regime"] = "full";
    }
    if (!m.command.empty()) doc["command"] = m.command;
    doc["attribute_names"] = m.attribute_names;
    doc["scene_names"] = m.scene_names;

    json cats = json::array();
    for (const auto& c : m.categories) {
        json jc{{"id", c.category_id},      {"name", c.name},
                {"kind", to_string(c.kind)}, {"count", c.instance_count},
                {"split", to_string(c.split)}};
        jc["attributes"] = bits_to_string(c.attributes);
        jc["hierarchy"] = c.hierarchy_path;
        if (c.zero_train) jc["zero_train"] = true;
        cats.push_back(std::move(jc));
    }
    doc["categories"] = std::move(cats);

    json imgs = json::array();
    for (const auto& im : m.images) {
        json ji{{"id", im.image_id},
                {"uri", im.uri},
                {"width", im.width},
                {"height", im.height},
                {"instances", im.instance_ids}};
        if (im.scene_label) ji["scene"] = *im.scene_label;
        if (im.stuff_mask_uri) ji["stuff_mask"] = *im.stuff_mask_uri;
        if (!im.masked_heads.empty()) ji["masked"] = masked_to_json(im.masked_heads);
        imgs.push_back(std::move(ji));
    }
    doc["images"] = std::move(imgs);

    json insts = json::array();
    for (const auto& o : m.instances) {
        json jo{{"id", o.instance_id},       {"image", o.image_id},
                {"category", o.category_id}, {"tight", box_to_json(o.tight_box)},
                {"region", box_to_json(o.region_box)}, {"subset", to_string(o.subset)}};
        if (o.mask) jo["mask"] = mask_to_json(*o.mask);
        if (!o.part_labels.empty()) jo["parts"] = o.part_labels;
        if (!o.masked_heads.empty()) jo["masked"] = masked_to_json(o.masked_heads);
        insts.push_back(std::move(jo));
    }
    doc["instances"] = std::move(insts);
    return doc.dump();
}

BenchmarkManifest parse_manifest(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        raise("manifest is not valid JSON: ", e.what());
    }
    BenchmarkManifest m;
    try {
        m.schema_version = doc.at("schema_version").get<int>();
        check(m.schema_version == 1, "unsupported schema_version ", m.schema_version);
        m.context_ratio = doc.at("context_ratio").get<double>();
        for (const auto& [tag, v] : doc.at("seeds").items())
            m.seeds[tag] = v.get<std::uint64_t>();
        const json& reg = doc.at("regime");
        if (reg.is_string()) {
            check(reg.get<std::string>() == "full", "regime must be 'full' or an object");
        } else {
            RegimeProvenance p;
            p.base_hash = reg.at("base_hash").get<std::string>();
            p.op = reg.at("op").get<std::string>();
            p.params = reg.at("params");
            m.regime = std::move(p);
        }
        if (doc.contains("command")) m.command = doc["command"].get<std::string>();
        m.attribute_names = doc.at("attribute_names").get<std::vector<std::string>>();
        m.scene_names = doc.at("scene_names").get<std::vector<std::string>>();
    } catch (const json::exception& e) {
        raise("manifest header: ", e.what());
    }

    std::size_t i = 0;
    try {
        for (const json& jc : doc.at("categories")) {
            CategoryRecord c;
            c.category_id = jc.at("id").get<std::int64_t>();
            c.name = jc.at("name").get<std::string>();
            c.kind = kind_from_string(jc.at("kind").get<std::string>());
            c.instance_count = jc.at("count").get<std::int64_t>();
            c.split = split_from_string(jc.at("split").get<std::string>());
            c.attributes = bits_from_string(jc.at("attributes").get<std::string>());
            c.hierarchy_path = jc.at("hierarchy").get<std::vector<std::string>>();
            c.zero_train = jc.value("zero_train", false);
            m.categories.push_back(std::move(c));
            ++i;
        }
    } catch (const std::exception& e) {
        raise("categories[", i, "]: ", e.what());
    }
    i = 0;
    try {
        for (const json& ji : doc.at("images")) {
            ImageRecord im;
            im.image_id = ji.at("id").get<std::int64_t>();
            im.uri = ji.at("uri").get<std::string>();
            im.width = ji.at("width").get<int>();
            im.height = ji.at("height").get<int>();
            im.instance_ids = ji.at("instances").get<std::vector<std::int64_t>>();
            if (ji.contains("scene")) im.scene_label = ji["scene"].get<int>();
            if (ji.contains("stuff_mask")) im.stuff_mask_uri = ji["stuff_mask"].get<std::string>();
            if (ji.contains("masked")) im.masked_heads = masked_from_json(ji["masked"]);
            m.images.push_back(std::move(im));
            ++i;
        }
    } catch (const std::exception& e) {
        raise("images[", i, "]: ", e.what());
    }
    i = 0;
    try {
        for (const json& jo : doc.at("instances")) {
            ObjectInstance o;
            o.instance_id = jo.at("id").get<std::int64_t>();
            o.image_id = jo.at("image").get<std::int64_t>();
            o.category_id = jo.at("category").get<std::int64_t>();
            o.tight_box = box_from_json(jo.at("tight"));
            o.region_box = box_from_json(jo.at("region"));
            o.subset = subset_from_string(jo.at("subset").get<std::string>());
            if (jo.contains("mask")) o.mask = mask_from_json(jo["mask"]);
            if (jo.contains("parts")) o.part_labels = jo["parts"].get<std::vector<std::int64_t>>();
            if (jo.contains("masked")) o.masked_heads = masked_from_json(jo["masked"]);
            m.instances.push_back(std::move(o));
            ++i;
        }
    } catch (const std::exception& e) {
        raise("instances[", i, "]: ", e.what());
    }
    return m;
}

void save_manifest(const BenchmarkManifest& m, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open '", path, "' for writing");
    out << serialize_manifest(m);
    check(out.good(), "write to '", path, "' failed");
}

BenchmarkManifest load_manifest(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open manifest '", path, "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    try {
        return parse_manifest(buf.str());
    } catch (const Error& e) {
        raise(path, ": ", e.what());
    }
}

std::string manifest_hash(const BenchmarkManifest& m) {
    const std::uint64_t h = fnv1a64(serialize_manifest(m));
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace {
constexpr double kGeomEps = 1e-9;

template <typename... Args>
void violation(std::vector<std::string>& out, const Args&... args) {
    std::ostringstream os;
    detail::format_into(os, args...);
    out.push_back(os.str());
}
}  // namespace

std::vector<std::string> validate_manifest(const BenchmarkManifest& m) {
    std::vector<std::string> v;
    if (!(m.context_ratio > 0))
        violation(v, "context_ratio must be positive, got ", m.context_ratio);

    std::size_t attr_len = m.attribute_names.size();
    bool attr_len_known = !m.attribute_names.empty();
    for (const auto& c : m.categories) {
        const std::string id = "category " + std::to_string(c.category_id) + " ('" + c.name + "')";
        if (c.instance_count < 0) violation(v, id, ": negative instance_count");
        switch (c.split) {
            case Split::base:
                if (c.kind != Kind::object || c.instance_count <= 100)
                    violation(v, id, ": split=base requires kind=object and count > 100, has kind=",
                              to_string(c.kind), " count=", c.instance_count);
                break;
            case Split::novel_val:
            case Split::novel_test:
                if (c.kind != Kind::object || c.instance_count < 15 || c.instance_count > 100)
                    violation(v, id, ": novel split requires kind=object and 15 <= count <= 100, has kind=",
                              to_string(c.kind), " count=", c.instance_count);
                break;
            case Split::dropped:
                if (c.kind == Kind::object && c.instance_count >= 15)
                    violation(v, id, ": dropped object category has count ", c.instance_count,
                              " >= 15");
                break;
        }
        if (c.kind == Kind::object) {
            if (c.hierarchy_path.size() != 4)
                violation(v, id, ": hierarchy_path has ", c.hierarchy_path.size(),
                          " levels, expected 4");
            if (!attr_len_known && !c.attributes.empty()) {
                attr_len = c.attributes.size();
                attr_len_known = true;
            }
            if (attr_len_known && c.attributes.size() != attr_len)
                violation(v, id, ": attribute vector length ", c.attributes.size(),
                          " != vocabulary size ", attr_len);
        }
    }

    std::map<std::int64_t, const ImageRecord*> image_by_id;
    for (const auto& im : m.images) {
        const std::string id = "image " + std::to_string(im.image_id);
        if (!image_by_id.emplace(im.image_id, &im).second) violation(v, id, ": duplicate id");
        if (im.width <= 0 || im.height <= 0)
            violation(v, id, ": non-positive dimensions ", im.width, "x", im.height);
        for (std::int64_t iid : im.instance_ids) {
            const ObjectInstance* o = m.find_instance(iid);
            if (!o)
                violation(v, id, ": references missing instance ", iid);
            else if (o->image_id != im.image_id)
                violation(v, id, ": lists instance ", iid, " that belongs to image ", o->image_id);
        }
        if (im.scene_label && !m.scene_names.empty() &&
            (*im.scene_label < 0 || *im.scene_label >= static_cast<int>(m.scene_names.size())))
            violation(v, id, ": scene label ", *im.scene_label, " outside vocabulary");
    }

    std::map<std::int64_t, std::map<Subset, std::int64_t>> subset_counts;
    std::set<std::int64_t> seen_instances;
    for (const auto& o : m.instances) {
        const std::string id = "instance " + std::to_string(o.instance_id);
        if (!seen_instances.insert(o.instance_id).second) violation(v, id, ": duplicate id");
        const CategoryRecord* cat = m.find_category(o.category_id);
        if (!cat) {
            violation(v, id, ": references missing category ", o.category_id);
        } else {
            const bool base_cat = cat->split == Split::base;
            const bool novel_cat = cat->split == Split::novel_val || cat->split == Split::novel_test;
            if (!base_cat && !novel_cat)
                violation(v, id, ": belongs to dropped category ", cat->name);
            if (base_cat && o.subset != Subset::base_train && o.subset != Subset::base_val)
                violation(v, id, ": base-category instance tagged ", to_string(o.subset));
            if (novel_cat && o.subset != Subset::novel_support && o.subset != Subset::novel_query)
                violation(v, id, ": novel-category instance tagged ", to_string(o.subset));
            subset_counts[o.category_id][o.subset]++;
        }
        auto img_it = image_by_id.find(o.image_id);
        if (img_it == image_by_id.end()) {
            violation(v, id, ": references missing image ", o.image_id);
        } else {
            const ImageRecord& im = *img_it->second;
            if (std::find(im.instance_ids.begin(), im.instance_ids.end(), o.instance_id) ==
                im.instance_ids.end())
                violation(v, id, ": not listed by its image ", o.image_id);
            if (o.tight_box.w <= 0 || o.tight_box.h <= 0)
                violation(v, id, ": degenerate tight box");
            if (!box_in_image(o.tight_box, im.width, im.height, kGeomEps))
                violation(v, id, ": tight box outside image bounds");
            if (!box_contains(o.region_box, o.tight_box, kGeomEps))
                violation(v, id, ": region box does not contain tight box");
            if (!box_in_image(o.region_box, im.width, im.height, kGeomEps))
                violation(v, id, ": region box outside image bounds");
            if (o.mask) {
                if (o.mask->height != im.height || o.mask->width != im.width)
                    violation(v, id, ": mask dimensions ", o.mask->width, "x", o.mask->height,
                              " != image ", im.width, "x", im.height);
                else if (o.mask->foreground_count() == 0)
                    violation(v, id, ": mask is empty");
            }
        }
    }

    for (const auto& c : m.categories) {
        const auto it = subset_counts.find(c.category_id);
        const auto count_of = [&](Subset s) -> std::int64_t {
            if (it == subset_counts.end()) return 0;
            auto sit = it->second.find(s);
            return sit == it->second.end() ? 0 : sit->second;
        };
        const std::string id = "category " + std::to_string(c.category_id) + " ('" + c.name + "')";
        if (c.split == Split::novel_val || c.split == Split::novel_test) {
            const std::int64_t support = count_of(Subset::novel_support);
            if (support != 5)
                violation(v, id, ": has ", support, " support instances, expected 5");
        }
        if (c.split == Split::base) {
            const std::int64_t train = count_of(Subset::base_train);
            const std::int64_t val = count_of(Subset::base_val);
            if (m.is_full()) {
                const std::int64_t total = train + val;
                if (val != total / 6)
                    violation(v, id, ": base_val count ", val, " != floor(", total, "/6)");
            }
            if (train == 0 && !c.zero_train)
                violation(v, id, ": no training instances but zero_train flag not set");
            if (train > 0 && c.zero_train)
                violation(v, id, ": zero_train flag set but ", train, " training instances exist");
        }
    }
    return v;
}

double SupervisionConfig::weight(HeadKind h) const {
    auto it = weights.find(h);
    return it != weights.end() ? it->second : default_head_weight(h);
}

double SupervisionConfig::fraction(HeadKind h) const {
    auto it = labeled_fraction.find(h);
    return it != labeled_fraction.end() ? it->second : 1.0;
}

void SupervisionConfig::validate() const {
    check(heads.count(HeadKind::cls) == 1, "supervision config: cls head must be enabled");
    check(weight(HeadKind::cls) == 1.0, "supervision config: cls weight must be 1.0");
    for (const auto& [h, w] : weights)
        check(w >= 0, "supervision config: negative weight for ", to_string(h));
    for (const auto& [h, f] : labeled_fraction)
        check(f >= 0 && f <= 1, "supervision config: labeled fraction for ", to_string(h),
              " outside [0, 1]");
    if (mode == Mode::CL) {
        std::set<HeadKind> aux(heads);
        aux.erase(HeadKind::cls);
        std::set<HeadKind> order(cl_order.begin(), cl_order.end());
        check(order.size() == cl_order.size(), "supervision config: CL order repeats a head");
        check(order == aux, "supervision config: CL order must cover exactly the enabled "
                            "auxiliary heads");
    }
}

json SupervisionConfig::to_json() const {
    json j;
    json h = json::array();
    for (HeadKind k : all_heads())
        if (heads.count(k)) h.push_back(to_string(k));
    j["heads"] = std::move(h);
    j["weights"] = json::object();
    for (const auto& [k, w] : weights) j["weights"][to_string(k)] = w;
    j["labeled_fraction"] = json::object();
    for (const auto& [k, f] : labeled_fraction) j["labeled_fraction"][to_string(k)] = f;
    j["mode"] = mode == Mode::MTL ? "mtl" : "cl";
    json order = json::array();
    for (HeadKind k : cl_order) order.push_back(to_string(k));
    j["cl_order"] = std::move(order);
    return j;
}

SupervisionConfig SupervisionConfig::from_json(const json& j) {
    SupervisionConfig c;
    c.heads.clear();
    for (const auto& s : j.at("heads")) c.heads.insert(head_from_string(s.get<std::string>()));
    if (j.contains("weights"))
        for (const auto& [k, w] : j["weights"].items())
            c.weights[head_from_string(k)] = w.get<double>();
    if (j.contains("labeled_fraction"))
        for (const auto& [k, f] : j["labeled_fraction"].items())
            c.labeled_fraction[head_from_string(k)] = f.get<double>();
    const std::string mode = j.value("mode", "mtl");
    check(mode == "mtl" || mode == "cl", "supervision config: mode must be mtl or cl");
    c.mode = mode == "mtl" ? Mode::MTL : Mode::CL;
    if (j.contains("cl_order"))
        for (const auto& s : j["cl_order"]) c.cl_order.push_back(head_from_string(s.get<std::string>()));
    c.validate();
    return c;
}

}  // namespace lrds
