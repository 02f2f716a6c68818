#include "lrds/raw.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "lrds/error.hpp"

namespace lrds {

using nlohmann::json;
namespace fs = std::filesystem;

void RawAnnotationSet::validate() const {
    std::set<std::string> unknown;
    std::vector<std::string> empty_masks;
    for (const auto& im : images) {
        for (const auto& o : im.objects) {
            if (!category_meta.count(o.name)) unknown.insert(o.name);
            if (o.mask.foreground_count() == 0)
                empty_masks.push_back(o.name + "#" + std::to_string(o.object_id));
            for (const auto& p : o.parts)
                if (!category_meta.count(p)) unknown.insert(p);
        }
        for (const auto& s : im.stuff)
            if (!category_meta.count(s.name)) unknown.insert(s.name);
    }
    if (!unknown.empty()) {
        std::ostringstream os;
        os << "categories with unknown kind:";
        for (const auto& n : unknown) os << " '" << n << "'";
        raise(os.str());
    }
    if (!empty_masks.empty()) {
        std::ostringstream os;
        os << "objects with empty masks:";
        for (const auto& n : empty_masks) os << " " << n;
        raise(os.str());
    }
}

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open '", path, "'");
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::uint8_t> bits_from_string(const std::string& s) {
    std::vector<std::uint8_t> bits(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) bits[i] = s[i] == '1' ? 1 : 0;
    return bits;
}

RleMask mask_from_fixture(const json& jo, int img_h, int img_w) {
    if (jo.contains("mask")) {
        const json& jm = jo["mask"];
        RleMask m;
        m.height = jm.at("h").get<int>();
        m.width = jm.at("w").get<int>();
        m.counts = jm.at("counts").get<std::vector<std::int64_t>>();
        return m;
    }
    // "box": [x, y, w, h] expands to a filled integer rectangle.
    const json& jb = jo.at("box");
    check(jb.is_array() && jb.size() == 4, "object box must be [x, y, w, h]");
    const int x0 = jb[0].get<int>(), y0 = jb[1].get<int>();
    const int w = jb[2].get<int>(), h = jb[3].get<int>();
    check(x0 >= 0 && y0 >= 0 && w > 0 && h > 0 && x0 + w <= img_w && y0 + h <= img_h,
          "object box outside image");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(img_h) * img_w, 0);
    for (int r = y0; r < y0 + h; ++r)
        std::fill_n(pixels.begin() + static_cast<std::size_t>(r) * img_w + x0, w, 1);
    return rle_encode(pixels, img_h, img_w);
}

RawCategoryMeta category_meta_from_json(const json& jc) {
    RawCategoryMeta meta;
    meta.name = jc.at("name").get<std::string>();
    meta.kind = kind_from_string(jc.at("kind").get<std::string>());
    if (jc.contains("attributes")) meta.attributes = bits_from_string(jc["attributes"].get<std::string>());
    if (jc.contains("hierarchy")) meta.hierarchy = jc["hierarchy"].get<std::vector<std::string>>();
    return meta;
}

}  // namespace

RawAnnotationSet parse_fixture(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::exception& e) {
        raise("fixture is not valid JSON: ", e.what());
    }
    RawAnnotationSet raw;
    if (doc.contains("attribute_names"))
        raw.attribute_names = doc["attribute_names"].get<std::vector<std::string>>();
    for (const json& jc : doc.at("categories")) {
        RawCategoryMeta meta = category_meta_from_json(jc);
        check(!raw.category_meta.count(meta.name), "duplicate category '", meta.name, "'");
        raw.category_meta.emplace(meta.name, std::move(meta));
    }
    std::set<std::int64_t> image_ids, object_ids;
    std::size_t idx = 0;
    try {
        for (const json& ji : doc.at("images")) {
            RawImage im;
            im.image_id = ji.at("id").get<std::int64_t>();
            check(image_ids.insert(im.image_id).second, "duplicate image id ", im.image_id);
            im.uri = ji.value("uri", "fixture:" + std::to_string(im.image_id));
            im.width = ji.at("width").get<int>();
            im.height = ji.at("height").get<int>();
            check(im.width > 0 && im.height > 0, "image dimensions must be positive");
            if (ji.contains("scene")) im.scene = ji["scene"].get<std::string>();
            if (ji.contains("stuff_mask")) im.stuff_mask_uri = ji["stuff_mask"].get<std::string>();
            if (ji.contains("objects")) {
                for (const json& jo : ji["objects"]) {
                    RawObject o;
                    o.object_id = jo.at("id").get<std::int64_t>();
                    check(object_ids.insert(o.object_id).second, "duplicate object id ", o.object_id);
                    o.name = jo.at("name").get<std::string>();
                    o.mask = mask_from_fixture(jo, im.height, im.width);
                    check(o.mask.height == im.height && o.mask.width == im.width,
                          "object ", o.object_id, ": mask dimensions do not match its image");
                    if (jo.contains("parts")) o.parts = jo["parts"].get<std::vector<std::string>>();
                    im.objects.push_back(std::move(o));
                }
            }
            if (ji.contains("stuff")) {
                for (const json& js : ji["stuff"]) {
                    RawStuffRegion s;
                    s.name = js.at("name").get<std::string>();
                    s.mask = mask_from_fixture(js, im.height, im.width);
                    im.stuff.push_back(std::move(s));
                }
            }
            raw.images.push_back(std::move(im));
            ++idx;
        }
    } catch (const json::exception& e) {
        raise("fixture images[", idx, "]: ", e.what());
    }
    raw.validate();
    return raw;
}

RawAnnotationSet load_fixture(const std::string& path) {
    try {
        return parse_fixture(read_file(path));
    } catch (const Error& e) {
        raise(path, ": ", e.what());
    }
}

RleMask rasterize_polygon(const std::vector<double>& xs, const std::vector<double>& ys, int height,
                          int width) {
    check(xs.size() == ys.size() && xs.size() >= 3, "polygon needs >= 3 vertices");
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(height) * width, 0);
    const std::size_t n = xs.size();
    for (int r = 0; r < height; ++r) {
        const double py = r + 0.5;
        std::vector<double> crossings;
        for (std::size_t i = 0; i < n; ++i) {
            const std::size_t j = (i + 1) % n;
            const double y0 = ys[i], y1 = ys[j];
            if ((y0 <= py && y1 > py) || (y1 <= py && y0 > py)) {
                const double t = (py - y0) / (y1 - y0);
                crossings.push_back(xs[i] + t * (xs[j] - xs[i]));
            }
        }
        std::sort(crossings.begin(), crossings.end());
        for (std::size_t k = 0; k + 1 < crossings.size(); k += 2) {
            int c0 = static_cast<int>(std::ceil(crossings[k] - 0.5));
            int c1 = static_cast<int>(std::floor(crossings[k + 1] - 0.5));
            c0 = std::max(c0, 0);
            c1 = std::min(c1, width - 1);
            for (int c = c0; c <= c1; ++c)
                pixels[static_cast<std::size_t>(r) * width + c] = 1;
        }
    }
    return rle_encode(pixels, height, width);
}

RawAnnotationSet load_annotation_dir(const std::string& root) {
    const fs::path base(root);
    check(fs::is_directory(base), "'", root, "' is not a directory");
    const fs::path meta_path = base / "categories.json";
    check(fs::exists(meta_path), "missing ", meta_path.string());

    RawAnnotationSet raw;
    json meta;
    try {
        meta = json::parse(read_file(meta_path.string()));
        if (meta.contains("attribute_names"))
            raw.attribute_names = meta["attribute_names"].get<std::vector<std::string>>();
        for (const json& jc : meta.at("categories")) {
            RawCategoryMeta cm = category_meta_from_json(jc);
            raw.category_meta.emplace(cm.name, std::move(cm));
        }
    } catch (const json::exception& e) {
        raise(meta_path.string(), ": ", e.what());
    }

    std::vector<fs::path> files;
    const fs::path img_dir = base / "images";
    check(fs::is_directory(img_dir), "missing ", img_dir.string());
    for (const auto& entry : fs::recursive_directory_iterator(img_dir))
        if (entry.is_regular_file() && entry.path().extension() == ".json")
            files.push_back(entry.path());
    std::sort(files.begin(), files.end());

    std::int64_t next_image = 1, next_object = 1;
    for (const fs::path& file : files) {
        try {
            const json doc = json::parse(read_file(file.string()));
            const json& ann = doc.contains("annotation") ? doc["annotation"] : doc;
            RawImage im;
            im.image_id = next_image++;
            im.uri = ann.value("filename", file.stem().string());
            const json& size = ann.at("imsize");
            im.height = size[0].get<int>();
            im.width = size[1].get<int>();
            if (ann.contains("scene")) {
                if (ann["scene"].is_array()) {
                    std::string joined;
                    for (const auto& part : ann["scene"]) {
                        if (!joined.empty()) joined += "/";
                        joined += part.get<std::string>();
                    }
                    if (!joined.empty()) im.scene = joined;
                } else {
                    im.scene = ann["scene"].get<std::string>();
                }
            }

            // First pass: rasterize all annotated segments in file order.
            struct Segment {
                int local_id;
                std::string name;
                RleMask mask;
                int part_of;  // local id of the host object, or -1
            };
            std::vector<Segment> segments;
            if (ann.contains("object")) {
                for (const json& jo : ann["object"]) {
                    Segment s;
                    s.local_id = jo.at("id").get<int>();
                    s.name = jo.at("name").get<std::string>();
                    const json& poly = jo.at("polygon");
                    s.mask = rasterize_polygon(poly.at("x").get<std::vector<double>>(),
                                               poly.at("y").get<std::vector<double>>(), im.height,
                                               im.width);
                    s.part_of = -1;
                    if (jo.contains("parts") && jo["parts"].contains("ispartof") &&
                        !jo["parts"]["ispartof"].is_null()) {
                        const json& host = jo["parts"]["ispartof"];
                        if (host.is_number()) s.part_of = host.get<int>();
                        else if (host.is_array() && !host.empty()) s.part_of = host[0].get<int>();
                    }
                    segments.push_back(std::move(s));
                }
            }

            // Second pass: route by kind. Parts attach to their host object;
            // stuff segments compose the background raster.
            std::map<int, std::size_t> object_index;  // local id -> index in im.objects
            for (const Segment& s : segments) {
                auto it = raw.category_meta.find(s.name);
                check(it != raw.category_meta.end(), "category '", s.name, "' has no kind metadata");
                if (it->second.kind == Kind::object) {
                    RawObject o;
                    o.object_id = next_object++;
                    o.name = s.name;
                    o.mask = s.mask;
                    object_index[s.local_id] = im.objects.size();
                    im.objects.push_back(std::move(o));
                } else if (it->second.kind == Kind::stuff) {
                    im.stuff.push_back(RawStuffRegion{s.name, s.mask});
                }
            }
            for (const Segment& s : segments) {
                auto it = raw.category_meta.find(s.name);
                if (it->second.kind != Kind::part) continue;
                auto host = object_index.find(s.part_of);
                if (host != object_index.end()) im.objects[host->second].parts.push_back(s.name);
            }
            raw.images.push_back(std::move(im));
        } catch (const json::exception& e) {
            raise(file.string(), ": ", e.what());
        }
    }
    raw.validate();
    return raw;
}

std::string raster_to_json(const LabelRaster& r) {
    std::vector<std::int64_t> counts;
    std::vector<std::int32_t> values;
    for (std::size_t i = 0; i < r.labels.size();) {
        std::size_t j = i;
        while (j < r.labels.size() && r.labels[j] == r.labels[i]) ++j;
        counts.push_back(static_cast<std::int64_t>(j - i));
        values.push_back(r.labels[i]);
        i = j;
    }
    json doc{{"h", r.height}, {"w", r.width}, {"counts", counts}, {"values", values}};
    return doc.dump();
}

LabelRaster raster_from_json(const std::string& text) {
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::exception& e) {
        raise("raster is not valid JSON: ", e.what());
    }
    LabelRaster r = make_raster(doc.at("h").get<int>(), doc.at("w").get<int>());
    const auto counts = doc.at("counts").get<std::vector<std::int64_t>>();
    const auto values = doc.at("values").get<std::vector<std::int32_t>>();
    check(counts.size() == values.size(), "raster counts/values length mismatch");
    std::size_t pos = 0;
    for (std::size_t i = 0; i < counts.size(); ++i) {
        check(pos + counts[i] <= r.labels.size(), "raster runs exceed dimensions");
        std::fill_n(r.labels.begin() + pos, counts[i], values[i]);
        pos += counts[i];
    }
    check(pos == r.labels.size(), "raster runs cover ", pos, " of ", r.labels.size(), " pixels");
    return r;
}

void save_raster(const LabelRaster& r, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open '", path, "' for writing");
    out << raster_to_json(r);
}

LabelRaster load_raster(const std::string& path) {
    try {
        return raster_from_json(read_file(path));
    } catch (const Error& e) {
        raise(path, ": ", e.what());
    }
}

}  // namespace lrds
