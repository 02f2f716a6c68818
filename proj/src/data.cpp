#include "lrds/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "lrds/error.hpp"
#include "lrds/image.hpp"
#include "lrds/raw.hpp"

namespace lrds {

using nlohmann::json;

bool TrainSample::has_train_objects() const {
    for (const auto& o : objects)
        if (o.subset == Subset::base_train) return true;
    return false;
}

bool is_synth_uri(const std::string& uri) { return uri.rfind("synth:", 0) == 0; }

namespace {

struct SynthSpec {
    int height = 32, width = 32;
    std::uint64_t seed = 0;
    struct PaintBox {
        double x, y, w, h;
        int code;
    };
    std::vector<PaintBox> boxes;
};

SynthSpec parse_synth_uri(const std::string& uri) {
    check(is_synth_uri(uri), "not a synth uri: '", uri, "'");
    SynthSpec spec;
    std::stringstream body(uri.substr(6));
    std::string field;
    while (std::getline(body, field, ';')) {
        const auto eq = field.find('=');
        if (eq == std::string::npos) continue;
        const std::string key = field.substr(0, eq);
        const std::string value = field.substr(eq + 1);
        if (key == "size") {
            if (std::sscanf(value.c_str(), "%dx%d", &spec.height, &spec.width) != 2)
                raise("synth uri: bad size '", value, "'");
        } else if (key == "seed") {
            spec.seed = std::strtoull(value.c_str(), nullptr, 10);
        } else if (key == "boxes") {
            std::stringstream boxes(value);
            std::string one;
            while (std::getline(boxes, one, '|')) {
                SynthSpec::PaintBox b{};
                if (std::sscanf(one.c_str(), "%lf,%lf,%lf,%lf,%d", &b.x, &b.y, &b.w, &b.h,
                                &b.code) != 5)
                    raise("synth uri: bad box '", one, "'");
                spec.boxes.push_back(b);
            }
        }
    }
    return spec;
}

}  // namespace

Tensor synth_image(const std::string& uri) {
    const SynthSpec spec = parse_synth_uri(uri);
    Tensor img({3, spec.height, spec.width});
    Rng rng(derive_seed(spec.seed, "synth_image"));
    for (double& v : img.data) v = rng.uniform(0.0, 0.2);
    for (const auto& b : spec.boxes) {
        const int y0 = std::max(0, static_cast<int>(std::floor(b.y)));
        const int x0 = std::max(0, static_cast<int>(std::floor(b.x)));
        const int y1 = std::min(spec.height, static_cast<int>(std::ceil(b.y + b.h)));
        const int x1 = std::min(spec.width, static_cast<int>(std::ceil(b.x + b.w)));
        const int hot = b.code % 3;
        const double tint = 0.15 * ((b.code / 3) % 5);
        for (int y = y0; y < y1; ++y) {
            for (int x = x0; x < x1; ++x) {
                img.at3(hot, y, x) += 0.6;
                for (int c = 0; c < 3; ++c) img.at3(c, y, x) += tint;
            }
        }
    }
    return img;
}

Tensor load_ppm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    check(in.good(), "cannot open image '", path, "'");
    std::string magic;
    int w = 0, h = 0, maxv = 0;
    in >> magic >> w >> h >> maxv;
    check(magic == "P6" && w > 0 && h > 0 && maxv == 255, path, ": expected binary PPM (P6, 8-bit)");
    in.get();
    std::vector<unsigned char> buf(static_cast<std::size_t>(w) * h * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    check(in.good(), path, ": truncated PPM payload");
    Tensor img({3, h, w});
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.at3(c, y, x) = buf[(static_cast<std::size_t>(y) * w + x) * 3 + c] / 255.0;
    return img;
}

void save_ppm(const Tensor& img, const std::string& path) {
    check(img.shape.size() == 3 && img.dim(0) == 3, "save_ppm: expected a 3xHxW image");
    std::ofstream out(path, std::ios::binary);
    check(out.good(), "cannot open '", path, "' for writing");
    out << "P6\n" << img.dim(2) << " " << img.dim(1) << "\n255\n";
    for (int y = 0; y < img.dim(1); ++y)
        for (int x = 0; x < img.dim(2); ++x)
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at3(c, y, x), 0.0, 1.0);
                out.put(static_cast<char>(std::lround(v * 255.0)));
            }
}

ImageLoader default_image_loader(const std::string& data_root) {
    return [data_root](const ImageRecord& rec) -> Tensor {
        if (is_synth_uri(rec.uri)) return synth_image(rec.uri);
        std::string path = rec.uri;
        if (!data_root.empty() && path.find('/') != 0) path = data_root + "/" + path;
        return load_ppm(path);
    };
}

namespace {

RleMask resize_mask(const RleMask& mask, int new_h, int new_w) {
    const auto src = rle_decode(mask);
    std::vector<std::uint8_t> dst(static_cast<std::size_t>(new_h) * new_w);
    for (int y = 0; y < new_h; ++y) {
        const int sy = std::min(mask.height - 1,
                                static_cast<int>((y + 0.5) * mask.height / new_h));
        for (int x = 0; x < new_w; ++x) {
            const int sx = std::min(mask.width - 1,
                                    static_cast<int>((x + 0.5) * mask.width / new_w));
            dst[static_cast<std::size_t>(y) * new_w + x] =
                src[static_cast<std::size_t>(sy) * mask.width + sx];
        }
    }
    return rle_encode(dst, new_h, new_w);
}

void paint_mask(LabelRaster& raster, const RleMask& mask, std::int32_t value) {
    const auto px = rle_decode(mask);
    for (std::size_t i = 0; i < px.size(); ++i)
        if (px[i]) raster.labels[i] = value;
}

}  // namespace

std::vector<int> Dataset::sample_indices_with_train_objects() const {
    std::vector<int> out;
    for (std::size_t i = 0; i < samples.size(); ++i)
        if (samples[i].has_train_objects()) out.push_back(static_cast<int>(i));
    return out;
}

std::vector<int> Dataset::all_indices() const {
    std::vector<int> out(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) out[i] = static_cast<int>(i);
    return out;
}

Dataset Dataset::from_manifest(const BenchmarkManifest& manifest, const HeadSpaces& spaces,
                               const ModelConfig& model_cfg, const ImageLoader& loader,
                               const DatasetOptions& opts) {
    Dataset ds;
    ds.spaces = spaces;
    ds.stride = model_cfg.extractor.stride();

    for (const auto& im : manifest.images) {
        TrainSample sample;
        sample.image_id = im.image_id;
        sample.image = loader(im);
        check(sample.image.shape.size() == 3, "image ", im.image_id, ": loader returned non-image");
        double f = 1.0;
        if (opts.resize_short > 0) {
            f = resize_factor(sample.image.dim(1), sample.image.dim(2), opts.resize_short);
            sample.image = resize_short_edge(sample.image, opts.resize_short);
        }
        const int img_h = sample.image.dim(1);
        const int img_w = sample.image.dim(2);
        sample.scene_label = im.scene_label;
        sample.masked = im.masked_heads;

        for (std::int64_t iid : im.instance_ids) {
            const ObjectInstance* inst = manifest.find_instance(iid);
            check(inst, "image ", im.image_id, " references missing instance ", iid);
            const CategoryRecord* cat = manifest.find_category(inst->category_id);
            check(cat, "instance ", iid, " references missing category");
            SampleObject obj;
            obj.instance_id = inst->instance_id;
            obj.category_id = inst->category_id;
            obj.subset = inst->subset;
            obj.cls_label = spaces.cls_label(inst->category_id);
            obj.region = Box{inst->region_box.x * f, inst->region_box.y * f,
                             inst->region_box.w * f, inst->region_box.h * f};
            obj.tight = Box{inst->tight_box.x * f, inst->tight_box.y * f, inst->tight_box.w * f,
                            inst->tight_box.h * f};
            obj.attr_bits = cat->attributes;
            if (cat->split == Split::base) {
                obj.hier_labels = spaces.hierarchy_labels(*cat);
                obj.hier_valid = true;
            }
            obj.part_bits = spaces.part_bits(inst->part_labels);
            if (inst->mask) {
                obj.mask = (f == 1.0) ? *inst->mask : resize_mask(*inst->mask, img_h, img_w);
            }
            obj.masked = inst->masked_heads;
            sample.objects.push_back(std::move(obj));
        }

        // Stride-resolution supervision rasters from base training objects.
        LabelRaster fcn_full = make_raster(img_h, img_w);
        LabelRaster combined_full = make_raster(img_h, img_w);
        LabelRaster plain_full = make_raster(img_h, img_w);
        bool any_fg = false;
        for (const auto& obj : sample.objects) {
            if (obj.subset != Subset::base_train || !obj.mask || obj.cls_label < 0) continue;
            paint_mask(fcn_full, *obj.mask, obj.cls_label);
            paint_mask(combined_full, *obj.mask, obj.cls_label);
            paint_mask(plain_full, *obj.mask, 1);
            any_fg = true;
        }
        std::optional<LabelRaster> stuff;
        if (opts.stuff_loader) stuff = opts.stuff_loader(im);
        if (!stuff && im.stuff_mask_uri && !opts.raster_root.empty())
            stuff = load_raster(opts.raster_root + "/" + *im.stuff_mask_uri);
        if (stuff) {
            check(stuff->height == img_h && stuff->width == img_w, "image ", im.image_id,
                  ": stuff raster is ", stuff->width, "x", stuff->height, ", image is ", img_w, "x",
                  img_h, " (stuff rasters do not support resizing)");
            for (int y = 0; y < img_h; ++y) {
                for (int x = 0; x < img_w; ++x) {
                    const std::int32_t v = stuff->at(y, x);
                    if (v == kIgnoreLabel) continue;
                    if (plain_full.at(y, x) != kIgnoreLabel) continue;  // objects win overlaps
                    plain_full.at(y, x) = 0;
                    const int idx = spaces.stuff_index(v);
                    if (idx >= 0) combined_full.at(y, x) = spaces.num_base() + idx;
                }
            }
        }
        if (any_fg) sample.seg_fcn_labels = downsample_majority(fcn_full, ds.stride);
        if (any_fg || stuff) {
            sample.stuff_plain = downsample_majority(plain_full, ds.stride);
            sample.stuff_combined = downsample_majority(combined_full, ds.stride);
        }
        ds.samples.push_back(std::move(sample));
    }
    return ds;
}

std::string toy_fixture_json(const ToyFixtureOptions& opts) {
    json doc;
    doc["attribute_names"] = json::array({"striped", "dotted", "glossy"});
    json cats = json::array();
    const auto attr_string = [](int i) {
        std::string s = "000";
        s[static_cast<std::size_t>(i % 3)] = '1';
        return s;
    };
    for (int i = 0; i < opts.base_classes; ++i) {
        cats.push_back(json{{"name", "base" + std::to_string(i)},
                            {"kind", "object"},
                            {"attributes", attr_string(i)},
                            {"hierarchy", json::array({"thing", "group" + std::to_string(i % 2),
                                                       "kind" + std::to_string(i),
                                                       "base" + std::to_string(i)})}});
    }
    for (int i = 0; i < opts.novel_classes; ++i) {
        cats.push_back(json{{"name", "novel" + std::to_string(i)},
                            {"kind", "object"},
                            {"attributes", attr_string(i + 1)},
                            {"hierarchy", json::array({"thing", "group" + std::to_string(i % 2),
                                                       "nkind" + std::to_string(i),
                                                       "novel" + std::to_string(i)})}});
    }
    if (opts.with_parts) {
        cats.push_back(json{{"name", "corner"}, {"kind", "part"}});
        cats.push_back(json{{"name", "edge"}, {"kind", "part"}});
    }
    if (opts.with_stuff) cats.push_back(json{{"name", "backdrop"}, {"kind", "stuff"}});
    doc["categories"] = std::move(cats);

    // Object stream: class codes repeat per class, packed two per image.
    struct Pending {
        int code;  // paint code == class index over base then novel
        std::string name;
    };
    std::vector<Pending> stream;
    for (int i = 0; i < opts.base_classes; ++i)
        for (int k = 0; k < opts.base_instances_per_class; ++k)
            stream.push_back({i, "base" + std::to_string(i)});
    for (int i = 0; i < opts.novel_classes; ++i)
        for (int k = 0; k < opts.novel_per_class; ++k)
            stream.push_back({opts.base_classes + i, "novel" + std::to_string(i)});
    Rng rng(derive_seed(opts.seed, "toy_fixture"));
    rng.shuffle(stream);

    const int per_image = std::max(1, opts.objects_per_image);
    const int size = opts.image_size;
    const int bs = std::min(opts.box_size, size / 2 - 2);
    json images = json::array();
    std::int64_t next_image = 1, next_object = 1;
    for (std::size_t pos = 0; pos < stream.size();) {
        json objs = json::array();
        std::string boxes_field;
        int first_code = 0;
        for (int slot = 0; slot < per_image && pos < stream.size(); ++slot, ++pos) {
            const Pending& p = stream[pos];
            if (slot == 0) first_code = p.code;
            // Slot anchors split the image horizontally; jitter keeps tight
            // boxes off the exact grid.
            const int max_off = std::max(1, size / per_image - bs - 2);
            const int x = slot * (size / per_image) + 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(max_off)));
            const int y = 1 + static_cast<int>(rng.next_below(static_cast<std::uint64_t>(size - bs - 2)));
            json jo{{"id", next_object++},
                    {"name", p.name},
                    {"box", json::array({x, y, bs, bs})}};
            if (opts.with_parts) jo["parts"] = json::array({p.code % 2 == 0 ? "corner" : "edge"});
            objs.push_back(std::move(jo));
            if (!boxes_field.empty()) boxes_field += "|";
            char buf[96];
            std::snprintf(buf, sizeof buf, "%d,%d,%d,%d,%d", x, y, bs, bs, p.code);
            boxes_field += buf;
        }
        json im{{"id", next_image},
                {"width", size},
                {"height", size},
                {"objects", std::move(objs)}};
        char uri[512];
        std::snprintf(uri, sizeof uri, "synth:size=%dx%d;seed=%llu;boxes=%s", size, size,
                      static_cast<unsigned long long>(derive_seed(opts.seed, static_cast<std::uint64_t>(next_image))),
                      boxes_field.c_str());
        im["uri"] = uri;
        if (opts.with_scenes) im["scene"] = first_code % 2 == 0 ? "even_scene" : "odd_scene";
        if (opts.with_stuff) {
            json stuff = json::array();
            stuff.push_back(json{{"name", "backdrop"},
                                 {"box", json::array({0, 0, size, 1})}});
            im["stuff"] = std::move(stuff);
        }
        images.push_back(std::move(im));
        ++next_image;
    }
    doc["images"] = std::move(images);
    return doc.dump();
}

}  // namespace lrds
