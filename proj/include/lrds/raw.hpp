#pragma once

// Normalized raw-annotation model plus the two parsers that produce it: a
// synthetic-fixture JSON file (single document, used by tests and small
// experiments) and an ADE-style directory of per-image annotation files with
// polygon outlines. The object/part/stuff split, attributes, and hierarchy
// arrive as input metadata in both formats.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "lrds/manifest.hpp"
#include "lrds/mask.hpp"

namespace lrds {

struct RawObject {
    std::int64_t object_id = 0;
    std::string name;
    RleMask mask;                     // required and nonempty
    std::vector<std::string> parts;   // part-category names attached to this object
};

struct RawStuffRegion {
    std::string name;
    RleMask mask;
};

struct RawImage {
    std::int64_t image_id = 0;
    std::string uri;
    int width = 0;
    int height = 0;
    std::optional<std::string> scene;
    std::optional<std::string> stuff_mask_uri;  // prebuilt raster, if the source has one
    std::vector<RawObject> objects;
    std::vector<RawStuffRegion> stuff;
};

struct RawCategoryMeta {
    std::string name;
    Kind kind = Kind::object;
    std::vector<std::uint8_t> attributes;
    std::vector<std::string> hierarchy;  // coarse to fine, any length; normalized later
};

struct RawAnnotationSet {
    std::vector<RawImage> images;
    std::map<std::string, RawCategoryMeta> category_meta;  // name -> metadata
    std::vector<std::string> attribute_names;

    // Throws listing every object name without kind metadata, and every
    // object with an empty mask.
    void validate() const;
};

RawAnnotationSet parse_fixture(const std::string& json_text);
RawAnnotationSet load_fixture(const std::string& path);

// Directory layout: <root>/categories.json with the vocabulary metadata and
// <root>/images/*.json with one ADE-style annotation per image (objects carry
// polygon outlines and part-of links).
RawAnnotationSet load_annotation_dir(const std::string& root);

// Even-odd scanline fill over pixel centers.
RleMask rasterize_polygon(const std::vector<double>& xs, const std::vector<double>& ys, int height,
                          int width);

// LabelRaster file io (run-length with per-run values).
std::string raster_to_json(const LabelRaster& r);
LabelRaster raster_from_json(const std::string& text);
void save_raster(const LabelRaster& r, const std::string& path);
LabelRaster load_raster(const std::string& path);

}  // namespace lrds
