#pragma once

// Canonical benchmark datamodel shared by every pipeline stage. A manifest is
// immutable after construction; regime derivations produce new manifests.
// Serialization is a single JSON document with sorted keys, so identical
// inputs and seeds yield byte-identical files.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "lrds/error.hpp"
#include "lrds/geometry.hpp"
#include "lrds/mask.hpp"

namespace lrds {

enum class Kind { object, part, stuff };
enum class Split { base, novel_val, novel_test, dropped };
enum class Subset { base_train, base_val, novel_support, novel_query };

enum class HeadKind {
    cls,
    attribute,
    hierarchy,
    part,
    bbox,
    seg_region,
    seg_fcn,
    stuff,
    scene,
    rotation,
    patch_location,
};

const char* to_string(Kind k);
const char* to_string(Split s);
const char* to_string(Subset s);
const char* to_string(HeadKind h);
Kind kind_from_string(const std::string& s);
Split split_from_string(const std::string& s);
Subset subset_from_string(const std::string& s);
HeadKind head_from_string(const std::string& s);

// All heads, in the canonical (declaration) order.
const std::vector<HeadKind>& all_heads();
// Object-level heads consume region features; image-level heads consume the
// whole feature map; self-supervision heads consume edited images.
bool is_object_level(HeadKind h);
bool is_image_level(HeadKind h);
bool is_self_supervised(HeadKind h);

// Per-head loss weights from the reference configuration.
double default_head_weight(HeadKind h);

struct CategoryRecord {
    std::int64_t category_id = 0;
    std::string name;
    Kind kind = Kind::object;
    std::int64_t instance_count = 0;  // frequency in the source annotation set
    std::vector<std::uint8_t> attributes;  // fixed-length bit vector
    std::vector<std::string> hierarchy_path;  // exactly 4 levels for objects, coarse to fine
    Split split = Split::dropped;
    bool zero_train = false;  // flagged by regimes when no training instances remain
};

struct ObjectInstance {
    std::int64_t instance_id = 0;
    std::int64_t image_id = 0;
    std::int64_t category_id = 0;
    Box tight_box;
    Box region_box;
    std::optional<RleMask> mask;
    std::vector<std::int64_t> part_labels;  // part-category ids, sorted ascending
    Subset subset = Subset::base_train;
    std::set<HeadKind> masked_heads;  // supervision withheld for this instance
};

struct ImageRecord {
    std::int64_t image_id = 0;
    std::string uri;
    int width = 0;
    int height = 0;
    std::optional<int> scene_label;
    std::optional<std::string> stuff_mask_uri;
    std::vector<std::int64_t> instance_ids;
    std::set<HeadKind> masked_heads;
};

// Non-"full" manifests record how they were derived.
struct RegimeProvenance {
    std::string base_hash;
    std::string op;
    nlohmann::json params;
};

struct BenchmarkManifest {
    int schema_version = 1;
    double context_ratio = 2.7;
    std::map<std::string, std::uint64_t> seeds;  // purpose tag -> derived seed
    std::optional<RegimeProvenance> regime;      // nullopt == "full"
    std::string command;                          // producing command line, may be empty
    std::vector<std::string> attribute_names;     // attribute vocabulary (data, not constant)
    std::vector<std::string> scene_names;         // scene vocabulary
    std::vector<CategoryRecord> categories;       // sorted by category_id
    std::vector<ImageRecord> images;              // sorted by image_id
    std::vector<ObjectInstance> instances;        // sorted by instance_id

    const CategoryRecord* find_category(std::int64_t id) const;
    const ImageRecord* find_image(std::int64_t id) const;
    const ObjectInstance* find_instance(std::int64_t id) const;
    bool is_full() const { return !regime.has_value(); }
    std::int64_t count_subset(Subset s) const;
};

std::string serialize_manifest(const BenchmarkManifest& m);
BenchmarkManifest parse_manifest(const std::string& text);
void save_manifest(const BenchmarkManifest& m, const std::string& path);
BenchmarkManifest load_manifest(const std::string& path);

// fnv1a64 of the serialized document, as fixed-width hex.
std::string manifest_hash(const BenchmarkManifest& m);

// Empty iff every datamodel invariant holds. Each entry names the offending
// record and the violated rule. The base-val 1/6 partition rule is only
// enforced on full manifests; regime derivations legitimately break it.
std::vector<std::string> validate_manifest(const BenchmarkManifest& m);

// Enabled supervision heads, their loss weights, and how they are combined.
struct SupervisionConfig {
    std::set<HeadKind> heads = {HeadKind::cls};
    std::map<HeadKind, double> weights;            // absent -> default_head_weight
    std::map<HeadKind, double> labeled_fraction;   // absent -> 1.0
    enum class Mode { MTL, CL } mode = Mode::MTL;
    std::vector<HeadKind> cl_order;  // auxiliary heads in curriculum order

    double weight(HeadKind h) const;
    double fraction(HeadKind h) const;
    // Throws on violations: cls must be enabled with weight 1, and a CL order
    // must cover exactly the enabled auxiliary heads.
    void validate() const;

    nlohmann::json to_json() const;
    static SupervisionConfig from_json(const nlohmann::json& j);
};

}  // namespace lrds
