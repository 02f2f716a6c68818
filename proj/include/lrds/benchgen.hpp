#pragma once

// Turns a RawAnnotationSet into a BenchmarkManifest: frequency filtering,
// base/novel splitting, per-category holdouts, and region-box derivation.
// Every random choice is keyed by a purpose tag plus the category or instance
// id, so the output is independent of iteration order.

#include <cstdint>
#include <map>
#include <vector>

#include "lrds/manifest.hpp"
#include "lrds/raw.hpp"

namespace lrds {

// Frequency thresholds from the benchmark definition.
inline constexpr std::int64_t kMinInstances = 15;    // below this the category is dropped
inline constexpr std::int64_t kBaseThreshold = 100;  // strictly above this the category is base
inline constexpr int kSupportPerNovel = 5;
inline constexpr double kNovelValShare = 0.34;       // 100:193 ratio rounded to nearest

// Category table with kinds, counts, attributes, and 4-level hierarchy paths.
// kind=object with count >= kMinInstances is kept (split set by threshold,
// novel val/test partition pending); everything else is dropped but retained
// as supervision vocabulary. Ids are assigned by ascending name.
std::vector<CategoryRecord> filter_categories(const RawAnnotationSet& raw);

// Assigns base/novel by frequency and partitions the novel set into val/test
// uniformly at random (floor(kNovelValShare * N + 0.5) val categories).
// Returns the number of novel categories; emits a warning line via warn() if
// the novel set is empty.
struct SplitSummary {
    std::int64_t base = 0;
    std::int64_t novel_val = 0;
    std::int64_t novel_test = 0;
    std::int64_t dropped = 0;
    bool novel_empty_warning = false;
};
SplitSummary split_base_novel(std::vector<CategoryRecord>& categories, std::uint64_t novel_split_seed);

// Tags every instance: per base category floor(n/6) base_val, the rest
// base_train; per novel category exactly 5 novel_support, the rest
// novel_query. Hard error if a novel category has fewer than 6 instances.
void assign_subsets(BenchmarkManifest& m, std::uint64_t global_seed);

// Normalizes a raw hierarchy path to exactly 4 levels: short paths repeat the
// deepest label, long paths keep evenly spaced levels including both ends.
std::vector<std::string> normalize_hierarchy(std::vector<std::string> path, const std::string& name);

struct BuildResult {
    BenchmarkManifest manifest;
    // Per-image stuff rasters (values are stuff category ids) composed from
    // the raw stuff regions; callers persist them and set stuff_mask_uri.
    std::map<std::int64_t, LabelRaster> stuff_rasters;
};

BuildResult build_manifest(const RawAnnotationSet& raw, double gamma, std::uint64_t global_seed);

}  // namespace lrds
