#pragma once

// Data-scarcity regimes derived from a full manifest. All ops reject
// manifests that already carry regime provenance, and never touch base-val or
// novel data. Outputs are new manifests; the masking for partial supervision
// lives in the manifest itself so regimes stay data-only and auditable.

#include <cstdint>
#include <string>
#include <vector>

#include "lrds/manifest.hpp"

namespace lrds {

// Removes the floor((1 - keep_ratio) * N_base) least frequent base categories
// (ties by ascending category_id) together with all their instances.
BenchmarkManifest scarce_class(const BenchmarkManifest& full, double keep_ratio);

// Keeps floor(keep_ratio * N + 0.5) of the base-training images uniformly at
// random; the dropped images lose their base-train instances only. Base
// categories left without training instances are flagged, not removed.
BenchmarkManifest scarce_image(const BenchmarkManifest& full, double keep_ratio, std::uint64_t seed);

// scarce_class downsampled per category so the training-instance total equals
// the scarce_image counterpart exactly (same keep_ratio and seed derivation).
BenchmarkManifest scarce_class_adjust(const BenchmarkManifest& full, double keep_ratio,
                                      std::uint64_t seed);

// Masks the head's label on all but a uniform random fraction of its
// label-bearing units (base-train instances for object-level heads, training
// images for image-level heads). Classification labels stay intact.
BenchmarkManifest subsample_supervision(const BenchmarkManifest& full, HeadKind head,
                                        double fraction, std::uint64_t seed);

struct PortionRow {
    std::string regime;       // "full", "scarce_class", ...
    double ratio = 1.0;       // keep ratio / labeled fraction
    std::int64_t instances = 0;
    double portion_pct = 100.0;
};

// Remaining base-training instances as a percentage of the full manifest's.
// The full manifest must be the one named by the derived manifest's
// provenance hash.
PortionRow instance_portion_report(const BenchmarkManifest& derived, const BenchmarkManifest& full);

std::string portion_csv(const std::vector<PortionRow>& rows);

}  // namespace lrds
