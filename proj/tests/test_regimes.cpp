#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <set>

#include "lrds/regimes.hpp"
#include "testutil.hpp"

using namespace lrds;
using testutil::DirectCategory;

namespace {
BenchmarkManifest eight_base_manifest() {
    std::vector<DirectCategory> specs;
    // Long-tail-ish counts; train+val chosen so val == floor(total/6).
    const std::int64_t totals[] = {600, 480, 360, 300, 240, 180, 150, 120};
    for (int i = 0; i < 8; ++i) {
        const std::int64_t total = totals[i];
        const std::int64_t val = total / 6;
        specs.push_back({"b" + std::to_string(i), Split::base, total - val, val});
    }
    specs.push_back({"n0", Split::novel_val, 10, 0});
    specs.push_back({"n1", Split::novel_test, 12, 0});
    return testutil::make_direct_manifest(specs);
}
}  // namespace

TEST_CASE("scarce_class removes the floor((1-r)N) least frequent base categories") {
    const auto full = eight_base_manifest();
    const auto out = scarce_class(full, 0.75);
    std::set<std::string> base_names;
    for (const auto& c : out.categories)
        if (c.split == Split::base) base_names.insert(c.name);
    CHECK(base_names.size() == 6);  // removed floor(0.25 * 8) = 2 smallest
    CHECK(base_names.count("b6") == 0);
    CHECK(base_names.count("b7") == 0);
    // Sort-and-drop oracle: surviving base categories are exactly the 6 largest.
    for (int i = 0; i < 6; ++i) CHECK(base_names.count("b" + std::to_string(i)) == 1);
    // Novel untouched.
    CHECK(out.count_subset(Subset::novel_support) == full.count_subset(Subset::novel_support));
    CHECK(out.count_subset(Subset::novel_query) == full.count_subset(Subset::novel_query));
    CHECK(out.regime->op == "scarce_class");
    CHECK(out.regime->base_hash == manifest_hash(full));
}

TEST_CASE("scarce_class ties break by ascending category id") {
    auto full = testutil::make_direct_manifest({
        DirectCategory{"x", Split::base, 100, 20},
        DirectCategory{"y", Split::base, 100, 20},
        DirectCategory{"z", Split::base, 200, 40},
        DirectCategory{"n", Split::novel_val, 10, 0},
    });
    const auto out = scarce_class(full, 0.70);  // remove floor(0.3*3) = 0... use 0.5
    const auto out2 = scarce_class(full, 0.5);  // remove floor(0.5*3) = 1: smallest count, lowest id
    CHECK(out.categories.size() == full.categories.size());
    std::set<std::string> names;
    for (const auto& c : out2.categories) names.insert(c.name);
    CHECK(names.count("x") == 0);  // x and y tie at 120; x has the lower id
    CHECK(names.count("y") == 1);
}

TEST_CASE("scarce_class keep 1.0 is the identity up to provenance") {
    const auto full = eight_base_manifest();
    const auto out = scarce_class(full, 1.0);
    CHECK(out.categories.size() == full.categories.size());
    CHECK(out.instances.size() == full.instances.size());
    CHECK(out.regime.has_value());
    BenchmarkManifest stripped = out;
    stripped.regime.reset();
    CHECK(serialize_manifest(stripped) == serialize_manifest(full));
}

TEST_CASE("scarce_class rejects bad ratios and non-full manifests") {
    const auto full = eight_base_manifest();
    CHECK_THROWS_AS(scarce_class(full, 0.0), Error);
    CHECK_THROWS_AS(scarce_class(full, 1.5), Error);
    const auto once = scarce_class(full, 0.75);
    CHECK_THROWS_AS(scarce_class(once, 0.75), Error);
    CHECK_THROWS_AS(scarce_image(once, 0.5, 1), Error);
    CHECK_THROWS_AS(scarce_class_adjust(once, 0.5, 1), Error);
    CHECK_THROWS_AS(subsample_supervision(once, HeadKind::attribute, 0.5, 1), Error);
}

TEST_CASE("scarce_image keeps round(rN) training images exactly") {
    auto full = testutil::make_direct_manifest({
        DirectCategory{"b", Split::base, 4, 0},
        DirectCategory{"n", Split::novel_val, 10, 0},
    });
    // 4 single-instance training images; keep 0.5 -> exactly 2 survive.
    const auto out = scarce_image(full, 0.5, 99);
    CHECK(out.count_subset(Subset::base_train) == 2);
    CHECK(out.count_subset(Subset::novel_support) == 5);
    CHECK(out.count_subset(Subset::novel_query) == 10);
}

TEST_CASE("scarce_image keep 1.0 is the identity up to provenance") {
    const auto full = eight_base_manifest();
    const auto out = scarce_image(full, 1.0, 5);
    BenchmarkManifest stripped = out;
    stripped.regime.reset();
    CHECK(serialize_manifest(stripped) == serialize_manifest(full));
}

TEST_CASE("scarce_image preserves categories and surviving image structure") {
    const auto full = eight_base_manifest();
    const auto out = scarce_image(full, 0.5, 7);
    CHECK(out.categories.size() == full.categories.size());
    for (const auto& im : out.images) {
        const auto* orig = full.find_image(im.image_id);
        REQUIRE(orig != nullptr);
        CHECK(im.instance_ids == orig->instance_ids);  // survivors keep their instances
    }
    // A base category stripped of all training instances is flagged, not removed.
    auto tiny = testutil::make_direct_manifest({
        DirectCategory{"a", Split::base, 1, 0},
        DirectCategory{"b", Split::base, 9, 1},
        DirectCategory{"n", Split::novel_val, 10, 0},
    });
    for (int seed = 0; seed < 20; ++seed) {
        const auto derived = scarce_image(tiny, 0.5, static_cast<std::uint64_t>(seed));
        for (const auto& c : derived.categories) {
            if (c.split != Split::base) continue;
            std::int64_t train = 0;
            for (const auto& inst : derived.instances)
                if (inst.category_id == c.category_id && inst.subset == Subset::base_train) ++train;
            CHECK(c.zero_train == (train == 0));
        }
    }
}

TEST_CASE("scarce_class_adjust matches the scarce_image total exactly") {
    const auto full = eight_base_manifest();
    for (double ratio : {0.25, 0.5, 0.75}) {
        for (std::uint64_t seed : {1ull, 2ull, 3ull}) {
            const auto adjusted = scarce_class_adjust(full, ratio, seed);
            const auto image_counterpart = scarce_image(full, ratio, seed);
            CHECK(adjusted.count_subset(Subset::base_train) ==
                  image_counterpart.count_subset(Subset::base_train));
            // Per-category counts are roughly rate-scaled.
            const double rate =
                static_cast<double>(image_counterpart.count_subset(Subset::base_train)) /
                static_cast<double>(scarce_class(full, ratio).count_subset(Subset::base_train));
            for (const auto& c : adjusted.categories) {
                if (c.split != Split::base) continue;
                std::int64_t now = 0, before = 0;
                for (const auto& inst : adjusted.instances)
                    if (inst.category_id == c.category_id && inst.subset == Subset::base_train) ++now;
                for (const auto& inst : full.instances)
                    if (inst.category_id == c.category_id && inst.subset == Subset::base_train)
                        ++before;
                CHECK(std::abs(now - rate * before) <= 2.0);
            }
        }
    }
}

TEST_CASE("scarce_class_adjust keep 1.0 is the identity up to provenance") {
    const auto full = eight_base_manifest();
    const auto out = scarce_class_adjust(full, 1.0, 11);
    BenchmarkManifest stripped = out;
    stripped.regime.reset();
    CHECK(serialize_manifest(stripped) == serialize_manifest(full));
}

TEST_CASE("subsample_supervision masks the complement of the kept fraction") {
    auto full = testutil::make_direct_manifest({
        DirectCategory{"big", Split::base, 1000, 200},
        DirectCategory{"n", Split::novel_val, 10, 0},
    });
    const auto out = subsample_supervision(full, HeadKind::attribute, 0.25, 3);
    std::int64_t labeled = 0, masked = 0;
    for (const auto& inst : out.instances) {
        if (inst.subset != Subset::base_train) {
            CHECK(inst.masked_heads.empty());
            continue;
        }
        if (inst.masked_heads.count(HeadKind::attribute)) ++masked;
        else ++labeled;
    }
    CHECK(labeled == 250);
    CHECK(masked == 750);

    const auto all = subsample_supervision(full, HeadKind::attribute, 1.0, 3);
    for (const auto& inst : all.instances) CHECK(inst.masked_heads.empty());
    const auto none = subsample_supervision(full, HeadKind::attribute, 0.0, 3);
    std::int64_t unmasked = 0;
    for (const auto& inst : none.instances)
        if (inst.subset == Subset::base_train && !inst.masked_heads.count(HeadKind::attribute))
            ++unmasked;
    CHECK(unmasked == 0);
}

TEST_CASE("subsample_supervision masks images for image-level heads") {
    auto full = testutil::make_direct_manifest({
        DirectCategory{"big", Split::base, 100, 20},
        DirectCategory{"n", Split::novel_val, 10, 0},
    });
    const auto out = subsample_supervision(full, HeadKind::scene, 0.5, 4);
    std::int64_t masked = 0, train_images = 0;
    std::set<std::int64_t> train_image_ids;
    for (const auto& inst : out.instances)
        if (inst.subset == Subset::base_train) train_image_ids.insert(inst.image_id);
    for (const auto& im : out.images) {
        if (!train_image_ids.count(im.image_id)) {
            CHECK(im.masked_heads.empty());
            continue;
        }
        ++train_images;
        if (im.masked_heads.count(HeadKind::scene)) ++masked;
    }
    CHECK(train_images == 100);
    CHECK(masked == 50);
    CHECK_THROWS_AS(subsample_supervision(full, HeadKind::scene, 1.25, 4), Error);
    CHECK_THROWS_AS(subsample_supervision(full, HeadKind::cls, 0.5, 4), Error);
    CHECK_THROWS_AS(subsample_supervision(full, HeadKind::rotation, 0.5, 4), Error);
}

TEST_CASE("instance portions: full is 100%, scarce_class head-heavy") {
    const auto full = eight_base_manifest();
    const auto row_full = instance_portion_report(full, full);
    CHECK(row_full.portion_pct == doctest::Approx(100.0));
    CHECK(row_full.regime == "full");

    // Zipf-flavored counts: scarce_class removes the light tail, so the
    // remaining portion exceeds the keep ratio.
    const auto sc = scarce_class(full, 0.5);
    const auto row = instance_portion_report(sc, full);
    CHECK(row.regime == "scarce_class");
    CHECK(row.ratio == doctest::Approx(0.5));
    CHECK(row.portion_pct > 50.0);

    const auto si = scarce_image(full, 0.75, 13);
    const auto row_si = instance_portion_report(si, full);
    CHECK(row_si.portion_pct ==
          doctest::Approx(100.0 * static_cast<double>(si.count_subset(Subset::base_train)) /
                          static_cast<double>(full.count_subset(Subset::base_train))));

    // Mismatched base manifest is an error.
    auto other = full;
    other.seeds["global"] = 12345;
    CHECK_THROWS_AS(instance_portion_report(sc, other), Error);

    const auto csv = portion_csv({row_full, row, row_si});
    CHECK(csv.find("regime,ratio,instances,portion_pct") == 0);
    CHECK(csv.find("scarce_class") != std::string::npos);
}

TEST_CASE("regime outputs are deterministic given the seed") {
    const auto full = eight_base_manifest();
    CHECK(serialize_manifest(scarce_image(full, 0.5, 21)) ==
          serialize_manifest(scarce_image(full, 0.5, 21)));
    CHECK(serialize_manifest(scarce_image(full, 0.5, 21)) !=
          serialize_manifest(scarce_image(full, 0.5, 22)));
    CHECK(serialize_manifest(scarce_class_adjust(full, 0.5, 21)) ==
          serialize_manifest(scarce_class_adjust(full, 0.5, 21)));
}
