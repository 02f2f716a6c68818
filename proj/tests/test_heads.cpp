#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "lrds/heads.hpp"
#include "lrds/image.hpp"
#include "testutil.hpp"

using namespace lrds;
using testutil::fd_max_rel_err;
using testutil::random_tensor;

namespace {

void zero_linear(nn::Linear& fc) {
    fc.weight.value.zero();
    fc.bias.value.zero();
}

constexpr int kD = 6;  // region feature dimension in these tests

}  // namespace

TEST_CASE("cls head: uniform logits give ln K, confident logits give ~0") {
    Rng rng(1);
    ClsHead head;
    head.build(kD, 5, rng);
    const Tensor f = random_tensor({kD}, rng);
    zero_linear(head.fc);
    CHECK(head.forward(f, 2, nullptr, 1.0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    head.fc.bias.value[3] = 1e6;
    CHECK(head.forward(f, 3, nullptr, 1.0) == doctest::Approx(0.0));
    CHECK_THROWS_AS(head.forward(f, 7, nullptr, 1.0), Error);
}

TEST_CASE("cls head matches a hand-computed softmax cross entropy") {
    Rng rng(2);
    ClsHead head;
    head.build(kD, 4, rng);
    const Tensor f = random_tensor({kD}, rng);
    const Tensor logits = head.fc.forward(f);
    double denom = 0;
    for (int i = 0; i < 4; ++i) denom += std::exp(logits[static_cast<std::size_t>(i)]);
    const double expected = -std::log(std::exp(logits[1]) / denom);
    CHECK(head.forward(f, 1, nullptr, 1.0) == doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("cls head gradient matches finite differences") {
    Rng rng(3);
    for (int trial = 0; trial < 5; ++trial) {
        ClsHead head;
        head.build(kD, 5, rng);
        Tensor f = random_tensor({kD}, rng);
        const int label = static_cast<int>(rng.next_below(5));
        Tensor df({kD});
        head.forward(f, label, &df, 1.0);
        const auto loss = [&]() { return head.forward(f, label, nullptr, 1.0); };
        CHECK(fd_max_rel_err(f, loss, df) < 1e-4);
    }
}

TEST_CASE("attribute head: zero logits give A ln 2 and match the per-bit oracle") {
    Rng rng(4);
    MultiLabelHead head;
    head.build(kD, 7, rng);
    const Tensor f = random_tensor({kD}, rng);
    zero_linear(head.fc);
    const std::vector<std::uint8_t> bits{1, 0, 1, 1, 0, 0, 1};
    CHECK(head.forward(f, bits, nullptr, 1.0) == doctest::Approx(7 * std::log(2.0)).epsilon(1e-12));

    Rng rng2(5);
    MultiLabelHead h2;
    h2.build(kD, 7, rng2);
    const Tensor logits = h2.fc.forward(f);
    double expected = 0;
    for (int i = 0; i < 7; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[static_cast<std::size_t>(i)]));
        expected += bits[static_cast<std::size_t>(i)] ? -std::log(p) : -std::log(1 - p);
    }
    CHECK(h2.forward(f, bits, nullptr, 1.0) == doctest::Approx(expected).epsilon(1e-9));

    Tensor f2 = f;
    Tensor df({kD});
    h2.forward(f2, bits, &df, 1.0);
    const auto loss = [&]() { return h2.forward(f2, bits, nullptr, 1.0); };
    CHECK(fd_max_rel_err(f2, loss, df) < 1e-4);
}

TEST_CASE("hierarchy head: four independent levels") {
    Rng rng(6);
    HierarchyHead head;
    head.build(kD, {3, 4, 5, 6}, rng);
    Tensor f = random_tensor({kD}, rng);
    for (auto& fc : head.fc) zero_linear(fc);
    const std::array<int, 4> labels{0, 1, 2, 3};
    const double expected = std::log(3.0) + std::log(4.0) + std::log(5.0) + std::log(6.0);
    CHECK(head.forward(f, labels, nullptr, 1.0) == doctest::Approx(expected).epsilon(1e-12));

    for (int l = 0; l < 4; ++l)
        head.fc[static_cast<std::size_t>(l)].bias.value[static_cast<std::size_t>(labels[static_cast<std::size_t>(l)])] = 1e6;
    CHECK(head.forward(f, labels, nullptr, 1.0) == doctest::Approx(0.0));

    Rng rng2(7);
    HierarchyHead h2;
    h2.build(kD, {3, 4, 5, 6}, rng2);
    // Oracle: sum of four softmax CEs.
    double oracle = 0;
    for (int l = 0; l < 4; ++l) {
        const Tensor logits = h2.fc[static_cast<std::size_t>(l)].forward(f);
        double denom = 0;
        for (std::int64_t i = 0; i < logits.numel(); ++i) denom += std::exp(logits[static_cast<std::size_t>(i)]);
        oracle -= std::log(std::exp(logits[static_cast<std::size_t>(labels[static_cast<std::size_t>(l)])]) / denom);
    }
    CHECK(h2.forward(f, labels, nullptr, 1.0) == doctest::Approx(oracle).epsilon(1e-9));

    Tensor df({kD});
    h2.forward(f, labels, &df, 1.0);
    const auto loss = [&]() { return h2.forward(f, labels, nullptr, 1.0); };
    CHECK(fd_max_rel_err(f, loss, df) < 1e-4);
    CHECK_THROWS_AS(h2.forward(f, {0, 1, 2, 9}, nullptr, 1.0), Error);
}

TEST_CASE("hierarchy vocabulary lookups reject labels outside a level") {
    using testutil::DirectCategory;
    auto m = testutil::make_direct_manifest({
        DirectCategory{"b0", Split::base, 100, 20},
        DirectCategory{"n0", Split::novel_val, 10, 0},
    });
    const HeadSpaces spaces = HeadSpaces::from_manifest(m);
    CHECK(spaces.num_base() == 1);
    CategoryRecord novel = *m.find_category(1);
    novel.hierarchy_path = {"other", "other", "other", "n0"};
    CHECK_THROWS_AS(spaces.hierarchy_labels(novel), Error);
    CHECK(spaces.cls_label(0) == 0);
    CHECK(spaces.cls_label(1) == -1);
}

TEST_CASE("bbox head: zero targets at identity, -ln 2 for a doubled region") {
    Rng rng(8);
    BboxHead head;
    head.build(kD, rng);
    zero_linear(head.fc);
    const Box tight{10, 20, 30, 40};
    const Tensor f = random_tensor({kD}, rng);
    CHECK(head.forward(f, tight, tight, nullptr, 1.0) == doctest::Approx(0.0));

    const Box region{10 - 15, 20 - 20, 60, 80};  // doubled, concentric
    const Tensor t = BboxHead::regression_targets(region, tight);
    CHECK(t[0] == doctest::Approx(0.0));
    CHECK(t[1] == doctest::Approx(0.0));
    CHECK(t[2] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    CHECK(t[3] == doctest::Approx(-std::log(2.0)).epsilon(1e-12));
    CHECK_THROWS_AS(BboxHead::regression_targets(Box{0, 0, 0, 5}, tight), Error);

    Rng rng2(9);
    BboxHead h2;
    h2.build(kD, rng2);
    Tensor f2 = random_tensor({kD}, rng2, -2, 2);
    Tensor df({kD});
    h2.forward(f2, region, tight, &df, 1.0);
    const auto loss = [&]() { return h2.forward(f2, region, tight, nullptr, 1.0); };
    CHECK(fd_max_rel_err(f2, loss, df) < 1e-4);
}

TEST_CASE("seg_region head: saturated logits, zero logits, and the 4x4 oracle") {
    Rng rng(10);
    const int P = 3, C = 2, M = 4;
    SegRegionHead head;
    head.build(C * P * P, M, rng);
    const Tensor crop = random_tensor({C, P, P}, rng);

    zero_linear(head.fc);
    std::vector<std::uint8_t> all_fg(M * M, 1);
    CHECK(head.forward(crop, all_fg, nullptr, 1.0) ==
          doctest::Approx(M * M * std::log(2.0)).epsilon(1e-12));
    for (std::int64_t i = 0; i < head.fc.bias.value.numel(); ++i) head.fc.bias.value[static_cast<std::size_t>(i)] = 60.0;
    CHECK(head.forward(crop, all_fg, nullptr, 1.0) == doctest::Approx(0.0));

    Rng rng2(11);
    SegRegionHead h2;
    h2.build(C * P * P, M, rng2);
    std::vector<std::uint8_t> cells(M * M);
    for (auto& c : cells) c = rng2.next_below(2) ? 1 : 0;
    const Tensor logits = h2.fc.forward(flatten(crop));
    double oracle = 0;
    for (int i = 0; i < M * M; ++i) {
        const double p = 1.0 / (1.0 + std::exp(-logits[static_cast<std::size_t>(i)]));
        oracle += cells[static_cast<std::size_t>(i)] ? -std::log(p) : -std::log(1 - p);
    }
    CHECK(h2.forward(crop, cells, nullptr, 1.0) == doctest::Approx(oracle).epsilon(1e-9));

    Tensor crop2 = crop;
    Tensor dcrop({C, P, P});
    h2.forward(crop2, cells, &dcrop, 1.0);
    const auto loss = [&]() { return h2.forward(crop2, cells, nullptr, 1.0); };
    CHECK(fd_max_rel_err(crop2, loss, dcrop) < 1e-4);
}

TEST_CASE("region mask targets follow area majority") {
    // 8x8 image, mask fills the left half.
    std::vector<std::uint8_t> px(64, 0);
    for (int r = 0; r < 8; ++r)
        for (int c = 0; c < 4; ++c) px[static_cast<std::size_t>(r) * 8 + c] = 1;
    const RleMask mask = rle_encode(px, 8, 8);
    const auto cells = region_mask_targets(mask, Box{0, 0, 8, 8}, 4);
    for (int r = 0; r < 4; ++r) {
        CHECK(cells[static_cast<std::size_t>(r) * 4 + 0] == 1);
        CHECK(cells[static_cast<std::size_t>(r) * 4 + 1] == 1);
        CHECK(cells[static_cast<std::size_t>(r) * 4 + 2] == 0);
        CHECK(cells[static_cast<std::size_t>(r) * 4 + 3] == 0);
    }
    // A half-covered cell counts as foreground (>= 0.5).
    const auto cells2 = region_mask_targets(mask, Box{2, 0, 4, 8}, 2);
    CHECK(cells2[0] == 1);  // covers x in [2,4): fully inside the mask... cell [2,4) -> fraction 1
    CHECK(cells2[1] == 0);
    CHECK_THROWS_AS(region_mask_targets(mask, Box{0, 0, 0, 0}, 2), Error);
}

TEST_CASE("seg_fcn head: ignore handling and the masked-CE oracle") {
    Rng rng(12);
    const int K = 4, C = 3;
    SegFcnHead head;
    head.build(C, K, rng);
    const Tensor map = random_tensor({C, 3, 4}, rng);

    LabelRaster ignored = make_raster(3, 4);
    int n_valid = -1;
    CHECK(head.forward(map, ignored, nullptr, 1.0, &n_valid) == 0.0);
    CHECK(n_valid == 0);

    LabelRaster single = make_raster(3, 4);
    single.at(1, 2) = 2;
    head.conv.weight.value.zero();
    head.conv.bias.value.zero();
    CHECK(head.forward(map, single, nullptr, 1.0, &n_valid) ==
          doctest::Approx(std::log(static_cast<double>(K))).epsilon(1e-12));
    CHECK(n_valid == 1);

    Rng rng2(13);
    SegFcnHead h2;
    h2.build(C, K, rng2);
    LabelRaster labels = make_raster(3, 4);
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 4; ++x)
            labels.at(y, x) = rng2.next_below(3) == 0 ? kIgnoreLabel
                                                      : static_cast<std::int32_t>(rng2.next_below(K));
    // Oracle: mean CE over labeled cells of the 1x1-conv logits.
    const Tensor logits = h2.conv.forward(map);
    double total = 0;
    int count = 0;
    for (int y = 0; y < 3; ++y) {
        for (int x = 0; x < 4; ++x) {
            if (labels.at(y, x) == kIgnoreLabel) continue;
            double denom = 0;
            for (int k = 0; k < K; ++k) denom += std::exp(logits.at3(k, y, x));
            total += -std::log(std::exp(logits.at3(labels.at(y, x), y, x)) / denom);
            ++count;
        }
    }
    REQUIRE(count > 0);
    CHECK(h2.forward(map, labels, nullptr, 1.0) == doctest::Approx(total / count).epsilon(1e-9));

    Tensor map2 = map;
    Tensor dmap({C, 3, 4});
    h2.forward(map2, labels, &dmap, 1.0);
    const auto loss = [&]() { return h2.forward(map2, labels, nullptr, 1.0); };
    CHECK(fd_max_rel_err(map2, loss, dmap) < 1e-4);
}

TEST_CASE("stuff head: plain binary mode and combined weighted mode") {
    Rng rng(14);
    const int C = 3;
    StuffHead plain;
    plain.build(C, false, 0, 0, rng);
    const Tensor map = random_tensor({C, 3, 3}, rng);

    LabelRaster unknown = make_raster(3, 3);
    int n_valid = -1;
    CHECK(plain.forward(map, unknown, nullptr, 1.0, &n_valid) == 0.0);
    CHECK(n_valid == 0);

    LabelRaster binary = make_raster(3, 3);
    binary.at(0, 0) = 1;  // object
    binary.at(2, 2) = 0;  // stuff
    Tensor map_copy = map;
    Tensor dmap2({C, 3, 3});
    CHECK(plain.forward(map_copy, binary, &dmap2, 1.0) > 0);
    const auto plain_loss = [&]() { return plain.forward(map_copy, binary, nullptr, 1.0); };
    CHECK(fd_max_rel_err(map_copy, plain_loss, dmap2) < 1e-4);

    // Combined mode: 2 foreground classes + 2 stuff classes.
    Rng rng2(15);
    StuffHead combined;
    combined.build(C, true, 2, 2, rng2);
    LabelRaster bg_only = make_raster(3, 3);
    bg_only.at(0, 0) = 2;  // stuff class 0
    bg_only.at(1, 1) = 3;  // stuff class 1
    StuffHead unweighted = combined;  // same parameters, weight 1 on background
    unweighted.background_weight = 1.0;
    CHECK(combined.forward(map, bg_only, nullptr, 1.0) ==
          doctest::Approx(0.1 * unweighted.forward(map, bg_only, nullptr, 1.0)).epsilon(1e-12));

    // Weighted-CE oracle on a mixed raster.
    LabelRaster mixed = make_raster(3, 3);
    mixed.at(0, 0) = 0;
    mixed.at(0, 1) = 3;
    mixed.at(2, 1) = 1;
    const Tensor logits = combined.conv.forward(map);
    double total = 0;
    int count = 0;
    for (int y = 0; y < 3; ++y)
        for (int x = 0; x < 3; ++x) {
            const int label = mixed.at(y, x);
            if (label == kIgnoreLabel) continue;
            double denom = 0;
            for (int k = 0; k < 4; ++k) denom += std::exp(logits.at3(k, y, x));
            const double ce = -std::log(std::exp(logits.at3(label, y, x)) / denom);
            total += (label >= 2 ? 0.1 : 1.0) * ce;
            ++count;
        }
    CHECK(combined.forward(map, mixed, nullptr, 1.0) == doctest::Approx(total / count).epsilon(1e-9));

    Tensor map3 = map;
    Tensor dmap3({C, 3, 3});
    combined.forward(map3, mixed, &dmap3, 1.0);
    const auto comb_loss = [&]() { return combined.forward(map3, mixed, nullptr, 1.0); };
    CHECK(fd_max_rel_err(map3, comb_loss, dmap3) < 1e-4);
}

TEST_CASE("scene head: uniform logits give ln K and gradients check out") {
    Rng rng(16);
    SceneHead head;
    head.build(3, 5, rng);
    const Tensor map = random_tensor({3, 4, 4}, rng);
    zero_linear(head.fc);
    CHECK(head.forward(map, 1, nullptr, 1.0) == doctest::Approx(std::log(5.0)).epsilon(1e-12));

    Rng rng2(17);
    SceneHead h2;
    h2.build(3, 5, rng2);
    const Tensor pooled = nn::global_avg_pool(map);
    const Tensor logits = h2.fc.forward(pooled);
    double denom = 0;
    for (int i = 0; i < 5; ++i) denom += std::exp(logits[static_cast<std::size_t>(i)]);
    CHECK(h2.forward(map, 3, nullptr, 1.0) ==
          doctest::Approx(-std::log(std::exp(logits[3]) / denom)).epsilon(1e-9));

    Tensor map2 = map;
    Tensor dmap({3, 4, 4});
    h2.forward(map2, 3, &dmap, 1.0);
    const auto loss = [&]() { return h2.forward(map2, 3, nullptr, 1.0); };
    CHECK(fd_max_rel_err(map2, loss, dmap) < 1e-4);
}

TEST_CASE("rotation edit: group properties and the 4-way loss") {
    Rng rng(18);
    const Tensor img = random_tensor({2, 5, 7}, rng);
    const Tensor same = rotate90(img, 0);
    CHECK(same.data == img.data);

    const Tensor once = rotate90(img, 1);
    const Tensor twice = rotate90(once, 1);
    const Tensor direct = rotate90(img, 2);
    REQUIRE(twice.shape == direct.shape);
    CHECK(twice.data == direct.data);

    const Tensor thrice = rotate90(rotate90(rotate90(img, 1), 1), 1);
    const Tensor k3 = rotate90(img, 3);
    CHECK(thrice.data == k3.data);
    const Tensor full = rotate90(rotate90(img, 2), 2);
    CHECK(full.data == img.data);

    RotationHead head;
    head.build(2, rng);
    zero_linear(head.fc);
    CHECK(head.forward(once, 1, nullptr, 1.0) == doctest::Approx(std::log(4.0)).epsilon(1e-12));

    Rng rng2(19);
    RotationHead h2;
    h2.build(2, rng2);
    Tensor map = random_tensor({2, 3, 3}, rng2);
    Tensor dmap({2, 3, 3});
    h2.forward(map, 2, &dmap, 1.0);
    const auto loss = [&]() { return h2.forward(map, 2, nullptr, 1.0); };
    CHECK(fd_max_rel_err(map, loss, dmap) < 1e-4);
}

TEST_CASE("patch location edit: enumeration table and reachability") {
    Rng rng(20);
    const Tensor img = random_tensor({1, 9, 9}, rng);
    // Exhaustive 8-case table: grid index -> label skips the center.
    const int expected_label[9] = {0, 1, 2, 3, -1, 4, 5, 6, 7};
    for (int g = 0; g < 9; ++g) {
        if (g == 4) continue;
        const PatchPair p = patch_location_at(img, g);
        CHECK(p.label == expected_label[g]);
        CHECK(p.center.dim(1) == 3);
        CHECK(p.neighbor.dim(1) == 3);
    }
    // Directly above the center is grid index 1 -> label 1.
    CHECK(patch_location_at(img, 1).label == 1);

    std::set<int> seen;
    Rng picker(21);
    for (int i = 0; i < 200; ++i) seen.insert(patch_location_edit(img, picker).label);
    CHECK(seen.size() == 8);

    Tensor small({1, 2, 2});
    CHECK_THROWS_AS(patch_location_at(small, 0), Error);
}

TEST_CASE("patch location head: ln 8 at zero logits and finite differences") {
    Rng rng(22);
    PatchLocationHead head;
    head.build(2, rng);
    zero_linear(head.fc);
    const Tensor c = random_tensor({2, 3, 3}, rng);
    const Tensor n = random_tensor({2, 3, 3}, rng);
    CHECK(head.forward(c, n, 5, nullptr, nullptr, 1.0) ==
          doctest::Approx(std::log(8.0)).epsilon(1e-12));

    Rng rng2(23);
    PatchLocationHead h2;
    h2.build(2, rng2);
    Tensor c2 = c, n2 = n;
    Tensor dc({2, 3, 3}), dn({2, 3, 3});
    h2.forward(c2, n2, 3, &dc, &dn, 1.0);
    const auto loss_c = [&]() { return h2.forward(c2, n2, 3, nullptr, nullptr, 1.0); };
    CHECK(fd_max_rel_err(c2, loss_c, dc) < 1e-4);
    CHECK(fd_max_rel_err(n2, loss_c, dn) < 1e-4);
}

TEST_CASE("all head losses are nonnegative on random inputs") {
    Rng rng(24);
    for (int trial = 0; trial < 20; ++trial) {
        ClsHead cls;
        cls.build(kD, 3, rng);
        const Tensor f = random_tensor({kD}, rng, -3, 3);
        CHECK(cls.forward(f, static_cast<int>(rng.next_below(3)), nullptr, 1.0) >= 0.0);
        MultiLabelHead ml;
        ml.build(kD, 4, rng);
        CHECK(ml.forward(f, {1, 0, 0, 1}, nullptr, 1.0) >= 0.0);
        BboxHead bb;
        bb.build(kD, rng);
        CHECK(bb.forward(f, Box{0, 0, 10, 10}, Box{1, 1, 5, 5}, nullptr, 1.0) >= 0.0);
    }
}
