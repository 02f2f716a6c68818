#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "lrds/geometry.hpp"
#include "lrds/rng.hpp"

using namespace lrds;

TEST_CASE("rng is deterministic and portable") {
    Rng a(42), b(42);
    for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
    // Frozen first draw guards against accidental changes to the stream.
    Rng c(42);
    CHECK(c.next_u64() == mix64(42 + kGolden));
    Rng d(42);
    for (int i = 0; i < 1000; ++i) {
        const double u = d.next_double();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
    }
}

TEST_CASE("rng next_below stays in range and hits all values") {
    Rng rng(3);
    std::vector<int> hits(7, 0);
    for (int i = 0; i < 7000; ++i) {
        const auto v = rng.next_below(7);
        REQUIRE(v < 7);
        hits[static_cast<std::size_t>(v)]++;
    }
    for (int h : hits) CHECK(h > 500);
}

TEST_CASE("derived seeds differ per tag and key") {
    const std::uint64_t g = 99;
    CHECK(derive_seed(g, "novel_split") != derive_seed(g, "base_val"));
    CHECK(derive_seed(g, std::uint64_t{1}) != derive_seed(g, std::uint64_t{2}));
    CHECK(derive_seed(g, "jitter") == derive_seed(g, "jitter"));
}

TEST_CASE("ratio_assign splits gamma exactly when there is room") {
    Rng rng(1);
    for (int i = 0; i < 200; ++i) {
        const auto g = ratio_assign(1000, 1000, 10, 10, 2.7, rng);
        CHECK(g.gamma_h >= 1.0);
        CHECK(g.gamma_w >= 1.0);
        CHECK(g.gamma_h * g.gamma_w == doctest::Approx(2.7).epsilon(1e-9));
    }
}

TEST_CASE("ratio_assign with gamma 1 returns exactly (1, 1)") {
    Rng rng(2);
    const auto g = ratio_assign(100, 100, 30, 40, 1.0, rng);
    CHECK(g.gamma_h == 1.0);
    CHECK(g.gamma_w == 1.0);
}

TEST_CASE("ratio_assign clamps a full-height box and maximizes the product") {
    Rng rng(3);
    for (int i = 0; i < 50; ++i) {
        const auto g = ratio_assign(100, 100, 100, 20, 2.7, rng);
        CHECK(g.gamma_h == 1.0);
        CHECK(g.gamma_w == doctest::Approx(std::min(2.7, 100.0 / 20.0)).epsilon(1e-12));
    }
}

// Feasibility oracle: the achieved area ratio must be the maximum feasible
// value <= gamma under the per-axis bounds.
TEST_CASE("ratio_assign achieves min(gamma, feasible maximum) on random boxes") {
    Rng data(11), rng(12);
    for (int i = 0; i < 2000; ++i) {
        const double H = 20 + data.uniform(0, 200);
        const double W = 20 + data.uniform(0, 200);
        const double h = data.uniform(1.0, H);
        const double w = data.uniform(1.0, W);
        const double gamma = 1.0 + data.uniform(0, 5);
        const auto g = ratio_assign(H, W, h, w, gamma, rng);
        const double best = std::min(gamma, (H / h) * (W / w));
        CHECK(g.gamma_h * g.gamma_w == doctest::Approx(best).epsilon(1e-9));
        CHECK(g.gamma_h * h <= H * (1 + 1e-12));
        CHECK(g.gamma_w * w <= W * (1 + 1e-12));
    }
}

TEST_CASE("find_jitter_range matches the interval-intersection oracle") {
    // Symmetric case: 20x20 box centered in a 100x100 image, enlarged to 40x40.
    const auto r = find_jitter_range(100, 100, 20, 20, 40, 40, 50, 50);
    CHECK(r.y_min == doctest::Approx(-10.0));
    CHECK(r.y_max == doctest::Approx(10.0));
    CHECK(r.x_min == doctest::Approx(-10.0));
    CHECK(r.x_max == doctest::Approx(10.0));
}

TEST_CASE("find_jitter_range collapses when the enlarged box spans the image") {
    const auto r = find_jitter_range(100, 100, 20, 20, 100, 100, 30, 70);
    CHECK(r.y_min == doctest::Approx(r.y_max));
    CHECK(r.x_min == doctest::Approx(r.x_max));
    // The only feasible center is the image center.
    CHECK(30 + r.y_min == doctest::Approx(50.0));
    CHECK(70 + r.x_min == doctest::Approx(50.0));
}

TEST_CASE("find_jitter_range is zero when there is no enlargement") {
    const auto r = find_jitter_range(100, 100, 20, 30, 20, 30, 40, 60);
    CHECK(r.y_min == doctest::Approx(0.0));
    CHECK(r.y_max == doctest::Approx(0.0));
    CHECK(r.x_min == doctest::Approx(0.0));
    CHECK(r.x_max == doctest::Approx(0.0));
}

TEST_CASE("find_jitter_range endpoints satisfy containment and bounds") {
    Rng data(21);
    for (int i = 0; i < 500; ++i) {
        const double H = 30 + data.uniform(0, 100);
        const double W = 30 + data.uniform(0, 100);
        const double h = data.uniform(2, H / 2);
        const double w = data.uniform(2, W / 2);
        const double cy = data.uniform(h / 2, H - h / 2);
        const double cx = data.uniform(w / 2, W - w / 2);
        const double eh = data.uniform(h, H);
        const double ew = data.uniform(w, W);
        const auto r = find_jitter_range(H, W, h, w, eh, ew, cy, cx);
        for (double my : {r.y_min, r.y_max, (r.y_min + r.y_max) / 2}) {
            for (double mx : {r.x_min, r.x_max, (r.x_min + r.x_max) / 2}) {
                const Box region{cx + mx - ew / 2, cy + my - eh / 2, ew, eh};
                const Box tight{cx - w / 2, cy - h / 2, w, h};
                CHECK(box_contains(region, tight, 1e-9));
                CHECK(box_in_image(region, W, H, 1e-9));
            }
        }
    }
}

TEST_CASE("enlarge_and_jitter with gamma 1 returns the tight box") {
    Rng rng(5);
    const Box tight{10, 20, 30, 15};
    const Box region = enlarge_and_jitter(tight, 100, 100, 1.0, rng);
    CHECK(region.x == doctest::Approx(tight.x).epsilon(1e-12));
    CHECK(region.y == doctest::Approx(tight.y).epsilon(1e-12));
    CHECK(region.w == doctest::Approx(tight.w).epsilon(1e-12));
    CHECK(region.h == doctest::Approx(tight.h).epsilon(1e-12));
}

TEST_CASE("enlarge_and_jitter satisfies containment and bounds on random cases") {
    Rng data(31), rng(32);
    for (int i = 0; i < 2000; ++i) {
        const double W = 16 + data.uniform(0, 400);
        const double H = 16 + data.uniform(0, 400);
        const double w = data.uniform(1, W);
        const double h = data.uniform(1, H);
        const double x = data.uniform(0, W - w);
        const double y = data.uniform(0, H - h);
        const double gamma = 1.0 + data.uniform(0, 4);
        const Box tight{x, y, w, h};
        const Box region = enlarge_and_jitter(tight, W, H, gamma, rng);
        CHECK(box_contains(region, tight, 1e-9));
        CHECK(box_in_image(region, W, H, 1e-9));
        const double best = std::min(gamma, (H / h) * (W / w));
        CHECK(region.area() / tight.area() == doctest::Approx(best).epsilon(1e-9));
    }
}

TEST_CASE("enlarge_and_jitter is deterministic under a fixed seed") {
    const Box tight{12, 8, 20, 25};
    Rng a(derive_seed(123, "jitter")), b(derive_seed(123, "jitter"));
    const Box r1 = enlarge_and_jitter(tight, 200, 150, 2.7, a);
    const Box r2 = enlarge_and_jitter(tight, 200, 150, 2.7, b);
    CHECK(r1.x == r2.x);
    CHECK(r1.y == r2.y);
    CHECK(r1.w == r2.w);
    CHECK(r1.h == r2.h);
}
