#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>

#include "lrds/benchgen.hpp"
#include "lrds/data.hpp"
#include "lrds/extractor.hpp"
#include "lrds/image.hpp"
#include "lrds/model.hpp"
#include "lrds/roi.hpp"
#include "testutil.hpp"

using namespace lrds;
using testutil::random_tensor;

TEST_CASE("resize_short_edge scales 600x900 to 800x1200 and keeps boxes similar") {
    Rng rng(1);
    Tensor img = random_tensor({1, 600, 900}, rng);
    const Tensor out = resize_short_edge(img, 800);
    CHECK(out.dim(1) == 800);
    CHECK(out.dim(2) == 1200);
    const double f = resize_factor(600, 900, 800);
    CHECK(f == doctest::Approx(800.0 / 600.0));
    // A box scales by the same factor as the image.
    const Box b{30, 60, 90, 120};
    CHECK(b.x * f == doctest::Approx(40.0));
    CHECK(b.h * f == doctest::Approx(160.0));
}

TEST_CASE("resize_short_edge leaves a matching image unchanged") {
    Rng rng(2);
    Tensor img = random_tensor({2, 64, 64}, rng);
    const Tensor out = resize_short_edge(img, 64);
    REQUIRE(out.shape == img.shape);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(out.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));
    CHECK_THROWS_AS(resize_factor(0, 10, 64), Error);
}

TEST_CASE("tiny extractor maps 64x64 to an 8x8 stride-8 feature map") {
    Rng rng(3);
    Extractor ex;
    ex.build(tiny_extractor(3), rng);
    CHECK(ex.stride() == 8);
    const Tensor img = random_tensor({3, 64, 64}, rng);
    const Tensor map = ex.forward(img);
    CHECK(map.dim(0) == ex.out_channels());
    CHECK(map.dim(1) == 8);
    CHECK(map.dim(2) == 8);
    CHECK(map.all_finite());
    // Odd sizes round up: ceil(50/8) = 7.
    const Tensor map2 = ex.forward(random_tensor({3, 50, 58}, rng));
    CHECK(map2.dim(1) == 7);
    CHECK(map2.dim(2) == 8);
}

TEST_CASE("resnet18-style config has stride 8 and 512 channels") {
    const auto cfg = resnet18_stride8();
    CHECK(cfg.stride() == 8);
    CHECK(cfg.out_channels() == 512);
}

TEST_CASE("a local perturbation stays inside the receptive field") {
    // Two stride-2 k3 convs: output (i, j) depends on inputs [4i-3, 4i+3].
    Rng rng(4);
    Extractor ex;
    ExtractorConfig cfg;
    cfg.in_channels = 1;
    cfg.layers = {{"conv", 3, 2, 3, true}, {"conv", 4, 2, 3, true}};
    ex.build(cfg, rng);
    Tensor img = random_tensor({1, 32, 32}, rng);
    const Tensor base = ex.forward(img);
    img.at3(0, 0, 0) += 5.0;
    const Tensor poked = ex.forward(img);
    for (int c = 0; c < base.dim(0); ++c)
        for (int y = 0; y < base.dim(1); ++y)
            for (int x = 0; x < base.dim(2); ++x) {
                if (4 * y - 3 <= 0 && 4 * x - 3 <= 0) continue;  // inside the field
                CHECK(poked.at3(c, y, x) == base.at3(c, y, x));
            }
}

TEST_CASE("extractor parameter gradients match finite differences") {
    Rng rng(5);
    Extractor ex;
    ExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.layers = {{"conv", 3, 2, 3, true}, {"conv", 4, 2, 3, true}};
    ex.build(cfg, rng);
    const Tensor img = random_tensor({2, 8, 8}, rng);
    const Tensor probe = random_tensor({4, 2, 2}, rng);  // scalar = <output, probe>

    Extractor::State state;
    const Tensor out = ex.forward(img, &state);
    REQUIRE(out.shape == probe.shape);
    for (auto& [name, p] : ex.named_params()) p->zero_grad();
    ex.backward(state, probe);

    for (auto& [name, p] : ex.named_params()) {
        const auto loss = [&]() {
            const Tensor o = ex.forward(img);
            double acc = 0;
            for (std::size_t i = 0; i < o.data.size(); ++i) acc += o.data[i] * probe.data[i];
            return acc;
        };
        const double err = testutil::fd_max_rel_err(p->value, loss, p->grad);
        CAPTURE(name);
        CHECK(err < 1e-4);
    }
}

TEST_CASE("instance and layer norm gradients match finite differences") {
    Rng rng(15);
    Tensor x = random_tensor({2, 3, 4}, rng);
    const Tensor probe = random_tensor({2, 3, 4}, rng);
    const Tensor gx = nn::instance_norm_backward(x, probe);
    const auto loss = [&]() {
        const Tensor y = nn::instance_norm(x);
        double acc = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * probe.data[i];
        return acc;
    };
    CHECK(testutil::fd_max_rel_err(x, loss, gx) < 1e-4);

    Tensor v = random_tensor({9}, rng);
    const Tensor vprobe = random_tensor({9}, rng);
    const Tensor gv = nn::layer_norm_backward(v, vprobe);
    const auto vloss = [&]() {
        const Tensor y = nn::layer_norm(v);
        double acc = 0;
        for (std::size_t i = 0; i < y.data.size(); ++i) acc += y.data[i] * vprobe.data[i];
        return acc;
    };
    CHECK(testutil::fd_max_rel_err(v, vloss, gv) < 1e-4);

    // Normalized outputs: zero mean, unit variance per channel plane.
    const Tensor y = nn::instance_norm(x);
    for (int c = 0; c < 2; ++c) {
        double mean = 0, var = 0;
        for (int i = 0; i < 12; ++i) mean += y.data[static_cast<std::size_t>(c) * 12 + i];
        mean /= 12;
        for (int i = 0; i < 12; ++i) {
            const double d = y.data[static_cast<std::size_t>(c) * 12 + i] - mean;
            var += d * d;
        }
        CHECK(mean == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(var / 12 == doctest::Approx(1.0).epsilon(1e-3));
    }
}

TEST_CASE("normalized extractor gradients match finite differences end to end") {
    Rng rng(16);
    Extractor ex;
    ExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.norm = true;
    cfg.layers = {{"conv", 3, 2, 3, true}, {"block", 4, 2, 3, true}};
    ex.build(cfg, rng);
    Tensor img = random_tensor({2, 8, 8}, rng);
    Extractor::State state;
    const Tensor out = ex.forward(img, &state);
    const Tensor probe = random_tensor(out.shape, rng);
    for (auto& [name, p] : ex.named_params()) p->zero_grad();
    const Tensor dimg = ex.backward(state, probe);
    const auto loss = [&]() {
        const Tensor o = ex.forward(img);
        double acc = 0;
        for (std::size_t i = 0; i < o.data.size(); ++i) acc += o.data[i] * probe.data[i];
        return acc;
    };
    CHECK(testutil::fd_max_rel_err(img, loss, dimg) < 1e-4);
    for (auto& [name, p] : ex.named_params()) {
        CAPTURE(name);
        CHECK(testutil::fd_max_rel_err(p->value, loss, p->grad) < 1e-4);
    }
}

TEST_CASE("residual block forward/backward round trip") {
    Rng rng(6);
    Extractor ex;
    ExtractorConfig cfg;
    cfg.in_channels = 2;
    cfg.layers = {{"block", 4, 2, 3, true}, {"block", 4, 1, 3, true}};
    ex.build(cfg, rng);
    Tensor img = random_tensor({2, 8, 8}, rng);
    Extractor::State state;
    const Tensor out = ex.forward(img, &state);
    CHECK(out.dim(1) == 4);
    const Tensor probe = random_tensor(out.shape, rng);
    for (auto& [name, p] : ex.named_params()) p->zero_grad();
    const Tensor dimg = ex.backward(state, probe);
    const auto loss = [&]() {
        const Tensor o = ex.forward(img);
        double acc = 0;
        for (std::size_t i = 0; i < o.data.size(); ++i) acc += o.data[i] * probe.data[i];
        return acc;
    };
    CHECK(testutil::fd_max_rel_err(img, loss, dimg) < 1e-4);
}

TEST_CASE("roi_align of a constant map is constant") {
    Tensor map({3, 6, 6});
    for (std::size_t c = 0; c < 3; ++c)
        for (int i = 0; i < 36; ++i) map.data[c * 36 + static_cast<std::size_t>(i)] = 2.5 + static_cast<double>(c);
    const RoiSpec spec{8, 7, 2};
    const Tensor crop = roi_align(map, Box{5, 9, 30, 22}, spec);
    for (int c = 0; c < 3; ++c)
        for (int y = 0; y < 7; ++y)
            for (int x = 0; x < 7; ++x)
                CHECK(crop.at3(c, y, x) == doctest::Approx(2.5 + c).epsilon(1e-12));
}

namespace {
// Independent brute-force bilinear pooling used as the oracle.
double oracle_cell(const Tensor& map, int ch, double y0, double x0, double cell_h, double cell_w,
                   int samples) {
    const int h = map.dim(1), w = map.dim(2);
    double acc = 0;
    for (int sy = 0; sy < samples; ++sy) {
        for (int sx = 0; sx < samples; ++sx) {
            double y = y0 + (sy + 0.5) * cell_h / samples;
            double x = x0 + (sx + 0.5) * cell_w / samples;
            y = std::min(std::max(y, 0.0), static_cast<double>(h - 1));
            x = std::min(std::max(x, 0.0), static_cast<double>(w - 1));
            const int iy = std::min(static_cast<int>(std::floor(y)), h - 1);
            const int ix = std::min(static_cast<int>(std::floor(x)), w - 1);
            const int iy2 = std::min(iy + 1, h - 1);
            const int ix2 = std::min(ix + 1, w - 1);
            const double fy = y - iy, fx = x - ix;
            acc += (1 - fy) * (1 - fx) * map.at3(ch, iy, ix) + (1 - fy) * fx * map.at3(ch, iy, ix2) +
                   fy * (1 - fx) * map.at3(ch, iy2, ix) + fy * fx * map.at3(ch, iy2, ix2);
        }
    }
    return acc / (samples * samples);
}

Tensor oracle_roi(const Tensor& map, const Box& box, const RoiSpec& spec) {
    Tensor out({map.dim(0), spec.pooled, spec.pooled});
    const double bh = box.h / spec.stride, bw = box.w / spec.stride;
    for (int c = 0; c < map.dim(0); ++c)
        for (int py = 0; py < spec.pooled; ++py)
            for (int px = 0; px < spec.pooled; ++px)
                out.at3(c, py, px) =
                    oracle_cell(map, c, box.y / spec.stride + py * bh / spec.pooled,
                                box.x / spec.stride + px * bw / spec.pooled, bh / spec.pooled,
                                bw / spec.pooled, spec.samples);
    return out;
}
}  // namespace

TEST_CASE("roi_align agrees with the brute-force oracle on random cases") {
    Rng rng(7);
    const RoiSpec spec{8, 7, 2};
    for (int trial = 0; trial < 100; ++trial) {
        const int h = 4 + static_cast<int>(rng.next_below(12));
        const int w = 4 + static_cast<int>(rng.next_below(12));
        const Tensor map = random_tensor({2, h, w}, rng);
        const double bw = rng.uniform(2.0, w * 8.0);
        const double bh = rng.uniform(2.0, h * 8.0);
        const Box box{rng.uniform(0, w * 8.0 - bw), rng.uniform(0, h * 8.0 - bh), bw, bh};
        const Tensor got = roi_align(map, box, spec);
        const Tensor want = oracle_roi(map, box, spec);
        for (std::size_t i = 0; i < got.data.size(); ++i)
            CHECK(std::abs(got.data[i] - want.data[i]) < 1e-5);
    }
}

TEST_CASE("roi_align cells over an integer grid equal corner means") {
    // 2x2 cells aligned with the feature grid and 2x2 sampling: each cell's
    // taps average to the bilinear value at the cell center.
    Rng rng(8);
    const Tensor map = random_tensor({1, 5, 5}, rng);
    const RoiSpec spec{1, 2, 2};
    const Box box{1, 1, 2, 2};  // feature coords == image coords at stride 1
    const Tensor crop = roi_align(map, box, spec);
    for (int py = 0; py < 2; ++py)
        for (int px = 0; px < 2; ++px) {
            const double mean = (map.at3(0, 1 + py, 1 + px) + map.at3(0, 1 + py, 2 + px) +
                                 map.at3(0, 2 + py, 1 + px) + map.at3(0, 2 + py, 2 + px)) /
                                4.0;
            CHECK(crop.at3(0, py, px) == doctest::Approx(mean).epsilon(1e-12));
        }
}

TEST_CASE("roi_align is linear in the feature map") {
    Rng rng(9);
    const Tensor m1 = random_tensor({3, 6, 8}, rng);
    const Tensor m2 = random_tensor({3, 6, 8}, rng);
    const RoiSpec spec{8, 7, 2};
    const Box box{3, 5, 40, 30};
    const double a = 1.7, b = -0.4;
    Tensor mix = m1;
    mix.scale(a);
    Tensor m2b = m2;
    m2b.scale(b);
    mix += m2b;
    const Tensor left = roi_align(mix, box, spec);
    Tensor right = roi_align(m1, box, spec);
    right.scale(a);
    Tensor r2 = roi_align(m2, box, spec);
    r2.scale(b);
    right += r2;
    for (std::size_t i = 0; i < left.data.size(); ++i)
        CHECK(left.data[i] == doctest::Approx(right.data[i]).epsilon(1e-9));
}

TEST_CASE("shifting the box by map periods shifts pooled cells accordingly") {
    // Map periodic in x with period 3 cells; shifting the box by 3 strides
    // leaves the pooled crop unchanged.
    Tensor map({1, 6, 12});
    for (int y = 0; y < 6; ++y)
        for (int x = 0; x < 12; ++x) map.at3(0, y, x) = std::sin(2.1 * (x % 3)) + 0.3 * y;
    const RoiSpec spec{8, 4, 2};
    const Box box{8, 5, 30, 28};
    const Box shifted{8 + 3 * 8, 5, 30, 28};
    const Tensor c1 = roi_align(map, box, spec);
    const Tensor c2 = roi_align(map, shifted, spec);
    for (std::size_t i = 0; i < c1.data.size(); ++i)
        CHECK(c1.data[i] == doctest::Approx(c2.data[i]).epsilon(1e-9));
}

TEST_CASE("roi_align rejects degenerate boxes") {
    const Tensor map({1, 4, 4});
    CHECK_THROWS_AS(roi_align(map, Box{0, 0, 0, 10}, RoiSpec{8, 7, 2}), Error);
}

TEST_CASE("roi_align backward matches finite differences") {
    Rng rng(10);
    Tensor map = random_tensor({2, 5, 6}, rng);
    const RoiSpec spec{8, 3, 2};
    const Box box{4, 6, 28, 20};
    const Tensor probe = random_tensor({2, 3, 3}, rng);
    Tensor grad(map.shape);
    roi_align_backward(map.shape, box, spec, probe, grad);
    const auto loss = [&]() {
        const Tensor crop = roi_align(map, box, spec);
        double acc = 0;
        for (std::size_t i = 0; i < crop.data.size(); ++i) acc += crop.data[i] * probe.data[i];
        return acc;
    };
    CHECK(testutil::fd_max_rel_err(map, loss, grad) < 1e-4);
}

TEST_CASE("crop_and_pool: uniform crops, fixed dimension, location invariance") {
    Rng rng(11);
    Extractor ex;
    ex.build(tiny_extractor(1, 4, 6, 8), rng);

    // Uniform-color crop equals the extractor response to a uniform input.
    Tensor img({1, 40, 40});
    for (double& v : img.data) v = 0.7;
    const Tensor f1 = crop_and_pool(ex, img, Box{4, 4, 16, 10}, 16);
    Tensor uniform({1, 16, 16});
    for (double& v : uniform.data) v = 0.7;
    const Tensor f2 = nn::global_avg_pool(ex.forward(uniform));
    REQUIRE(f1.numel() == f2.numel());
    for (std::size_t i = 0; i < f1.data.size(); ++i)
        CHECK(f1.data[i] == doctest::Approx(f2.data[i]).epsilon(1e-12));

    // Output dimension equals the channel count regardless of box size.
    const Tensor f3 = crop_and_pool(ex, img, Box{0, 0, 39, 17}, 16);
    CHECK(f3.numel() == 8);
    CHECK(f1.numel() == 8);

    // Identical content at different locations gives identical features.
    Tensor scene({1, 64, 64});
    Rng noise(12);
    Tensor patch = random_tensor({1, 8, 8}, noise);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x) {
            scene.at3(0, 4 + y, 4 + x) = patch.at3(0, y, x);
            scene.at3(0, 40 + y, 50 + x) = patch.at3(0, y, x);
        }
    const Tensor a = crop_and_pool(ex, scene, Box{4, 4, 8, 8}, 16);
    const Tensor b = crop_and_pool(ex, scene, Box{50, 40, 8, 8}, 16);
    for (std::size_t i = 0; i < a.data.size(); ++i)
        CHECK(a.data[i] == doctest::Approx(b.data[i]).epsilon(1e-12));
    CHECK_THROWS_AS(crop_and_pool(ex, img, Box{0, 0, 0, 0}, 16), Error);
}

TEST_CASE("checkpoint save/load restores parameters and config exactly") {
    using testutil::DirectCategory;
    auto manifest = testutil::make_direct_manifest({
        DirectCategory{"b0", Split::base, 100, 20},
        DirectCategory{"b1", Split::base, 110, 22},
        DirectCategory{"n0", Split::novel_val, 10, 0},
    });
    manifest.scene_names = {"indoor", "outdoor"};
    ModelConfig cfg;
    cfg.extractor = tiny_extractor(3, 4, 6, 8);
    cfg.feature_dim = 16;
    cfg.roi = RoiSpec{8, 3, 2};
    cfg.mask_res = 4;
    Model m = Model::build(cfg, HeadSpaces::from_manifest(manifest));
    const std::string path = "/tmp/lrds_test_ckpt.bin";
    m.save(path, "unit-test");
    Model back = Model::load(path);
    CHECK(back.param_hash() == m.param_hash());
    CHECK(back.config.hash() == m.config.hash());
    CHECK(back.spaces.base_ids == m.spaces.base_ids);
    std::remove(path.c_str());
}

TEST_CASE("ppm round trip preserves 8-bit images") {
    Rng rng(14);
    Tensor img({3, 9, 11});
    for (double& v : img.data) v = rng.next_below(256) / 255.0;
    const std::string path = "/tmp/lrds_test_img.ppm";
    save_ppm(img, path);
    const Tensor back = load_ppm(path);
    REQUIRE(back.shape == img.shape);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        CHECK(back.data[i] == doctest::Approx(img.data[i]).epsilon(1e-12));
    std::remove(path.c_str());
}

TEST_CASE("dataset resize scales boxes and masks consistently") {
    ToyFixtureOptions opts;
    opts.base_classes = 2;
    opts.base_instances_per_class = 102;
    opts.novel_classes = 2;
    opts.image_size = 32;
    const auto raw = parse_fixture(toy_fixture_json(opts));
    const auto manifest = build_manifest(raw, 2.0, 5).manifest;
    ModelConfig mc;
    mc.extractor = tiny_extractor(3, 4, 6, 8);
    mc.feature_dim = 8;
    mc.roi = RoiSpec{8, 2, 2};
    mc.mask_res = 2;
    DatasetOptions dopts;
    dopts.resize_short = 64;  // 2x upscale
    const Dataset data = Dataset::from_manifest(manifest, HeadSpaces::from_manifest(manifest), mc,
                                                default_image_loader(""), dopts);
    REQUIRE(!data.samples.empty());
    for (const auto& sample : data.samples) {
        CHECK(sample.image.dim(1) == 64);
        CHECK(sample.image.dim(2) == 64);
        for (const auto& obj : sample.objects) {
            const auto* inst = manifest.find_instance(obj.instance_id);
            CHECK(obj.tight.w == doctest::Approx(inst->tight_box.w * 2.0));
            CHECK(obj.region.x == doctest::Approx(inst->region_box.x * 2.0));
            CHECK(box_contains(obj.region, obj.tight, 1e-9));
            if (obj.mask) {
                CHECK(obj.mask->height == 64);
                // The scaled mask stays inside the scaled tight box bounds.
                const MaskIntegral integral(*obj.mask);
                const double inside = integral.rect(obj.tight.y - 0.5, obj.tight.x - 0.5,
                                                    obj.tight.bottom() + 0.5, obj.tight.right() + 0.5);
                CHECK(inside == doctest::Approx(integral.rect(0, 0, 64, 64)));
            }
        }
        if (sample.seg_fcn_labels) {
            CHECK(sample.seg_fcn_labels->height == 8);  // ceil(64 / 8)
            CHECK(sample.seg_fcn_labels->width == 8);
        }
    }
}

TEST_CASE("forward passes are deterministic") {
    Rng rng(13);
    Extractor ex;
    ex.build(tiny_extractor(3), rng);
    const Tensor img = random_tensor({3, 32, 32}, rng);
    const Tensor m1 = ex.forward(img);
    const Tensor m2 = ex.forward(img);
    CHECK(m1.data == m2.data);
}
