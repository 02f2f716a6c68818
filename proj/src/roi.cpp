#include "lrds/roi.hpp"

#include <algorithm>
#include <cmath>

#include "lrds/error.hpp"

namespace lrds {

namespace {

struct Tap {
    int y0, x0, y1, x1;
    double w00, w01, w10, w11;
};

Tap make_tap(double y, double x, int h, int w) {
    const double cy = std::clamp(y, 0.0, static_cast<double>(h - 1));
    const double cx = std::clamp(x, 0.0, static_cast<double>(w - 1));
    Tap t;
    t.y0 = std::min(static_cast<int>(cy), h - 1);
    t.x0 = std::min(static_cast<int>(cx), w - 1);
    t.y1 = std::min(t.y0 + 1, h - 1);
    t.x1 = std::min(t.x0 + 1, w - 1);
    const double fy = cy - t.y0, fx = cx - t.x0;
    t.w00 = (1 - fy) * (1 - fx);
    t.w01 = (1 - fy) * fx;
    t.w10 = fy * (1 - fx);
    t.w11 = fy * fx;
    return t;
}

void check_box(const Box& box, const RoiSpec& spec) {
    const double min_side = spec.stride * 1e-6;
    check(box.w > min_side && box.h > min_side, "roi_align: degenerate box ", box.w, "x", box.h);
}

template <typename Fn>
void for_each_tap(const std::vector<int>& shape, const Box& box, const RoiSpec& spec, Fn&& fn) {
    const int h = shape[1], w = shape[2];
    const double by = box.y / spec.stride;
    const double bx = box.x / spec.stride;
    const double bh = box.h / spec.stride;
    const double bw = box.w / spec.stride;
    const double cell_h = bh / spec.pooled;
    const double cell_w = bw / spec.pooled;
    const double inv_taps = 1.0 / (spec.samples * spec.samples);
    for (int py = 0; py < spec.pooled; ++py) {
        for (int px = 0; px < spec.pooled; ++px) {
            for (int sy = 0; sy < spec.samples; ++sy) {
                const double y = by + (py + (sy + 0.5) / spec.samples) * cell_h;
                for (int sx = 0; sx < spec.samples; ++sx) {
                    const double x = bx + (px + (sx + 0.5) / spec.samples) * cell_w;
                    fn(py, px, make_tap(y, x, h, w), inv_taps);
                }
            }
        }
    }
}

}  // namespace

Tensor roi_align(const Tensor& map, const Box& box, const RoiSpec& spec) {
    check_box(box, spec);
    const int c = map.dim(0);
    Tensor out({c, spec.pooled, spec.pooled});
    for_each_tap(map.shape, box, spec, [&](int py, int px, const Tap& t, double inv) {
        for (int ch = 0; ch < c; ++ch) {
            const double v = t.w00 * map.at3(ch, t.y0, t.x0) + t.w01 * map.at3(ch, t.y0, t.x1) +
                             t.w10 * map.at3(ch, t.y1, t.x0) + t.w11 * map.at3(ch, t.y1, t.x1);
            out.at3(ch, py, px) += v * inv;
        }
    });
    return out;
}

void roi_align_backward(const std::vector<int>& map_shape, const Box& box, const RoiSpec& spec,
                        const Tensor& grad_crop, Tensor& grad_map) {
    check_box(box, spec);
    check(grad_map.shape == map_shape, "roi_align_backward: grad_map shape mismatch");
    const int c = map_shape[0];
    for_each_tap(map_shape, box, spec, [&](int py, int px, const Tap& t, double inv) {
        for (int ch = 0; ch < c; ++ch) {
            const double g = grad_crop.at3(ch, py, px) * inv;
            grad_map.at3(ch, t.y0, t.x0) += g * t.w00;
            grad_map.at3(ch, t.y0, t.x1) += g * t.w01;
            grad_map.at3(ch, t.y1, t.x0) += g * t.w10;
            grad_map.at3(ch, t.y1, t.x1) += g * t.w11;
        }
    });
}

}  // namespace lrds
