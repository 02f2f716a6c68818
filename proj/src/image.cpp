#include "lrds/image.hpp"

#include <algorithm>
#include <cmath>

#include "lrds/error.hpp"

namespace lrds {

double sample_bilinear(const Tensor& img, int channel, double y, double x) {
    const int h = img.dim(1), w = img.dim(2);
    const double uy = std::clamp(y - 0.5, 0.0, static_cast<double>(h - 1));
    const double ux = std::clamp(x - 0.5, 0.0, static_cast<double>(w - 1));
    const int y0 = std::min(static_cast<int>(uy), h - 1);
    const int x0 = std::min(static_cast<int>(ux), w - 1);
    const int y1 = std::min(y0 + 1, h - 1);
    const int x1 = std::min(x0 + 1, w - 1);
    const double fy = uy - y0, fx = ux - x0;
    return (1 - fy) * (1 - fx) * img.at3(channel, y0, x0) +
           (1 - fy) * fx * img.at3(channel, y0, x1) +
           fy * (1 - fx) * img.at3(channel, y1, x0) + fy * fx * img.at3(channel, y1, x1);
}

double resize_factor(int height, int width, int target) {
    check(height > 0 && width > 0, "resize: zero-sized image");
    return static_cast<double>(target) / std::min(height, width);
}

Tensor resize_short_edge(const Tensor& img, int target) {
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    const double f = resize_factor(h, w, target);
    int oh, ow;
    if (h <= w) {
        oh = target;
        ow = static_cast<int>(std::llround(w * f));
    } else {
        ow = target;
        oh = static_cast<int>(std::llround(h * f));
    }
    Tensor out({c, oh, ow});
    for (int ch = 0; ch < c; ++ch)
        for (int y = 0; y < oh; ++y)
            for (int x = 0; x < ow; ++x)
                out.at3(ch, y, x) = sample_bilinear(img, ch, (y + 0.5) / f, (x + 0.5) / f);
    return out;
}

Tensor crop_resize(const Tensor& img, const Box& box, int out_size) {
    check(box.w > 1e-9 && box.h > 1e-9, "crop_resize: degenerate box");
    const int c = img.dim(0);
    Tensor out({c, out_size, out_size});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < out_size; ++y) {
            const double sy = box.y + (y + 0.5) * box.h / out_size;
            for (int x = 0; x < out_size; ++x) {
                const double sx = box.x + (x + 0.5) * box.w / out_size;
                out.at3(ch, y, x) = sample_bilinear(img, ch, sy, sx);
            }
        }
    }
    return out;
}

Tensor rotate90(const Tensor& img, int k) {
    check(k >= 0 && k <= 3, "rotate90: k must be in {0,1,2,3}");
    if (k == 0) return img;
    const int c = img.dim(0), h = img.dim(1), w = img.dim(2);
    if (k == 2) {
        Tensor out({c, h, w});
        for (int ch = 0; ch < c; ++ch)
            for (int y = 0; y < h; ++y)
                for (int x = 0; x < w; ++x) out.at3(ch, y, x) = img.at3(ch, h - 1 - y, w - 1 - x);
        return out;
    }
    Tensor out({c, w, h});
    for (int ch = 0; ch < c; ++ch) {
        for (int y = 0; y < w; ++y) {
            for (int x = 0; x < h; ++x) {
                if (k == 1)  // counter-clockwise
                    out.at3(ch, y, x) = img.at3(ch, x, w - 1 - y);
                else  // k == 3, clockwise
                    out.at3(ch, y, x) = img.at3(ch, h - 1 - x, y);
            }
        }
    }
    return out;
}

namespace {
Tensor grid_cell(const Tensor& img, int r, int c) {
    const int h = img.dim(1), w = img.dim(2);
    const int y0 = r * h / 3, y1 = (r + 1) * h / 3;
    const int x0 = c * w / 3, x1 = (c + 1) * w / 3;
    Tensor out({img.dim(0), y1 - y0, x1 - x0});
    for (int ch = 0; ch < img.dim(0); ++ch)
        for (int y = y0; y < y1; ++y)
            for (int x = x0; x < x1; ++x) out.at3(ch, y - y0, x - x0) = img.at3(ch, y, x);
    return out;
}
}  // namespace

PatchPair patch_location_at(const Tensor& img, int neighbor_grid_index) {
    check(img.dim(1) >= 3 && img.dim(2) >= 3, "patch_location: image smaller than the 3x3 grid");
    check(neighbor_grid_index >= 0 && neighbor_grid_index <= 8 && neighbor_grid_index != 4,
          "patch_location: neighbor index must be a non-center grid cell");
    PatchPair pair;
    pair.grid_index = neighbor_grid_index;
    pair.label = neighbor_grid_index < 4 ? neighbor_grid_index : neighbor_grid_index - 1;
    pair.center = grid_cell(img, 1, 1);
    pair.neighbor = grid_cell(img, neighbor_grid_index / 3, neighbor_grid_index % 3);
    return pair;
}

PatchPair patch_location_edit(const Tensor& img, Rng& rng) {
    const int pick = static_cast<int>(rng.next_below(8));
    return patch_location_at(img, pick < 4 ? pick : pick + 1);
}

}  // namespace lrds
