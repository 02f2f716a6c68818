#include "lrds/mask.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "lrds/error.hpp"

namespace lrds {

RleMask rle_encode(const std::vector<std::uint8_t>& pixels, int height, int width) {
    check(height >= 0 && width >= 0, "rle_encode: negative dimensions");
    check(pixels.size() == static_cast<std::size_t>(height) * width,
          "rle_encode: pixel buffer size ", pixels.size(), " != ", height, "x", width);
    RleMask m;
    m.height = height;
    m.width = width;
    std::uint8_t current = 0;
    std::int64_t run = 0;
    for (std::uint8_t p : pixels) {
        const std::uint8_t v = p ? 1 : 0;
        if (v == current) {
            ++run;
        } else {
            m.counts.push_back(run);
            current = v;
            run = 1;
        }
    }
    m.counts.push_back(run);
    return m;
}

std::vector<std::uint8_t> rle_decode(const RleMask& mask) {
    std::vector<std::uint8_t> pixels;
    const std::size_t total = static_cast<std::size_t>(mask.height) * mask.width;
    pixels.reserve(total);
    std::uint8_t current = 0;
    for (std::int64_t run : mask.counts) {
        check(run >= 0, "rle_decode: negative run length");
        pixels.insert(pixels.end(), static_cast<std::size_t>(run), current);
        current = current ? 0 : 1;
    }
    check(pixels.size() == total, "rle_decode: runs sum to ", pixels.size(), ", expected ", total);
    return pixels;
}

LabelRaster make_raster(int height, int width, std::int32_t fill) {
    LabelRaster r;
    r.height = height;
    r.width = width;
    r.labels.assign(static_cast<std::size_t>(height) * width, fill);
    return r;
}

LabelRaster downsample_majority(const LabelRaster& src, int stride) {
    check(stride >= 1, "downsample_majority: stride must be >= 1");
    const int oh = (src.height + stride - 1) / stride;
    const int ow = (src.width + stride - 1) / stride;
    LabelRaster out = make_raster(oh, ow);
    for (int r = 0; r < oh; ++r) {
        for (int c = 0; c < ow; ++c) {
            std::map<std::int32_t, int> area;
            const int r1 = std::min((r + 1) * stride, src.height);
            const int c1 = std::min((c + 1) * stride, src.width);
            for (int y = r * stride; y < r1; ++y)
                for (int x = c * stride; x < c1; ++x) area[src.at(y, x)]++;
            std::int32_t best = kIgnoreLabel;
            int best_area = -1;
            for (const auto& [label, a] : area) {
                if (a > best_area) {  // map iterates labels ascending, so ties keep the smaller
                    best = label;
                    best_area = a;
                }
            }
            out.at(r, c) = best;
        }
    }
    return out;
}

MaskIntegral::MaskIntegral(const RleMask& mask) : height_(mask.height), width_(mask.width) {
    build(rle_decode(mask));
}

MaskIntegral::MaskIntegral(const std::vector<std::uint8_t>& pixels, int height, int width)
    : height_(height), width_(width) {
    check(pixels.size() == static_cast<std::size_t>(height) * width, "MaskIntegral: bad buffer");
    build(pixels);
}

void MaskIntegral::build(const std::vector<std::uint8_t>& pixels) {
    const int hw = width_ + 1;
    cum_.assign(static_cast<std::size_t>(height_ + 1) * hw, 0.0);
    for (int r = 0; r < height_; ++r) {
        double row = 0;
        for (int c = 0; c < width_; ++c) {
            row += pixels[static_cast<std::size_t>(r) * width_ + c] ? 1.0 : 0.0;
            cum_[static_cast<std::size_t>(r + 1) * hw + (c + 1)] =
                cum_[static_cast<std::size_t>(r) * hw + (c + 1)] + row;
        }
    }
}

double MaskIntegral::at(double y, double x) const {
    y = std::clamp(y, 0.0, static_cast<double>(height_));
    x = std::clamp(x, 0.0, static_cast<double>(width_));
    const int iy = std::min(static_cast<int>(std::floor(y)), height_ - 1);
    const int ix = std::min(static_cast<int>(std::floor(x)), width_ - 1);
    if (iy < 0 || ix < 0) return 0.0;
    const double fy = y - iy;
    const double fx = x - ix;
    const int hw = width_ + 1;
    const double c00 = cum_[static_cast<std::size_t>(iy) * hw + ix];
    const double c01 = cum_[static_cast<std::size_t>(iy) * hw + ix + 1];
    const double c10 = cum_[static_cast<std::size_t>(iy + 1) * hw + ix];
    const double c11 = cum_[static_cast<std::size_t>(iy + 1) * hw + ix + 1];
    // The raster is constant on unit pixels, so the exact integral is the
    // bilinear interpolation of the corner cumulative sums.
    return (1 - fy) * (1 - fx) * c00 + (1 - fy) * fx * c01 + fy * (1 - fx) * c10 + fy * fx * c11;
}

double MaskIntegral::rect(double y0, double x0, double y1, double x1) const {
    if (y1 <= y0 || x1 <= x0) return 0.0;
    return at(y1, x1) - at(y0, x1) - at(y1, x0) + at(y0, x0);
}

double MaskIntegral::fraction(double y0, double x0, double y1, double x1) const {
    const double area = (y1 - y0) * (x1 - x0);
    if (area <= 0) return 0.0;
    return rect(y0, x0, y1, x1) / area;
}

}  // namespace lrds
