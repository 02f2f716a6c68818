#pragma once

// Binary instance masks stored as run-length encodings over row-major pixel
// order (first run counts zeros), plus the exact-area machinery used to
// rasterize masks onto coarser grids: an integral image that evaluates the
// integral of a binary raster over any real-valued rectangle exactly.

#include <cstdint>
#include <vector>

namespace lrds {

struct RleMask {
    int height = 0;
    int width = 0;
    std::vector<std::int64_t> counts;  // alternating 0-run / 1-run lengths

    bool empty() const { return height <= 0 || width <= 0 || counts.empty(); }
    std::int64_t foreground_count() const {
        std::int64_t n = 0;
        for (std::size_t i = 1; i < counts.size(); i += 2) n += counts[i];
        return n;
    }
};

RleMask rle_encode(const std::vector<std::uint8_t>& pixels, int height, int width);
std::vector<std::uint8_t> rle_decode(const RleMask& mask);

// Integer label raster (row-major); used for stuff masks and derived
// stride-8 supervision targets. kIgnoreLabel marks unlabeled pixels.
inline constexpr std::int32_t kIgnoreLabel = -1;

struct LabelRaster {
    int height = 0;
    int width = 0;
    std::vector<std::int32_t> labels;

    std::int32_t at(int r, int c) const { return labels[static_cast<std::size_t>(r) * width + c]; }
    std::int32_t& at(int r, int c) { return labels[static_cast<std::size_t>(r) * width + c]; }
};

LabelRaster make_raster(int height, int width, std::int32_t fill = kIgnoreLabel);

// Per-cell area-majority downsampling to ceil(dim/stride); ties go to the
// smaller label, kIgnoreLabel competes like any other label.
LabelRaster downsample_majority(const LabelRaster& src, int stride);

// F(y, x) = exact integral of the raster over [0, x] x [0, y] for real
// coordinates; piecewise-bilinear between the integer cumulative sums.
class MaskIntegral {
public:
    explicit MaskIntegral(const RleMask& mask);
    MaskIntegral(const std::vector<std::uint8_t>& pixels, int height, int width);

    double at(double y, double x) const;
    double rect(double y0, double x0, double y1, double x1) const;
    // Fraction of the rectangle covered by foreground, in [0, 1].
    double fraction(double y0, double x0, double y1, double x1) const;

    int height() const { return height_; }
    int width() const { return width_; }

private:
    void build(const std::vector<std::uint8_t>& pixels);
    int height_ = 0;
    int width_ = 0;
    std::vector<double> cum_;  // (height+1) x (width+1)
};

}  // namespace lrds
