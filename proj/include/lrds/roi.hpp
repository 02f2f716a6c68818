#pragma once

// RoI-Align: bilinear pooling of a feature-map region to a fixed P x P grid.
// Box coordinates are divided by the feature stride; each cell averages
// samples x samples regularly spaced bilinear taps. Feature values sit at
// integer grid coordinates and sample positions are clamped to the valid
// range. The operation is linear in the feature map.

#include "lrds/geometry.hpp"
#include "lrds/tensor.hpp"

namespace lrds {

struct RoiSpec {
    int stride = 8;
    int pooled = 7;   // P
    int samples = 2;  // sampling taps per cell side
};

// map: [C, H, W]; box in image coordinates. Returns [C, P, P].
Tensor roi_align(const Tensor& map, const Box& box, const RoiSpec& spec);

// Scatters grad_crop [C, P, P] back onto a map-shaped gradient (accumulated
// into grad_map, which must already have the map's shape).
void roi_align_backward(const std::vector<int>& map_shape, const Box& box, const RoiSpec& spec,
                        const Tensor& grad_crop, Tensor& grad_map);

}  // namespace lrds
