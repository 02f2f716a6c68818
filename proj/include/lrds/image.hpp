#pragma once

// Image-tensor operations: aspect-preserving resize, box crops, and the
// editing operations behind the self-supervised heads. Images are C x H x W
// doubles; continuous coordinates put pixel (r, c)'s center at (r+0.5, c+0.5).

#include "lrds/geometry.hpp"
#include "lrds/rng.hpp"
#include "lrds/tensor.hpp"

namespace lrds {

double sample_bilinear(const Tensor& img, int channel, double y, double x);

// Scales so min(H, W) == target, both axes by the same factor (rounded to
// nearest pixel on the long side). Boxes and masks scale by resize_factor.
double resize_factor(int height, int width, int target);
Tensor resize_short_edge(const Tensor& img, int target);

// Bilinear crop of a real-valued box to out_size x out_size.
Tensor crop_resize(const Tensor& img, const Box& box, int out_size);

// Rotation by 90k degrees counter-clockwise; k in {0, 1, 2, 3}.
Tensor rotate90(const Tensor& img, int k);

// 3x3 grid of crops; the center cell plus one uniformly chosen neighbor.
// Cells are indexed row-major 0..8; the label enumerates the 8 non-center
// cells row-major skipping the center (grid index 4).
struct PatchPair {
    Tensor center;
    Tensor neighbor;
    int label = 0;       // 0..7
    int grid_index = 0;  // 0..8 without 4
};
PatchPair patch_location_edit(const Tensor& img, Rng& rng);
// Deterministic variant used by tests: neighbor picked by grid index.
PatchPair patch_location_at(const Tensor& img, int neighbor_grid_index);

}  // namespace lrds
