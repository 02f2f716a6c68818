#pragma once

// Region-box construction: context enlargement by a target area ratio and
// random jitter of the box center, constrained so the enlarged box always
// contains the tight box and stays inside the image. Boxes are real-valued
// with closed bounds [0, W] x [0, H]; containment uses <=.

#include <algorithm>
#include <cassert>
#include <cmath>

#include "lrds/rng.hpp"

namespace lrds {

struct Box {
    double x = 0;  // left
    double y = 0;  // top
    double w = 0;
    double h = 0;

    double cx() const { return x + w / 2; }
    double cy() const { return y + h / 2; }
    double area() const { return w * h; }
    double right() const { return x + w; }
    double bottom() const { return y + h; }
};

inline bool box_contains(const Box& outer, const Box& inner, double eps = 0.0) {
    return outer.x <= inner.x + eps && outer.y <= inner.y + eps &&
           inner.right() <= outer.right() + eps && inner.bottom() <= outer.bottom() + eps;
}

inline bool box_in_image(const Box& b, double img_w, double img_h, double eps = 0.0) {
    return b.x >= -eps && b.y >= -eps && b.right() <= img_w + eps && b.bottom() <= img_h + eps;
}

// Splits the target area ratio gamma into per-axis factors gamma_h * gamma_w
// = gamma. gamma_h is sampled as gamma^u, u ~ U[0,1] (symmetric in log
// space), then each factor is clamped to its own image bound. The residual
// product is redistributed to the other axis, again capped at that axis's own
// bound, so the achieved ratio is the maximum feasible value <= gamma.
struct AxisRatios {
    double gamma_h = 1;
    double gamma_w = 1;
};

inline AxisRatios ratio_assign(double img_h, double img_w, double h, double w, double gamma,
                               Rng& rng) {
    assert(gamma >= 1.0 && h > 0 && w > 0 && h <= img_h && w <= img_w);
    const double gh_max = img_h / h;
    const double gw_max = img_w / w;
    double gh = std::pow(gamma, rng.next_double());
    gh = std::clamp(gh, 1.0, gh_max);
    double gw = std::clamp(gamma / gh, 1.0, gw_max);
    gh = std::clamp(gamma / gw, 1.0, gh_max);
    return {gh, gw};
}

// Feasible offsets (m_y, m_x) for the enlarged box center relative to the
// tight box center (cy, cx). Any center inside the returned intervals keeps
// the enlarged (eh x ew) box inside the image and containing the (h x w)
// tight box.
struct JitterRange {
    double y_min = 0, y_max = 0;
    double x_min = 0, x_max = 0;
};

inline JitterRange find_jitter_range(double img_h, double img_w, double h, double w, double eh,
                                     double ew, double cy, double cx) {
    JitterRange r;
    r.y_min = std::max(eh / 2 - cy, (h - eh) / 2);
    r.y_max = std::min(img_h - eh / 2 - cy, (eh - h) / 2);
    r.x_min = std::max(ew / 2 - cx, (w - ew) / 2);
    r.x_max = std::min(img_w - ew / 2 - cx, (ew - w) / 2);
    // Infeasible only if eh/ew violate [h, img_h] x [w, img_w] or the tight
    // box is outside the image, both excluded by the preconditions.
    assert(r.y_min <= r.y_max + 1e-9 && r.x_min <= r.x_max + 1e-9);
    return r;
}

inline Box enlarge_and_jitter(const Box& tight, double img_w, double img_h, double gamma,
                              Rng& rng) {
    const AxisRatios g = ratio_assign(img_h, img_w, tight.h, tight.w, gamma, rng);
    const double eh = g.gamma_h * tight.h;
    const double ew = g.gamma_w * tight.w;
    const JitterRange jr =
        find_jitter_range(img_h, img_w, tight.h, tight.w, eh, ew, tight.cy(), tight.cx());
    const double mx = rng.uniform(jr.x_min, jr.x_max);
    const double my = rng.uniform(jr.y_min, jr.y_max);
    const double cy = tight.cy() + my;
    const double cx = tight.cx() + mx;
    return Box{cx - ew / 2, cy - eh / 2, ew, eh};
}

}  // namespace lrds
