#pragma once

#include <vector>

#include "glvd/geometry/camera.hpp"
#include "glvd/geometry/mesh.hpp"

namespace glvd {

// Normalization into the +-0.95 cube. A mesh that already fits the margin box
// is left untouched (identity transform), which also makes the operation
// idempotent; otherwise the bounding-box center moves to the origin and the
// largest half-extent scales to 0.95.
struct NormTransform {
    double scale = 1.0;
    Vec3 center;  // subtracted before scaling

    Vec3 apply(const Vec3& p) const { return (p - center) * scale; }
    bool is_identity() const {
        return scale == 1.0 && center.x == 0 && center.y == 0 && center.z == 0;
    }
};

inline NormTransform compute_normalization(const Mesh& mesh, double margin = 0.95) {
    Vec3 lo, hi;
    mesh.bounds(lo, hi);
    // The slack keeps the check idempotent: a just-normalized mesh whose
    // extreme coordinate rounded one ulp past the margin still counts as
    // inside.
    const double limit = margin + 1e-9;
    bool inside = true;
    for (int i = 0; i < 3; ++i)
        if (lo[i] < -limit || hi[i] > limit) inside = false;
    if (inside) return {};
    NormTransform n;
    n.center = (lo + hi) * 0.5;
    double half = 0.0;
    for (int i = 0; i < 3; ++i) half = std::max(half, (hi[i] - lo[i]) * 0.5);
    GLVD_CHECK(half > 0.0, "cannot normalize a degenerate mesh");
    n.scale = margin / half;
    return n;
}

inline void apply_normalization(Mesh& mesh, const NormTransform& n) {
    for (Vec3& v : mesh.vertices) v = n.apply(v);
}

// Rewrites a camera so that pixels of the normalized scene match the pixels
// of the original scene exactly: with p' = s*(p - c), choosing R' = R and
// t' = s*(R*c + t) scales camera-space coordinates uniformly by s, which the
// perspective division cancels. Depths scale by s.
inline void apply_normalization(CameraView& cam, const NormTransform& n) {
    cam.translation = (cam.rotation * n.center + cam.translation) * n.scale;
}

}  // namespace glvd
