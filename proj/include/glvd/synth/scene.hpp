#pragma once

#include <utility>
#include <vector>

#include "glvd/geometry/scene.hpp"
#include "glvd/synth/identity.hpp"
#include "glvd/synth/raster.hpp"

namespace glvd {

// One training/evaluation scene: a normalized ground-truth head plus the
// cameras its views were (or will be) rendered from.
struct SynthScene {
    Mesh mesh;
    std::vector<CameraView> cameras;
    IdentityParams identity;
    bool mirrored = false;

    void validate() const {
        mesh.validate();
        GLVD_CHECK(compute_normalization(mesh).is_identity(),
                   "scene mesh is not normalized");
        for (const CameraView& c : cameras) c.validate();
    }
};

inline std::vector<CameraView> orbit_cameras(const std::vector<double>& yaws,
                                             double radius, int image_size,
                                             double focal_scale) {
    std::vector<CameraView> cams;
    cams.reserve(yaws.size());
    for (double yaw : yaws)
        cams.push_back(make_orbit_camera(yaw, radius, image_size, image_size,
                                         focal_scale));
    return cams;
}

// Mirror the whole scene about the x = 0 plane. Vertices map (x,y,z) to
// (-x,y,z) and face winding flips so normals stay outward; each camera is
// reflected and composed with an in-camera horizontal flip, which keeps the
// rotation proper. Writing F = diag(-1,1,1) for the world mirror and
// S = diag(-1,1,1) for the image flip: R' = S R F, t' = S t gives
// x_cam' = S x_cam, i.e. the mirrored scene photographs as the exactly
// horizontally mirrored image. Applying symmetrize twice returns the
// original scene bitwise.
inline SynthScene symmetrize(const SynthScene& scene) {
    SynthScene out = scene;
    out.mirrored = !scene.mirrored;
    for (Vec3& v : out.mesh.vertices) v.x = -v.x;
    for (auto& f : out.mesh.faces) std::swap(f[1], f[2]);
    for (CameraView& cam : out.cameras) {
        Mat3& r = cam.rotation;
        // S R F: S negates row 0, F negates column 0; (0,0) flips twice.
        r(0, 1) = -r(0, 1);
        r(0, 2) = -r(0, 2);
        r(1, 0) = -r(1, 0);
        r(2, 0) = -r(2, 0);
        cam.translation.x = -cam.translation.x;
        cam.yaw_deg = -cam.yaw_deg;
    }
    return out;
}

}  // namespace glvd
