#pragma once

#include <algorithm>
#include <limits>
#include <vector>

#include "glvd/geometry/camera.hpp"
#include "glvd/geometry/mesh.hpp"
#include "glvd/tensor/tensor.hpp"

namespace glvd {

// Multi-channel render of one view. The image layout is fixed project-wide:
//   channel 0: depth, remapped so nearer surface reads higher, 0 = background
//   channels 1-3: camera-space normal of the visible face
//   channel 4: binary silhouette (this is also the head mask)
constexpr int kImageChannels = 5;

struct RasterOut {
    Tensor image;                // [5, H, W]
    std::vector<double> zbuf;    // camera-space z per pixel, +inf = empty
    std::vector<int> tri;        // winning face index per pixel, -1 = empty

    double depth_near = 0, depth_far = 0;  // the remap endpoints used
};

// Z-buffer rasterization at pixel centers with perspective-correct depth
// (1/z interpolated linearly in screen space). Faces are flat-shaded with
// their camera-space normal; no backface culling, the z-test settles
// visibility on the closed head surface. The depth remap endpoints come from
// the orbit radius so that any normalized scene lands in (0, 1).
inline RasterOut rasterize(const Mesh& mesh, const CameraView& cam,
                           double orbit_radius) {
    cam.validate();
    const int W = cam.width, H = cam.height;
    RasterOut out;
    out.depth_near = orbit_radius - 1.7;
    out.depth_far = orbit_radius + 1.7;
    GLVD_CHECK(out.depth_near > 0, "orbit radius ", orbit_radius,
               " puts the near plane behind the camera");
    out.zbuf.assign(static_cast<std::size_t>(W) * H,
                    std::numeric_limits<double>::infinity());
    out.tri.assign(static_cast<std::size_t>(W) * H, -1);

    std::vector<CameraView::Projection> proj(mesh.vertices.size());
    for (std::size_t i = 0; i < mesh.vertices.size(); ++i)
        proj[i] = cam.project(mesh.vertices[i]);

    for (int f = 0; f < mesh.n_faces(); ++f) {
        const auto& tr = mesh.faces[static_cast<std::size_t>(f)];
        const auto& a = proj[static_cast<std::size_t>(tr[0])];
        const auto& b = proj[static_cast<std::size_t>(tr[1])];
        const auto& c = proj[static_cast<std::size_t>(tr[2])];
        if (a.behind || b.behind || c.behind) continue;
        const double area =
            (b.u - a.u) * (c.v - a.v) - (b.v - a.v) * (c.u - a.u);
        if (area == 0.0) continue;
        const int x0 = std::max(0, static_cast<int>(std::ceil(
                                       std::min({a.u, b.u, c.u}))));
        const int x1 = std::min(W - 1, static_cast<int>(std::floor(
                                           std::max({a.u, b.u, c.u}))));
        const int y0 = std::max(0, static_cast<int>(std::ceil(
                                       std::min({a.v, b.v, c.v}))));
        const int y1 = std::min(H - 1, static_cast<int>(std::floor(
                                           std::max({a.v, b.v, c.v}))));
        for (int py = y0; py <= y1; ++py)
            for (int px = x0; px <= x1; ++px) {
                const double x = px, y = py;
                const double w0 =
                    (c.u - b.u) * (y - b.v) - (c.v - b.v) * (x - b.u);
                const double w1 =
                    (a.u - c.u) * (y - c.v) - (a.v - c.v) * (x - c.u);
                const double w2 =
                    (b.u - a.u) * (y - a.v) - (b.v - a.v) * (x - a.u);
                const bool inside =
                    area > 0 ? (w0 >= 0 && w1 >= 0 && w2 >= 0)
                             : (w0 <= 0 && w1 <= 0 && w2 <= 0);
                if (!inside) continue;
                const double la = w0 / area, lb = w1 / area, lc = w2 / area;
                const double inv_z =
                    la / a.depth + lb / b.depth + lc / c.depth;
                const double z = 1.0 / inv_z;
                const std::size_t at =
                    static_cast<std::size_t>(py) * W + px;
                if (z < out.zbuf[at]) {
                    out.zbuf[at] = z;
                    out.tri[at] = f;
                }
            }
    }

    out.image = Tensor({kImageChannels, H, W});
    const double inv_range = 1.0 / (out.depth_far - out.depth_near);
    for (int py = 0; py < H; ++py)
        for (int px = 0; px < W; ++px) {
            const std::size_t at = static_cast<std::size_t>(py) * W + px;
            if (out.tri[at] < 0) continue;
            const Vec3 n = cam.rotation * mesh.face_normal(out.tri[at]);
            out.image(0, py, px) = (out.depth_far - out.zbuf[at]) * inv_range;
            out.image(1, py, px) = n.x;
            out.image(2, py, px) = n.y;
            out.image(3, py, px) = n.z;
            out.image(4, py, px) = 1.0;
        }
    return out;
}

// The mask channel as its own [1, H, W] tensor (input contract of the
// feature encoder).
inline Tensor mask_of(const Tensor& image) {
    GLVD_CHECK(image.rank() == 3 && image.dim(0) == kImageChannels,
               "mask_of expects a [5, H, W] render");
    const int H = image.dim(1), W = image.dim(2);
    Tensor m({1, H, W});
    for (int py = 0; py < H; ++py)
        for (int px = 0; px < W; ++px) m(0, py, px) = image(4, py, px);
    return m;
}

}  // namespace glvd
