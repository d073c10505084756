#pragma once

#include "glvd/geometry/vec.hpp"

namespace glvd {

// Pinhole camera. Extrinsics map world to camera space (x_cam = R*x + t)
// with +z pointing into the scene and +y down the image, so the projection
//   u = fx * x/z + cx,   v = fy * y/z + cy
// lands in pixel-index coordinates (integer u,v = texel centers).
struct CameraView {
    Mat3 rotation;
    Vec3 translation;
    double fx = 1, fy = 1, cx = 0, cy = 0;
    int width = 0, height = 0;
    double yaw_deg = 0.0;  // orbit angle this view was generated at

    void validate() const {
        GLVD_CHECK(is_rotation(rotation), "camera rotation is not orthonormal");
        GLVD_CHECK(fx > 0 && fy > 0, "camera focal lengths must be positive");
        GLVD_CHECK(width > 0 && height > 0, "camera image size must be positive");
    }

    Vec3 world_to_cam(const Vec3& p) const { return rotation * p + translation; }
    Vec3 cam_to_world(const Vec3& c) const {
        return rotation.transposed() * (c - translation);
    }
    Vec3 position() const { return rotation.transposed() * (translation * -1.0); }

    struct Projection {
        double u = 0, v = 0;   // pixel-index coordinates
        double depth = 0;      // camera-space z
        bool behind = false;   // z too small to project
        bool inside = false;   // lands on the pixel grid
    };

    Projection project(const Vec3& p) const {
        Projection pr;
        const Vec3 c = world_to_cam(p);
        pr.depth = c.z;
        if (c.z <= 1e-6) {
            pr.behind = true;
            return pr;
        }
        pr.u = fx * c.x / c.z + cx;
        pr.v = fy * c.y / c.z + cy;
        pr.inside = pr.u >= -0.5 && pr.u <= width - 0.5 && pr.v >= -0.5 &&
                    pr.v <= height - 0.5;
        return pr;
    }

    Vec3 unproject(double u, double v, double depth) const {
        GLVD_CHECK(depth > 0, "unproject needs positive depth");
        const Vec3 c{(u - cx) / fx * depth, (v - cy) / fy * depth, depth};
        return cam_to_world(c);
    }

    // Pixel-index coordinates -> normalized [-1,1]^2 as used by grid sampling.
    Vec3 pixel_to_norm(double u, double v) const {
        return {(2.0 * u + 1.0) / width - 1.0, (2.0 * v + 1.0) / height - 1.0, 0.0};
    }
};

// Camera on an orbit of the origin in the y=0 plane (plus optional pitch),
// looking at the origin with world +y as up.
inline CameraView make_orbit_camera(double yaw_deg, double radius, int width,
                                    int height, double focal_scale,
                                    double pitch_deg = 0.0) {
    GLVD_CHECK(radius > 0, "orbit radius must be positive");
    const double yaw = deg2rad(yaw_deg), pitch = deg2rad(pitch_deg);
    const Vec3 eye{radius * std::cos(pitch) * std::sin(yaw),
                   radius * std::sin(pitch),
                   radius * std::cos(pitch) * std::cos(yaw)};
    const Vec3 fwd = normalized(eye * -1.0);
    const Vec3 up{0, 1, 0};
    const Vec3 xaxis = normalized(cross(fwd, up));  // image right
    const Vec3 yaxis = cross(fwd, xaxis);           // image down (y-down frame)
    CameraView cam;
    cam.rotation = Mat3::from_rows(xaxis, yaxis, fwd);
    cam.translation = cam.rotation * eye * -1.0;
    cam.width = width;
    cam.height = height;
    cam.fx = cam.fy = focal_scale * width;
    cam.cx = (width - 1) * 0.5;
    cam.cy = (height - 1) * 0.5;
    cam.yaw_deg = yaw_deg;
    cam.validate();
    return cam;
}

}  // namespace glvd
