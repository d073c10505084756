#pragma once

#include <vector>

#include "glvd/geometry/mesh.hpp"

namespace glvd {

// Farthest-point sampling of K vertex indices. Fully deterministic: starts at
// the lowest-index vertex farthest from the centroid, then greedily adds the
// vertex maximizing the distance to the selected set (ties to the lowest
// index). The classic FPS guarantee holds: the minimum pairwise distance of
// the selected set is at least the covering radius of the unselected ones.
inline std::vector<int> farthest_point_sample(const Mesh& mesh, int k) {
    const int n = mesh.n_vertices();
    GLVD_CHECK(k >= 1 && k <= n, "farthest_point_sample: k=", k,
               " out of range for ", n, " vertices");
    const Vec3 c = mesh.centroid();
    int start = 0;
    double best = -1.0;
    for (int i = 0; i < n; ++i) {
        const double d = norm2(mesh.vertices[static_cast<std::size_t>(i)] - c);
        if (d > best) {
            best = d;
            start = i;
        }
    }
    std::vector<int> picked{start};
    std::vector<double> min_d2(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i)
        min_d2[static_cast<std::size_t>(i)] =
            norm2(mesh.vertices[static_cast<std::size_t>(i)] -
                  mesh.vertices[static_cast<std::size_t>(start)]);
    while (static_cast<int>(picked.size()) < k) {
        int next = 0;
        double far = -1.0;
        for (int i = 0; i < n; ++i)
            if (min_d2[static_cast<std::size_t>(i)] > far) {
                far = min_d2[static_cast<std::size_t>(i)];
                next = i;
            }
        picked.push_back(next);
        for (int i = 0; i < n; ++i)
            min_d2[static_cast<std::size_t>(i)] =
                std::min(min_d2[static_cast<std::size_t>(i)],
                         norm2(mesh.vertices[static_cast<std::size_t>(i)] -
                               mesh.vertices[static_cast<std::size_t>(next)]));
    }
    return picked;
}

inline std::vector<Vec3> keypoint_positions(const Mesh& mesh,
                                            const std::vector<int>& indices) {
    std::vector<Vec3> out;
    out.reserve(indices.size());
    for (int i : indices) {
        GLVD_CHECK(i >= 0 && i < mesh.n_vertices(), "keypoint index out of range");
        out.push_back(mesh.vertices[static_cast<std::size_t>(i)]);
    }
    return out;
}

}  // namespace glvd
