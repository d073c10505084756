#pragma once

#include <bit>
#include <cstdint>
#include <map>

#include "glvd/geometry/mesh.hpp"

namespace glvd {

namespace detail {

// Smooth bump on the unit sphere: peaks at direction `d` with height `amp`
// and angular width `w` (in the cosine domain).
inline double sphere_bump(const Vec3& u, const Vec3& d, double amp, double w) {
    return amp * std::exp((dot(u, d) - 1.0) / (w * w));
}

// Radial head profile. Every feature is either centered on the x = 0 plane
// or comes as an exactly mirrored pair, so the template is bitwise symmetric
// about that plane. The head faces +z and is upright along +y: the nose makes
// the +z side locally nearest to a frontal camera.
inline double head_profile(const Vec3& u) {
    const Vec3 nose = normalized({0.0, -0.12, 1.0});
    const Vec3 brow = normalized({0.0, 0.30, 0.95});
    const Vec3 chin = normalized({0.0, -0.72, 0.55});
    const Vec3 occiput = normalized({0.0, 0.15, -1.0});
    const Vec3 cheek_r = normalized({0.72, -0.25, 0.62});
    const Vec3 cheek_l = normalized({-0.72, -0.25, 0.62});
    const Vec3 jaw_r = normalized({0.65, -0.60, 0.35});
    const Vec3 jaw_l = normalized({-0.65, -0.60, 0.35});
    double r = 1.0;
    r += sphere_bump(u, nose, 0.22, 0.21);
    r += sphere_bump(u, brow, 0.05, 0.35);
    r += sphere_bump(u, chin, 0.10, 0.30);
    r += sphere_bump(u, occiput, 0.08, 0.55);
    r += sphere_bump(u, cheek_r, 0.05, 0.35) + sphere_bump(u, cheek_l, 0.05, 0.35);
    r += sphere_bump(u, jaw_r, 0.04, 0.30) + sphere_bump(u, jaw_l, 0.04, 0.30);
    return r;
}

}  // namespace detail

// Canonical head mesh: a cube-sphere lattice (6*g^2 + 2 vertices, 12*g^2
// triangles, outward winding) shaped by a smooth radial profile and squashed
// into head-like proportions. Fits strictly inside the +-0.95 cube, so scene
// normalization leaves it untouched.
inline Mesh make_head_template(int grid) {
    GLVD_CHECK(grid >= 2, "head template grid must be at least 2");
    const int g = grid;
    Mesh mesh;
    std::map<std::array<int, 3>, int> lattice;

    // Integer lattice coordinates in [-g, g] (step 2 across a face) dedupe
    // shared cube edges and corners exactly.
    auto vertex_at = [&](std::array<int, 3> key) {
        auto it = lattice.find(key);
        if (it != lattice.end()) return it->second;
        const Vec3 cube{static_cast<double>(key[0]) / g,
                        static_cast<double>(key[1]) / g,
                        static_cast<double>(key[2]) / g};
        const Vec3 u = normalized(cube);
        const Vec3 shaped = u * detail::head_profile(u);
        const Vec3 axes{0.68, 0.86, 0.73};  // width, height, depth
        const int id = mesh.n_vertices();
        mesh.vertices.push_back(
            {shaped.x * axes.x, shaped.y * axes.y, shaped.z * axes.z});
        lattice.emplace(key, id);
        return id;
    };

    for (int axis = 0; axis < 3; ++axis)
        for (int sign : {1, -1}) {
            const int ua = (axis + 1) % 3, wa = (axis + 2) % 3;
            for (int i = 0; i < g; ++i)
                for (int j = 0; j < g; ++j) {
                    auto key = [&](int di, int dj) {
                        std::array<int, 3> k{};
                        k[static_cast<std::size_t>(axis)] = sign * g;
                        k[static_cast<std::size_t>(ua)] = -g + 2 * (i + di);
                        k[static_cast<std::size_t>(wa)] = -g + 2 * (j + dj);
                        return k;
                    };
                    const int v00 = vertex_at(key(0, 0)), v10 = vertex_at(key(1, 0));
                    const int v11 = vertex_at(key(1, 1)), v01 = vertex_at(key(0, 1));
                    if (sign > 0) {
                        mesh.faces.push_back({v00, v10, v11});
                        mesh.faces.push_back({v00, v11, v01});
                    } else {
                        mesh.faces.push_back({v00, v11, v10});
                        mesh.faces.push_back({v00, v01, v11});
                    }
                }
        }
    mesh.validate();
    return mesh;
}

// Index of the exactly mirrored partner (-x, y, z) for every vertex. The
// cube-sphere lattice and the symmetric head profile make partners bitwise
// equal, so lookup by bit pattern; vertices on the plane map to themselves.
inline std::vector<int> mirror_vertex_map(const Mesh& mesh) {
    auto key_of = [](const Vec3& v) {
        const double x = v.x == 0.0 ? 0.0 : v.x;  // fold -0.0 onto +0.0
        return std::array<std::uint64_t, 3>{std::bit_cast<std::uint64_t>(x),
                                            std::bit_cast<std::uint64_t>(v.y),
                                            std::bit_cast<std::uint64_t>(v.z)};
    };
    std::map<std::array<std::uint64_t, 3>, int> where;
    for (int i = 0; i < mesh.n_vertices(); ++i)
        where.emplace(key_of(mesh.vertices[static_cast<std::size_t>(i)]), i);
    std::vector<int> out(mesh.vertices.size());
    for (int i = 0; i < mesh.n_vertices(); ++i) {
        const Vec3& v = mesh.vertices[static_cast<std::size_t>(i)];
        auto it = where.find(key_of({-v.x, v.y, v.z}));
        GLVD_CHECK(it != where.end(), "mesh is not mirror-symmetric at vertex ", i);
        out[static_cast<std::size_t>(i)] = it->second;
    }
    return out;
}

}  // namespace glvd
