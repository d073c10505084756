#pragma once

#include <algorithm>
#include <numeric>
#include <vector>

#include "glvd/geometry/mesh.hpp"
#include "glvd/tensor/rng.hpp"

namespace glvd {

// Closest point on triangle (a,b,c) to p, handling every Voronoi region
// (vertices, edges, interior). Ericson, Real-Time Collision Detection 5.1.5.
inline Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a,
                                      const Vec3& b, const Vec3& c) {
    const Vec3 ab = b - a, ac = c - a, ap = p - a;
    const double d1 = dot(ab, ap), d2 = dot(ac, ap);
    if (d1 <= 0.0 && d2 <= 0.0) return a;

    const Vec3 bp = p - b;
    const double d3 = dot(ab, bp), d4 = dot(ac, bp);
    if (d3 >= 0.0 && d4 <= d3) return b;

    const double vc = d1 * d4 - d3 * d2;
    if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) return a + ab * (d1 / (d1 - d3));

    const Vec3 cp = p - c;
    const double d5 = dot(ab, cp), d6 = dot(ac, cp);
    if (d6 >= 0.0 && d5 <= d6) return c;

    const double vb = d5 * d2 - d1 * d6;
    if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) return a + ac * (d2 / (d2 - d6));

    const double va = d3 * d6 - d5 * d4;
    if (va <= 0.0 && (d4 - d3) >= 0.0 && (d5 - d6) >= 0.0)
        return b + (c - b) * ((d4 - d3) / ((d4 - d3) + (d5 - d6)));

    const double denom = 1.0 / (va + vb + vc);
    return a + ab * (vb * denom) + ac * (vc * denom);
}

inline double point_triangle_dist2(const Vec3& p, const Vec3& a, const Vec3& b,
                                   const Vec3& c) {
    return norm2(p - closest_point_on_triangle(p, a, b, c));
}

// Reference oracle: exact minimum over all triangles, no acceleration.
inline double point_mesh_dist2_brute(const Vec3& p, const Mesh& mesh) {
    GLVD_CHECK(mesh.n_faces() > 0, "distance to a mesh with no faces");
    double best = 1e308;
    for (const auto& f : mesh.faces)
        best = std::min(best, point_triangle_dist2(
                                  p, mesh.vertices[static_cast<std::size_t>(f[0])],
                                  mesh.vertices[static_cast<std::size_t>(f[1])],
                                  mesh.vertices[static_cast<std::size_t>(f[2])]));
    return best;
}

// Median-split AABB tree over triangles. Queries prune on box distance, so
// the returned minimum is exactly the brute-force minimum (same per-triangle
// arithmetic, min over a superset-pruned set).
class MeshBvh {
  public:
    explicit MeshBvh(const Mesh& mesh) : mesh_(mesh) {
        GLVD_CHECK(mesh.n_faces() > 0, "BVH over a mesh with no faces");
        tris_.resize(static_cast<std::size_t>(mesh.n_faces()));
        std::iota(tris_.begin(), tris_.end(), 0);
        nodes_.reserve(tris_.size() * 2);
        build(0, static_cast<int>(tris_.size()));
    }

    double dist2(const Vec3& p) const {
        double best = 1e308;
        query(0, p, best);
        return best;
    }

  private:
    struct Node {
        Vec3 lo, hi;
        int begin = 0, count = 0;  // leaf triangles when count > 0
        int left = -1, right = -1;
    };

    int build(int begin, int count) {
        const int node_idx = static_cast<int>(nodes_.size());
        nodes_.emplace_back();
        Vec3 lo{1e308, 1e308, 1e308}, hi{-1e308, -1e308, -1e308};
        for (int i = begin; i < begin + count; ++i)
            for (int k = 0; k < 3; ++k) {
                const Vec3& v = mesh_.vertices[static_cast<std::size_t>(
                    mesh_.faces[static_cast<std::size_t>(
                        tris_[static_cast<std::size_t>(i)])][static_cast<std::size_t>(k)])];
                for (int d = 0; d < 3; ++d) {
                    lo[d] = std::min(lo[d], v[d]);
                    hi[d] = std::max(hi[d], v[d]);
                }
            }
        nodes_[static_cast<std::size_t>(node_idx)].lo = lo;
        nodes_[static_cast<std::size_t>(node_idx)].hi = hi;
        if (count <= 4) {
            nodes_[static_cast<std::size_t>(node_idx)].begin = begin;
            nodes_[static_cast<std::size_t>(node_idx)].count = count;
            return node_idx;
        }
        int axis = 0;
        const Vec3 ext = hi - lo;
        if (ext.y > ext.x) axis = 1;
        if (ext.z > ext[axis]) axis = 2;
        const int mid = begin + count / 2;
        std::nth_element(tris_.begin() + begin, tris_.begin() + mid,
                         tris_.begin() + begin + count, [&](int ta, int tb) {
                             return tri_center(ta, axis) < tri_center(tb, axis);
                         });
        const int l = build(begin, count / 2);
        const int r = build(mid, count - count / 2);
        nodes_[static_cast<std::size_t>(node_idx)].left = l;
        nodes_[static_cast<std::size_t>(node_idx)].right = r;
        return node_idx;
    }

    double tri_center(int t, int axis) const {
        const auto& f = mesh_.faces[static_cast<std::size_t>(t)];
        return (mesh_.vertices[static_cast<std::size_t>(f[0])][axis] +
                mesh_.vertices[static_cast<std::size_t>(f[1])][axis] +
                mesh_.vertices[static_cast<std::size_t>(f[2])][axis]) /
               3.0;
    }

    static double box_dist2(const Vec3& p, const Vec3& lo, const Vec3& hi) {
        double d2 = 0.0;
        for (int i = 0; i < 3; ++i) {
            const double d = p[i] < lo[i] ? lo[i] - p[i]
                                          : (p[i] > hi[i] ? p[i] - hi[i] : 0.0);
            d2 += d * d;
        }
        return d2;
    }

    void query(int node_idx, const Vec3& p, double& best) const {
        const Node& n = nodes_[static_cast<std::size_t>(node_idx)];
        if (box_dist2(p, n.lo, n.hi) >= best) return;
        if (n.count > 0) {
            for (int i = n.begin; i < n.begin + n.count; ++i) {
                const auto& f = mesh_.faces[static_cast<std::size_t>(
                    tris_[static_cast<std::size_t>(i)])];
                best = std::min(
                    best, point_triangle_dist2(
                              p, mesh_.vertices[static_cast<std::size_t>(f[0])],
                              mesh_.vertices[static_cast<std::size_t>(f[1])],
                              mesh_.vertices[static_cast<std::size_t>(f[2])]));
            }
            return;
        }
        // visit the nearer child first for tighter pruning
        const double dl = box_dist2(p, nodes_[static_cast<std::size_t>(n.left)].lo,
                                    nodes_[static_cast<std::size_t>(n.left)].hi);
        const double dr = box_dist2(p, nodes_[static_cast<std::size_t>(n.right)].lo,
                                    nodes_[static_cast<std::size_t>(n.right)].hi);
        if (dl <= dr) {
            query(n.left, p, best);
            query(n.right, p, best);
        } else {
            query(n.right, p, best);
            query(n.left, p, best);
        }
    }

    const Mesh& mesh_;
    std::vector<int> tris_;
    std::vector<Node> nodes_;
};

// Area-uniform surface sampling: triangles drawn proportionally to area,
// barycentric coordinates via the square-root warp.
inline std::vector<Vec3> sample_surface(const Mesh& mesh, int n, Rng& rng) {
    GLVD_CHECK(mesh.n_faces() > 0 && n >= 0, "sample_surface: bad arguments");
    std::vector<double> cumulative(static_cast<std::size_t>(mesh.n_faces()));
    double total = 0.0;
    for (int f = 0; f < mesh.n_faces(); ++f) {
        total += mesh.face_area(f);
        cumulative[static_cast<std::size_t>(f)] = total;
    }
    GLVD_CHECK(total > 0.0, "sample_surface: zero-area mesh");
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const double u = rng.uniform() * total;
        const auto it = std::lower_bound(cumulative.begin(), cumulative.end(), u);
        const int f = static_cast<int>(it - cumulative.begin());
        const auto& t = mesh.faces[static_cast<std::size_t>(std::min(
            f, mesh.n_faces() - 1))];
        const double r1 = std::sqrt(rng.uniform()), r2 = rng.uniform();
        const Vec3& a = mesh.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& b = mesh.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& c = mesh.vertices[static_cast<std::size_t>(t[2])];
        out.push_back(a * (1.0 - r1) + b * (r1 * (1.0 - r2)) + c * (r1 * r2));
    }
    return out;
}

// One-directional Chamfer: mean distance from samples on the reference
// surface to the candidate surface, in the coordinate units of the meshes.
inline double chamfer_to_surface(const std::vector<Vec3>& reference_samples,
                                 const MeshBvh& candidate) {
    GLVD_CHECK(!reference_samples.empty(), "chamfer with no samples");
    double sum = 0.0;
    for (const Vec3& p : reference_samples) sum += std::sqrt(candidate.dist2(p));
    return sum / static_cast<double>(reference_samples.size());
}

inline double chamfer_gt_to_pred(const Mesh& gt, const Mesh& pred, int n_samples,
                                 Rng& rng) {
    const std::vector<Vec3> samples = sample_surface(gt, n_samples, rng);
    MeshBvh bvh(pred);
    return chamfer_to_surface(samples, bvh);
}

}  // namespace glvd
