#include <cmath>

#include "doctest.h"

#include "glvd/geometry/camera.hpp"
#include "glvd/geometry/chamfer.hpp"
#include "glvd/geometry/keypoints.hpp"
#include "glvd/geometry/mesh.hpp"
#include "glvd/geometry/scene.hpp"

using namespace glvd;

namespace {
Mesh random_soup(Rng& rng, int n_verts, int n_faces) {
    Mesh m;
    for (int i = 0; i < n_verts; ++i)
        m.vertices.push_back(
            {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)});
    while (m.n_faces() < n_faces) {
        int a = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_verts)));
        int b = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_verts)));
        int c = static_cast<int>(rng.index(static_cast<std::uint64_t>(n_verts)));
        if (a == b || b == c || a == c) continue;
        m.faces.push_back({a, b, c});
    }
    m.validate();
    return m;
}

Mesh unit_square(double z) {
    Mesh m;
    m.vertices = {{-0.5, -0.5, z}, {0.5, -0.5, z}, {0.5, 0.5, z}, {-0.5, 0.5, z}};
    m.faces = {{0, 1, 2}, {0, 2, 3}};
    return m;
}
}  // namespace

TEST_CASE("rotation helpers produce orthonormal matrices") {
    for (double a : {0.0, 0.3, -1.2, 2.9}) {
        CHECK(is_rotation(rot_y(a)));
        CHECK(is_rotation(rot_x(a)));
        const Mat3 r = rot_x(a) * rot_y(a * 0.7);
        CHECK(is_rotation(r));
        const Vec3 p{0.2, -0.4, 0.9};
        const Vec3 q = r.transposed() * (r * p);
        CHECK(norm(q - p) < 1e-12);
    }
}

TEST_CASE("mesh validation rejects degenerate and out-of-range faces") {
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
    m.faces = {{0, 1, 2}};
    CHECK_NOTHROW(m.validate());
    m.faces = {{0, 1, 1}};
    CHECK_THROWS_AS(m.validate(), Error);
    m.faces = {{0, 1, 3}};
    CHECK_THROWS_AS(m.validate(), Error);
}

TEST_CASE("topology_id: winding-insensitive, embedding-insensitive, face-sensitive") {
    Rng rng(5);
    Mesh m = random_soup(rng, 30, 40);
    const std::uint64_t id = m.topology_id();

    // mirroring flips winding order of every face; id is unchanged
    Mesh mirrored = m;
    for (Vec3& v : mirrored.vertices) v.x = -v.x;
    for (auto& f : mirrored.faces) std::swap(f[1], f[2]);
    CHECK(mirrored.topology_id() == id);

    // moving vertices does not touch connectivity
    Mesh moved = m;
    for (Vec3& v : moved.vertices) v += {0.1, -0.2, 0.05};
    CHECK(moved.topology_id() == id);

    // rotating a face's index triple is the same triangle
    Mesh rotated = m;
    auto& f0 = rotated.faces[0];
    f0 = {f0[1], f0[2], f0[0]};
    CHECK(rotated.topology_id() == id);

    // dropping a face changes the id
    Mesh cut = m;
    cut.faces.pop_back();
    CHECK(cut.topology_id() != id);

    // rewiring a face changes the id
    Mesh rewired = m;
    rewired.faces[2] = {rewired.faces[2][0], rewired.faces[2][2],
                        (rewired.faces[2][1] + 1) % 30 == rewired.faces[2][0]
                            ? (rewired.faces[2][1] + 2) % 30
                            : (rewired.faces[2][1] + 1) % 30};
    if (rewired.faces[2][0] != rewired.faces[2][1] &&
        rewired.faces[2][1] != rewired.faces[2][2] &&
        rewired.faces[2][0] != rewired.faces[2][2])
        CHECK(rewired.topology_id() != id);
}

TEST_CASE("OBJ round trip is bit-exact, PLY reloads") {
    Rng rng(11);
    Mesh m = random_soup(rng, 25, 30);
    m.vertices[3] = {1.0 / 3.0, -2.0 / 7.0, 1e-17};

    const std::string text = encode_obj(m);
    Mesh back = decode_obj(text);
    REQUIRE(back.n_vertices() == m.n_vertices());
    REQUIRE(back.n_faces() == m.n_faces());
    for (int i = 0; i < m.n_vertices(); ++i)
        for (int k = 0; k < 3; ++k)
            CHECK(back.vertices[static_cast<std::size_t>(i)][k] ==
                  m.vertices[static_cast<std::size_t>(i)][k]);
    CHECK(back.faces == m.faces);
    CHECK(encode_obj(back) == text);

    const std::string ply = encode_ply(m, {{9, 9, 9}});
    CHECK(ply.find("255 0 0") != std::string::npos);
}

TEST_CASE("orbit camera: frontal view geometry") {
    CameraView cam = make_orbit_camera(0.0, 2.5, 64, 64, 1.05);
    cam.validate();

    // the origin projects to the image center at depth = orbit radius
    auto pr = cam.project({0, 0, 0});
    CHECK(!pr.behind);
    CHECK(pr.u == doctest::Approx(cam.cx).epsilon(1e-12));
    CHECK(pr.v == doctest::Approx(cam.cy).epsilon(1e-12));
    CHECK(pr.depth == doctest::Approx(2.5).epsilon(1e-12));

    // +x in world goes right in the image, +y (up) goes up (smaller v)
    CHECK(cam.project({0.3, 0, 0}).u > cam.cx);
    CHECK(cam.project({0, 0.3, 0}).v < cam.cy);

    // a point closer to the camera has smaller depth
    CHECK(cam.project({0, 0, 0.5}).depth == doctest::Approx(2.0));

    // points behind the camera are flagged
    CHECK(cam.project({0, 0, 5.0}).behind);
}

TEST_CASE("project/unproject are mutually inverse for every orbit yaw") {
    Rng rng(3);
    for (double yaw : {0.0, 30.0, -60.0, 90.0, 135.0, 180.0, -90.0}) {
        CameraView cam = make_orbit_camera(yaw, 2.5, 48, 48, 1.05, 5.0);
        for (int i = 0; i < 20; ++i) {
            const Vec3 p{rng.uniform(-0.8, 0.8), rng.uniform(-0.8, 0.8),
                         rng.uniform(-0.8, 0.8)};
            const auto pr = cam.project(p);
            REQUIRE(!pr.behind);
            const Vec3 back = cam.unproject(pr.u, pr.v, pr.depth);
            CHECK(norm(back - p) < 1e-9);
        }
    }
}

TEST_CASE("normalization: reference box, identity case, idempotence, pixels") {
    // mesh spanning [0,10]^3 -> scale 0.95/5 = 0.19, center (5,5,5)
    Mesh big;
    big.vertices = {{0, 0, 0}, {10, 10, 10}, {10, 0, 0}, {0, 10, 10}};
    big.faces = {{0, 2, 1}, {0, 1, 3}};
    NormTransform n = compute_normalization(big);
    CHECK(n.scale == doctest::Approx(0.19).epsilon(1e-15));
    CHECK(n.center.x == doctest::Approx(5.0));
    CHECK(n.center.y == doctest::Approx(5.0));
    CHECK(n.center.z == doctest::Approx(5.0));

    // already inside the margin box -> identity
    Mesh small;
    small.vertices = {{-0.9, 0, 0}, {0.9, 0.1, 0}, {0, -0.3, 0.94}};
    small.faces = {{0, 1, 2}};
    CHECK(compute_normalization(small).is_identity());

    // idempotent: normalizing a normalized mesh is the identity
    Mesh once = big;
    apply_normalization(once, n);
    CHECK(compute_normalization(once).is_identity());

    // pixels are invariant and depth scales by s
    CameraView cam = make_orbit_camera(40.0, 25.0, 32, 32, 1.05);
    Rng rng(9);
    for (int i = 0; i < 30; ++i) {
        const Vec3 p{rng.uniform(0, 10), rng.uniform(0, 10), rng.uniform(0, 10)};
        const auto before = cam.project(p);
        CameraView cam2 = cam;
        apply_normalization(cam2, n);
        const auto after = cam2.project(n.apply(p));
        REQUIRE(!before.behind);
        REQUIRE(!after.behind);
        CHECK(after.u == doctest::Approx(before.u).epsilon(1e-10));
        CHECK(after.v == doctest::Approx(before.v).epsilon(1e-10));
        CHECK(after.depth == doctest::Approx(before.depth * n.scale).epsilon(1e-12));
    }
}

TEST_CASE("closest point on triangle: every Voronoi region") {
    const Vec3 a{0, 0, 0}, b{2, 0, 0}, c{0, 2, 0};
    // interior projection
    CHECK(norm(closest_point_on_triangle({0.5, 0.5, 3}, a, b, c) -
               Vec3{0.5, 0.5, 0}) < 1e-15);
    // vertex regions
    CHECK(norm(closest_point_on_triangle({-1, -1, 0}, a, b, c) - a) < 1e-15);
    CHECK(norm(closest_point_on_triangle({3, -1, 0}, a, b, c) - b) < 1e-15);
    CHECK(norm(closest_point_on_triangle({-1, 3, 0}, a, b, c) - c) < 1e-15);
    // edge regions
    CHECK(norm(closest_point_on_triangle({1, -1, 0}, a, b, c) -
               Vec3{1, 0, 0}) < 1e-15);
    CHECK(norm(closest_point_on_triangle({-1, 1, 0}, a, b, c) -
               Vec3{0, 1, 0}) < 1e-15);
    CHECK(norm(closest_point_on_triangle({2, 2, 0}, a, b, c) -
               Vec3{1, 1, 0}) < 1e-12);
}

TEST_CASE("closest point matches a dense barycentric oracle") {
    Rng rng(17);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec3 a{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 b{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 c{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
        const Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2), rng.uniform(-2, 2)};
        const double exact = std::sqrt(point_triangle_dist2(p, a, b, c));
        double oracle = 1e308;
        const int G = 60;
        for (int i = 0; i <= G; ++i)
            for (int j = 0; j <= G - i; ++j) {
                const double u = static_cast<double>(i) / G;
                const double v = static_cast<double>(j) / G;
                oracle = std::min(
                    oracle, norm(p - (a * (1 - u - v) + b * u + c * v)));
            }
        CHECK(exact <= oracle + 1e-12);      // never worse than any point
        CHECK(oracle - exact <= 5e-2);       // grid resolution bound
    }
}

TEST_CASE("BVH query equals brute force on random meshes") {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
        Rng rng(seed);
        Mesh m = random_soup(rng, 40, 80);
        MeshBvh bvh(m);
        for (int i = 0; i < 50; ++i) {
            const Vec3 p{rng.uniform(-2, 2), rng.uniform(-2, 2),
                         rng.uniform(-2, 2)};
            const double brute = point_mesh_dist2_brute(p, m);
            CHECK(std::fabs(bvh.dist2(p) - brute) <= 1e-12);
        }
    }
}

TEST_CASE("surface sampling is area-uniform and lands on the surface") {
    // two triangles with area ratio 3:1
    Mesh m;
    m.vertices = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {-3, 0, 0}, {0, -1, 0}};
    m.faces = {{0, 1, 2}, {0, 4, 3}};
    const double a0 = m.face_area(0), a1 = m.face_area(1);
    CHECK(a1 == doctest::Approx(3 * a0));

    Rng rng(23);
    const auto pts = sample_surface(m, 10000, rng);
    MeshBvh bvh(m);
    int on_big = 0;
    for (const Vec3& p : pts) {
        CHECK(bvh.dist2(p) < 1e-20);
        if (p.x < 0 || p.y < 0) ++on_big;
    }
    // share on the big triangle: Binomial(10000, 0.75), sigma ~ 43
    CHECK(std::fabs(on_big - 7500.0) < 3 * 44.0);
}

TEST_CASE("one-directional chamfer: analytic parallel-planes value") {
    const double delta = 0.07;
    Mesh gt = unit_square(0.0);
    Mesh pred = unit_square(delta);
    Rng rng(31);
    // every sample of the reference square is exactly delta from the other
    const double d = chamfer_gt_to_pred(gt, pred, 2000, rng);
    CHECK(d == doctest::Approx(delta).epsilon(1e-12));

    // identical meshes -> zero
    Rng rng2(32);
    CHECK(chamfer_gt_to_pred(gt, gt, 2000, rng2) <= 1e-12);

    // grows monotonically with the offset
    Rng rng3(33), rng4(33);
    const double near = chamfer_gt_to_pred(gt, unit_square(0.05), 1000, rng3);
    const double far = chamfer_gt_to_pred(gt, unit_square(0.25), 1000, rng4);
    CHECK(far > near);
}

TEST_CASE("farthest point sampling: deterministic, separated, covering") {
    Rng rng(41);
    Mesh m = random_soup(rng, 200, 220);
    const auto k1 = farthest_point_sample(m, 18);
    const auto k2 = farthest_point_sample(m, 18);
    CHECK(k1 == k2);
    // distinct indices
    for (std::size_t i = 0; i < k1.size(); ++i)
        for (std::size_t j = i + 1; j < k1.size(); ++j)
            CHECK(k1[i] != k1[j]);
    // first pick is the vertex farthest from the centroid
    const Vec3 c = m.centroid();
    double far = -1;
    int want = 0;
    for (int i = 0; i < m.n_vertices(); ++i)
        if (norm2(m.vertices[static_cast<std::size_t>(i)] - c) > far) {
            far = norm2(m.vertices[static_cast<std::size_t>(i)] - c);
            want = i;
        }
    CHECK(k1[0] == want);
    // separation >= covering radius (classic FPS invariant)
    double min_pair = 1e308;
    for (std::size_t i = 0; i < k1.size(); ++i)
        for (std::size_t j = i + 1; j < k1.size(); ++j)
            min_pair = std::min(
                min_pair, norm(m.vertices[static_cast<std::size_t>(k1[i])] -
                               m.vertices[static_cast<std::size_t>(k1[j])]));
    double cover = 0.0;
    for (int v = 0; v < m.n_vertices(); ++v) {
        double d = 1e308;
        for (int s : k1)
            d = std::min(d, norm(m.vertices[static_cast<std::size_t>(v)] -
                                 m.vertices[static_cast<std::size_t>(s)]));
        cover = std::max(cover, d);
    }
    CHECK(min_pair >= cover - 1e-12);
}
