#pragma once

#include <algorithm>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/descent/encoding.hpp"
#include "glvd/encoder/feature_net.hpp"
#include "glvd/geometry/camera.hpp"
#include "glvd/geometry/chamfer.hpp"

namespace glvd {

namespace detail {

// Fisher-Yates permutation of 0..n-1 from a dedicated stream, so epoch
// ordering never perturbs the draws used inside batches.
inline std::vector<int> epoch_order(int n, std::uint64_t seed, int epoch) {
    std::vector<int> order(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) order[static_cast<std::size_t>(i)] = i;
    Rng rng(Rng::derive(seed, fnv1a("order"), static_cast<std::uint64_t>(epoch)));
    for (int i = n - 1; i > 0; --i) {
        const int j = static_cast<int>(rng.index(static_cast<std::uint64_t>(i) + 1));
        std::swap(order[static_cast<std::size_t>(i)],
                  order[static_cast<std::size_t>(j)]);
    }
    return order;
}

}  // namespace detail

// One scene's worth of training queries with their supervision targets.
struct QueryBatch {
    Tensor points;   // [M, 3] world-space query positions
    Tensor targets;  // [M, 3T] ground-truth offsets toward every target point
    int n_surface = 0;
};

// Draws M query points for one ground-truth mesh: each point independently
// lands on the surface (jittered by isotropic noise) with probability
// `surface_fraction`, otherwise anywhere in the [-1,1]^3 working volume.
// Surface jitter can push points slightly outside, so everything is clamped
// to a 20%-padded box rather than the unit cube. The target for query x and
// target point v_j is simply v_j - x; predictions are trained against every
// target point at once.
inline QueryBatch sample_queries(const Mesh& gt,
                                 const std::vector<Vec3>& target_points,
                                 int M, const ExperimentConfig& cfg, Rng& rng) {
    GLVD_CHECK(M > 0, "sample_queries: need at least one query");
    GLVD_CHECK(!target_points.empty(), "sample_queries: no target points");

    QueryBatch batch;
    for (int i = 0; i < M; ++i)
        if (rng.coin(cfg.surface_fraction)) ++batch.n_surface;

    std::vector<double> pts;
    pts.reserve(static_cast<std::size_t>(M) * 3);
    const std::vector<Vec3> surf = sample_surface(gt, batch.n_surface, rng);
    for (const Vec3& p : surf) {
        pts.push_back(p.x + rng.normal(0.0, cfg.query_jitter_std));
        pts.push_back(p.y + rng.normal(0.0, cfg.query_jitter_std));
        pts.push_back(p.z + rng.normal(0.0, cfg.query_jitter_std));
    }
    for (int i = batch.n_surface; i < M; ++i)
        for (int c = 0; c < 3; ++c) pts.push_back(rng.uniform(-1.0, 1.0));
    for (double& v : pts) v = std::clamp(v, -1.2, 1.2);

    batch.points = Tensor::from({M, 3}, std::move(pts));
    batch.targets =
        relative_offsets(batch.points, points_tensor(target_points));
    return batch;
}

// Perturbs dynamic-landmark positions the way an upstream estimator would
// err: more uncertainty along the chosen camera's optical axis (depth) than
// laterally. Noise is drawn per keypoint in that camera's frame as
// (N(0,s), N(0,s), N(0,3s)) and rotated back to world coordinates. A zero
// sigma returns the input untouched without consuming any randomness.
inline Tensor inject_keypoint_noise(const Tensor& keypoints,
                                    const CameraView& view, double sigma,
                                    Rng& rng) {
    if (sigma == 0.0) return keypoints;
    GLVD_CHECK(keypoints.rank() == 2 && keypoints.dim(1) == 3,
               "inject_keypoint_noise expects [K,3] positions");
    const Mat3 to_world = view.rotation.transposed();
    const int K = keypoints.dim(0);
    std::vector<double> out(keypoints.vals());
    for (int k = 0; k < K; ++k) {
        const Vec3 cam_noise{rng.normal(0.0, sigma), rng.normal(0.0, sigma),
                             rng.normal(0.0, 3.0 * sigma)};
        const Vec3 w = to_world * cam_noise;
        out[static_cast<std::size_t>(k) * 3] += w.x;
        out[static_cast<std::size_t>(k) * 3 + 1] += w.y;
        out[static_cast<std::size_t>(k) * 3 + 2] += w.z;
    }
    return Tensor::from({K, 3}, std::move(out));
}

}  // namespace glvd
