#pragma once

#include <string>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/geometry/vec.hpp"
#include "glvd/tensor/layers.hpp"
#include "glvd/tensor/optim.hpp"

namespace glvd {

// Width of the per-query spatial-encoding payload appended to the vertex
// branch input for each mode.
inline int encoding_dim(const std::string& mode, int keypoints) {
    if (mode == "relative" || mode == "concat") return 3 * keypoints;
    if (mode == "norm") return keypoints;
    if (mode == "attention") return 3;
    if (mode == "none") return 0;
    fail("unknown encoding mode '", mode, "'");
}

// Offsets k_j - v_q for every (query, keypoint) pair, flattened per query:
// row q is [k_0 - v_q, k_1 - v_q, ...]. Pure data (positions carry no
// gradient), so this builds a constant tensor.
inline Tensor relative_offsets(const Tensor& queries, const Tensor& keypoints) {
    GLVD_CHECK(queries.rank() == 2 && queries.dim(1) == 3 &&
                   keypoints.rank() == 2 && keypoints.dim(1) == 3,
               "relative_offsets: expected [Q,3] queries and [K,3] keypoints");
    const int Q = queries.dim(0), K = keypoints.dim(0);
    std::vector<double> v(static_cast<std::size_t>(Q) * K * 3);
    for (int q = 0; q < Q; ++q)
        for (int j = 0; j < K; ++j)
            for (int c = 0; c < 3; ++c)
                v[(static_cast<std::size_t>(q) * K + j) * 3 + c] =
                    keypoints(j, c) - queries(q, c);
    return Tensor::from({Q, 3 * K}, std::move(v));
}

// Distances ||k_j - v_q||, one row per query.
inline Tensor keypoint_distances(const Tensor& queries, const Tensor& keypoints) {
    const Tensor rel = relative_offsets(queries, keypoints);
    const int Q = queries.dim(0), K = keypoints.dim(0);
    std::vector<double> v(static_cast<std::size_t>(Q) * K);
    for (int q = 0; q < Q; ++q)
        for (int j = 0; j < K; ++j) {
            const double x = rel(q, 3 * j), y = rel(q, 3 * j + 1),
                         z = rel(q, 3 * j + 2);
            v[static_cast<std::size_t>(q) * K + j] =
                std::sqrt(x * x + y * y + z * z);
        }
    return Tensor::from({Q, K}, std::move(v));
}

// The keypoint coordinates flattened into one row, repeated for every query.
inline Tensor keypoints_broadcast(int queries, const Tensor& keypoints) {
    const int K = keypoints.dim(0);
    std::vector<double> v(static_cast<std::size_t>(queries) * K * 3);
    for (int q = 0; q < queries; ++q)
        for (int j = 0; j < K; ++j)
            for (int c = 0; c < 3; ++c)
                v[(static_cast<std::size_t>(q) * K + j) * 3 + c] =
                    keypoints(j, c);
    return Tensor::from({queries, 3 * K}, std::move(v));
}

// Two-layer scorer producing one logit per keypoint from a query's image
// descriptor and its keypoint-distance vector; softmax of the logits weights
// the relative offsets into a single 3-vector payload.
struct AttentionScorer {
    Parameter w1, b1, w2, b2;

    AttentionScorer() = default;
    AttentionScorer(const std::string& name, int descriptor_dim, int keypoints,
                    int hidden, Rng& rng)
        : w1(name + ".w1", init_uniform({hidden, descriptor_dim + keypoints},
                                        descriptor_dim + keypoints, rng)),
          b1(name + ".b1", init_zeros({hidden})),
          w2(name + ".w2", init_uniform({keypoints, hidden}, hidden, rng)),
          b2(name + ".b2", init_zeros({keypoints})) {}

    // [Q, K] softmax weights.
    Tensor operator()(const Tensor& descriptors, const Tensor& distances) const {
        const Tensor h = relu(linear(hstack({descriptors, distances}),
                                     w1.value, b1.value));
        return softmax_rows(linear(h, w2.value, b2.value));
    }

    void collect(std::vector<Parameter*>& out) {
        out.push_back(&w1);
        out.push_back(&b1);
        out.push_back(&w2);
        out.push_back(&b2);
    }
};

// weights[Q,K] x offsets[Q,3K] -> [Q,3]: per-coordinate weighted sum of the
// relative offsets. Expressed through existing ops so gradients reach the
// scorer (offsets themselves are constants).
inline Tensor weighted_offset_sum(const Tensor& weights, const Tensor& offsets) {
    const int Q = weights.dim(0), K = weights.dim(1);
    GLVD_CHECK(offsets.rank() == 2 && offsets.dim(0) == Q &&
                   offsets.dim(1) == 3 * K,
               "weighted_offset_sum: offsets must be [Q,3K]");
    // Split offsets into per-coordinate [Q,K] constants.
    std::vector<double> comp[3];
    for (int c = 0; c < 3; ++c)
        comp[c].resize(static_cast<std::size_t>(Q) * K);
    for (int q = 0; q < Q; ++q)
        for (int j = 0; j < K; ++j)
            for (int c = 0; c < 3; ++c)
                comp[c][static_cast<std::size_t>(q) * K + j] =
                    offsets(q, 3 * j + c);
    const Tensor ones = Tensor({K, 1}, 1.0);
    std::vector<Tensor> cols;
    cols.reserve(3);
    for (int c = 0; c < 3; ++c)
        cols.push_back(matmul(
            mul(weights, Tensor::from({Q, K}, std::move(comp[c]))), ones));
    return hstack(cols);
}

// The spatial-encoding payload appended (per view) to a vertex-branch input
// row. `descriptors` is only read in attention mode, where the payload
// becomes part of the differentiable graph; every other mode is constant
// data. Mode "none" returns an undefined tensor (no payload columns).
inline Tensor encoding_payload(const std::string& mode, const Tensor& queries,
                               const Tensor& keypoints,
                               const Tensor& descriptors,
                               const AttentionScorer* scorer) {
    if (mode == "none") return {};
    if (mode == "relative") return relative_offsets(queries, keypoints);
    if (mode == "concat")
        return keypoints_broadcast(queries.dim(0), keypoints);
    if (mode == "norm") return keypoint_distances(queries, keypoints);
    if (mode == "attention") {
        GLVD_CHECK(scorer != nullptr,
                   "attention encoding needs its scorer network");
        const Tensor w = (*scorer)(descriptors,
                                   keypoint_distances(queries, keypoints));
        return weighted_offset_sum(w, relative_offsets(queries, keypoints));
    }
    fail("unknown encoding mode '", mode, "'");
}

}  // namespace glvd
