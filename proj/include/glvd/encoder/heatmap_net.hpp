#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/encoder/feature_net.hpp"
#include "glvd/geometry/keypoints.hpp"
#include "glvd/synth/corpus.hpp"
#include "glvd/tensor/optim.hpp"

namespace glvd {

// Landmark prior: a small conv net trained in its own supervised stage to
// paint one Gaussian blob per keypoint, then kept frozen while the descent
// networks train. Three 3×3 conv blocks — the middle one at stride 2 for a
// wider receptive field, rejoined through an upsampled skip — plus a 1×1
// sigmoid head. The head bias starts negative so the net begins near the
// mostly-empty target maps instead of spending epochs finding them.
struct HeatmapNet {
    int keypoints = 0;
    ConvBlock block1, block2, block3;
    Parameter head_w, head_b;

    HeatmapNet() = default;
    HeatmapNet(const ExperimentConfig& cfg, Rng& rng)
        : keypoints(cfg.keypoint_count),
          block1("hm.b1", kImageChannels + 1, cfg.heatmap_channels, cfg.groups,
                 rng),
          block2("hm.b2", cfg.heatmap_channels, cfg.heatmap_channels,
                 cfg.groups, rng, 3, 2),
          block3("hm.b3", cfg.heatmap_channels, cfg.heatmap_channels,
                 cfg.groups, rng, 3, 2),
          head_w("hm.head.w",
                 init_uniform({cfg.keypoint_count, cfg.heatmap_channels},
                              cfg.heatmap_channels, rng)),
          head_b("hm.head.b", init_const({cfg.keypoint_count}, -4.0)) {}

    // Pre-sigmoid maps [K,H,W]; training feeds these to the logit-space BCE.
    // The two strided blocks buy enough receptive field to tell symmetric
    // landmarks apart by head pose, and the nested skip merges keep the peak
    // localization at full pixel resolution.
    Tensor logits(const Tensor& image, const Tensor& mask) const {
        const Tensor h1 = block1(concat_channels({image, mask}));
        const Tensor h2 = block2(h1);
        const Tensor h3 = block3(h2);
        const Tensor merged =
            add(upsample_nearest2(add(upsample_nearest2(h3), h2)), h1);
        return conv2d(merged, head_w.value, head_b.value, 1, 1);
    }

    Tensor operator()(const Tensor& image, const Tensor& mask) const {
        return sigmoid(logits(image, mask));
    }

    // Inference for consumers that must never backpropagate into the prior:
    // the forward runs with the graph switched off, so the result is a plain
    // constant and the surrogate's parameters stay untouched by training.
    Tensor frozen(const Tensor& image, const Tensor& mask) const {
        NoGrad ng;
        return (*this)(image, mask);
    }

    void collect(std::vector<Parameter*>& out) {
        block1.collect(out);
        block2.collect(out);
        block3.collect(out);
        out.push_back(&head_w);
        out.push_back(&head_b);
    }

    std::size_t parameter_count() {
        std::vector<Parameter*> ps;
        collect(ps);
        std::size_t n = 0;
        for (const Parameter* p : ps) n += p->value.numel();
        return n;
    }
};

// Supervision: one sigma-pixel Gaussian per keypoint centered at its
// projected position. Keypoints behind the camera or off the pixel grid get
// an all-zero map, so the net learns to stay quiet for occluded landmarks.
inline Tensor heatmap_targets(const std::vector<Vec3>& keypoints,
                              const CameraView& cam, double sigma_px) {
    const int K = static_cast<int>(keypoints.size());
    const int H = cam.height, W = cam.width;
    Tensor t({K, H, W}, 0.0);
    const double inv = 1.0 / (2.0 * sigma_px * sigma_px);
    for (int k = 0; k < K; ++k) {
        const auto pr = cam.project(keypoints[static_cast<std::size_t>(k)]);
        if (pr.behind || !pr.inside) continue;
        for (int y = 0; y < H; ++y)
            for (int x = 0; x < W; ++x) {
                const double du = x - pr.u, dv = y - pr.v;
                t(k, y, x) = std::exp(-(du * du + dv * dv) * inv);
            }
    }
    return t;
}

// Pixel position of the strongest response in one heatmap channel; ties
// resolve to the first in scan order.
inline std::pair<int, int> heatmap_argmax(const Tensor& maps, int k) {
    const int H = maps.dim(1), W = maps.dim(2);
    int bx = 0, by = 0;
    double best = -1.0;
    for (int y = 0; y < H; ++y)
        for (int x = 0; x < W; ++x)
            if (maps(k, y, x) > best) {
                best = maps(k, y, x);
                bx = x;
                by = y;
            }
    return {bx, by};
}

struct HeatmapTrainStats {
    double first_loss = 0.0;
    double final_loss = 0.0;
    int pairs = 0;
};

// The surrogate's own supervised stage: full-batch Adam over every
// (scene, view) pair, deterministic for a fixed net initialization. Scenes
// supply the renders; the keypoint indices select the ground-truth vertices.
inline HeatmapTrainStats train_heatmap_net(
    HeatmapNet& net, const std::vector<SceneData>& scenes,
    const std::vector<int>& keypoint_indices, const ExperimentConfig& cfg) {
    GLVD_CHECK(!scenes.empty(), "heatmap training: no scenes");
    GLVD_CHECK(static_cast<int>(keypoint_indices.size()) == net.keypoints,
               "heatmap training: ", keypoint_indices.size(),
               " keypoint indices for a ", net.keypoints, "-channel net");

    struct Pair {
        const Tensor* image;
        Tensor mask, target;
    };
    std::vector<Pair> pairs;
    for (const SceneData& s : scenes) {
        const std::vector<Vec3> kp = keypoint_positions(s.mesh, keypoint_indices);
        for (std::size_t v = 0; v < s.images.size(); ++v)
            pairs.push_back({&s.images[v], mask_of(s.images[v]),
                             heatmap_targets(kp, s.cameras[v],
                                             cfg.heatmap_sigma_px)});
    }

    std::vector<Parameter*> params;
    net.collect(params);
    Adam opt;
    HeatmapTrainStats stats;
    stats.pairs = static_cast<int>(pairs.size());
    const double inv = 1.0 / static_cast<double>(pairs.size());
    for (int epoch = 0; epoch < cfg.heatmap_epochs; ++epoch) {
        Adam::zero_grads(params);
        Tensor loss = Tensor::scalar(0.0);
        for (const Pair& p : pairs)
            loss = add(loss, scale(bce_with_logits(net.logits(*p.image, p.mask),
                                                   p.target),
                                   inv));
        loss.backward();
        const double lr =
            lr_at_epoch(cfg.lr, epoch, cfg.heatmap_epochs / 2,
                        cfg.heatmap_epochs - cfg.heatmap_epochs / 2);
        opt.step(params, lr);
        if (epoch == 0) stats.first_loss = loss.value();
        stats.final_loss = loss.value();
        GLVD_CHECK(std::isfinite(stats.final_loss),
                   "heatmap training diverged at epoch ", epoch);
    }
    return stats;
}

// Mean argmax-to-projection error in pixels over all views whose |yaw| stays
// within the limit; keypoints that do not land on the pixel grid are skipped.
inline double heatmap_eval_px(const HeatmapNet& net,
                              const std::vector<SceneData>& scenes,
                              const std::vector<int>& keypoint_indices,
                              double yaw_limit_deg) {
    double err = 0.0;
    int count = 0;
    for (const SceneData& s : scenes) {
        const std::vector<Vec3> kp = keypoint_positions(s.mesh, keypoint_indices);
        for (std::size_t v = 0; v < s.images.size(); ++v) {
            const CameraView& cam = s.cameras[v];
            if (std::abs(cam.yaw_deg) > yaw_limit_deg) continue;
            const Tensor maps = net.frozen(s.images[v], mask_of(s.images[v]));
            for (int k = 0; k < net.keypoints; ++k) {
                const auto pr = cam.project(kp[static_cast<std::size_t>(k)]);
                if (pr.behind || !pr.inside) continue;
                const auto [x, y] = heatmap_argmax(maps, k);
                err += std::hypot(x - pr.u, y - pr.v);
                ++count;
            }
        }
    }
    GLVD_CHECK(count > 0, "heatmap eval: no visible keypoints");
    return err / count;
}

inline void save_heatmap_net(const std::string& path, HeatmapNet& net,
                             const ExperimentConfig& cfg) {
    std::vector<Parameter*> params;
    net.collect(params);
    save_params_file(path, params, cfg.fingerprint(),
                     {{"kind", "heatmap"}, {"keypoints", net.keypoints}});
}

inline HeatmapNet load_heatmap_net(const std::string& path,
                                   const ExperimentConfig& cfg) {
    const TensorFile tf = load_params_file(path, cfg.fingerprint());
    Rng rng(0);
    HeatmapNet net(cfg, rng);
    std::vector<Parameter*> params;
    net.collect(params);
    load_parameters(params, tf);
    return net;
}

}  // namespace glvd
