#pragma once

#include <string>
#include <vector>

#include "glvd/config.hpp"
#include "glvd/encoder/feature_net.hpp"

namespace glvd {

// Keypoint-feature branch: fuses the raw render, its mask, the frozen
// landmark heatmaps and the first-stack vertex features, then refines the
// fusion with a single hourglass stack into the keypoint feature map
// [channels, H, W]. Gradients flow into the shared first stack but never
// into the heatmap net (its maps arrive as constants).
struct FusionNet {
    int keypoints = 0;
    bool use_heatmaps = true;
    ConvBlock stem;
    HourglassStack stack;

    FusionNet() = default;
    FusionNet(const ExperimentConfig& cfg, Rng& rng)
        : keypoints(cfg.keypoint_count),
          use_heatmaps(cfg.use_heatmaps),
          stem("fs.stem",
               kImageChannels + 1 +
                   (cfg.use_heatmaps ? cfg.keypoint_count : 0) + cfg.channels,
               cfg.channels, cfg.groups, rng),
          stack("fs.s0", cfg.channels, cfg.groups, rng) {}

    // `heatmaps` may be left undefined when the config disables that input.
    Tensor operator()(const Tensor& image, const Tensor& mask,
                      const Tensor& fv_first_stack,
                      const Tensor& heatmaps = {}) const {
        std::vector<Tensor> parts{image, mask};
        if (use_heatmaps) {
            GLVD_CHECK(heatmaps.defined(),
                       "fusion net: heatmaps enabled but none supplied");
            GLVD_CHECK(heatmaps.rank() == 3 && heatmaps.dim(0) == keypoints,
                       "fusion net: expected ", keypoints,
                       " heatmap channels, got ", shape_str(heatmaps.shape()));
            parts.push_back(heatmaps);
        }
        parts.push_back(fv_first_stack);
        return stack(stem(concat_channels(parts)));
    }

    void collect(std::vector<Parameter*>& out) {
        stem.collect(out);
        stack.collect(out);
    }
};

}  // namespace glvd
