#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "glvd/geometry/camera.hpp"
#include "glvd/synth/raster.hpp"
#include "glvd/tensor/rng.hpp"

namespace glvd {

// Training-time view corruption: a centered-or-offset crop-zoom (geometric,
// applied to every channel, with the camera intrinsics updated so projection
// stays consistent), Gaussian blur and per-channel gain/bias (photometric,
// never applied to the mask channel). The mask is resampled nearest-neighbor
// so it stays binary.
struct AugmentParams {
    std::array<double, 4> gain{1, 1, 1, 1};
    std::array<double, 4> bias{0, 0, 0, 0};
    double blur_sigma = 0.0;  // pixels
    double crop_scale = 1.0;  // source-texels-per-output-texel, in (0, 1]
    double crop_ox = 0.0;     // crop origin in source texels
    double crop_oy = 0.0;

    bool is_identity() const {
        if (blur_sigma != 0.0 || crop_scale != 1.0 || crop_ox != 0.0 ||
            crop_oy != 0.0)
            return false;
        for (int c = 0; c < 4; ++c)
            if (gain[static_cast<std::size_t>(c)] != 1.0 ||
                bias[static_cast<std::size_t>(c)] != 0.0)
                return false;
        return true;
    }
};

inline AugmentParams draw_augment_params(Rng& rng, int width, int height,
                                         double blur_sigma_max,
                                         double crop_zoom_min) {
    AugmentParams p;
    for (int c = 0; c < 4; ++c) {
        p.gain[static_cast<std::size_t>(c)] = rng.uniform(0.8, 1.2);
        p.bias[static_cast<std::size_t>(c)] = rng.uniform(-0.1, 0.1);
    }
    p.blur_sigma = rng.uniform(0.0, blur_sigma_max);
    p.crop_scale = rng.uniform(crop_zoom_min, 1.0);
    p.crop_ox = rng.uniform(0.0, width * (1.0 - p.crop_scale));
    p.crop_oy = rng.uniform(0.0, height * (1.0 - p.crop_scale));
    return p;
}

namespace detail {

// Border-clamped bilinear read of one channel plane.
inline double bilinear_read(const Tensor& img, int ch, double u, double v) {
    const int H = img.dim(1), W = img.dim(2);
    const double cu = std::clamp(u, 0.0, W - 1.0);
    const double cv = std::clamp(v, 0.0, H - 1.0);
    const int x0 = static_cast<int>(std::floor(cu));
    const int y0 = static_cast<int>(std::floor(cv));
    const int x1 = std::min(x0 + 1, W - 1), y1 = std::min(y0 + 1, H - 1);
    const double fx = cu - x0, fy = cv - y0;
    return (1 - fy) * ((1 - fx) * img(ch, y0, x0) + fx * img(ch, y0, x1)) +
           fy * ((1 - fx) * img(ch, y1, x0) + fx * img(ch, y1, x1));
}

inline std::vector<double> gaussian_kernel(double sigma) {
    const int radius = static_cast<int>(std::ceil(3.0 * sigma));
    std::vector<double> k(static_cast<std::size_t>(2 * radius + 1));
    double total = 0.0;
    for (int i = -radius; i <= radius; ++i)
        total += k[static_cast<std::size_t>(i + radius)] =
            std::exp(-(i * i) / (2.0 * sigma * sigma));
    for (double& v : k) v /= total;
    return k;
}

}  // namespace detail

// Applies the perturbation in place and updates the camera so projected
// world points keep landing on the same image content:
//   source_u = ox + (u' + 0.5) * s - 0.5   =>   fx' = fx / s,
//   cx' = (cx + 0.5 - ox) / s - 0.5        (same for the y axis).
inline void apply_augment(Tensor& image, CameraView& cam,
                          const AugmentParams& p) {
    GLVD_CHECK(image.rank() == 3 && image.dim(0) == kImageChannels,
               "augment expects a [5, H, W] render");
    GLVD_CHECK(p.crop_scale > 0.0 && p.crop_scale <= 1.0,
               "crop scale must lie in (0, 1]");
    const int H = image.dim(1), W = image.dim(2);
    if (p.is_identity()) return;
    image = Tensor::from(image.shape(), image.vals());  // never mutate shared data

    if (p.crop_scale != 1.0 || p.crop_ox != 0.0 || p.crop_oy != 0.0) {
        Tensor src = image;
        image = Tensor({kImageChannels, H, W});
        for (int py = 0; py < H; ++py)
            for (int px = 0; px < W; ++px) {
                const double su = p.crop_ox + (px + 0.5) * p.crop_scale - 0.5;
                const double sv = p.crop_oy + (py + 0.5) * p.crop_scale - 0.5;
                for (int c = 0; c < 4; ++c)
                    image(c, py, px) = detail::bilinear_read(src, c, su, sv);
                const int nu = std::clamp(
                    static_cast<int>(std::lround(su)), 0, W - 1);
                const int nv = std::clamp(
                    static_cast<int>(std::lround(sv)), 0, H - 1);
                image(4, py, px) = src(4, nv, nu);
            }
        cam.fx /= p.crop_scale;
        cam.fy /= p.crop_scale;
        cam.cx = (cam.cx + 0.5 - p.crop_ox) / p.crop_scale - 0.5;
        cam.cy = (cam.cy + 0.5 - p.crop_oy) / p.crop_scale - 0.5;
    }

    if (p.blur_sigma > 0.0) {
        const std::vector<double> k = detail::gaussian_kernel(p.blur_sigma);
        const int radius = (static_cast<int>(k.size()) - 1) / 2;
        Tensor tmp({1, H, W});
        for (int c = 0; c < 4; ++c) {
            for (int py = 0; py < H; ++py)  // horizontal pass
                for (int px = 0; px < W; ++px) {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        acc += k[static_cast<std::size_t>(i + radius)] *
                               image(c, py, std::clamp(px + i, 0, W - 1));
                    tmp(0, py, px) = acc;
                }
            for (int py = 0; py < H; ++py)  // vertical pass
                for (int px = 0; px < W; ++px) {
                    double acc = 0.0;
                    for (int i = -radius; i <= radius; ++i)
                        acc += k[static_cast<std::size_t>(i + radius)] *
                               tmp(0, std::clamp(py + i, 0, H - 1), px);
                    image(c, py, px) = acc;
                }
        }
    }

    for (int c = 0; c < 4; ++c) {
        const double g = p.gain[static_cast<std::size_t>(c)];
        const double b = p.bias[static_cast<std::size_t>(c)];
        if (g == 1.0 && b == 0.0) continue;
        for (int py = 0; py < H; ++py)
            for (int px = 0; px < W; ++px)
                image(c, py, px) = g * image(c, py, px) + b;
    }
}

}  // namespace glvd
