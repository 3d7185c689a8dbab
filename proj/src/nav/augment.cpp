// Copyright Contributors to the gsforge project
// SPDX-License-Identifier: Apache-2.0

#include "gsforge/nav_env.hpp"

#include <algorithm>
#include <cmath>

namespace gsforge {

namespace {

double clamp01(double v) { return std::clamp(v, 0.0, 1.0); }

double luma(const Image& img, std::size_t p) {
    return 0.299 * img.data[3 * p] + 0.587 * img.data[3 * p + 1] + 0.114 * img.data[3 * p + 2];
}

// Hue rotation through HSV. Saturation and value are preserved exactly.
void shift_hue(double* rgb, double shift) {
    const double r = rgb[0];
    const double g = rgb[1];
    const double b = rgb[2];
    const double mx = std::max({r, g, b});
    const double mn = std::min({r, g, b});
    const double chroma = mx - mn;
    if (chroma <= 0.0) {
        return;
    }
    double h = 0.0;
    if (mx == r) {
        h = std::fmod((g - b) / chroma, 6.0);
    } else if (mx == g) {
        h = (b - r) / chroma + 2.0;
    } else {
        h = (r - g) / chroma + 4.0;
    }
    h = std::fmod(h / 6.0 + shift + 1.0, 1.0) * 6.0;
    const double x = chroma * (1.0 - std::abs(std::fmod(h, 2.0) - 1.0));
    double out[3] = {0.0, 0.0, 0.0};
    switch (static_cast<int>(h) % 6) {
        case 0: out[0] = chroma; out[1] = x; break;
        case 1: out[0] = x; out[1] = chroma; break;
        case 2: out[1] = chroma; out[2] = x; break;
        case 3: out[1] = x; out[2] = chroma; break;
        case 4: out[0] = x; out[2] = chroma; break;
        default: out[0] = chroma; out[2] = x; break;
    }
    for (int c = 0; c < 3; ++c) {
        rgb[c] = clamp01(out[c] + mn);
    }
}

}  // namespace

AugmentationConfig AugmentationConfig::disabled() {
    AugmentationConfig a;
    a.brightness = a.contrast = a.saturation = a.hue = 0.0;
    a.blur_sigma_min = a.blur_sigma_max = 0.0;
    a.noise_probability = 0.0;
    a.noise_sigma = 0.0;
    a.pose_translation_noise = Vec3::Zero();
    a.pose_rotation_noise = Vec3::Zero();
    a.delay_probability = 0.0;
    return a;
}

void AugmentationConfig::validate() const {
    for (double v : {brightness, contrast, saturation}) {
        if (!(v >= 0.0 && v < 1.0)) {
            throw ValidationError("color jitter ranges must lie in [0, 1)");
        }
    }
    if (!(hue >= 0.0 && hue <= 0.5)) {
        throw ValidationError("hue jitter must lie in [0, 0.5]");
    }
    if (blur_kernel < 1 || blur_kernel % 2 == 0) {
        throw ValidationError("blur kernel must be a positive odd size");
    }
    if (!(blur_sigma_min >= 0.0 && blur_sigma_max >= blur_sigma_min)) {
        throw ValidationError("blur sigma range must satisfy 0 <= min <= max");
    }
    for (double p : {noise_probability, delay_probability}) {
        if (!(p >= 0.0 && p <= 1.0)) {
            throw ValidationError("probabilities must lie in [0, 1]");
        }
    }
    if (!(noise_sigma >= 0.0) || !(pose_translation_noise.array() >= 0.0).all() ||
        !(pose_rotation_noise.array() >= 0.0).all()) {
        throw ValidationError("noise magnitudes must be nonnegative");
    }
}

Image apply_color_jitter(const Image& rgb, const ColorJitter& jitter) {
    if (rgb.channels != 3) {
        throw ValidationError("color jitter needs an RGB image");
    }
    Image out = rgb;
    const std::size_t n = out.pixel_count();
    if (jitter.brightness != 1.0) {
        for (auto& v : out.data) {
            v = clamp01(v * jitter.brightness);
        }
    }
    if (jitter.contrast != 1.0 && n > 0) {
        double mean = 0.0;
        for (std::size_t p = 0; p < n; ++p) {
            mean += luma(out, p);
        }
        mean /= static_cast<double>(n);
        for (auto& v : out.data) {
            v = clamp01(mean + jitter.contrast * (v - mean));
        }
    }
    if (jitter.saturation != 1.0) {
        for (std::size_t p = 0; p < n; ++p) {
            const double g = luma(out, p);
            for (int c = 0; c < 3; ++c) {
                double& v = out.data[3 * p + static_cast<std::size_t>(c)];
                v = clamp01(g + jitter.saturation * (v - g));
            }
        }
    }
    if (jitter.hue != 0.0) {
        for (std::size_t p = 0; p < n; ++p) {
            shift_hue(&out.data[3 * p], jitter.hue);
        }
    }
    return out;
}

Image gaussian_blur(const Image& img, int kernel, double sigma) {
    if (!(sigma > 0.0) || kernel <= 1) {
        return img;
    }
    const int half = kernel / 2;
    std::vector<double> w(static_cast<std::size_t>(2 * half + 1));
    double sum = 0.0;
    for (int k = -half; k <= half; ++k) {
        w[static_cast<std::size_t>(k + half)] = std::exp(-0.5 * k * k / (sigma * sigma));
        sum += w[static_cast<std::size_t>(k + half)];
    }
    for (auto& v : w) {
        v /= sum;
    }
    auto pass = [&](const Image& src, bool horizontal) {
        Image dst(src.width, src.height, src.channels);
        for (int y = 0; y < src.height; ++y) {
            for (int x = 0; x < src.width; ++x) {
                for (int c = 0; c < src.channels; ++c) {
                    double acc = 0.0;
                    for (int k = -half; k <= half; ++k) {
                        const int sx = horizontal ? std::clamp(x + k, 0, src.width - 1) : x;
                        const int sy = horizontal ? y : std::clamp(y + k, 0, src.height - 1);
                        acc += w[static_cast<std::size_t>(k + half)] * src.at(sx, sy, c);
                    }
                    dst.at(x, y, c) = acc;
                }
            }
        }
        return dst;
    };
    return pass(pass(img, true), false);
}

}  // namespace gsforge
