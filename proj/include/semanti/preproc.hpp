// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>

#include "semanti/error.hpp"
#include "semanti/image.hpp"

namespace semanti {

inline void validate_raw(const RawImage& img) {
    if (img.height < 1 || img.width < 1)
        throw InvalidArgument("image extents must be positive");
    if (img.data.size() != img.height * img.width * RawImage::channels)
        throw InvalidArgument("image data length does not match shape");
}

/// Resampling-free preprocessing: per-axis tile replication for sides strictly
/// smaller than `target`, then a centered target×target crop, then /255.
/// Every output sample is a copy of some input sample.
inline PixelTensor preprocess_crop(const RawImage& img, std::size_t target = 224) {
    validate_raw(img);
    if (target < 1) throw InvalidArgument("crop target must be at least 1");

    // Tiled extent per axis: k = ceil(target/e) copies when e < target, else untouched.
    const auto tiled = [target](std::size_t e) {
        if (e >= target) return e;
        const std::size_t k = (target + e - 1) / e;
        return k * e;
    };
    const std::size_t eh = tiled(img.height);
    const std::size_t ew = tiled(img.width);
    const std::size_t oy = (eh - target) / 2;
    const std::size_t ox = (ew - target) / 2;

    PixelTensor out(target, target);
    for (std::size_t y = 0; y < target; ++y) {
        const std::size_t sy = (oy + y) % img.height;
        for (std::size_t x = 0; x < target; ++x) {
            const std::size_t sx = (ox + x) % img.width;
            for (std::size_t c = 0; c < 3; ++c)
                out.at(y, x, c) = static_cast<float>(img.at(sy, sx, c)) / 255.0f;
        }
    }
    return out;
}

/// Bilinear resize to target×target with half-pixel sample centers and edge
/// clamping, then /255. The interpolating contrast arm to preprocess_crop.
inline PixelTensor preprocess_resize(const RawImage& img, std::size_t target = 224) {
    validate_raw(img);
    if (target < 2) throw InvalidArgument("resize target must be at least 2");

    PixelTensor out(target, target);
    const double sy_scale = static_cast<double>(img.height) / static_cast<double>(target);
    const double sx_scale = static_cast<double>(img.width) / static_cast<double>(target);
    for (std::size_t y = 0; y < target; ++y) {
        const double fy = (static_cast<double>(y) + 0.5) * sy_scale - 0.5;
        const double cy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
        const std::size_t y0 = static_cast<std::size_t>(cy);
        const std::size_t y1 = std::min(y0 + 1, img.height - 1);
        const float wy = static_cast<float>(cy - static_cast<double>(y0));
        for (std::size_t x = 0; x < target; ++x) {
            const double fx = (static_cast<double>(x) + 0.5) * sx_scale - 0.5;
            const double cx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
            const std::size_t x0 = static_cast<std::size_t>(cx);
            const std::size_t x1 = std::min(x0 + 1, img.width - 1);
            const float wx = static_cast<float>(cx - static_cast<double>(x0));
            for (std::size_t c = 0; c < 3; ++c) {
                const float v00 = static_cast<float>(img.at(y0, x0, c));
                const float v01 = static_cast<float>(img.at(y0, x1, c));
                const float v10 = static_cast<float>(img.at(y1, x0, c));
                const float v11 = static_cast<float>(img.at(y1, x1, c));
                const float top = v00 + (v01 - v00) * wx;
                const float bot = v10 + (v11 - v10) * wx;
                out.at(y, x, c) = (top + (bot - top) * wy) / 255.0f;
            }
        }
    }
    return out;
}

}  // namespace semanti
