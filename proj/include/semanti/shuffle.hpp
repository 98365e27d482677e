// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstring>
#include <numeric>
#include <vector>

#include "semanti/error.hpp"
#include "semanti/image.hpp"
#include "semanti/rng.hpp"

namespace semanti {

/// Patch Shuffle granularity: side of the square pixel patches that get permuted.
struct ShuffleSpec {
    std::size_t patch_size_px = 8;
    bool enabled = true;
};

/// mapping[i] = source patch index placed at destination slot i.
struct Permutation {
    std::size_t n = 0;
    std::vector<std::uint32_t> mapping;
};

/// Uniform permutation of {0..n-1} via Fisher-Yates on the given stream.
inline Permutation sample_permutation(std::size_t n, RandomStream& stream) {
    if (n == 0) throw InvalidArgument("permutation size must be positive");
    Permutation p;
    p.n = n;
    p.mapping.resize(n);
    std::iota(p.mapping.begin(), p.mapping.end(), 0u);
    for (std::size_t i = n - 1; i > 0; --i) {
        const std::uint64_t j = stream.next_below(i + 1);
        std::swap(p.mapping[i], p.mapping[j]);
    }
    return p;
}

inline Permutation inverse(const Permutation& p) {
    Permutation inv;
    inv.n = p.n;
    inv.mapping.resize(p.n);
    for (std::size_t i = 0; i < p.n; ++i) inv.mapping[p.mapping[i]] = static_cast<std::uint32_t>(i);
    return inv;
}

/// Moves s×s pixel patches between grid slots; patch contents are copied
/// bit-identically. Grid slots are row-major over the (H/s)×(W/s) grid.
inline PixelTensor patch_shuffle(const PixelTensor& img, const ShuffleSpec& spec,
                                 const Permutation& perm) {
    const std::size_t s = spec.patch_size_px;
    if (s < 1) throw InvalidArgument("patch size must be positive");
    if (img.height % s != 0 || img.width % s != 0)
        throw InvalidArgument("patch size must divide both image sides");
    const std::size_t gh = img.height / s;
    const std::size_t gw = img.width / s;
    if (perm.n != gh * gw) throw InvalidArgument("permutation size does not match patch grid");

    PixelTensor out(img.height, img.width);
    const std::size_t row_floats = s * PixelTensor::channels;
    for (std::size_t slot = 0; slot < perm.n; ++slot) {
        const std::size_t src = perm.mapping[slot];
        const std::size_t dy = (slot / gw) * s, dx = (slot % gw) * s;
        const std::size_t sy = (src / gw) * s, sx = (src % gw) * s;
        for (std::size_t r = 0; r < s; ++r) {
            float* dst = out.data.data() + ((dy + r) * out.width + dx) * PixelTensor::channels;
            const float* from = img.data.data() + ((sy + r) * img.width + sx) * PixelTensor::channels;
            std::memcpy(dst, from, row_floats * sizeof(float));
        }
    }
    return out;
}

}  // namespace semanti
