// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <set>

#include "semanti/preproc.hpp"
#include "semanti/rng.hpp"

using namespace semanti;

namespace {

RawImage random_image(std::size_t h, std::size_t w, std::uint64_t seed) {
    RawImage img;
    img.height = h;
    img.width = w;
    img.data.resize(h * w * 3);
    RandomStream rs(seed);
    for (auto& b : img.data) b = static_cast<std::uint8_t>(rs.next_below(256));
    return img;
}

// Every output sample, after undoing /255, must appear among the input samples.
bool provenance_holds(const RawImage& in, const PixelTensor& out) {
    std::set<float> allowed;
    for (const std::uint8_t b : in.data) allowed.insert(static_cast<float>(b) / 255.0f);
    for (const float v : out.data)
        if (allowed.find(v) == allowed.end()) return false;
    return true;
}

}  // namespace

TEST_CASE("crop tiles a 100x150 input to 300x300 and crops at (38,38)", "[preproc]") {
    const RawImage img = random_image(100, 150, 11);
    const PixelTensor out = preprocess_crop(img, 224);
    REQUIRE(out.height == 224);
    REQUIRE(out.width == 224);
    // k_H = ceil(224/100) = 3, k_W = ceil(224/150) = 2; offsets (300-224)/2 = 38.
    for (std::size_t y = 0; y < 224; y += 7)
        for (std::size_t x = 0; x < 224; x += 7)
            for (std::size_t c = 0; c < 3; ++c) {
                const float expect =
                    static_cast<float>(img.at((38 + y) % 100, (38 + x) % 150, c)) / 255.0f;
                REQUIRE(out.at(y, x, c) == expect);
            }
    REQUIRE(provenance_holds(img, out));
}

TEST_CASE("crop of an exact-size input is the identity over 255", "[preproc]") {
    const RawImage img = random_image(224, 224, 12);
    const PixelTensor out = preprocess_crop(img, 224);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        REQUIRE(out.data[i] == static_cast<float>(img.data[i]) / 255.0f);
}

TEST_CASE("crop of a larger input is a centered window", "[preproc]") {
    const RawImage img = random_image(500, 500, 13);
    const PixelTensor out = preprocess_crop(img, 224);
    // offset (500-224)/2 = 138 on both axes, no tiling.
    for (std::size_t y = 0; y < 224; y += 13)
        for (std::size_t x = 0; x < 224; x += 13)
            REQUIRE(out.at(y, x, 1) == static_cast<float>(img.at(138 + y, 138 + x, 1)) / 255.0f);
}

TEST_CASE("crop provenance holds across random sizes", "[preproc]") {
    RandomStream rs(99);
    for (int i = 0; i < 20; ++i) {
        const std::size_t h = 8 + rs.next_below(400);
        const std::size_t w = 8 + rs.next_below(400);
        const RawImage img = random_image(h, w, 1000 + i);
        REQUIRE(provenance_holds(img, preprocess_crop(img, 224)));
    }
}

TEST_CASE("side equal to target is not tiled", "[preproc]") {
    // 224x10: width tiles to 230? No: k = ceil(224/10) = 23 -> 230, offset 3.
    const RawImage img = random_image(224, 10, 14);
    const PixelTensor out = preprocess_crop(img, 224);
    REQUIRE(out.at(0, 0, 0) == static_cast<float>(img.at(0, 3 % 10, 0)) / 255.0f);
    // Height side stays untouched: offset 0.
    REQUIRE(out.at(100, 0, 2) == static_cast<float>(img.at(100, 3, 2)) / 255.0f);
}

TEST_CASE("resize at scale 1 equals input over 255", "[preproc]") {
    const RawImage img = random_image(224, 224, 15);
    const PixelTensor out = preprocess_resize(img, 224);
    for (std::size_t i = 0; i < img.data.size(); ++i)
        REQUIRE(out.data[i] == static_cast<float>(img.data[i]) / 255.0f);
}

TEST_CASE("resize upsampling interpolates strictly between samples", "[preproc]") {
    RawImage img;
    img.height = 2;
    img.width = 2;
    img.data = {0, 0, 0, 100, 100, 100, 0, 0, 0, 100, 100, 100};
    const PixelTensor out = preprocess_resize(img, 4);
    bool between = false;
    for (const float v : out.data)
        if (v > 0.0f && v < 100.0f / 255.0f) between = true;
    REQUIRE(between);
}

TEST_CASE("resize of a constant image is constant", "[preproc]") {
    RawImage img;
    img.height = 37;
    img.width = 61;
    img.data.assign(37 * 61 * 3, 77);
    const PixelTensor out = preprocess_resize(img, 224);
    for (const float v : out.data) REQUIRE(v == 77.0f / 255.0f);
}

TEST_CASE("resize at non-integer scale breaks provenance", "[preproc]") {
    int broke = 0;
    for (int i = 0; i < 10; ++i) {
        const RawImage img = random_image(100, 150, 2000 + i);
        if (!provenance_holds(img, preprocess_resize(img, 224))) ++broke;
    }
    REQUIRE(broke == 10);
}

TEST_CASE("preprocessing rejects invalid inputs", "[preproc]") {
    RawImage bad;
    bad.height = 2;
    bad.width = 2;
    bad.data.resize(5);  // wrong length
    REQUIRE_THROWS_AS(preprocess_crop(bad, 224), InvalidArgument);
    const RawImage ok = random_image(4, 4, 16);
    REQUIRE_THROWS_AS(preprocess_crop(ok, 0), InvalidArgument);
    REQUIRE_THROWS_AS(preprocess_resize(ok, 1), InvalidArgument);
}

TEST_CASE("crop output values stay in [0,1]", "[preproc]") {
    const RawImage img = random_image(30, 40, 17);
    for (const float v : preprocess_crop(img, 64).data) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
    }
    for (const float v : preprocess_resize(img, 64).data) {
        REQUIRE(v >= 0.0f);
        REQUIRE(v <= 1.0f);
    }
}
