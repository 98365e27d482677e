// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <catch2/catch_amalgamated.hpp>
#include <cstring>
#include <map>

#include "semanti/shuffle.hpp"

using namespace semanti;

namespace {

PixelTensor random_tensor(std::size_t h, std::size_t w, std::uint64_t seed) {
    PixelTensor t(h, w);
    RandomStream rs(seed);
    for (auto& v : t.data) v = static_cast<float>(rs.next_unit());
    return t;
}

// Order-independent fingerprint of the s-patch contents.
std::vector<std::uint64_t> patch_hashes(const PixelTensor& img, std::size_t s) {
    const std::size_t gh = img.height / s, gw = img.width / s;
    std::vector<std::uint64_t> hashes;
    for (std::size_t gy = 0; gy < gh; ++gy)
        for (std::size_t gx = 0; gx < gw; ++gx) {
            std::uint64_t h = 1469598103934665603ull;
            for (std::size_t r = 0; r < s; ++r)
                for (std::size_t col = 0; col < s * 3; ++col) {
                    std::uint32_t bits;
                    const float v = img.data[((gy * s + r) * img.width + gx * s) * 3 + col];
                    std::memcpy(&bits, &v, 4);
                    h = (h ^ bits) * 1099511628211ull;
                }
            hashes.push_back(h);
        }
    std::sort(hashes.begin(), hashes.end());
    return hashes;
}

double sorted_sum(const PixelTensor& img) {
    std::vector<float> v = img.data;
    std::sort(v.begin(), v.end());
    double s = 0;
    for (const float x : v) s += x;
    return s;
}

}  // namespace

TEST_CASE("permutation of one element is the identity", "[shuffle]") {
    RandomStream rs(1);
    const Permutation p = sample_permutation(1, rs);
    REQUIRE(p.n == 1);
    REQUIRE(p.mapping == std::vector<std::uint32_t>{0});
}

TEST_CASE("permutation sampling rejects n=0", "[shuffle]") {
    RandomStream rs(1);
    REQUIRE_THROWS_AS(sample_permutation(0, rs), InvalidArgument);
}

TEST_CASE("identical stream inputs give identical permutations", "[shuffle]") {
    RandomStream a = derive_stream(42, "perm", 3, 17);
    RandomStream b = derive_stream(42, "perm", 3, 17);
    const Permutation pa = sample_permutation(12, a);
    const Permutation pb = sample_permutation(12, b);
    REQUIRE(pa.mapping == pb.mapping);
    RandomStream c = derive_stream(42, "perm", 3, 18);
    REQUIRE(sample_permutation(12, c).mapping != pa.mapping);
}

TEST_CASE("n=4 permutations are uniform by chi-square", "[shuffle]") {
    // 24 000 fresh-stream draws over the 24 permutations of {0..3};
    // critical value for df=23 at significance 0.01 is 41.638.
    std::map<unsigned, int> counts;
    const int draws = 24000;
    for (int i = 0; i < draws; ++i) {
        RandomStream rs = derive_stream(777, "uniformity", 0, static_cast<std::uint64_t>(i));
        const Permutation p = sample_permutation(4, rs);
        unsigned code = 0;
        for (const auto m : p.mapping) code = code * 4 + m;
        ++counts[code];
    }
    REQUIRE(counts.size() == 24);
    const double expected = draws / 24.0;
    double chi2 = 0;
    for (const auto& [code, n] : counts) {
        const double d = n - expected;
        chi2 += d * d / expected;
    }
    INFO("chi2 = " << chi2);
    REQUIRE(chi2 < 41.638);
}

TEST_CASE("inverse composes to the identity", "[shuffle]") {
    RandomStream rs(5);
    const Permutation p = sample_permutation(64, rs);
    const Permutation q = inverse(p);
    for (std::size_t i = 0; i < p.n; ++i) REQUIRE(q.mapping[p.mapping[i]] == i);
}

TEST_CASE("full-side patch equals identity shuffle", "[shuffle]") {
    const PixelTensor img = random_tensor(32, 32, 7);
    RandomStream rs(8);
    const Permutation p = sample_permutation(1, rs);
    const PixelTensor out = patch_shuffle(img, {32, true}, p);
    REQUIRE(out.data == img.data);
}

TEST_CASE("shuffle then inverse restores the image bit-exactly", "[shuffle]") {
    const PixelTensor img = random_tensor(32, 32, 9);
    RandomStream rs(10);
    const Permutation p = sample_permutation(16, rs);
    const PixelTensor fwd = patch_shuffle(img, {8, true}, p);
    const PixelTensor back = patch_shuffle(fwd, {8, true}, inverse(p));
    REQUIRE(back.data == img.data);
}

TEST_CASE("patch content multiset is invariant", "[shuffle]") {
    const PixelTensor img = random_tensor(64, 64, 11);
    for (const std::size_t s : {std::size_t{4}, std::size_t{8}, std::size_t{16}, std::size_t{32}}) {
        RandomStream rs(100 + s);
        const Permutation p = sample_permutation((64 / s) * (64 / s), rs);
        const PixelTensor out = patch_shuffle(img, {s, true}, p);
        INFO("s = " << s);
        REQUIRE(patch_hashes(out, s) == patch_hashes(img, s));
        REQUIRE(sorted_sum(out) == sorted_sum(img));
    }
}

TEST_CASE("a non-trivial shuffle moves the expected patch", "[shuffle]") {
    PixelTensor img(4, 4);
    // Patch grid 2x2 with s=2; mark each patch with its index.
    for (std::size_t y = 0; y < 4; ++y)
        for (std::size_t x = 0; x < 4; ++x)
            img.at(y, x, 0) = static_cast<float>((y / 2) * 2 + (x / 2));
    Permutation p;
    p.n = 4;
    p.mapping = {3, 2, 1, 0};  // reverse
    const PixelTensor out = patch_shuffle(img, {2, true}, p);
    REQUIRE(out.at(0, 0, 0) == 3.0f);
    REQUIRE(out.at(0, 2, 0) == 2.0f);
    REQUIRE(out.at(2, 0, 0) == 1.0f);
    REQUIRE(out.at(2, 2, 0) == 0.0f);
}

TEST_CASE("shuffle validates its inputs", "[shuffle]") {
    const PixelTensor img = random_tensor(32, 32, 12);
    RandomStream rs(13);
    const Permutation p16 = sample_permutation(16, rs);
    REQUIRE_THROWS_AS(patch_shuffle(img, {7, true}, p16), InvalidArgument);   // 7 does not divide 32
    REQUIRE_THROWS_AS(patch_shuffle(img, {16, true}, p16), InvalidArgument);  // grid is 4, not 16
    REQUIRE_THROWS_AS(patch_shuffle(img, {0, true}, p16), InvalidArgument);
}
