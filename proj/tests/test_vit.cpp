// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>
#include <cmath>

#include "fd_oracle.hpp"
#include "semanti/shuffle.hpp"
#include "semanti/vit.hpp"

using namespace semanti;

namespace {

ViTConfig tiny_cfg() {
    ViTConfig cfg;
    cfg.image_side = 16;
    cfg.token_patch = 8;
    cfg.dim = 16;
    cfg.depth = 3;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.classes = 4;
    return cfg;
}

PixelTensor random_image(std::size_t side, std::uint64_t seed) {
    PixelTensor t(side, side);
    RandomStream rs(seed);
    for (auto& v : t.data) v = static_cast<float>(rs.next_unit());
    return t;
}

template <typename Real>
std::vector<Real> flatten_params(const ModelParamsT<Real>& m) {
    std::vector<Real> all;
    for_each_param(m, [&](const std::string&, const TensorT<Real>& t) {
        all.insert(all.end(), t.values().begin(), t.values().end());
    });
    return all;
}

}  // namespace

TEST_CASE("init is deterministic per seed", "[vit]") {
    RandomStream a(123), b(123), c(124);
    const auto ma = init_model<float>(tiny_cfg(), a);
    const auto mb = init_model<float>(tiny_cfg(), b);
    const auto mc = init_model<float>(tiny_cfg(), c);
    REQUIRE(flatten_params(ma) == flatten_params(mb));
    REQUIRE(flatten_params(ma) != flatten_params(mc));
}

TEST_CASE("init shapes and constants", "[vit]") {
    ViTConfig cfg;  // desk defaults: side 64, patch 8, dim 64, depth 12, heads 4
    RandomStream rs(7);
    const auto m = init_model<float>(cfg, rs);
    REQUIRE(m.blocks.size() == 12);
    REQUIRE(m.blocks[0].wq.shape == Shape{64, 64});
    REQUIRE(m.pos.shape == Shape{65, 64});
    REQUIRE(m.patch_w.shape == Shape{192, 64});
    for (const auto& blk : m.blocks) {
        for (const float g : blk.ln1_g.values()) REQUIRE(g == 1.0f);
        for (const float g : blk.ln2_g.values()) REQUIRE(g == 1.0f);
        for (const float b : blk.bq.values()) REQUIRE(b == 0.0f);
    }
    for (const float g : m.final_g.values()) REQUIRE(g == 1.0f);
    // Truncated normal: all weights within 2 sigma.
    for (const float w : m.blocks[3].wv.values()) REQUIRE(std::abs(w) <= 0.04f);
}

TEST_CASE("config validation", "[vit]") {
    ViTConfig cfg = tiny_cfg();
    cfg.token_patch = 5;  // does not divide 16
    REQUIRE_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = tiny_cfg();
    cfg.heads = 3;  // does not divide 16
    REQUIRE_THROWS_AS(cfg.validate(), InvalidArgument);
    cfg = tiny_cfg();
    cfg.depth = 2;
    REQUIRE_THROWS_AS(cfg.validate(), InvalidArgument);
}

TEST_CASE("identical batch rows give identical embeddings", "[vit]") {
    RandomStream rs(9);
    const auto m = init_model<float>(tiny_cfg(), rs);
    const PixelTensor img = random_image(16, 10);
    const auto emb = forward_features(m, {img, img});
    const std::size_t d = m.cfg.dim;
    for (std::size_t j = 0; j < d; ++j) REQUIRE(emb.values()[j] == emb.values()[d + j]);
}

TEST_CASE("full-side shuffle does not change the embedding", "[vit]") {
    RandomStream rs(11);
    const auto m = init_model<float>(tiny_cfg(), rs);
    const PixelTensor img = random_image(16, 12);
    RandomStream ps(13);
    const PixelTensor same = patch_shuffle(img, {16, true}, sample_permutation(1, ps));
    const auto emb = forward_features(m, {img, same});
    for (std::size_t j = 0; j < m.cfg.dim; ++j)
        REQUIRE(emb.values()[j] == emb.values()[m.cfg.dim + j]);
}

TEST_CASE("embeddings stay finite across seeds", "[vit]") {
    for (std::uint64_t seed = 0; seed < 100; ++seed) {
        RandomStream rs(seed);
        const auto m = init_model<float>(tiny_cfg(), rs);
        const auto emb = forward_features(m, {random_image(16, 1000 + seed)});
        for (const float v : emb.values()) REQUIRE(std::isfinite(v));
    }
}

TEST_CASE("classifier head is affine", "[vit]") {
    RandomStream rs(14);
    const auto m = init_model<float>(tiny_cfg(), rs);
    const std::size_t d = m.cfg.dim, c = m.cfg.classes;
    SECTION("zero embedding returns the bias") {
        const auto logits = classify_logits(m, Tensor::zeros({1, d}));
        REQUIRE(logits.values() == m.head_b.values());
    }
    SECTION("linearity in the embedding") {
        const auto e = fd::random_dt({1, d}, 15);
        std::vector<float> ef(e.values().begin(), e.values().end());
        std::vector<float> e2f(ef);
        for (auto& v : e2f) v *= 2.0f;
        const auto l0 = classify_logits(m, Tensor::zeros({1, d})).values();
        const auto l1 = classify_logits(m, Tensor({1, d}, ef)).values();
        const auto l2 = classify_logits(m, Tensor({1, d}, e2f)).values();
        for (std::size_t j = 0; j < c; ++j)
            REQUIRE(l2[j] - l1[j] == Catch::Approx(l1[j] - l0[j]).margin(1e-4));
    }
    SECTION("row permutation permutes logits") {
        const auto ea = fd::random_dt({1, d}, 16), eb = fd::random_dt({1, d}, 17);
        std::vector<float> ab(ea.values().begin(), ea.values().end());
        ab.insert(ab.end(), eb.values().begin(), eb.values().end());
        std::vector<float> ba(eb.values().begin(), eb.values().end());
        ba.insert(ba.end(), ea.values().begin(), ea.values().end());
        const auto lab = classify_logits(m, Tensor({2, d}, ab)).values();
        const auto lba = classify_logits(m, Tensor({2, d}, ba)).values();
        for (std::size_t j = 0; j < c; ++j) {
            REQUIRE(lab[j] == lba[c + j]);
            REQUIRE(lab[c + j] == lba[j]);
        }
    }
}

TEST_CASE("zero-init adapters change no output bit", "[vit][lora]") {
    RandomStream rs(18);
    auto m = init_model<float>(tiny_cfg(), rs);
    const PixelTensor img = random_image(16, 19);
    const auto before = forward_features(m, {img}).values();
    RandomStream ls(20);
    attach_lora(m, default_lora_targets({1, 2, 3}), 4, 16.0f, ls);
    REQUIRE(m.adapters.size() == 6);
    const auto after = forward_features(m, {img}).values();
    REQUIRE(before == after);
}

TEST_CASE("adapter parameter count", "[vit][lora]") {
    ViTConfig cfg;  // dim 64
    RandomStream rs(21), ls(22);
    auto m = init_model<float>(cfg, rs);
    attach_lora(m, {{5, "q"}}, 8, 16.0f, ls);
    std::size_t lora_scalars = 0;
    for_each_param(m, [&](const std::string& name, const Tensor& t) {
        if (name.rfind("lora.", 0) == 0) lora_scalars += t.size();
    });
    REQUIRE(lora_scalars == 2u * 8u * 64u);
}

TEST_CASE("merge_lora reference delta", "[vit][lora]") {
    LoRAAdapterT<float> a;
    a.block = 1;
    a.proj = "q";
    a.rank = 1;
    a.alpha = 1.0f;
    a.up = Tensor({2, 1}, {1, 0});
    a.down = Tensor({1, 2}, {0, 1});
    const Tensor base = Tensor::zeros({2, 2});
    const auto merged = merge_lora(base, a).values();
    REQUIRE(merged == std::vector<float>{0, 1, 0, 0});

    LoRAAdapterT<float> zero = a;
    zero.up = Tensor::zeros({2, 1});
    const Tensor w({2, 2}, {5, 6, 7, 8});
    REQUIRE(merge_lora(w, zero).values() == w.values());
}

TEST_CASE("adapter forward equals merged forward", "[vit][lora]") {
    for (std::uint64_t trial = 0; trial < 20; ++trial) {
        RandomStream rs(100 + trial);
        auto m = init_model<float>(tiny_cfg(), rs);
        RandomStream ls(200 + trial);
        attach_lora(m, default_lora_targets({1, 3}), 2, 8.0f, ls);
        // Give the adapters real content; |values| stays well under 1.
        for (auto& a : m.adapters) {
            for (auto& v : a.up.values_mut()) v = static_cast<float>(ls.next_range(-0.1, 0.1));
            for (auto& v : a.down.values_mut()) v = static_cast<float>(ls.next_range(-0.1, 0.1));
        }
        const PixelTensor img = random_image(16, 300 + trial);
        const auto with_adapters = forward_features(m, {img}).values();
        const auto merged_model = merge_all_lora(m);
        REQUIRE(merged_model.adapters.empty());
        const auto merged = forward_features(merged_model, {img}).values();
        for (std::size_t j = 0; j < with_adapters.size(); ++j)
            REQUIRE(std::abs(with_adapters[j] - merged[j]) < 1e-5f);
    }
}

TEST_CASE("attach_lora validation", "[vit][lora]") {
    RandomStream rs(23), ls(24);
    auto m = init_model<float>(tiny_cfg(), rs);
    REQUIRE_THROWS_AS(attach_lora(m, {{7, "q"}}, 2, 8.0f, ls), InvalidArgument);
    REQUIRE_THROWS_AS(attach_lora(m, {{1, "x"}}, 2, 8.0f, ls), InvalidArgument);
    attach_lora(m, {{1, "q"}}, 2, 8.0f, ls);
    REQUIRE_THROWS_AS(attach_lora(m, {{1, "q"}}, 2, 8.0f, ls), InvalidArgument);
}

TEST_CASE("partition splits blocks and audits totally", "[vit]") {
    ViTConfig cfg;  // depth 12
    SECTION("deep third frozen") {
        const auto p = partition_params(cfg, {9, 10, 11, 12});
        REQUIRE(p.trainable_blocks == std::set<std::size_t>{1, 2, 3, 4, 5, 6, 7, 8});
        REQUIRE(p.frozen_blocks == std::set<std::size_t>{9, 10, 11, 12});
        REQUIRE(param_side(p, "block8.attn.q.w") == Side::A);
        REQUIRE(param_side(p, "block9.attn.q.w") == Side::S);
        REQUIRE(param_side(p, "head.w") == Side::A);
        REQUIRE(param_side(p, "pos") == Side::A);
    }
    SECTION("empty freeze trains everything") {
        const auto p = partition_params(cfg, {});
        REQUIRE(p.frozen_blocks.empty());
        REQUIRE(p.trainable_blocks.size() == 12);
    }
    SECTION("all blocks frozen, head trainable") {
        std::set<std::size_t> all;
        for (std::size_t b = 1; b <= 12; ++b) all.insert(b);
        const auto p = partition_params(cfg, all, Side::S, Side::A);
        RandomStream rs(25);
        const auto m = init_model<float>(cfg, rs);
        std::size_t trainable = 0;
        for_each_param(m, [&](const std::string& name, const Tensor&) {
            if (param_trainable(m, p, name)) {
                ++trainable;
                REQUIRE(name.rfind("head.", 0) == 0);
            }
        });
        REQUIRE(trainable == 2);  // head.w and head.b only
    }
    SECTION("nothing trainable is an error") {
        std::set<std::size_t> all;
        for (std::size_t b = 1; b <= 12; ++b) all.insert(b);
        REQUIRE_THROWS_AS(partition_params(cfg, all, Side::S, Side::S), InvalidArgument);
    }
    SECTION("out of range freeze block") {
        REQUIRE_THROWS_AS(partition_params(cfg, {13}), InvalidArgument);
    }
    SECTION("every tensor gets exactly one tag") {
        RandomStream rs(26), ls(27);
        auto m = init_model<float>(cfg, rs);
        attach_lora(m, default_lora_targets({1, 2}), 2, 8.0f, ls);
        const auto p = partition_params(cfg, {9, 10, 11, 12});
        std::size_t seen = 0, tagged = 0;
        for_each_param(m, [&](const std::string& name, const Tensor&) {
            ++seen;
            const Side s = param_side(p, name);
            if (s == Side::A || s == Side::S) ++tagged;
        });
        REQUIRE(seen == tagged);
        REQUIRE(seen == 4u + 16u * 12u + 4u + 2u * 4u);
    }
}

TEST_CASE("LoRA bases are not trainable while adapters are", "[vit][lora]") {
    ViTConfig cfg = tiny_cfg();
    RandomStream rs(28), ls(29);
    auto m = init_model<float>(cfg, rs);
    attach_lora(m, default_lora_targets({1, 2}), 2, 8.0f, ls);
    const auto p = partition_params(cfg, {3});
    REQUIRE_FALSE(param_trainable(m, p, "block1.attn.q.w"));
    REQUIRE_FALSE(param_trainable(m, p, "block2.attn.v.w"));
    REQUIRE(param_trainable(m, p, "block1.attn.q.b"));
    REQUIRE(param_trainable(m, p, "block1.attn.k.w"));
    REQUIRE(param_trainable(m, p, "lora.block1.q.up"));
    REQUIRE_FALSE(param_trainable(m, p, "block3.mlp.up.w"));
}

TEST_CASE("finite differences: full model loss", "[vit][gradcheck]") {
    ViTConfig cfg;
    cfg.image_side = 8;
    cfg.token_patch = 4;
    cfg.dim = 8;
    cfg.depth = 3;
    cfg.heads = 2;
    cfg.mlp_ratio = 2;
    cfg.classes = 2;
    RandomStream rs(31), ls(32);
    auto model = init_model<double>(cfg, rs);
    attach_lora(model, {{1, "q"}, {2, "v"}}, 2, 4.0, ls);
    for (auto& a : model.adapters) {
        for (auto& v : a.up.values_mut()) v = ls.next_range(-0.2, 0.2);
        for (auto& v : a.down.values_mut()) v = ls.next_range(-0.2, 0.2);
    }
    const PixelTensor img = random_image(8, 33);
    const std::vector<int> labels = {1};

    std::vector<fd::DT> inits;
    for_each_param(model, [&](const std::string&, const fd::DT& t) {
        inits.push_back(fd::clone(t));
    });
    fd::check_grads(
        [&model, &img, &labels](fd::DTape& tape, std::vector<fd::DT>& leaves) {
            ModelParamsT<double> m = model;
            std::size_t i = 0;
            for_each_param(m, [&](const std::string&, fd::DT& t) { t = leaves[i++]; });
            const fd::DT emb = forward_features_one(tape, m, img);
            const fd::DT logits = classify_logits(tape, m, emb);
            return tape.cross_entropy_with_logits(logits, labels);
        },
        std::move(inits));
}
