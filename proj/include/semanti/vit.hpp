// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <functional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "semanti/error.hpp"
#include "semanti/image.hpp"
#include "semanti/rng.hpp"
#include "semanti/tensor.hpp"

namespace semanti {

struct ViTConfig {
    std::size_t image_side = 64;
    std::size_t token_patch = 8;
    std::size_t dim = 64;
    std::size_t depth = 12;
    std::size_t heads = 4;
    std::size_t mlp_ratio = 2;
    std::size_t classes = 2;

    void validate() const {
        if (image_side == 0 || token_patch == 0 || dim == 0 || depth == 0 || heads == 0 ||
            mlp_ratio == 0 || classes == 0)
            throw InvalidArgument("model config fields must be positive");
        if (image_side % token_patch != 0)
            throw InvalidArgument("token_patch must divide image_side");
        if (dim % heads != 0) throw InvalidArgument("heads must divide dim");
        if (depth < 3) throw InvalidArgument("depth must be at least 3");
    }

    std::size_t grid() const { return image_side / token_patch; }
    std::size_t tokens() const { return grid() * grid(); }
    std::size_t patch_dim() const { return token_patch * token_patch * 3; }
    std::size_t mlp_dim() const { return dim * mlp_ratio; }
};

template <typename Real>
struct BlockParamsT {
    TensorT<Real> ln1_g, ln1_b;
    TensorT<Real> wq, bq, wk, bk, wv, bv, wo, bo;
    TensorT<Real> ln2_g, ln2_b;
    TensorT<Real> w_up, b_up, w_down, b_down;
};

/// Low-rank delta for one projection: delta = (alpha/rank) * up * down.
template <typename Real>
struct LoRAAdapterT {
    std::size_t block = 0;  // 1-based
    std::string proj;       // one of q, k, v, o
    std::size_t rank = 0;
    Real alpha = Real(0);
    TensorT<Real> down;  // rank x d
    TensorT<Real> up;    // d x rank, zero-initialized
};

template <typename Real>
struct ModelParamsT {
    ViTConfig cfg;
    TensorT<Real> patch_w, patch_b;
    TensorT<Real> cls;  // 1 x d learned token
    TensorT<Real> pos;  // (tokens+1) x d
    std::vector<BlockParamsT<Real>> blocks;
    TensorT<Real> final_g, final_b;
    TensorT<Real> head_w, head_b;
    std::vector<LoRAAdapterT<Real>> adapters;
};

using ModelParams = ModelParamsT<float>;

/// Visits every parameter with its stable registry name; blocks are 1-based.
template <typename Real, typename Fn>
void for_each_param(ModelParamsT<Real>& m, Fn&& fn) {
    fn("patch_embed.w", m.patch_w);
    fn("patch_embed.b", m.patch_b);
    fn("cls", m.cls);
    fn("pos", m.pos);
    for (std::size_t b = 0; b < m.blocks.size(); ++b) {
        const std::string p = "block" + std::to_string(b + 1) + ".";
        BlockParamsT<Real>& blk = m.blocks[b];
        fn(p + "ln1.g", blk.ln1_g);
        fn(p + "ln1.b", blk.ln1_b);
        fn(p + "attn.q.w", blk.wq);
        fn(p + "attn.q.b", blk.bq);
        fn(p + "attn.k.w", blk.wk);
        fn(p + "attn.k.b", blk.bk);
        fn(p + "attn.v.w", blk.wv);
        fn(p + "attn.v.b", blk.bv);
        fn(p + "attn.o.w", blk.wo);
        fn(p + "attn.o.b", blk.bo);
        fn(p + "ln2.g", blk.ln2_g);
        fn(p + "ln2.b", blk.ln2_b);
        fn(p + "mlp.up.w", blk.w_up);
        fn(p + "mlp.up.b", blk.b_up);
        fn(p + "mlp.down.w", blk.w_down);
        fn(p + "mlp.down.b", blk.b_down);
    }
    fn("final.g", m.final_g);
    fn("final.b", m.final_b);
    fn("head.w", m.head_w);
    fn("head.b", m.head_b);
    for (auto& a : m.adapters) {
        const std::string p = "lora.block" + std::to_string(a.block) + "." + a.proj + ".";
        fn(p + "down", a.down);
        fn(p + "up", a.up);
    }
}

template <typename Real, typename Fn>
void for_each_param(const ModelParamsT<Real>& m, Fn&& fn) {
    for_each_param(const_cast<ModelParamsT<Real>&>(m),
                   [&fn](const std::string& n, TensorT<Real>& t) {
                       fn(n, static_cast<const TensorT<Real>&>(t));
                   });
}

namespace detail {

template <typename Real>
TensorT<Real> init_weight(Shape s, RandomStream& rs, double sigma = 0.02) {
    std::vector<Real> v(shape_size(s));
    for (auto& x : v) x = static_cast<Real>(rs.next_trunc_normal(sigma));
    return TensorT<Real>(std::move(s), std::move(v));
}

template <typename Real>
TensorT<Real> init_const(Shape s, Real value) {
    const std::size_t n = shape_size(s);
    return TensorT<Real>(std::move(s), std::vector<Real>(n, value));
}

}  // namespace detail

/// Truncated-normal (sigma 0.02) weights, zero biases, unit norm gains.
/// Parameters are drawn from the stream in registry order.
template <typename Real = float>
ModelParamsT<Real> init_model(const ViTConfig& cfg, RandomStream& rs) {
    cfg.validate();
    const std::size_t d = cfg.dim, t = cfg.tokens(), pd = cfg.patch_dim(), md = cfg.mlp_dim();
    ModelParamsT<Real> m;
    m.cfg = cfg;
    m.patch_w = detail::init_weight<Real>({pd, d}, rs);
    m.patch_b = detail::init_const<Real>({d}, Real(0));
    m.cls = detail::init_weight<Real>({1, d}, rs);
    m.pos = detail::init_weight<Real>({t + 1, d}, rs);
    m.blocks.resize(cfg.depth);
    for (auto& blk : m.blocks) {
        blk.ln1_g = detail::init_const<Real>({d}, Real(1));
        blk.ln1_b = detail::init_const<Real>({d}, Real(0));
        blk.wq = detail::init_weight<Real>({d, d}, rs);
        blk.bq = detail::init_const<Real>({d}, Real(0));
        blk.wk = detail::init_weight<Real>({d, d}, rs);
        blk.bk = detail::init_const<Real>({d}, Real(0));
        blk.wv = detail::init_weight<Real>({d, d}, rs);
        blk.bv = detail::init_const<Real>({d}, Real(0));
        blk.wo = detail::init_weight<Real>({d, d}, rs);
        blk.bo = detail::init_const<Real>({d}, Real(0));
        blk.ln2_g = detail::init_const<Real>({d}, Real(1));
        blk.ln2_b = detail::init_const<Real>({d}, Real(0));
        blk.w_up = detail::init_weight<Real>({d, md}, rs);
        blk.b_up = detail::init_const<Real>({md}, Real(0));
        blk.w_down = detail::init_weight<Real>({md, d}, rs);
        blk.b_down = detail::init_const<Real>({d}, Real(0));
    }
    m.final_g = detail::init_const<Real>({d}, Real(1));
    m.final_b = detail::init_const<Real>({d}, Real(0));
    m.head_w = detail::init_weight<Real>({d, cfg.classes}, rs);
    m.head_b = detail::init_const<Real>({cfg.classes}, Real(0));
    return m;
}

/// Replaces the classifier head, e.g. when moving from the pretraining task
/// to detection. Head weights are drawn from the stream.
template <typename Real>
void reset_head(ModelParamsT<Real>& m, std::size_t classes, RandomStream& rs) {
    if (classes == 0) throw InvalidArgument("head must have at least one class");
    m.cfg.classes = classes;
    m.head_w = detail::init_weight<Real>({m.cfg.dim, classes}, rs);
    m.head_b = detail::init_const<Real>({classes}, Real(0));
}

// ----- LoRA -----------------------------------------------------------------

using LoRATarget = std::pair<std::size_t, std::string>;  // (1-based block, proj)

inline std::vector<LoRATarget> default_lora_targets(const std::set<std::size_t>& blocks) {
    std::vector<LoRATarget> t;
    for (const std::size_t b : blocks) {
        t.emplace_back(b, "q");
        t.emplace_back(b, "v");
    }
    return t;
}

/// Adds zero-effect adapters: down trunc-normal, up all-zeros. The bases of
/// targeted projections are treated as frozen by the trainer.
template <typename Real>
void attach_lora(ModelParamsT<Real>& m, const std::vector<LoRATarget>& targets, std::size_t rank,
                 Real alpha, RandomStream& rs) {
    if (rank == 0) throw InvalidArgument("LoRA rank must be positive");
    const std::size_t d = m.cfg.dim;
    for (const auto& [block, proj] : targets) {
        if (block < 1 || block > m.cfg.depth)
            throw InvalidArgument("LoRA target block " + std::to_string(block) +
                                  " outside 1.." + std::to_string(m.cfg.depth));
        if (proj != "q" && proj != "k" && proj != "v" && proj != "o")
            throw InvalidArgument("LoRA target projection must be one of q,k,v,o, got " + proj);
        for (const auto& a : m.adapters)
            if (a.block == block && a.proj == proj)
                throw InvalidArgument("duplicate LoRA target block" + std::to_string(block) +
                                      "." + proj);
        LoRAAdapterT<Real> a;
        a.block = block;
        a.proj = proj;
        a.rank = rank;
        a.alpha = alpha;
        a.down = detail::init_weight<Real>({rank, d}, rs);
        a.up = detail::init_const<Real>({d, rank}, Real(0));
        m.adapters.push_back(std::move(a));
    }
}

/// W' = W + (alpha/rank) * up * down, as plain values.
template <typename Real>
TensorT<Real> merge_lora(const TensorT<Real>& base, const LoRAAdapterT<Real>& a) {
    if (a.up.shape.size() != 2 || a.down.shape.size() != 2 || base.shape.size() != 2 ||
        a.up.shape[1] != a.down.shape[0] || base.shape[0] != a.up.shape[0] ||
        base.shape[1] != a.down.shape[1])
        throw InvalidArgument("merge_lora: shapes do not conform, base " + shape_str(base.shape) +
                              " up " + shape_str(a.up.shape) + " down " + shape_str(a.down.shape));
    TensorT<Real> out(base.shape, base.values());
    const std::size_t d0 = base.shape[0], d1 = base.shape[1], r = a.up.shape[1];
    const Real s = a.alpha / static_cast<Real>(a.rank);
    for (std::size_t i = 0; i < d0; ++i)
        for (std::size_t l = 0; l < r; ++l) {
            const Real u = a.up.values()[i * r + l] * s;
            for (std::size_t j = 0; j < d1; ++j)
                out.values_mut()[i * d1 + j] += u * a.down.values()[l * d1 + j];
        }
    return out;
}

/// Folds every adapter into its base projection and removes the adapters.
template <typename Real>
ModelParamsT<Real> merge_all_lora(const ModelParamsT<Real>& m) {
    ModelParamsT<Real> out = m;
    for (const auto& a : m.adapters) {
        BlockParamsT<Real>& blk = out.blocks[a.block - 1];
        TensorT<Real>& w = a.proj == "q"   ? blk.wq
                           : a.proj == "k" ? blk.wk
                           : a.proj == "v" ? blk.wv
                                           : blk.wo;
        w = merge_lora(w, a);
    }
    out.adapters.clear();
    return out;
}

// ----- Parameter partition --------------------------------------------------

enum class Side { A, S };  // A: trainable (theta_A), S: frozen (theta_S)

struct ParamPartition {
    std::set<std::size_t> trainable_blocks;
    std::set<std::size_t> frozen_blocks;
    Side aux_side = Side::A;   // patch embed, cls, pos, final norm
    Side head_side = Side::A;  // classifier head
};

/// Splits blocks into frozen (freeze_spec) and trainable (the rest).
/// Errors when the split leaves nothing trainable at all.
inline ParamPartition partition_params(const ViTConfig& cfg,
                                       const std::set<std::size_t>& freeze_spec,
                                       Side aux_side = Side::A, Side head_side = Side::A) {
    cfg.validate();
    ParamPartition p;
    p.aux_side = aux_side;
    p.head_side = head_side;
    for (const std::size_t b : freeze_spec) {
        if (b < 1 || b > cfg.depth)
            throw InvalidArgument("freeze_spec block " + std::to_string(b) + " outside 1.." +
                                  std::to_string(cfg.depth));
        p.frozen_blocks.insert(b);
    }
    for (std::size_t b = 1; b <= cfg.depth; ++b)
        if (!p.frozen_blocks.count(b)) p.trainable_blocks.insert(b);
    if (p.trainable_blocks.empty() && aux_side == Side::S && head_side == Side::S)
        throw InvalidArgument("partition leaves nothing trainable");
    return p;
}

/// Partition tag of a registry-named tensor. Adapters are always theta_A.
inline Side param_side(const ParamPartition& p, const std::string& name) {
    if (name.rfind("lora.", 0) == 0) return Side::A;
    if (name.rfind("head.", 0) == 0) return p.head_side;
    if (name.rfind("block", 0) == 0) {
        const std::size_t dot = name.find('.');
        const std::size_t b = std::stoul(name.substr(5, dot - 5));
        return p.frozen_blocks.count(b) ? Side::S : Side::A;
    }
    return p.aux_side;  // patch_embed.*, cls, pos, final.*
}

/// Whether the trainer updates this tensor: theta_A membership, minus the
/// bases that a LoRA adapter has taken over.
template <typename Real>
bool param_trainable(const ModelParamsT<Real>& m, const ParamPartition& p,
                     const std::string& name) {
    if (param_side(p, name) == Side::S) return false;
    for (const auto& a : m.adapters) {
        const std::string base = "block" + std::to_string(a.block) + ".attn." + a.proj + ".w";
        if (name == base) return false;
    }
    return true;
}

// ----- Forward pass ---------------------------------------------------------

/// Rows are tokens: one p*p*3 flattened patch per row, grid row-major.
template <typename Real>
TensorT<Real> patchify(const ViTConfig& cfg, const PixelTensor& img) {
    if (img.height != cfg.image_side || img.width != cfg.image_side)
        throw InvalidArgument("input image is " + std::to_string(img.height) + "x" +
                              std::to_string(img.width) + ", model expects side " +
                              std::to_string(cfg.image_side));
    const std::size_t p = cfg.token_patch, g = cfg.grid();
    std::vector<Real> rows(cfg.tokens() * cfg.patch_dim());
    std::size_t w = 0;
    for (std::size_t gy = 0; gy < g; ++gy)
        for (std::size_t gx = 0; gx < g; ++gx)
            for (std::size_t y = 0; y < p; ++y)
                for (std::size_t x = 0; x < p; ++x)
                    for (std::size_t c = 0; c < 3; ++c) {
                        const float v = img.at(gy * p + y, gx * p + x, c);
                        if (v < 0.0f || v > 1.0f)
                            throw InvalidArgument("input samples must lie in [0,1]");
                        rows[w++] = static_cast<Real>(v);
                    }
    return TensorT<Real>({cfg.tokens(), cfg.patch_dim()}, std::move(rows));
}

/// A model whose tensors may be tape leaves; produced by bind().
template <typename Real>
ModelParamsT<Real> bind(Tape<Real>& tape, const ModelParamsT<Real>& m,
                        const std::function<bool(const std::string&)>& trainable) {
    ModelParamsT<Real> out = m;
    for_each_param(out, [&](const std::string& name, TensorT<Real>& t) {
        if (trainable(name)) t = tape.leaf(t);
    });
    return out;
}

template <typename Real>
ModelParamsT<Real> bind_all(Tape<Real>& tape, const ModelParamsT<Real>& m) {
    return bind(tape, m, [](const std::string&) { return true; });
}

namespace detail {

template <typename Real>
TensorT<Real> projection_weight(Tape<Real>& tape, const ModelParamsT<Real>& m, std::size_t block,
                                const char* proj, const TensorT<Real>& base) {
    for (const auto& a : m.adapters) {
        if (a.block != block || a.proj != proj) continue;
        TensorT<Real> delta = tape.matmul(a.up, a.down);
        return tape.add(base, tape.scale(delta, a.alpha / static_cast<Real>(a.rank)));
    }
    return base;
}

template <typename Real>
TensorT<Real> attention(Tape<Real>& tape, const ModelParamsT<Real>& m, std::size_t block_idx,
                        const BlockParamsT<Real>& blk, const TensorT<Real>& h) {
    const std::size_t d = m.cfg.dim, nh = m.cfg.heads, dh = d / nh;
    const std::size_t rows = h.shape[0];
    const TensorT<Real> wq = projection_weight(tape, m, block_idx, "q", blk.wq);
    const TensorT<Real> wk = projection_weight(tape, m, block_idx, "k", blk.wk);
    const TensorT<Real> wv = projection_weight(tape, m, block_idx, "v", blk.wv);
    const TensorT<Real> wo = projection_weight(tape, m, block_idx, "o", blk.wo);
    const TensorT<Real> q = tape.add(tape.matmul(h, wq), blk.bq);
    const TensorT<Real> k = tape.add(tape.matmul(h, wk), blk.bk);
    const TensorT<Real> v = tape.add(tape.matmul(h, wv), blk.bv);
    const Real inv_sqrt = Real(1) / static_cast<Real>(std::sqrt(static_cast<double>(dh)));
    std::vector<TensorT<Real>> heads;
    for (std::size_t i = 0; i < nh; ++i) {
        const TensorT<Real> qi = tape.slice(q, 0, rows, i * dh, dh);
        const TensorT<Real> ki = tape.slice(k, 0, rows, i * dh, dh);
        const TensorT<Real> vi = tape.slice(v, 0, rows, i * dh, dh);
        const TensorT<Real> scores = tape.scale(tape.matmul(qi, tape.transpose(ki)), inv_sqrt);
        heads.push_back(tape.matmul(tape.softmax_rows(scores), vi));
    }
    return tape.add(tape.matmul(tape.concat(heads, 1), wo), blk.bo);
}

}  // namespace detail

/// CLS embedding [1 x d] of one image on the caller's tape. `model` should
/// come from bind() when gradients are wanted.
template <typename Real>
TensorT<Real> forward_features_one(Tape<Real>& tape, const ModelParamsT<Real>& model,
                                   const PixelTensor& img) {
    const ViTConfig& cfg = model.cfg;
    TensorT<Real> tokens =
        tape.add(tape.matmul(patchify<Real>(cfg, img), model.patch_w), model.patch_b);
    TensorT<Real> x = tape.add(tape.concat({model.cls, tokens}, 0), model.pos);
    for (std::size_t b = 0; b < cfg.depth; ++b) {
        const BlockParamsT<Real>& blk = model.blocks[b];
        const TensorT<Real> h1 = tape.layer_norm(x, blk.ln1_g, blk.ln1_b);
        x = tape.add(x, detail::attention(tape, model, b + 1, blk, h1));
        const TensorT<Real> h2 = tape.layer_norm(x, blk.ln2_g, blk.ln2_b);
        const TensorT<Real> up = tape.gelu(tape.add(tape.matmul(h2, blk.w_up), blk.b_up));
        x = tape.add(x, tape.add(tape.matmul(up, blk.w_down), blk.b_down));
    }
    x = tape.layer_norm(x, model.final_g, model.final_b);
    return tape.slice(x, 0, 1, 0, cfg.dim);
}

/// Batch embeddings [B x d] without gradient tracking.
template <typename Real>
TensorT<Real> forward_features(const ModelParamsT<Real>& model,
                               const std::vector<PixelTensor>& batch) {
    if (batch.empty()) throw InvalidArgument("forward_features: empty batch");
    TensorT<Real> out = TensorT<Real>::zeros({batch.size(), model.cfg.dim});
    for (std::size_t i = 0; i < batch.size(); ++i) {
        Tape<Real> tape;
        const TensorT<Real> e = forward_features_one(tape, model, batch[i]);
        std::copy(e.values().begin(), e.values().end(),
                  out.values_mut().begin() + i * model.cfg.dim);
    }
    return out;
}

/// Affine head g: emb * W + b, rows independent.
template <typename Real>
TensorT<Real> classify_logits(Tape<Real>& tape, const ModelParamsT<Real>& model,
                              const TensorT<Real>& emb) {
    return tape.add(tape.matmul(emb, model.head_w), model.head_b);
}

template <typename Real>
TensorT<Real> classify_logits(const ModelParamsT<Real>& model, const TensorT<Real>& emb) {
    Tape<Real> tape;
    return classify_logits(tape, model, emb);
}

}  // namespace semanti
