// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0
//
// Training: Adam restricted to the trainable partition, the patch-shuffle
// train step, the epoch driver, the two training recipes (semantic-domain
// pretraining and SemAnti detection fine-tuning), and checkpoint files.

#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <functional>
#include <map>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "semanti/error.hpp"
#include "semanti/image.hpp"
#include "semanti/rng.hpp"
#include "semanti/shuffle.hpp"
#include "semanti/tensor.hpp"
#include "semanti/vit.hpp"

namespace semanti {

static_assert(std::endian::native == std::endian::little,
              "checkpoint format assumes a little-endian host");

// ----- Configuration ---------------------------------------------------------

struct AdamConfig {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct LoRAConfig {
    bool enabled = false;
    std::vector<LoRATarget> targets;  // empty: q and v of every trainable block
    std::size_t rank = 8;
    double alpha = 16.0;
};

struct TrainConfig {
    double learning_rate = 4e-4;
    std::size_t batch_size = 32;
    std::size_t epochs = 0;
    std::uint64_t seed = 0;
    ShuffleSpec shuffle{8, false};
    std::set<std::size_t> freeze_spec;  // blocks held frozen; empty freezes nothing
    LoRAConfig lora;
    AdamConfig adam;

    void validate() const {
        if (!(learning_rate > 0.0))
            throw InvalidArgument("train config: learning_rate must be > 0");
        if (batch_size < 1) throw InvalidArgument("train config: batch_size must be >= 1");
    }
};

/// Canonical fine-tuning settings: freeze the deepest third of the blocks,
/// adapt the rest with LoRA, and shuffle at token-patch granularity.
inline TrainConfig semanti_defaults(const ViTConfig& mc) {
    mc.validate();
    TrainConfig cfg;
    cfg.shuffle = ShuffleSpec{mc.token_patch, true};
    for (std::size_t b = mc.depth - mc.depth / 3 + 1; b <= mc.depth; ++b)
        cfg.freeze_spec.insert(b);
    cfg.lora.enabled = true;
    return cfg;
}

// ----- Adam ------------------------------------------------------------------

template <typename Real>
struct AdamSlotT {
    std::vector<Real> m, v;
};

template <typename Real>
struct AdamStateT {
    std::map<std::string, AdamSlotT<Real>> slots;  // keyed by registry name
    std::uint64_t t = 0;
};

using AdamState = AdamStateT<float>;

/// One bias-corrected Adam update for a single tensor. `step` is 1-based and
/// shared by every tensor updated in the same optimization step. Moments are
/// carried in Real but the arithmetic runs in double.
template <typename Real>
void adam_step(TensorT<Real>& p, const std::vector<Real>& g, AdamSlotT<Real>& slot,
               std::uint64_t step, const TrainConfig& cfg) {
    if (g.size() != p.size())
        throw InvalidArgument("adam_step: gradient size " + std::to_string(g.size()) +
                              " does not match parameter size " + std::to_string(p.size()));
    if (step == 0) throw InvalidArgument("adam_step: step counter must be 1-based");
    if (slot.m.empty()) {
        slot.m.assign(p.size(), Real(0));
        slot.v.assign(p.size(), Real(0));
    } else if (slot.m.size() != p.size()) {
        throw InvalidArgument("adam_step: moment size does not match parameter size");
    }
    const double b1 = cfg.adam.beta1;
    const double b2 = cfg.adam.beta2;
    const double c1 = 1.0 - std::pow(b1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(b2, static_cast<double>(step));
    std::vector<Real>& pv = p.values_mut();
    for (std::size_t i = 0; i < pv.size(); ++i) {
        const double gi = static_cast<double>(g[i]);
        const double m = b1 * static_cast<double>(slot.m[i]) + (1.0 - b1) * gi;
        const double v = b2 * static_cast<double>(slot.v[i]) + (1.0 - b2) * gi * gi;
        slot.m[i] = static_cast<Real>(m);
        slot.v[i] = static_cast<Real>(v);
        const double upd = cfg.learning_rate * (m / c1) / (std::sqrt(v / c2) + cfg.adam.eps);
        pv[i] = static_cast<Real>(static_cast<double>(pv[i]) - upd);
    }
}

/// Applies one Adam step across the model. `grads` must cover the trainable
/// tensors exactly; frozen tensors carry no state and cannot change.
template <typename Real>
void adam_step(ModelParamsT<Real>& model, const ParamPartition& part,
               const std::map<std::string, std::vector<Real>>& grads, AdamStateT<Real>& state,
               const TrainConfig& cfg) {
    state.t += 1;
    std::size_t used = 0;
    for_each_param(model, [&](const std::string& name, TensorT<Real>& p) {
        const auto it = grads.find(name);
        if (!param_trainable(model, part, name)) {
            if (it != grads.end())
                throw InvalidArgument("adam_step: gradient supplied for frozen tensor " + name);
            return;
        }
        if (it == grads.end()) throw InvalidArgument("adam_step: missing gradient for " + name);
        ++used;
        adam_step(p, it->second, state.slots[name], state.t, cfg);
    });
    if (used != grads.size())
        throw InvalidArgument("adam_step: gradients reference tensors outside the model");
}

// ----- Train step ------------------------------------------------------------

/// One example, already preprocessed to [0,1] floats. For detection the label
/// is 0 = natural, 1 = generated; for semantic-domain it is the domain index.
struct TrainSample {
    PixelTensor image;
    int label = 0;
};

/// One optimization step on a batch: fresh patch-shuffle permutation per
/// sample when enabled, forward, mean cross-entropy, backward, Adam on the
/// trainable partition. Mutates `model` tensors in place (callers that need
/// the original intact must deep-copy first; fit() does). Returns the loss.
inline double train_step(ModelParamsT<float>& model, const ParamPartition& part,
                         AdamStateT<float>& state, const std::vector<TrainSample>& batch,
                         const TrainConfig& cfg, RandomStream& ps_stream,
                         std::size_t batch_index = 0) {
    if (batch.empty()) throw InvalidArgument("train_step: empty batch");
    // Trainability in registry order, resolved once per batch.
    std::vector<char> flags;
    std::vector<std::string> names;
    for_each_param(model, [&](const std::string& name, Tensor&) {
        const bool tr = param_trainable(model, part, name);
        flags.push_back(tr ? 1 : 0);
        if (tr) names.push_back(name);
    });

    std::map<std::string, std::vector<float>> grads;
    double loss_sum = 0.0;
    try {
        for (const TrainSample& sample : batch) {
            PixelTensor img = sample.image;
            if (cfg.shuffle.enabled) {
                const std::size_t s = cfg.shuffle.patch_size_px;
                if (s == 0 || img.height % s != 0 || img.width % s != 0)
                    throw InvalidArgument("train_step: shuffle patch size " + std::to_string(s) +
                                          " does not divide the image side");
                Permutation perm =
                    sample_permutation((img.height / s) * (img.width / s), ps_stream);
                img = patch_shuffle(img, cfg.shuffle, perm);
            }
            Tape<float> tape;
            ModelParamsT<float> bound = model;
            std::vector<Tensor*> leaves;
            std::size_t k = 0;
            for_each_param(bound, [&](const std::string&, Tensor& t) {
                if (flags[k++]) {
                    t = tape.leaf(t);
                    leaves.push_back(&t);
                }
            });
            const Tensor emb = forward_features_one(tape, bound, img);
            const Tensor logits = classify_logits(tape, bound, emb);
            const Tensor loss = tape.cross_entropy_with_logits(logits, {sample.label});
            loss_sum += static_cast<double>(loss.scalar());
            tape.backward(loss);
            for (std::size_t i = 0; i < leaves.size(); ++i) {
                const std::vector<float>& g = tape.grad(*leaves[i]);
                std::vector<float>& acc = grads[names[i]];
                if (acc.empty()) acc.assign(g.size(), 0.0f);
                for (std::size_t j = 0; j < g.size(); ++j) acc[j] += g[j];
            }
        }
    } catch (const NumericError& e) {
        throw NumericError(std::string(e.what()) + " (batch " + std::to_string(batch_index) +
                           ")");
    }
    const double inv_b = 1.0 / static_cast<double>(batch.size());
    const double loss = loss_sum * inv_b;
    if (!std::isfinite(loss))
        throw NumericError("train_step: non-finite loss (batch " + std::to_string(batch_index) +
                           ")");
    for (auto& [name, g] : grads)
        for (float& x : g) x = static_cast<float>(x * inv_b);
    adam_step(model, part, grads, state, cfg);
    return loss;
}

// ----- Checkpoint ------------------------------------------------------------

struct EpochStats {
    double loss = 0.0;
    std::vector<std::pair<std::string, double>> metrics;  // insertion-ordered
};

struct Checkpoint {
    ModelParamsT<float> model;
    ParamPartition partition;
    TrainConfig train;
    std::vector<EpochStats> history;
};

/// Optional per-epoch evaluation hook; its results land in the history.
using EpochEval = std::function<std::vector<std::pair<std::string, double>>(
    const ModelParamsT<float>& model, std::size_t epoch)>;

enum class Task { detection, semantic_domain };

namespace detail {

inline Tensor deep_copy(const Tensor& t) { return Tensor(t.shape, *t.data); }

inline std::vector<std::size_t> shuffled(std::vector<std::size_t> v, RandomStream& rs) {
    for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rs.next_below(i)]);
    return v;
}

}  // namespace detail

// ----- Fit -------------------------------------------------------------------

/// Epoch-driven training over an in-memory split. The input model is left
/// untouched; the returned checkpoint owns fresh buffers for every trainable
/// tensor and shares the frozen ones. With cfg.lora.enabled and no adapters
/// yet attached, adapters are attached to the trainable blocks first.
inline Checkpoint fit(const ModelParamsT<float>& model0, const std::vector<TrainSample>& split,
                      const TrainConfig& cfg, Task task, const EpochEval& eval = nullptr) {
    cfg.validate();
    if (split.empty()) throw InvalidArgument("fit: empty training split");

    Checkpoint ck;
    ck.train = cfg;
    ck.model = model0;
    ck.partition = partition_params(model0.cfg, cfg.freeze_spec);
    if (cfg.lora.enabled && ck.model.adapters.empty()) {
        std::vector<LoRATarget> targets = cfg.lora.targets;
        if (targets.empty()) targets = default_lora_targets(ck.partition.trainable_blocks);
        RandomStream ars = derive_stream(cfg.seed, "lora-init");
        attach_lora(ck.model, targets, cfg.lora.rank, static_cast<float>(cfg.lora.alpha), ars);
    }
    // In-place Adam must never write through buffers shared with the caller.
    for_each_param(ck.model, [&](const std::string& name, Tensor& t) {
        if (param_trainable(ck.model, ck.partition, name)) t = detail::deep_copy(t);
    });

    const int classes = static_cast<int>(ck.model.cfg.classes);
    std::vector<std::size_t> all, nat, gen;
    for (std::size_t i = 0; i < split.size(); ++i) {
        const int y = split[i].label;
        if (y < 0 || y >= classes)
            throw InvalidArgument("fit: label " + std::to_string(y) + " outside 0.." +
                                  std::to_string(classes - 1));
        all.push_back(i);
        (y == 0 ? nat : gen).push_back(i);
    }

    AdamState state;
    for (std::size_t e = 0; e < cfg.epochs; ++e) {
        std::vector<std::size_t> order;
        if (task == Task::detection) {
            // Class-balanced deterministic interleave: natural, generated, ...
            RandomStream r0 = derive_stream(cfg.seed, "order-nat", e);
            RandomStream r1 = derive_stream(cfg.seed, "order-gen", e);
            const std::vector<std::size_t> s0 = detail::shuffled(nat, r0);
            const std::vector<std::size_t> s1 = detail::shuffled(gen, r1);
            const std::size_t common = std::min(s0.size(), s1.size());
            for (std::size_t i = 0; i < common; ++i) {
                order.push_back(s0[i]);
                order.push_back(s1[i]);
            }
            for (std::size_t i = common; i < s0.size(); ++i) order.push_back(s0[i]);
            for (std::size_t i = common; i < s1.size(); ++i) order.push_back(s1[i]);
        } else {
            RandomStream r = derive_stream(cfg.seed, "order", e);
            order = detail::shuffled(all, r);
        }
        RandomStream ps = derive_stream(cfg.seed, "patch-shuffle", e);
        double weighted = 0.0;
        std::size_t seen = 0;
        std::size_t bi = 0;
        for (std::size_t off = 0; off < order.size(); off += cfg.batch_size, ++bi) {
            const std::size_t n = std::min(cfg.batch_size, order.size() - off);
            std::vector<TrainSample> batch;
            batch.reserve(n);
            for (std::size_t j = 0; j < n; ++j) batch.push_back(split[order[off + j]]);
            const double l = train_step(ck.model, ck.partition, state, batch, cfg, ps, bi);
            weighted += l * static_cast<double>(n);
            seen += n;
        }
        EpochStats st;
        st.loss = weighted / static_cast<double>(seen);
        if (eval) st.metrics = eval(ck.model, e);
        ck.history.push_back(st);
    }
    return ck;
}

/// SemAnti fine-tuning: keeps the pretrained backbone, swaps in a fresh
/// 2-class detection head when the pretrained head has a different width,
/// then runs fit() on the detection task. Frozen-tensor bytes survive
/// unchanged by construction. See semanti_defaults() for canonical settings.
inline Checkpoint semanti_finetune(const Checkpoint& pretrained,
                                   const std::vector<TrainSample>& split, const TrainConfig& cfg,
                                   const EpochEval& eval = nullptr) {
    ModelParamsT<float> model = pretrained.model;
    if (model.cfg.classes != 2) {
        RandomStream hs = derive_stream(cfg.seed, "head-init");
        reset_head(model, 2, hs);
    }
    return fit(model, split, cfg, Task::detection, eval);
}

// ----- Checkpoint file format ------------------------------------------------
//
// Layout: 8-byte magic "SEMANTI1", u64 little-endian header length, UTF-8
// header text, then raw row-major f32 payloads in header order. The header is
// line-oriented "key = value" text in a fixed key order, so that a loaded
// checkpoint saves back to the identical byte sequence.

namespace detail {

inline std::string fmt_f64(double v) {
    char b[40];
    std::snprintf(b, sizeof b, "%.17g", v);
    return std::string(b);
}

inline std::string fmt_f32(float v) {
    char b[24];
    std::snprintf(b, sizeof b, "%.9g", static_cast<double>(v));
    return std::string(b);
}

inline std::string join_blocks(const std::set<std::size_t>& s) {
    if (s.empty()) return "-";
    std::string out;
    for (const std::size_t b : s) {
        if (!out.empty()) out += ',';
        out += std::to_string(b);
    }
    return out;
}

inline std::string join_targets(const std::vector<LoRATarget>& t) {
    if (t.empty()) return "auto";
    std::string out;
    for (const auto& [block, proj] : t) {
        if (!out.empty()) out += ',';
        out += std::to_string(block) + ':' + proj;
    }
    return out;
}

/// Sequential reader over the checkpoint header; enforces the canonical key
/// order and reports absolute file offsets on failure.
class HeaderCursor {
  public:
    HeaderCursor(std::string_view text, std::size_t base) : text_(text), base_(base) {}

    bool done() const { return pos_ >= text_.size(); }
    std::size_t offset() const { return base_ + pos_; }

    /// Key of the next line without consuming it; empty at end.
    std::string_view peek_key() {
        if (done()) return {};
        const std::size_t eol = line_end();
        const std::string_view line = text_.substr(pos_, eol - pos_);
        const std::size_t sep = line.find(" = ");
        if (sep == std::string_view::npos)
            throw DecodeError("checkpoint header: malformed line", offset());
        return line.substr(0, sep);
    }

    /// Consumes the next line, requiring an exact key match.
    std::string expect(std::string_view key) {
        const std::string_view k = peek_key();
        if (k != key)
            throw DecodeError("checkpoint header: expected key '" + std::string(key) +
                                  "', found '" + std::string(k) + "'",
                              offset());
        return take_value();
    }

    /// Consumes the next line unconditionally, returning its value.
    std::string take_value() {
        const std::size_t eol = line_end();
        const std::string_view line = text_.substr(pos_, eol - pos_);
        const std::size_t sep = line.find(" = ");
        if (sep == std::string_view::npos)
            throw DecodeError("checkpoint header: malformed line", offset());
        std::string value(line.substr(sep + 3));
        pos_ = eol + 1;
        return value;
    }

  private:
    std::size_t line_end() const {
        const std::size_t eol = text_.find('\n', pos_);
        if (eol == std::string_view::npos)
            throw DecodeError("checkpoint header: missing final newline", base_ + text_.size());
        return eol;
    }

    std::string_view text_;
    std::size_t base_ = 0;
    std::size_t pos_ = 0;
};

inline std::uint64_t parse_u64(const std::string& s, const char* what, std::size_t offset) {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw DecodeError(std::string("checkpoint header: bad ") + what + " '" + s + "'", offset);
    return std::strtoull(s.c_str(), nullptr, 10);
}

inline double parse_f64(const std::string& s, const char* what, std::size_t offset) {
    char* end = nullptr;
    const double v = std::strtod(s.c_str(), &end);
    if (end == s.c_str() || *end != '\0')
        throw DecodeError(std::string("checkpoint header: bad ") + what + " '" + s + "'", offset);
    return v;
}

inline std::set<std::size_t> parse_blocks(const std::string& s, std::size_t offset) {
    std::set<std::size_t> out;
    if (s == "-") return out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        out.insert(static_cast<std::size_t>(
            parse_u64(s.substr(start, comma - start), "block list", offset)));
        start = comma + 1;
    }
    return out;
}

inline std::vector<LoRATarget> parse_targets(const std::string& s, std::size_t offset) {
    std::vector<LoRATarget> out;
    if (s == "auto") return out;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t comma = s.find(',', start);
        if (comma == std::string::npos) comma = s.size();
        const std::string item = s.substr(start, comma - start);
        const std::size_t colon = item.find(':');
        if (colon == std::string::npos)
            throw DecodeError("checkpoint header: bad LoRA target '" + item + "'", offset);
        out.emplace_back(
            static_cast<std::size_t>(parse_u64(item.substr(0, colon), "LoRA target", offset)),
            item.substr(colon + 1));
        start = comma + 1;
    }
    return out;
}

inline const char* side_letter(Side s) { return s == Side::A ? "A" : "S"; }

inline Side parse_side(const std::string& s, std::size_t offset) {
    if (s == "A") return Side::A;
    if (s == "S") return Side::S;
    throw DecodeError("checkpoint header: bad partition side '" + s + "'", offset);
}

}  // namespace detail

inline void save_checkpoint(const Checkpoint& ck, const std::filesystem::path& path) {
    const ViTConfig& mc = ck.model.cfg;
    std::string hdr;
    const auto kv = [&hdr](const std::string& k, const std::string& v) {
        hdr += k;
        hdr += " = ";
        hdr += v;
        hdr += '\n';
    };
    kv("version", "1");
    kv("dtype", "f32");
    kv("model.image_side", std::to_string(mc.image_side));
    kv("model.token_patch", std::to_string(mc.token_patch));
    kv("model.dim", std::to_string(mc.dim));
    kv("model.depth", std::to_string(mc.depth));
    kv("model.heads", std::to_string(mc.heads));
    kv("model.mlp_ratio", std::to_string(mc.mlp_ratio));
    kv("model.classes", std::to_string(mc.classes));
    kv("train.learning_rate", detail::fmt_f64(ck.train.learning_rate));
    kv("train.batch_size", std::to_string(ck.train.batch_size));
    kv("train.epochs", std::to_string(ck.train.epochs));
    kv("train.seed", std::to_string(ck.train.seed));
    kv("train.shuffle.enabled", ck.train.shuffle.enabled ? "1" : "0");
    kv("train.shuffle.patch", std::to_string(ck.train.shuffle.patch_size_px));
    kv("train.freeze", detail::join_blocks(ck.train.freeze_spec));
    kv("train.lora.enabled", ck.train.lora.enabled ? "1" : "0");
    kv("train.lora.rank", std::to_string(ck.train.lora.rank));
    kv("train.lora.alpha", detail::fmt_f64(ck.train.lora.alpha));
    kv("train.lora.targets", detail::join_targets(ck.train.lora.targets));
    kv("train.adam.beta1", detail::fmt_f64(ck.train.adam.beta1));
    kv("train.adam.beta2", detail::fmt_f64(ck.train.adam.beta2));
    kv("train.adam.eps", detail::fmt_f64(ck.train.adam.eps));
    kv("partition.frozen", detail::join_blocks(ck.partition.frozen_blocks));
    kv("partition.aux", detail::side_letter(ck.partition.aux_side));
    kv("partition.head", detail::side_letter(ck.partition.head_side));
    kv("history.count", std::to_string(ck.history.size()));
    for (std::size_t i = 0; i < ck.history.size(); ++i) {
        const std::string p = "history." + std::to_string(i + 1);
        kv(p + ".loss", detail::fmt_f64(ck.history[i].loss));
        for (const auto& [name, value] : ck.history[i].metrics)
            kv(p + ".metric." + name, detail::fmt_f64(value));
    }
    kv("adapter.count", std::to_string(ck.model.adapters.size()));
    for (std::size_t i = 0; i < ck.model.adapters.size(); ++i) {
        const auto& a = ck.model.adapters[i];
        kv("adapter." + std::to_string(i + 1),
           std::to_string(a.block) + ' ' + a.proj + ' ' + std::to_string(a.rank) + ' ' +
               detail::fmt_f32(a.alpha));
    }
    std::vector<std::pair<std::string, const Tensor*>> order;
    for_each_param(ck.model,
                   [&](const std::string& name, const Tensor& t) { order.emplace_back(name, &t); });
    kv("tensor.count", std::to_string(order.size()));
    for (std::size_t i = 0; i < order.size(); ++i) {
        const auto& [name, t] = order[i];
        std::string dims;
        for (const std::size_t d : t->shape) {
            if (!dims.empty()) dims += 'x';
            dims += std::to_string(d);
        }
        kv("tensor." + std::to_string(i + 1),
           name + ' ' + detail::side_letter(param_side(ck.partition, name)) + ' ' + dims);
    }

    std::vector<std::uint8_t> file;
    std::size_t payload = 0;
    for (const auto& [name, t] : order) payload += t->size() * sizeof(float);
    file.reserve(16 + hdr.size() + payload);
    const char magic[8] = {'S', 'E', 'M', 'A', 'N', 'T', 'I', '1'};
    file.insert(file.end(), magic, magic + 8);
    const std::uint64_t hl = hdr.size();
    const auto* hl_bytes = reinterpret_cast<const std::uint8_t*>(&hl);
    file.insert(file.end(), hl_bytes, hl_bytes + 8);
    file.insert(file.end(), hdr.begin(), hdr.end());
    for (const auto& [name, t] : order) {
        const auto* p = reinterpret_cast<const std::uint8_t*>(t->data->data());
        file.insert(file.end(), p, p + t->size() * sizeof(float));
    }
    write_file(path, file);
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    if (bytes.size() < 16 || std::memcmp(bytes.data(), "SEMANTI1", 8) != 0)
        throw DecodeError("checkpoint: bad magic", 0);
    std::uint64_t hl = 0;
    std::memcpy(&hl, bytes.data() + 8, 8);
    if (hl > bytes.size() - 16) throw DecodeError("checkpoint: truncated header", 8);
    detail::HeaderCursor cur(
        std::string_view(reinterpret_cast<const char*>(bytes.data()) + 16, hl), 16);

    const std::string version = cur.expect("version");
    if (version != "1")
        throw DecodeError("checkpoint: unsupported version " + version, cur.offset());
    const std::string dtype = cur.expect("dtype");
    if (dtype != "f32") throw DecodeError("checkpoint: unsupported dtype " + dtype, cur.offset());

    const auto u64_field = [&cur](const char* key) {
        return detail::parse_u64(cur.expect(key), key, cur.offset());
    };
    const auto f64_field = [&cur](const char* key) {
        return detail::parse_f64(cur.expect(key), key, cur.offset());
    };

    ViTConfig mc;
    mc.image_side = u64_field("model.image_side");
    mc.token_patch = u64_field("model.token_patch");
    mc.dim = u64_field("model.dim");
    mc.depth = u64_field("model.depth");
    mc.heads = u64_field("model.heads");
    mc.mlp_ratio = u64_field("model.mlp_ratio");
    mc.classes = u64_field("model.classes");
    mc.validate();

    TrainConfig tc;
    tc.learning_rate = f64_field("train.learning_rate");
    tc.batch_size = u64_field("train.batch_size");
    tc.epochs = u64_field("train.epochs");
    tc.seed = u64_field("train.seed");
    tc.shuffle.enabled = u64_field("train.shuffle.enabled") != 0;
    tc.shuffle.patch_size_px = u64_field("train.shuffle.patch");
    tc.freeze_spec = detail::parse_blocks(cur.expect("train.freeze"), cur.offset());
    tc.lora.enabled = u64_field("train.lora.enabled") != 0;
    tc.lora.rank = u64_field("train.lora.rank");
    tc.lora.alpha = f64_field("train.lora.alpha");
    tc.lora.targets = detail::parse_targets(cur.expect("train.lora.targets"), cur.offset());
    tc.adam.beta1 = f64_field("train.adam.beta1");
    tc.adam.beta2 = f64_field("train.adam.beta2");
    tc.adam.eps = f64_field("train.adam.eps");

    const std::set<std::size_t> frozen =
        detail::parse_blocks(cur.expect("partition.frozen"), cur.offset());
    const Side aux = detail::parse_side(cur.expect("partition.aux"), cur.offset());
    const Side head = detail::parse_side(cur.expect("partition.head"), cur.offset());
    const ParamPartition partition = partition_params(mc, frozen, aux, head);

    std::vector<EpochStats> history;
    const std::uint64_t epochs = u64_field("history.count");
    for (std::uint64_t i = 1; i <= epochs; ++i) {
        const std::string p = "history." + std::to_string(i);
        EpochStats st;
        st.loss = detail::parse_f64(cur.expect(p + ".loss"), "loss", cur.offset());
        const std::string mprefix = p + ".metric.";
        while (!cur.done()) {
            const std::string_view key = cur.peek_key();
            if (key.substr(0, mprefix.size()) != mprefix) break;
            const std::string name(key.substr(mprefix.size()));
            st.metrics.emplace_back(
                name, detail::parse_f64(cur.take_value(), "metric", cur.offset()));
        }
        history.push_back(std::move(st));
    }

    RandomStream dummy(0);
    ModelParamsT<float> model = init_model<float>(mc, dummy);
    const std::uint64_t n_adapters = u64_field("adapter.count");
    for (std::uint64_t i = 1; i <= n_adapters; ++i) {
        const std::size_t off = cur.offset();
        const std::string line = cur.expect("adapter." + std::to_string(i));
        std::size_t a = 0, b = 0;
        std::vector<std::string> parts;
        while (a <= line.size()) {
            b = line.find(' ', a);
            if (b == std::string::npos) b = line.size();
            parts.push_back(line.substr(a, b - a));
            a = b + 1;
        }
        if (parts.size() != 4) throw DecodeError("checkpoint: bad adapter line", off);
        LoRAAdapterT<float> ad;
        ad.block = static_cast<std::size_t>(detail::parse_u64(parts[0], "adapter block", off));
        ad.proj = parts[1];
        ad.rank = static_cast<std::size_t>(detail::parse_u64(parts[2], "adapter rank", off));
        ad.alpha = static_cast<float>(detail::parse_f64(parts[3], "adapter alpha", off));
        if (ad.block < 1 || ad.block > mc.depth || ad.rank == 0 ||
            (ad.proj != "q" && ad.proj != "k" && ad.proj != "v" && ad.proj != "o"))
            throw DecodeError("checkpoint: invalid adapter " + line, off);
        ad.down = Tensor::zeros({ad.rank, mc.dim});
        ad.up = Tensor::zeros({mc.dim, ad.rank});
        model.adapters.push_back(std::move(ad));
    }

    std::vector<std::pair<std::string, Tensor*>> order;
    for_each_param(model,
                   [&](const std::string& name, Tensor& t) { order.emplace_back(name, &t); });
    const std::uint64_t n_tensors = u64_field("tensor.count");
    if (n_tensors != order.size())
        throw DecodeError("checkpoint: tensor count " + std::to_string(n_tensors) +
                              " does not match the model's " + std::to_string(order.size()),
                          cur.offset());

    std::size_t payload = 16 + static_cast<std::size_t>(hl);
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::size_t off = cur.offset();
        const std::string line = cur.expect("tensor." + std::to_string(i + 1));
        const std::size_t sp1 = line.find(' ');
        const std::size_t sp2 = line.find(' ', sp1 + 1);
        if (sp1 == std::string::npos || sp2 == std::string::npos)
            throw DecodeError("checkpoint: bad tensor line", off);
        const std::string name = line.substr(0, sp1);
        const std::string side = line.substr(sp1 + 1, sp2 - sp1 - 1);
        const std::string dims = line.substr(sp2 + 1);
        if (name != order[i].first)
            throw DecodeError("checkpoint: tensor '" + name + "' out of order, expected '" +
                                  order[i].first + "'",
                              off);
        if (detail::parse_side(side, off) != param_side(partition, name))
            throw DecodeError("checkpoint: partition tag mismatch for " + name, off);
        Shape shape;
        std::size_t a = 0;
        while (a <= dims.size()) {
            std::size_t x = dims.find('x', a);
            if (x == std::string::npos) x = dims.size();
            shape.push_back(
                static_cast<std::size_t>(detail::parse_u64(dims.substr(a, x - a), "dims", off)));
            a = x + 1;
        }
        Tensor& dst = *order[i].second;
        if (shape != dst.shape)
            throw DecodeError("checkpoint: shape mismatch for " + name + ", stored " +
                                  shape_str(shape) + ", model wants " + shape_str(dst.shape),
                              off);
        const std::size_t want = dst.size() * sizeof(float);
        if (payload + want > bytes.size())
            throw DecodeError("checkpoint: truncated payload for " + name, payload);
        std::vector<float> values(dst.size());
        std::memcpy(values.data(), bytes.data() + payload, want);
        payload += want;
        dst = Tensor(shape, std::move(values));
    }
    if (!cur.done())
        throw DecodeError("checkpoint: unexpected trailing header line", cur.offset());
    if (payload != bytes.size())
        throw DecodeError("checkpoint: trailing bytes after payload", payload);

    Checkpoint ck;
    ck.model = std::move(model);
    ck.partition = partition;
    ck.train = tc;
    ck.history = std::move(history);
    return ck;
}

}  // namespace semanti
