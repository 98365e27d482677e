// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0
//
// Evaluation: accuracy and average precision, latent dispersion statistics,
// grouped in-domain / out-of-domain reports over a manifest, and embedding
// export for external projection tools.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "semanti/error.hpp"
#include "semanti/manifest.hpp"
#include "semanti/tensor.hpp"
#include "semanti/train.hpp"
#include "semanti/vit.hpp"

namespace semanti {

// ----- Scalar metrics --------------------------------------------------------

/// Fraction of samples classified correctly; a score exactly at the
/// threshold counts as generated (class 1).
inline double accuracy(const std::vector<double>& scores, const std::vector<int>& labels,
                       double threshold = 0.5) {
    if (scores.empty()) throw InvalidArgument("accuracy: empty input");
    if (scores.size() != labels.size())
        throw InvalidArgument("accuracy: scores and labels differ in length");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (!(scores[i] >= 0.0 && scores[i] <= 1.0))
            throw InvalidArgument("accuracy: score outside [0,1]");
        if (labels[i] != 0 && labels[i] != 1)
            throw InvalidArgument("accuracy: label must be 0 or 1");
        const int pred = scores[i] >= threshold ? 1 : 0;
        if (pred == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(scores.size());
}

/// Step-interpolated average precision: samples ranked by descending score,
/// ties broken by ascending original index; AP is the mean of the precision
/// at each positive's rank.
inline double average_precision(const std::vector<double>& scores,
                                const std::vector<int>& labels) {
    if (scores.empty()) throw InvalidArgument("average_precision: empty input");
    if (scores.size() != labels.size())
        throw InvalidArgument("average_precision: scores and labels differ in length");
    std::size_t positives = 0;
    for (const int y : labels) {
        if (y != 0 && y != 1)
            throw InvalidArgument("average_precision: label must be 0 or 1");
        positives += static_cast<std::size_t>(y);
    }
    if (positives == 0)
        throw InvalidArgument("average_precision: no positive labels, AP undefined");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&scores](std::size_t a, std::size_t b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    double ap = 0.0;
    std::size_t tp = 0;
    for (std::size_t rank = 1; rank <= order.size(); ++rank) {
        if (labels[order[rank - 1]] == 1) {
            ++tp;
            ap += static_cast<double>(tp) / static_cast<double>(rank);
        }
    }
    return ap / static_cast<double>(positives);
}

// ----- Dispersion ------------------------------------------------------------

struct DispersionReport {
    double dispersion_natural = 0.0;
    double dispersion_generated = 0.0;
    double homogeneity = 0.0;  // |log(natural / generated)|
};

/// Mean Euclidean distance to the class centroid, per class, on a [n x d]
/// embedding matrix with binary labels.
inline DispersionReport dispersion_ratio(const Tensor& embeddings,
                                         const std::vector<int>& labels) {
    if (embeddings.shape.size() != 2)
        throw InvalidArgument("dispersion_ratio: embeddings must be [n x d]");
    const std::size_t n = embeddings.shape[0];
    const std::size_t d = embeddings.shape[1];
    if (n == 0 || d == 0) throw InvalidArgument("dispersion_ratio: empty embeddings");
    if (labels.size() != n)
        throw InvalidArgument("dispersion_ratio: labels do not match embedding rows");

    std::vector<std::vector<double>> centroid(2, std::vector<double>(d, 0.0));
    std::size_t count[2] = {0, 0};
    const std::vector<float>& e = embeddings.values();
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        if (y != 0 && y != 1) throw InvalidArgument("dispersion_ratio: label must be 0 or 1");
        ++count[y];
        for (std::size_t j = 0; j < d; ++j)
            centroid[y][j] += static_cast<double>(e[i * d + j]);
    }
    if (count[0] == 0 || count[1] == 0)
        throw InvalidArgument("dispersion_ratio: both classes must be present");
    for (int y = 0; y < 2; ++y)
        for (std::size_t j = 0; j < d; ++j)
            centroid[y][j] /= static_cast<double>(count[y]);

    double mean_dist[2] = {0.0, 0.0};
    for (std::size_t i = 0; i < n; ++i) {
        const int y = labels[i];
        double sq = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double diff = static_cast<double>(e[i * d + j]) - centroid[y][j];
            sq += diff * diff;
        }
        mean_dist[y] += std::sqrt(sq);
    }
    DispersionReport rep;
    rep.dispersion_natural = mean_dist[0] / static_cast<double>(count[0]);
    rep.dispersion_generated = mean_dist[1] / static_cast<double>(count[1]);
    rep.homogeneity = std::abs(std::log(rep.dispersion_natural / rep.dispersion_generated));
    return rep;
}

// ----- Grouped evaluation ----------------------------------------------------

enum class Group { in_domain, ood };

struct SubsetMetrics {
    std::string name;
    std::size_t n = 0;
    double acc = 0.0;
    double ap = 0.0;
};

struct GroupMean {
    bool present = false;
    std::size_t subsets = 0;
    double acc = 0.0;
    double ap = 0.0;
};

struct EvalReport {
    std::vector<SubsetMetrics> subsets;  // ordered by subset name
    GroupMean in_domain, ood, overall;
};

/// Generated-class probabilities for a list of samples; inputs are used as
/// stored (evaluation never patch-shuffles).
inline std::vector<double> detection_scores(const ModelParamsT<float>& model,
                                            const std::vector<TrainSample>& samples) {
    if (model.cfg.classes != 2)
        throw InvalidArgument("detection_scores: model head must have 2 classes, has " +
                              std::to_string(model.cfg.classes));
    std::vector<PixelTensor> images;
    images.reserve(samples.size());
    for (const TrainSample& s : samples) images.push_back(s.image);
    const Tensor emb = forward_features(model, images);
    const Tensor logits = classify_logits(model, emb);
    std::vector<double> scores(samples.size());
    const std::vector<float>& lv = logits.values();
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const double l0 = static_cast<double>(lv[i * 2]);
        const double l1 = static_cast<double>(lv[i * 2 + 1]);
        scores[i] = 1.0 / (1.0 + std::exp(l0 - l1));
    }
    return scores;
}

/// Per-subset Acc/AP for every subset named in `grouping`, plus unweighted
/// grouped means. Inputs are center-crop preprocessed to the model's side.
inline EvalReport evaluate(const Checkpoint& ck, const DatasetManifest& manifest,
                           const std::map<std::string, Group>& grouping) {
    if (grouping.empty()) throw InvalidArgument("evaluate: empty grouping");
    EvalReport rep;
    for (const auto& [subset, group] : grouping) {
        const std::vector<TrainSample> samples =
            load_split(manifest, subset, ck.model.cfg.image_side);
        if (samples.empty())
            throw InvalidArgument("evaluate: unknown subset in grouping: " + subset);
        const std::vector<double> scores = detection_scores(ck.model, samples);
        std::vector<int> labels(samples.size());
        for (std::size_t i = 0; i < samples.size(); ++i) labels[i] = samples[i].label;

        SubsetMetrics sm;
        sm.name = subset;
        sm.n = samples.size();
        sm.acc = accuracy(scores, labels);
        sm.ap = average_precision(scores, labels);
        rep.subsets.push_back(sm);

        GroupMean& gm = group == Group::in_domain ? rep.in_domain : rep.ood;
        gm.present = true;
        gm.subsets += 1;
        gm.acc += sm.acc;
        gm.ap += sm.ap;
        rep.overall.present = true;
        rep.overall.subsets += 1;
        rep.overall.acc += sm.acc;
        rep.overall.ap += sm.ap;
    }
    for (GroupMean* gm : {&rep.in_domain, &rep.ood, &rep.overall}) {
        if (gm->subsets > 0) {
            gm->acc /= static_cast<double>(gm->subsets);
            gm->ap /= static_cast<double>(gm->subsets);
        }
    }
    return rep;
}

// ----- Reports ---------------------------------------------------------------

namespace detail {

inline std::string fmt_metric(double v) {
    char b[32];
    std::snprintf(b, sizeof b, "%.9g", v);
    return std::string(b);
}

}  // namespace detail

inline std::string metrics_csv(const EvalReport& rep) {
    std::string out = "subset,n,acc,ap\n";
    for (const SubsetMetrics& s : rep.subsets)
        out += s.name + ',' + std::to_string(s.n) + ',' + detail::fmt_metric(s.acc) + ',' +
               detail::fmt_metric(s.ap) + '\n';
    return out;
}

inline std::string metrics_summary(const EvalReport& rep) {
    std::string out;
    const auto kv = [&out](const std::string& k, const std::string& v) {
        out += k;
        out += " = ";
        out += v;
        out += '\n';
    };
    for (const SubsetMetrics& s : rep.subsets) {
        kv("subset." + s.name + ".n", std::to_string(s.n));
        kv("subset." + s.name + ".acc", detail::fmt_metric(s.acc));
        kv("subset." + s.name + ".ap", detail::fmt_metric(s.ap));
    }
    const auto group = [&kv](const char* name, const GroupMean& gm) {
        kv(std::string("group.") + name + ".present", gm.present ? "1" : "0");
        if (gm.present) {
            kv(std::string("group.") + name + ".subsets", std::to_string(gm.subsets));
            kv(std::string("group.") + name + ".acc", detail::fmt_metric(gm.acc));
            kv(std::string("group.") + name + ".ap", detail::fmt_metric(gm.ap));
        }
    };
    group("in_domain", rep.in_domain);
    group("ood", rep.ood);
    group("overall", rep.overall);
    return out;
}

/// Writes metrics.csv and summary.txt into `dir`.
inline void write_metrics_report(const EvalReport& rep, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    const std::string csv = metrics_csv(rep);
    const std::string summary = metrics_summary(rep);
    write_file(dir / "metrics.csv", std::vector<std::uint8_t>(csv.begin(), csv.end()));
    write_file(dir / "summary.txt", std::vector<std::uint8_t>(summary.begin(), summary.end()));
}

// ----- Embedding export ------------------------------------------------------

/// One line per manifest record: id, subset, label, domain, then the CLS
/// embedding as 9-significant-digit floats, all tab-separated.
inline void export_embeddings(const Checkpoint& ck, const DatasetManifest& manifest,
                              const std::filesystem::path& out_path) {
    if (manifest.records.empty()) throw InvalidArgument("export_embeddings: empty manifest");
    const std::size_t d = ck.model.cfg.dim;
    std::string out;
    for (const ManifestRecord& r : manifest.records) {
        const TrainSample sample = load_sample(manifest, r, ck.model.cfg.image_side);
        const Tensor emb = forward_features(ck.model, {sample.image});
        out += r.id;
        out += '\t';
        out += r.subset;
        out += '\t';
        out += std::to_string(r.label);
        out += '\t';
        out += r.domain;
        const std::vector<float>& e = emb.values();
        for (std::size_t j = 0; j < d; ++j) {
            out += '\t';
            out += detail::fmt_f32(e[j]);
        }
        out += '\n';
    }
    write_file(out_path, std::vector<std::uint8_t>(out.begin(), out.end()));
}

}  // namespace semanti
