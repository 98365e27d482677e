// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dataset manifests: a line-oriented text index of images on disk with their
// labels, domains, splits and subsets, plus sample loading for training and
// evaluation. The same format ingests externally produced manifests as long
// as the referenced files exist.

#pragma once

#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "semanti/error.hpp"
#include "semanti/image.hpp"
#include "semanti/preproc.hpp"
#include "semanti/train.hpp"

namespace semanti {

struct ManifestRecord {
    std::string id;
    std::string path;  // relative to the manifest's directory
    int label = 0;     // 0 natural, 1 generated
    std::string domain;
    std::string split;  // train | test
    std::string subset;
};

struct DatasetManifest {
    std::uint64_t seed = 0;
    std::uint32_t version = 1;
    std::vector<ManifestRecord> records;
    std::filesystem::path root;  // directory of the manifest file; not serialized
};

namespace detail {

inline void check_manifest_field(const std::string& v, const char* what) {
    if (v.empty()) throw InvalidArgument(std::string("manifest: empty ") + what);
    if (v.find_first_of("\t\n") != std::string::npos)
        throw InvalidArgument(std::string("manifest: ") + what + " contains a tab or newline");
}

inline std::vector<std::string> split_tabs(const std::string& line) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= line.size()) {
        std::size_t tab = line.find('\t', start);
        if (tab == std::string::npos) tab = line.size();
        out.push_back(line.substr(start, tab - start));
        start = tab + 1;
    }
    return out;
}

}  // namespace detail

inline void validate_manifest(const DatasetManifest& m) {
    std::set<std::string> ids;
    for (const ManifestRecord& r : m.records) {
        detail::check_manifest_field(r.id, "id");
        detail::check_manifest_field(r.path, "path");
        detail::check_manifest_field(r.domain, "domain");
        detail::check_manifest_field(r.split, "split");
        detail::check_manifest_field(r.subset, "subset");
        if (r.label != 0 && r.label != 1)
            throw InvalidArgument("manifest: label must be 0 or 1, got " +
                                  std::to_string(r.label) + " for id " + r.id);
        if (!ids.insert(r.id).second)
            throw InvalidArgument("manifest: duplicate id " + r.id);
    }
}

inline void save_manifest(const DatasetManifest& m, const std::filesystem::path& path) {
    validate_manifest(m);
    std::string text = "semanti-manifest\t" + std::to_string(m.version) + '\t' +
                       std::to_string(m.seed) + '\n';
    for (const ManifestRecord& r : m.records) {
        text += r.id;
        text += '\t';
        text += r.path;
        text += '\t';
        text += std::to_string(r.label);
        text += '\t';
        text += r.domain;
        text += '\t';
        text += r.split;
        text += '\t';
        text += r.subset;
        text += '\n';
    }
    write_file(path, std::vector<std::uint8_t>(text.begin(), text.end()));
}

/// Parses a manifest and checks that every referenced image exists relative
/// to the manifest's own directory.
inline DatasetManifest load_manifest(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file(path);
    const std::string text(bytes.begin(), bytes.end());
    DatasetManifest m;
    m.root = path.has_parent_path() ? path.parent_path() : std::filesystem::path(".");

    std::size_t start = 0;
    std::size_t line_no = 0;
    while (start < text.size()) {
        std::size_t eol = text.find('\n', start);
        if (eol == std::string::npos) eol = text.size();
        const std::string line = text.substr(start, eol - start);
        start = eol + 1;
        ++line_no;
        if (line.empty()) continue;
        const std::vector<std::string> f = detail::split_tabs(line);
        if (line_no == 1) {
            if (f.size() != 3 || f[0] != "semanti-manifest")
                throw DecodeError("manifest: bad header line", 0);
            try {
                m.version = static_cast<std::uint32_t>(std::stoul(f[1]));
                m.seed = std::stoull(f[2]);
            } catch (const std::exception&) {
                throw DecodeError("manifest: bad header numbers", 0);
            }
            if (m.version != 1)
                throw DecodeError("manifest: unsupported version " + f[1], 0);
            continue;
        }
        if (f.size() != 6)
            throw DecodeError("manifest: expected 6 tab-separated fields on line " +
                                  std::to_string(line_no),
                              start - line.size() - 1);
        ManifestRecord r;
        r.id = f[0];
        r.path = f[1];
        try {
            r.label = std::stoi(f[2]);
        } catch (const std::exception&) {
            throw DecodeError("manifest: bad label on line " + std::to_string(line_no),
                              start - line.size() - 1);
        }
        r.domain = f[3];
        r.split = f[4];
        r.subset = f[5];
        m.records.push_back(std::move(r));
    }
    if (line_no == 0) throw DecodeError("manifest: empty file", 0);
    validate_manifest(m);
    for (const ManifestRecord& r : m.records)
        if (!std::filesystem::exists(m.root / r.path))
            throw IoError("manifest references a missing file", (m.root / r.path).string());
    return m;
}

/// Unique subset names in first-appearance order.
inline std::vector<std::string> manifest_subsets(const DatasetManifest& m) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const ManifestRecord& r : m.records)
        if (seen.insert(r.subset).second) out.push_back(r.subset);
    return out;
}

/// Decodes one record's image and center-crop-preprocesses it to `side`.
inline TrainSample load_sample(const DatasetManifest& m, const ManifestRecord& r,
                               std::size_t side) {
    const RawImage img = decode_image(read_file(m.root / r.path));
    return TrainSample{preprocess_crop(img, side), r.label};
}

/// All samples of one subset, in manifest order.
inline std::vector<TrainSample> load_split(const DatasetManifest& m, const std::string& subset,
                                           std::size_t side) {
    std::vector<TrainSample> out;
    for (const ManifestRecord& r : m.records)
        if (r.subset == subset) out.push_back(load_sample(m, r, side));
    return out;
}

}  // namespace semanti
