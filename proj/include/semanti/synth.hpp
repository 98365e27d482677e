// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0
//
// Synthetic benchmark generator. "Natural" images are smooth procedural
// layouts drawn from per-domain parameter bands; "generated" images are the
// same layouts from narrower bands plus a faint periodic residual artifact.
// The artifact is strictly local (periodic with period q, zero-mean per
// q x q tile), so tile-aligned patch shuffles preserve it while destroying
// the global layout.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "semanti/error.hpp"
#include "semanti/image.hpp"
#include "semanti/manifest.hpp"
#include "semanti/rng.hpp"

namespace semanti {

// ----- Domains ---------------------------------------------------------------

enum class LayoutFamily { stripes, blobs, gradient, rings, macro_waves };

struct DomainSpec {
    std::string id;
    LayoutFamily family = LayoutFamily::stripes;
    double angle_lo = 0.0;  // stripes / gradient orientation band, radians
    double angle_hi = 0.0;
    double wavelength_lo = 40.0;  // stripes / rings / macro waves, pixels
    double wavelength_hi = 56.0;
    std::size_t count_lo = 3;  // blob count band
    std::size_t count_hi = 5;
    std::uint64_t palette_seed = 0;
    double diversity = 1.0;  // scales every band's width around its center
};

/// Width multiplier applied to the generated class's parameter bands; the
/// natural class keeps the full width, giving it the larger raw dispersion.
inline constexpr double kGeneratedDiversityScale = 0.35;

// ----- Artifacts -------------------------------------------------------------

enum class ArtifactKind { checkerboard_residual, block_periodic_noise };

struct ArtifactSpec {
    ArtifactKind kind = ArtifactKind::block_periodic_noise;
    std::size_t period = 4;           // q, pixels
    double amplitude = 4.0 / 255.0;   // residual scale in [0,1] sample units

    void validate() const {
        if (period < 2) throw InvalidArgument("artifact period must be >= 2");
        if (kind == ArtifactKind::checkerboard_residual && period % 4 != 0)
            throw InvalidArgument("checkerboard artifact period must be a multiple of 4");
        if (amplitude < 0.0 || amplitude > 16.0 / 255.0)
            throw InvalidArgument("artifact amplitude must lie in [0, 16/255]");
    }
};

/// One q x q residual tile: zero-mean, unit RMS, tiled periodically across
/// the image. The phase/noise draw is deterministic per image stream.
struct ArtifactTemplate {
    std::size_t period = 0;
    std::vector<float> tile;  // period * period, row-major
};

namespace detail {

/// Symmetric binary wave: cells of q/2 pixels offset so that each aligned
/// length-q window sums to zero against both constant and linear weights.
inline int checker_sign(std::size_t u, std::size_t q) {
    return ((u + q / 4) / (q / 2)) % 2 == 0 ? 1 : -1;
}

}  // namespace detail

inline ArtifactTemplate make_artifact_template(const ArtifactSpec& spec, RandomStream& rs) {
    spec.validate();
    const std::size_t q = spec.period;
    ArtifactTemplate t;
    t.period = q;
    t.tile.assign(q * q, 0.0f);
    if (spec.kind == ArtifactKind::checkerboard_residual) {
        // Phase restricted to half-cell multiples keeps the symmetry that
        // makes the tile orthogonal to constant and linear content.
        const std::size_t px = rs.next_below(2) * (q / 2);
        const std::size_t py = rs.next_below(2) * (q / 2);
        for (std::size_t y = 0; y < q; ++y)
            for (std::size_t x = 0; x < q; ++x)
                t.tile[y * q + x] = static_cast<float>(detail::checker_sign(x + px, q) *
                                                       detail::checker_sign(y + py, q));
        return t;
    }
    // Block-periodic noise: a random tile with the low-order monomials
    // {1, dx, dy, dx*dy, dx^2, dy^2} projected out, so smooth content does
    // not correlate with it, then normalized to unit RMS.
    const double c = (static_cast<double>(q) - 1.0) / 2.0;
    std::vector<std::vector<double>> basis;
    for (int k = 0; k < 6; ++k) {
        std::vector<double> b(q * q);
        for (std::size_t y = 0; y < q; ++y)
            for (std::size_t x = 0; x < q; ++x) {
                const double dx = static_cast<double>(x) - c;
                const double dy = static_cast<double>(y) - c;
                const double vals[6] = {1.0, dx, dy, dx * dy, dx * dx, dy * dy};
                b[y * q + x] = vals[k];
            }
        basis.push_back(std::move(b));
    }
    // Orthonormalize the basis (modified Gram-Schmidt).
    for (std::size_t k = 0; k < basis.size(); ++k) {
        for (std::size_t j = 0; j < k; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < q * q; ++i) dot += basis[k][i] * basis[j][i];
            for (std::size_t i = 0; i < q * q; ++i) basis[k][i] -= dot * basis[j][i];
        }
        double norm = 0.0;
        for (const double v : basis[k]) norm += v * v;
        norm = std::sqrt(norm);
        for (double& v : basis[k]) v /= norm;
    }
    std::vector<double> noise(q * q);
    while (true) {
        for (double& v : noise) v = rs.next_gauss();
        for (const auto& b : basis) {
            double dot = 0.0;
            for (std::size_t i = 0; i < q * q; ++i) dot += noise[i] * b[i];
            for (std::size_t i = 0; i < q * q; ++i) noise[i] -= dot * b[i];
        }
        double norm = 0.0;
        for (const double v : noise) norm += v * v;
        if (norm > 1e-6) {
            const double scale = static_cast<double>(q) / std::sqrt(norm);  // unit RMS
            for (std::size_t i = 0; i < q * q; ++i)
                t.tile[i] = static_cast<float>(noise[i] * scale);
            return t;
        }
    }
}

/// Adds the periodic residual (identical on all channels) and clamps. With
/// amplitude 0 the input is returned unchanged, bit for bit.
inline PixelTensor inject_artifact(const PixelTensor& img, const ArtifactSpec& spec,
                                   RandomStream& rs) {
    spec.validate();
    if (spec.amplitude == 0.0) return img;
    const ArtifactTemplate t = make_artifact_template(spec, rs);
    const std::size_t q = t.period;
    PixelTensor out = img;
    for (std::size_t y = 0; y < img.height; ++y)
        for (std::size_t x = 0; x < img.width; ++x) {
            const float r =
                static_cast<float>(spec.amplitude) * t.tile[(y % q) * q + (x % q)];
            for (std::size_t ch = 0; ch < img.channels; ++ch) {
                float& v = out.at(y, x, ch);
                v = std::clamp(v + r, 0.0f, 1.0f);
            }
        }
    return out;
}

/// Artifact statistic E: mean over full q-aligned tiles of the absolute
/// correlation between the tile's gray values and the residual template.
/// Per-tile values are sorted before summing so that any tile permutation
/// (in particular a q-aligned patch shuffle) yields the identical result.
inline double artifact_statistic(const PixelTensor& img, const ArtifactTemplate& t) {
    const std::size_t q = t.period;
    if (q == 0 || t.tile.size() != q * q)
        throw InvalidArgument("artifact_statistic: malformed template");
    const std::size_t ty = img.height / q;
    const std::size_t tx = img.width / q;
    if (ty == 0 || tx == 0)
        throw InvalidArgument("artifact_statistic: image smaller than the artifact period");
    std::vector<double> corrs;
    corrs.reserve(ty * tx);
    for (std::size_t by = 0; by < ty; ++by)
        for (std::size_t bx = 0; bx < tx; ++bx) {
            double corr = 0.0;
            for (std::size_t y = 0; y < q; ++y)
                for (std::size_t x = 0; x < q; ++x) {
                    const std::size_t iy = by * q + y;
                    const std::size_t ix = bx * q + x;
                    double gray = 0.0;
                    for (std::size_t ch = 0; ch < img.channels; ++ch)
                        gray += static_cast<double>(img.at(iy, ix, ch));
                    gray /= static_cast<double>(img.channels);
                    corr += gray * static_cast<double>(t.tile[y * q + x]);
                }
            corrs.push_back(std::abs(corr / static_cast<double>(q * q)));
        }
    std::sort(corrs.begin(), corrs.end());
    double sum = 0.0;
    for (const double v : corrs) sum += v;
    return sum / static_cast<double>(corrs.size());
}

// ----- Image generation ------------------------------------------------------

namespace detail {

/// Uniform draw from the band's center, with the half-width scaled by the
/// domain's diversity.
inline double draw_band(double lo, double hi, double diversity, RandomStream& rs) {
    const double center = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo) * diversity;
    return center + (2.0 * rs.next_unit() - 1.0) * half;
}

inline std::size_t draw_count(std::size_t lo, std::size_t hi, double diversity,
                              RandomStream& rs) {
    const double v = draw_band(static_cast<double>(lo), static_cast<double>(hi), diversity, rs);
    const double r = std::floor(v + 0.5);
    return static_cast<std::size_t>(
        std::clamp(r, static_cast<double>(lo), static_cast<double>(hi)));
}

}  // namespace detail

/// Procedural image for one domain. The global layout encodes the domain;
/// every surface is smooth (wavelengths of tens of pixels), so clean images
/// carry negligible energy at artifact periods. Values stay within
/// [0.08, 0.92] to keep artifact injection clamp-free.
inline PixelTensor gen_image(const DomainSpec& domain, std::size_t side, RandomStream& rs) {
    if (side < 16) throw InvalidArgument("gen_image: side must be >= 16");
    const double div = domain.diversity;

    // Palette anchors: fixed per domain, jittered slightly per image.
    RandomStream ps = derive_stream(domain.palette_seed, "palette");
    double lo_rgb[3], hi_rgb[3];
    for (int ch = 0; ch < 3; ++ch) {
        lo_rgb[ch] = 0.10 + 0.35 * ps.next_unit();
        hi_rgb[ch] = 0.55 + 0.35 * ps.next_unit();
    }
    for (int ch = 0; ch < 3; ++ch) {
        lo_rgb[ch] += (2.0 * rs.next_unit() - 1.0) * 0.02 * div;
        hi_rgb[ch] += (2.0 * rs.next_unit() - 1.0) * 0.02 * div;
    }

    PixelTensor out(side, side);
    const double s = static_cast<double>(side);
    const auto fill = [&](auto&& field) {
        for (std::size_t y = 0; y < side; ++y)
            for (std::size_t x = 0; x < side; ++x) {
                const double v =
                    std::clamp(field(static_cast<double>(x), static_cast<double>(y)), 0.0, 1.0);
                for (std::size_t ch = 0; ch < 3; ++ch)
                    out.at(y, x, ch) =
                        static_cast<float>(lo_rgb[ch] + (hi_rgb[ch] - lo_rgb[ch]) * v);
            }
    };

    switch (domain.family) {
        case LayoutFamily::stripes: {
            const double th = detail::draw_band(domain.angle_lo, domain.angle_hi, div, rs);
            const double wl =
                detail::draw_band(domain.wavelength_lo, domain.wavelength_hi, div, rs);
            const double phase = rs.next_unit() * 6.283185307179586;
            const double kx = std::cos(th) * 6.283185307179586 / wl;
            const double ky = std::sin(th) * 6.283185307179586 / wl;
            fill([&](double x, double y) {
                return 0.5 + 0.5 * std::sin(kx * x + ky * y + phase);
            });
            break;
        }
        case LayoutFamily::blobs: {
            const std::size_t k = detail::draw_count(domain.count_lo, domain.count_hi, div, rs);
            std::vector<double> cx(k), cy(k), sig(k);
            for (std::size_t i = 0; i < k; ++i) {
                cx[i] = s * (0.15 + 0.70 * rs.next_unit());
                cy[i] = s * (0.15 + 0.70 * rs.next_unit());
                sig[i] = s * detail::draw_band(0.14, 0.22, div, rs);
            }
            fill([&](double x, double y) {
                double keep = 1.0;
                for (std::size_t i = 0; i < k; ++i) {
                    const double dx = x - cx[i], dy = y - cy[i];
                    keep *= 1.0 - 0.8 * std::exp(-(dx * dx + dy * dy) / (2.0 * sig[i] * sig[i]));
                }
                return 1.0 - keep;
            });
            break;
        }
        case LayoutFamily::gradient: {
            const double th = detail::draw_band(domain.angle_lo, domain.angle_hi, div, rs);
            const double gx = std::cos(th), gy = std::sin(th);
            // Projection range over the square, for an exact [0,1] ramp.
            const double p00 = 0.0, p10 = gx * (s - 1), p01 = gy * (s - 1),
                         p11 = (gx + gy) * (s - 1);
            const double pmin = std::min({p00, p10, p01, p11});
            const double pmax = std::max({p00, p10, p01, p11});
            fill([&](double x, double y) {
                return (gx * x + gy * y - pmin) / (pmax - pmin);
            });
            break;
        }
        case LayoutFamily::rings: {
            const double cx = s * (0.30 + 0.40 * rs.next_unit());
            const double cy = s * (0.30 + 0.40 * rs.next_unit());
            const double wl =
                detail::draw_band(domain.wavelength_lo, domain.wavelength_hi, div, rs);
            const double phase = rs.next_unit() * 6.283185307179586;
            fill([&](double x, double y) {
                const double r = std::hypot(x - cx, y - cy);
                return 0.5 + 0.5 * std::sin(6.283185307179586 * r / wl + phase);
            });
            break;
        }
        case LayoutFamily::macro_waves: {
            const double w1 =
                detail::draw_band(domain.wavelength_lo, domain.wavelength_hi, div, rs);
            const double w2 =
                detail::draw_band(domain.wavelength_lo, domain.wavelength_hi, div, rs);
            const double p1 = rs.next_unit() * 6.283185307179586;
            const double p2 = rs.next_unit() * 6.283185307179586;
            fill([&](double x, double y) {
                return 0.5 + 0.5 * std::sin(6.283185307179586 * x / w1 + p1) *
                                 std::sin(6.283185307179586 * y / w2 + p2);
            });
            break;
        }
    }
    return out;
}

// ----- Default benchmark domains ---------------------------------------------

inline std::vector<DomainSpec> default_train_domains() {
    std::vector<DomainSpec> d(4);
    d[0].id = "stripes-h";
    d[0].family = LayoutFamily::stripes;
    d[0].angle_lo = -0.15;
    d[0].angle_hi = 0.15;
    d[0].palette_seed = 101;
    d[1].id = "stripes-d";
    d[1].family = LayoutFamily::stripes;
    d[1].angle_lo = 0.63;
    d[1].angle_hi = 0.93;
    d[1].palette_seed = 202;
    d[2].id = "blobs";
    d[2].family = LayoutFamily::blobs;
    d[2].palette_seed = 303;
    d[3].id = "rings";
    d[3].family = LayoutFamily::rings;
    d[3].palette_seed = 404;
    return d;
}

inline std::vector<DomainSpec> default_ood_domains() {
    std::vector<DomainSpec> d(3);
    d[0].id = "stripes-v";
    d[0].family = LayoutFamily::stripes;
    d[0].angle_lo = 1.4208;
    d[0].angle_hi = 1.7208;
    d[0].palette_seed = 505;
    d[1].id = "gradient";
    d[1].family = LayoutFamily::gradient;
    d[1].angle_lo = 0.0;
    d[1].angle_hi = 6.283185307179586;
    d[1].palette_seed = 606;
    d[2].id = "macro";
    d[2].family = LayoutFamily::macro_waves;
    d[2].wavelength_lo = 44.0;
    d[2].wavelength_hi = 60.0;
    d[2].palette_seed = 707;
    return d;
}

// ----- Dataset build ---------------------------------------------------------

/// Generates the benchmark tree under out_dir and writes manifest.txt.
/// Subsets: "train" (train domains, train artifact), "id-<domain>" per train
/// domain (held-out streams, same artifact), "ood-<domain>" per OOD domain
/// (OOD artifact variant). Natural/generated balanced everywhere.
inline DatasetManifest build_dataset(const std::vector<DomainSpec>& domains_train,
                                     const std::vector<DomainSpec>& domains_ood,
                                     std::size_t n_per_cell,
                                     const ArtifactSpec& artifact_train,
                                     const ArtifactSpec& artifact_ood, std::uint64_t seed,
                                     const std::filesystem::path& out_dir,
                                     std::size_t image_side = 64) {
    if (domains_train.empty()) throw InvalidArgument("build_dataset: no train domains");
    if (n_per_cell < 1) throw InvalidArgument("build_dataset: n_per_cell must be >= 1");
    artifact_train.validate();
    artifact_ood.validate();
    std::set<std::string> train_ids;
    for (const DomainSpec& d : domains_train)
        if (!train_ids.insert(d.id).second)
            throw InvalidArgument("build_dataset: duplicate train domain " + d.id);
    for (const DomainSpec& d : domains_ood)
        if (train_ids.count(d.id))
            throw InvalidArgument("build_dataset: domain " + d.id +
                                  " appears in both train and OOD lists");

    DatasetManifest m;
    m.seed = seed;
    m.root = out_dir;

    char index_buf[16];
    const auto emit_cell = [&](const std::string& subset, const std::string& split,
                               const DomainSpec& domain, std::size_t domain_ord,
                               const char* purpose, const ArtifactSpec& artifact) {
        std::filesystem::create_directories(out_dir / subset);
        for (std::size_t i = 0; i < n_per_cell; ++i) {
            for (const int label : {0, 1}) {
                std::snprintf(index_buf, sizeof index_buf, "%04zu", i);
                ManifestRecord r;
                r.id = subset + '-' + domain.id + (label == 0 ? "-nat-" : "-gen-") + index_buf;
                r.path = subset + '/' + r.id + ".ppm";
                r.label = label;
                r.domain = domain.id;
                r.split = split;
                r.subset = subset;

                const std::string cls = label == 0 ? "nat" : "gen";
                RandomStream img_rs =
                    derive_stream(seed, std::string(purpose) + '-' + cls, domain_ord, i);
                PixelTensor px;
                if (label == 0) {
                    px = gen_image(domain, image_side, img_rs);
                } else {
                    DomainSpec narrowed = domain;
                    narrowed.diversity *= kGeneratedDiversityScale;
                    px = gen_image(narrowed, image_side, img_rs);
                    RandomStream art_rs =
                        derive_stream(seed, std::string(purpose) + "-art", domain_ord, i);
                    px = inject_artifact(px, artifact, art_rs);
                }
                write_file(out_dir / r.path, encode_ppm(quantize(px)));
                m.records.push_back(std::move(r));
            }
        }
    };

    for (std::size_t d = 0; d < domains_train.size(); ++d)
        emit_cell("train", "train", domains_train[d], d, "train", artifact_train);
    for (std::size_t d = 0; d < domains_train.size(); ++d)
        emit_cell("id-" + domains_train[d].id, "test", domains_train[d], d, "id",
                  artifact_train);
    for (std::size_t d = 0; d < domains_ood.size(); ++d)
        emit_cell("ood-" + domains_ood[d].id, "test", domains_ood[d], d, "ood", artifact_ood);

    save_manifest(m, out_dir / "manifest.txt");
    return m;
}

}  // namespace semanti
