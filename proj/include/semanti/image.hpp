// Copyright 2026 The semanti Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <zlib.h>

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "semanti/error.hpp"

namespace semanti {

/// Decoded 8-bit RGB image, row-major, channel-interleaved.
struct RawImage {
    std::size_t height = 0;
    std::size_t width = 0;
    static constexpr std::size_t channels = 3;
    std::vector<std::uint8_t> data;

    std::uint8_t at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * channels + c];
    }
};

/// Floating image with samples in [0,1], row-major, channel-interleaved.
struct PixelTensor {
    std::size_t height = 0;
    std::size_t width = 0;
    static constexpr std::size_t channels = 3;
    std::vector<float> data;

    PixelTensor() = default;
    PixelTensor(std::size_t h, std::size_t w) : height(h), width(w), data(h * w * channels, 0.0f) {}

    float& at(std::size_t y, std::size_t x, std::size_t c) {
        return data[(y * width + x) * channels + c];
    }
    float at(std::size_t y, std::size_t x, std::size_t c) const {
        return data[(y * width + x) * channels + c];
    }
};

namespace detail {

class ByteReader {
public:
    explicit ByteReader(const std::vector<std::uint8_t>& bytes) : bytes_(bytes) {}

    std::size_t pos() const { return pos_; }
    std::size_t remaining() const { return bytes_.size() - pos_; }

    std::uint8_t u8() {
        if (pos_ >= bytes_.size()) throw DecodeError("unexpected end of stream", pos_);
        return bytes_[pos_++];
    }

    std::uint32_t u32_be() {
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v = (v << 8) | u8();
        return v;
    }

    void skip(std::size_t n) {
        if (remaining() < n) throw DecodeError("unexpected end of stream", bytes_.size());
        pos_ += n;
    }

    const std::uint8_t* cursor() const { return bytes_.data() + pos_; }

private:
    const std::vector<std::uint8_t>& bytes_;
    std::size_t pos_ = 0;
};

// PPM "whitespace then token" scanning; '#' starts a comment to end of line.
inline std::string ppm_token(ByteReader& r) {
    for (;;) {
        if (r.remaining() == 0) throw DecodeError("truncated PPM header", r.pos());
        const std::uint8_t c = *r.cursor();
        if (c == '#') {
            while (r.remaining() > 0 && r.u8() != '\n') {
            }
        } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
            r.skip(1);
        } else {
            break;
        }
    }
    std::string tok;
    while (r.remaining() > 0) {
        const std::uint8_t c = *r.cursor();
        if (c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '#') break;
        tok.push_back(static_cast<char>(c));
        r.skip(1);
    }
    return tok;
}

inline std::size_t ppm_number(ByteReader& r, const char* what) {
    const std::size_t at = r.pos();
    const std::string tok = ppm_token(r);
    if (tok.empty()) throw DecodeError(std::string("missing PPM ") + what, at);
    std::size_t value = 0;
    for (const char c : tok) {
        if (c < '0' || c > '9') throw DecodeError(std::string("malformed PPM ") + what, at);
        value = value * 10 + static_cast<std::size_t>(c - '0');
    }
    return value;
}

inline RawImage decode_ppm(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.skip(2);  // magic, already checked
    RawImage img;
    img.width = ppm_number(r, "width");
    img.height = ppm_number(r, "height");
    const std::size_t maxval_at = r.pos();
    const std::size_t maxval = ppm_number(r, "maxval");
    if (maxval != 255) throw DecodeError("PPM maxval must be 255", maxval_at);
    if (img.width == 0 || img.height == 0)
        throw DecodeError("PPM dimensions must be positive", 2);
    // Exactly one whitespace byte separates the header from the raster.
    const std::uint8_t sep = r.u8();
    if (sep != ' ' && sep != '\t' && sep != '\r' && sep != '\n')
        throw DecodeError("expected whitespace before PPM raster", r.pos() - 1);
    const std::size_t need = img.width * img.height * RawImage::channels;
    if (r.remaining() < need)
        throw DecodeError("PPM raster truncated (" + std::to_string(r.remaining()) + " of " +
                              std::to_string(need) + " bytes)",
                          r.pos() + r.remaining());
    img.data.assign(r.cursor(), r.cursor() + need);
    return img;
}

inline std::vector<std::uint8_t> zlib_inflate(const std::uint8_t* src, std::size_t src_len,
                                              std::size_t expected, std::size_t stream_offset) {
    std::vector<std::uint8_t> out(expected);
    uLongf dest_len = static_cast<uLongf>(expected);
    const int rc = uncompress(out.data(), &dest_len, src, static_cast<uLong>(src_len));
    if (rc != Z_OK || dest_len != expected)
        throw DecodeError("PNG inflate failed", stream_offset);
    return out;
}

inline std::uint8_t paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return static_cast<std::uint8_t>(a);
    if (pb <= pc) return static_cast<std::uint8_t>(b);
    return static_cast<std::uint8_t>(c);
}

// 8-bit RGB (color type 2), non-interlaced PNG only.
inline RawImage decode_png(const std::vector<std::uint8_t>& bytes) {
    ByteReader r(bytes);
    r.skip(8);  // signature, already checked
    RawImage img;
    bool have_header = false;
    std::vector<std::uint8_t> idat;
    for (;;) {
        const std::size_t chunk_at = r.pos();
        const std::uint32_t len = r.u32_be();
        if (r.remaining() < 4u + len + 4u)
            throw DecodeError("PNG chunk truncated", chunk_at);
        char type[5] = {};
        for (int i = 0; i < 4; ++i) type[i] = static_cast<char>(r.u8());
        if (std::strcmp(type, "IHDR") == 0) {
            if (len != 13) throw DecodeError("bad IHDR length", chunk_at);
            img.width = r.u32_be();
            img.height = r.u32_be();
            const std::uint8_t depth = r.u8();
            const std::uint8_t color = r.u8();
            r.skip(2);  // compression, filter method
            const std::uint8_t interlace = r.u8();
            if (depth != 8 || color != 2)
                throw DecodeError("only 8-bit RGB PNG supported", chunk_at);
            if (interlace != 0) throw DecodeError("interlaced PNG not supported", chunk_at);
            if (img.width == 0 || img.height == 0)
                throw DecodeError("PNG dimensions must be positive", chunk_at);
            have_header = true;
        } else if (std::strcmp(type, "IDAT") == 0) {
            idat.insert(idat.end(), r.cursor(), r.cursor() + len);
            r.skip(len);
        } else if (std::strcmp(type, "IEND") == 0) {
            break;
        } else {
            r.skip(len);
        }
        r.skip(4);  // CRC (not verified)
    }
    if (!have_header) throw DecodeError("PNG missing IHDR", 8);
    if (idat.empty()) throw DecodeError("PNG missing IDAT", 8);

    const std::size_t stride = img.width * 3;
    const std::size_t raw_len = img.height * (stride + 1);
    const std::vector<std::uint8_t> raw = zlib_inflate(idat.data(), idat.size(), raw_len, 8);

    img.data.resize(img.height * stride);
    std::vector<std::uint8_t> prev(stride, 0);
    for (std::size_t y = 0; y < img.height; ++y) {
        const std::uint8_t* row = raw.data() + y * (stride + 1);
        const std::uint8_t filter = row[0];
        std::uint8_t* out = img.data.data() + y * stride;
        for (std::size_t i = 0; i < stride; ++i) {
            const int x = row[1 + i];
            const int a = i >= 3 ? out[i - 3] : 0;
            const int b = prev[i];
            const int c = i >= 3 ? prev[i - 3] : 0;
            switch (filter) {
                case 0: out[i] = static_cast<std::uint8_t>(x); break;
                case 1: out[i] = static_cast<std::uint8_t>(x + a); break;
                case 2: out[i] = static_cast<std::uint8_t>(x + b); break;
                case 3: out[i] = static_cast<std::uint8_t>(x + (a + b) / 2); break;
                case 4: out[i] = static_cast<std::uint8_t>(x + paeth(a, b, c)); break;
                default: throw DecodeError("unknown PNG filter", 8);
            }
        }
        std::memcpy(prev.data(), out, stride);
    }
    return img;
}

}  // namespace detail

/// Decodes PPM (P6, maxval 255) or PNG (8-bit RGB) bytes, pixel-exact.
inline RawImage decode_image(const std::vector<std::uint8_t>& bytes) {
    static constexpr std::uint8_t png_sig[8] = {137, 'P', 'N', 'G', '\r', '\n', 26, '\n'};
    if (bytes.size() >= 2 && bytes[0] == 'P' && bytes[1] == '6') return detail::decode_ppm(bytes);
    if (bytes.size() >= 8 && std::memcmp(bytes.data(), png_sig, 8) == 0)
        return detail::decode_png(bytes);
    throw DecodeError("unsupported image format (expected PPM P6 or PNG)", 0);
}

/// Serializes an image as binary PPM (P6, maxval 255).
inline std::vector<std::uint8_t> encode_ppm(const RawImage& img) {
    const std::string header =
        "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
    std::vector<std::uint8_t> out(header.begin(), header.end());
    out.insert(out.end(), img.data.begin(), img.data.end());
    return out;
}

/// Quantizes a [0,1] tensor to 8-bit with round-to-nearest.
inline RawImage quantize(const PixelTensor& t) {
    RawImage img;
    img.height = t.height;
    img.width = t.width;
    img.data.resize(t.data.size());
    for (std::size_t i = 0; i < t.data.size(); ++i) {
        float v = t.data[i];
        if (v < 0.0f) v = 0.0f;
        if (v > 1.0f) v = 1.0f;
        img.data[i] = static_cast<std::uint8_t>(v * 255.0f + 0.5f);
    }
    return img;
}

inline std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open file", path.string());
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("read failed", path.string());
    return bytes;
}

inline void write_file(const std::filesystem::path& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open file for writing", path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed", path.string());
}

}  // namespace semanti
