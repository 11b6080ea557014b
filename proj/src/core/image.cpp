#include "splicedet/core/image.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "splicedet/core/error.hpp"

namespace splicedet::core {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open file: " + path);
    return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(f)),
                                     std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw DataError("cannot write file: " + path);
    f.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
    if (!f) throw DataError("short write: " + path);
}

std::uint32_t be32(const std::uint8_t* p) {
    return (std::uint32_t(p[0]) << 24) | (std::uint32_t(p[1]) << 16) | (std::uint32_t(p[2]) << 8) |
           std::uint32_t(p[3]);
}

void push_be32(std::vector<std::uint8_t>& v, std::uint32_t x) {
    v.push_back(std::uint8_t(x >> 24));
    v.push_back(std::uint8_t(x >> 16));
    v.push_back(std::uint8_t(x >> 8));
    v.push_back(std::uint8_t(x));
}

const std::uint8_t kPngSig[8] = {0x89, 'P', 'N', 'G', '\r', '\n', 0x1a, '\n'};

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::vector<std::uint8_t>& payload) {
    push_be32(out, static_cast<std::uint32_t>(payload.size()));
    const size_t start = out.size();
    out.insert(out.end(), type, type + 4);
    out.insert(out.end(), payload.begin(), payload.end());
    const auto crc = crc32(0L, out.data() + start, static_cast<uInt>(out.size() - start));
    push_be32(out, static_cast<std::uint32_t>(crc));
}

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_png(const std::string& path, const ImageU8& img) {
    check(img.c == 1 || img.c == 3, "write_png: channels must be 1 or 3");
    check(img.h > 0 && img.w > 0, "write_png: empty image");
    const int bpp = img.c;
    const size_t stride = static_cast<size_t>(img.w) * bpp;
    std::vector<std::uint8_t> raw;
    raw.reserve((stride + 1) * img.h);
    for (int y = 0; y < img.h; ++y) {
        raw.push_back(0);  // filter: none
        raw.insert(raw.end(), img.px.begin() + static_cast<std::ptrdiff_t>(y * stride),
                   img.px.begin() + static_cast<std::ptrdiff_t>((y + 1) * stride));
    }
    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> compressed(bound);
    if (compress2(compressed.data(), &bound, raw.data(), static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw Error("write_png: deflate failed");
    compressed.resize(bound);

    std::vector<std::uint8_t> out(kPngSig, kPngSig + 8);
    std::vector<std::uint8_t> ihdr;
    push_be32(ihdr, static_cast<std::uint32_t>(img.w));
    push_be32(ihdr, static_cast<std::uint32_t>(img.h));
    ihdr.push_back(8);                                // bit depth
    ihdr.push_back(img.c == 1 ? 0 : 2);               // color type
    ihdr.push_back(0); ihdr.push_back(0); ihdr.push_back(0);
    append_chunk(out, "IHDR", ihdr);
    append_chunk(out, "IDAT", compressed);
    append_chunk(out, "IEND", {});
    write_file(path, out);
}

ImageU8 read_png(const std::string& path) {
    const auto data = read_file(path);
    if (data.size() < 8 || std::memcmp(data.data(), kPngSig, 8) != 0)
        throw DataError("read_png: not a PNG file: " + path);
    size_t pos = 8;
    int w = 0, h = 0, bit_depth = 0, color_type = 0;
    std::vector<std::uint8_t> idat;
    while (pos + 8 <= data.size()) {
        const std::uint32_t len = be32(&data[pos]);
        if (pos + 12 + len > data.size()) throw DataError("read_png: truncated chunk: " + path);
        const char* type = reinterpret_cast<const char*>(&data[pos + 4]);
        const std::uint8_t* payload = &data[pos + 8];
        if (std::memcmp(type, "IHDR", 4) == 0) {
            w = static_cast<int>(be32(payload));
            h = static_cast<int>(be32(payload + 4));
            bit_depth = payload[8];
            color_type = payload[9];
            if (payload[12] != 0) throw DataError("read_png: interlaced PNG unsupported: " + path);
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), payload, payload + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        pos += 12 + len;
    }
    if (w <= 0 || h <= 0) throw DataError("read_png: missing IHDR: " + path);
    if (bit_depth != 8) throw DataError("read_png: only 8-bit PNGs supported: " + path);
    int src_ch = 0;
    switch (color_type) {
        case 0: src_ch = 1; break;
        case 2: src_ch = 3; break;
        case 4: src_ch = 2; break;
        case 6: src_ch = 4; break;
        default: throw DataError("read_png: palette PNG unsupported: " + path);
    }
    const size_t stride = static_cast<size_t>(w) * src_ch;
    std::vector<std::uint8_t> raw((stride + 1) * h);
    uLongf raw_len = static_cast<uLongf>(raw.size());
    const int zrc = uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size()));
    if (zrc != Z_OK || raw_len != raw.size())
        throw DataError("read_png: inflate failed: " + path);

    // Undo per-row filters in place into the output buffer.
    std::vector<std::uint8_t> pixels(stride * h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[y * (stride + 1)];
        const std::uint8_t* src = &raw[y * (stride + 1) + 1];
        std::uint8_t* dst = &pixels[y * stride];
        const std::uint8_t* up = y > 0 ? &pixels[(y - 1) * stride] : nullptr;
        for (size_t i = 0; i < stride; ++i) {
            const int a = i >= static_cast<size_t>(src_ch) ? dst[i - src_ch] : 0;
            const int b = up ? up[i] : 0;
            const int cc = (up && i >= static_cast<size_t>(src_ch)) ? up[i - src_ch] : 0;
            int v = src[i];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, cc); break;
                default: throw DataError("read_png: bad filter byte: " + path);
            }
            dst[i] = static_cast<std::uint8_t>(v & 0xff);
        }
    }

    const int out_ch = (src_ch == 1 || src_ch == 2) ? 1 : 3;
    ImageU8 img(h, w, out_ch);
    for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x)
            for (int ch = 0; ch < out_ch; ++ch)
                img.at(y, x, ch) = pixels[(static_cast<size_t>(y) * w + x) * src_ch + ch];
    return img;
}

MaskU8 read_mask_png(const std::string& path) {
    const ImageU8 img = read_png(path);
    MaskU8 m(img.h, img.w);
    for (int y = 0; y < img.h; ++y)
        for (int x = 0; x < img.w; ++x) m.at(y, x) = img.at(y, x, 0) >= 128 ? 1 : 0;
    return m;
}

void write_mask_png(const std::string& path, const MaskU8& mask) {
    ImageU8 img(mask.h, mask.w, 1);
    for (size_t i = 0; i < mask.px.size(); ++i) img.px[i] = mask.px[i] ? 255 : 0;
    write_png(path, img);
}

void write_pnm(const std::string& path, const ImageU8& img) {
    check(img.c == 1 || img.c == 3, "write_pnm: channels must be 1 or 3");
    std::vector<std::uint8_t> out;
    const std::string header = (img.c == 3 ? std::string("P6\n") : std::string("P5\n")) +
                               std::to_string(img.w) + " " + std::to_string(img.h) + "\n255\n";
    out.insert(out.end(), header.begin(), header.end());
    out.insert(out.end(), img.px.begin(), img.px.end());
    write_file(path, out);
}

ImageU8 read_pnm(const std::string& path) {
    const auto data = read_file(path);
    if (data.size() < 2 || data[0] != 'P' || (data[1] != '5' && data[1] != '6'))
        throw DataError("read_pnm: not a binary PPM/PGM: " + path);
    const int channels = data[1] == '6' ? 3 : 1;
    size_t pos = 2;
    auto next_int = [&]() {
        while (pos < data.size()) {
            if (std::isspace(data[pos])) { ++pos; continue; }
            if (data[pos] == '#') { while (pos < data.size() && data[pos] != '\n') ++pos; continue; }
            break;
        }
        int v = 0;
        bool any = false;
        while (pos < data.size() && std::isdigit(data[pos])) {
            v = v * 10 + (data[pos] - '0');
            ++pos;
            any = true;
        }
        if (!any) throw DataError("read_pnm: malformed header: " + path);
        return v;
    };
    const int w = next_int(), h = next_int(), maxval = next_int();
    if (maxval != 255) throw DataError("read_pnm: only maxval 255 supported: " + path);
    ++pos;  // single whitespace after maxval
    const size_t need = static_cast<size_t>(w) * h * channels;
    if (data.size() - pos < need) throw DataError("read_pnm: truncated pixel data: " + path);
    ImageU8 img(h, w, channels);
    std::copy(data.begin() + static_cast<std::ptrdiff_t>(pos),
              data.begin() + static_cast<std::ptrdiff_t>(pos + need), img.px.begin());
    return img;
}

ImageU8 read_image(const std::string& path) {
    auto ends_with = [&](const char* suf) {
        const std::string s(suf);
        return path.size() >= s.size() &&
               std::equal(s.rbegin(), s.rend(), path.rbegin(),
                          [](char a, char b) { return std::tolower(a) == std::tolower(b); });
    };
    if (ends_with(".png")) return read_png(path);
    if (ends_with(".ppm") || ends_with(".pgm")) return read_pnm(path);
    if (ends_with(".jpg") || ends_with(".jpeg"))
        throw DataError("read_image: JPEG pixel decoding is not supported; convert to PNG: " + path);
    throw DataError("read_image: unsupported format: " + path);
}

bool read_image_size(const std::string& path, int& h, int& w) {
    std::ifstream f(path, std::ios::binary);
    if (!f) return false;
    std::uint8_t buf[32];
    f.read(reinterpret_cast<char*>(buf), 32);
    const auto got = static_cast<size_t>(f.gcount());
    if (got >= 24 && std::memcmp(buf, kPngSig, 8) == 0) {
        w = static_cast<int>(be32(buf + 16));
        h = static_cast<int>(be32(buf + 20));
        return true;
    }
    if (got >= 2 && buf[0] == 'P' && (buf[1] == '5' || buf[1] == '6')) {
        try {
            const ImageU8 img = read_pnm(path);
            h = img.h;
            w = img.w;
            return true;
        } catch (const Error&) {
            return false;
        }
    }
    if (got >= 2 && buf[0] == 0xFF && buf[1] == 0xD8) {
        // JPEG: scan for a start-of-frame marker carrying the dimensions.
        f.clear();
        f.seekg(2);
        while (f) {
            int m0 = f.get(), m1 = f.get();
            if (m0 != 0xFF || m1 == EOF) return false;
            while (m1 == 0xFF) m1 = f.get();
            if (m1 >= 0xD0 && m1 <= 0xD9) continue;  // standalone markers
            int l0 = f.get(), l1 = f.get();
            if (l1 == EOF) return false;
            const int seg_len = (l0 << 8) | l1;
            const bool is_sof = (m1 >= 0xC0 && m1 <= 0xCF && m1 != 0xC4 && m1 != 0xC8 && m1 != 0xCC);
            if (is_sof) {
                f.get();  // precision
                int h0 = f.get(), h1 = f.get(), w0 = f.get(), w1 = f.get();
                if (w1 == EOF) return false;
                h = (h0 << 8) | h1;
                w = (w0 << 8) | w1;
                return h > 0 && w > 0;
            }
            f.seekg(seg_len - 2, std::ios::cur);
        }
        return false;
    }
    return false;
}

Tensor to_chw_float(const ImageU8& img) {
    Tensor t({img.c, img.h, img.w});
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x)
                t.at3(ch, y, x) = static_cast<float>(img.at(y, x, ch)) / 255.0f;
    return t;
}

ImageU8 to_image_u8(const Tensor& chw) {
    check(chw.ndim() == 3, "to_image_u8: expected [C,H,W]");
    ImageU8 img(chw.dim(1), chw.dim(2), chw.dim(0));
    for (int ch = 0; ch < img.c; ++ch)
        for (int y = 0; y < img.h; ++y)
            for (int x = 0; x < img.w; ++x) {
                const float v = std::clamp(chw.at3(ch, y, x), 0.0f, 1.0f);
                img.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
    return img;
}

ImageU8 resize_bilinear(const ImageU8& img, int out_h, int out_w) {
    check(!img.empty(), "resize_bilinear: empty image");
    check(out_h >= 1 && out_w >= 1, "resize_bilinear: bad target size");
    ImageU8 out(out_h, out_w, img.c);
    const double sy = static_cast<double>(img.h) / out_h;
    const double sx = static_cast<double>(img.w) / out_w;
    for (int y = 0; y < out_h; ++y) {
        const double fy = (y + 0.5) * sy - 0.5;
        const int y0 = std::clamp(static_cast<int>(std::floor(fy)), 0, img.h - 1);
        const int y1 = std::min(y0 + 1, img.h - 1);
        const double wy = std::clamp(fy - y0, 0.0, 1.0);
        for (int x = 0; x < out_w; ++x) {
            const double fx = (x + 0.5) * sx - 0.5;
            const int x0 = std::clamp(static_cast<int>(std::floor(fx)), 0, img.w - 1);
            const int x1 = std::min(x0 + 1, img.w - 1);
            const double wx = std::clamp(fx - x0, 0.0, 1.0);
            for (int ch = 0; ch < img.c; ++ch) {
                const double v = (1 - wy) * ((1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch)) +
                                 wy * ((1 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch));
                out.at(y, x, ch) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
            }
        }
    }
    return out;
}

MaskU8 resize_nearest(const MaskU8& mask, int out_h, int out_w) {
    check(!mask.empty(), "resize_nearest: empty mask");
    MaskU8 out(out_h, out_w);
    for (int y = 0; y < out_h; ++y) {
        const int sy = std::min(static_cast<int>((y + 0.5) * mask.h / out_h), mask.h - 1);
        for (int x = 0; x < out_w; ++x) {
            const int sx = std::min(static_cast<int>((x + 0.5) * mask.w / out_w), mask.w - 1);
            out.at(y, x) = mask.at(sy, sx);
        }
    }
    return out;
}

}  // namespace splicedet::core
