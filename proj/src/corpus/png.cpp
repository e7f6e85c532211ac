#include "segicl/png.hpp"

#include <zlib.h>

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "segicl/errors.hpp"

namespace segicl::png {

namespace {

void put_u32be(std::vector<std::uint8_t>& out, std::uint32_t v) {
    out.push_back(static_cast<std::uint8_t>(v >> 24));
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
    out.push_back(static_cast<std::uint8_t>(v));
}

std::uint32_t get_u32be(const std::uint8_t* p) {
    return (static_cast<std::uint32_t>(p[0]) << 24) |
           (static_cast<std::uint32_t>(p[1]) << 16) |
           (static_cast<std::uint32_t>(p[2]) << 8) | static_cast<std::uint32_t>(p[3]);
}

void append_chunk(std::vector<std::uint8_t>& out, const char type[4],
                  const std::uint8_t* data, std::size_t len) {
    put_u32be(out, static_cast<std::uint32_t>(len));
    const std::size_t type_at = out.size();
    out.insert(out.end(), type, type + 4);
    if (len) out.insert(out.end(), data, data + len);
    const auto crc = crc32(0L, out.data() + type_at, static_cast<uInt>(4 + len));
    put_u32be(out, static_cast<std::uint32_t>(crc));
}

const std::uint8_t kSig[8] = {137, 80, 78, 71, 13, 10, 26, 10};

int paeth(int a, int b, int c) {
    const int p = a + b - c;
    const int pa = std::abs(p - a), pb = std::abs(p - b), pc = std::abs(p - c);
    if (pa <= pb && pa <= pc) return a;
    if (pb <= pc) return b;
    return c;
}

}  // namespace

void write_gray8(const std::string& path, const std::uint8_t* px, int w, int h) {
    if (w <= 0 || h <= 0) throw io_error("png: bad dimensions for " + path);

    std::vector<std::uint8_t> raw(static_cast<std::size_t>(h) * (w + 1));
    for (int y = 0; y < h; ++y) {
        raw[static_cast<std::size_t>(y) * (w + 1)] = 0;  // filter: none
        std::memcpy(raw.data() + static_cast<std::size_t>(y) * (w + 1) + 1,
                    px + static_cast<std::size_t>(y) * w, static_cast<std::size_t>(w));
    }

    uLongf comp_len = compressBound(static_cast<uLong>(raw.size()));
    std::vector<std::uint8_t> comp(comp_len);
    if (compress2(comp.data(), &comp_len, raw.data(), static_cast<uLong>(raw.size()),
                  6) != Z_OK)
        throw io_error("png: deflate failed for " + path);
    comp.resize(comp_len);

    std::vector<std::uint8_t> out(kSig, kSig + 8);
    std::vector<std::uint8_t> ihdr;
    put_u32be(ihdr, static_cast<std::uint32_t>(w));
    put_u32be(ihdr, static_cast<std::uint32_t>(h));
    ihdr.push_back(8);  // bit depth
    ihdr.push_back(0);  // color type: grayscale
    ihdr.push_back(0);  // compression
    ihdr.push_back(0);  // filter method
    ihdr.push_back(0);  // no interlace
    append_chunk(out, "IHDR", ihdr.data(), ihdr.size());
    append_chunk(out, "IDAT", comp.data(), comp.size());
    append_chunk(out, "IEND", nullptr, 0);

    std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("png: cannot open " + path);
    f.write(reinterpret_cast<const char*>(out.data()),
            static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("png: short write to " + path);
}

Image read_gray8(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("png: cannot open " + path);
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    if (bytes.size() < 8 || std::memcmp(bytes.data(), kSig, 8) != 0)
        throw io_error("png: bad signature in " + path);

    int w = 0, h = 0;
    bool have_ihdr = false;
    std::vector<std::uint8_t> idat;
    std::size_t at = 8;
    while (at + 12 <= bytes.size()) {
        const std::uint32_t len = get_u32be(bytes.data() + at);
        if (at + 12 + len > bytes.size())
            throw io_error("png: truncated chunk in " + path);
        const char* type = reinterpret_cast<const char*>(bytes.data() + at + 4);
        const std::uint8_t* data = bytes.data() + at + 8;
        if (std::memcmp(type, "IHDR", 4) == 0) {
            if (len != 13) throw io_error("png: bad IHDR in " + path);
            w = static_cast<int>(get_u32be(data));
            h = static_cast<int>(get_u32be(data + 4));
            if (data[8] != 8 || data[9] != 0 || data[12] != 0)
                throw io_error("png: unsupported format (need gray8) in " + path);
            have_ihdr = true;
        } else if (std::memcmp(type, "IDAT", 4) == 0) {
            idat.insert(idat.end(), data, data + len);
        } else if (std::memcmp(type, "IEND", 4) == 0) {
            break;
        }
        at += 12 + len;
    }
    if (!have_ihdr || w <= 0 || h <= 0 || idat.empty())
        throw io_error("png: missing chunks in " + path);

    const std::size_t stride = static_cast<std::size_t>(w) + 1;
    std::vector<std::uint8_t> raw(stride * static_cast<std::size_t>(h));
    uLongf raw_len = static_cast<uLongf>(raw.size());
    if (uncompress(raw.data(), &raw_len, idat.data(), static_cast<uLong>(idat.size())) !=
            Z_OK ||
        raw_len != raw.size())
        throw io_error("png: inflate failed for " + path);

    Image img;
    img.w = w;
    img.h = h;
    img.px.resize(static_cast<std::size_t>(w) * h);
    for (int y = 0; y < h; ++y) {
        const std::uint8_t filter = raw[static_cast<std::size_t>(y) * stride];
        const std::uint8_t* src = raw.data() + static_cast<std::size_t>(y) * stride + 1;
        std::uint8_t* dst = img.px.data() + static_cast<std::size_t>(y) * w;
        const std::uint8_t* up =
            y > 0 ? img.px.data() + static_cast<std::size_t>(y - 1) * w : nullptr;
        for (int x = 0; x < w; ++x) {
            const int a = x > 0 ? dst[x - 1] : 0;
            const int b = up ? up[x] : 0;
            const int c = (x > 0 && up) ? up[x - 1] : 0;
            int v = src[x];
            switch (filter) {
                case 0: break;
                case 1: v += a; break;
                case 2: v += b; break;
                case 3: v += (a + b) / 2; break;
                case 4: v += paeth(a, b, c); break;
                default: throw io_error("png: bad filter type in " + path);
            }
            dst[x] = static_cast<std::uint8_t>(v & 0xff);
        }
    }
    return img;
}

}  // namespace segicl::png
