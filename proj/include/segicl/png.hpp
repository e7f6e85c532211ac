#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace segicl::png {

struct Image {
    int w = 0;
    int h = 0;
    std::vector<std::uint8_t> px;  // row-major, one byte per pixel
};

// Writes an 8-bit grayscale PNG (color type 0, filter 0 rows, fixed zlib
// level), so identical pixels always produce identical bytes.
void write_gray8(const std::string& path, const std::uint8_t* px, int w, int h);

// Reads an 8-bit grayscale PNG; handles filter types 0-4. Anything else
// (color, palette, 16-bit, interlace) raises io_error naming the path.
Image read_gray8(const std::string& path);

}  // namespace segicl::png
