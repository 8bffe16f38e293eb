#include "hansnet/png.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <memory>

#include "hansnet/errors.hpp"

namespace hansnet {

void write_png_gray(const std::filesystem::path& path, std::size_t h, std::size_t w,
                    const std::vector<std::uint8_t>& pixels) {
    if (pixels.size() != h * w || h == 0 || w == 0) throw ContractError("PNG pixel buffer does not match its size");
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.string().c_str(), "wb"), &std::fclose);
    if (!fp) throw IoError("cannot write " + path.string());
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("libpng initialisation failed");
    png_infop info = png_create_info_struct(png);
    if (!info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw IoError("PNG encoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(w), static_cast<png_uint_32>(h), 8, PNG_COLOR_TYPE_GRAY,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (std::size_t y = 0; y < h; ++y) png_write_row(png, const_cast<png_bytep>(pixels.data() + y * w));
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

std::vector<std::uint8_t> to_gray8(const std::vector<double>& values, double lo, double hi) {
    std::vector<std::uint8_t> out(values.size());
    const double span = hi > lo ? hi - lo : 1.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
        const double t = std::clamp((values[i] - lo) / span, 0.0, 1.0);
        out[i] = static_cast<std::uint8_t>(std::lround(t * 255.0));
    }
    return out;
}

}  // namespace hansnet
