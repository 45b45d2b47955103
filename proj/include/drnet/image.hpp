#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "drnet/error.hpp"

namespace drnet {

// Single-channel real image, row-major.
struct Image {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<double> pixels;

    Image() = default;
    Image(std::size_t h, std::size_t w, double fill = 0.0) : height(h), width(w), pixels(h * w, fill) {}

    double& at(std::size_t y, std::size_t x) { return pixels[y * width + x]; }
    double at(std::size_t y, std::size_t x) const { return pixels[y * width + x]; }
    std::size_t size() const { return pixels.size(); }

    friend bool operator==(const Image&, const Image&) = default;
};

// 1 = changed, 0 = unchanged.
struct ChangeMask {
    std::size_t height = 0;
    std::size_t width = 0;
    std::vector<std::uint8_t> values;

    ChangeMask() = default;
    ChangeMask(std::size_t h, std::size_t w) : height(h), width(w), values(h * w, 0) {}

    std::uint8_t& at(std::size_t y, std::size_t x) { return values[y * width + x]; }
    std::uint8_t at(std::size_t y, std::size_t x) const { return values[y * width + x]; }
    std::size_t size() const { return values.size(); }
    std::size_t count_changed() const;

    friend bool operator==(const ChangeMask&, const ChangeMask&) = default;
};

inline void require_same_extents(std::size_t h1, std::size_t w1, std::size_t h2, std::size_t w2, const char* what) {
    if (h1 != h2 || w1 != w2)
        throw ShapeError(std::string(what) + ": extent mismatch " + std::to_string(h1) + "x" + std::to_string(w1) +
                         " vs " + std::to_string(h2) + "x" + std::to_string(w2));
}

// Binary PGM ("P5"). maxval <= 255 uses one byte per sample, larger maxvals two
// bytes big-endian. Values are returned as reals in [0, maxval].
struct PgmImage {
    Image image;
    unsigned maxval = 255;
};

PgmImage decode_pgm(std::string_view bytes);
PgmImage read_pgm(const std::filesystem::path& path);

// Clamps to [0, maxval] and rounds half up. maxval must be 255 or 65535.
std::string encode_pgm(const Image& image, unsigned maxval);
void write_pgm(const Image& image, const std::filesystem::path& path, unsigned maxval);

// Masks are maxval-255 PGMs: 0 unchanged, 255 changed.
Image mask_to_image(const ChangeMask& mask);
ChangeMask image_to_mask(const Image& image, unsigned maxval);
void write_mask(const ChangeMask& mask, const std::filesystem::path& path);
ChangeMask read_mask(const std::filesystem::path& path);

}  // namespace drnet
