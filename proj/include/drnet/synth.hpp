#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "drnet/image.hpp"
#include "drnet/rng.hpp"
#include "drnet/tensor.hpp"

namespace drnet {

struct PairMetadata {
    std::uint64_t seed = 0;
    double looks = 4.0;
    double change_fraction = 0.05;
    double contrast = 2.0;
};

// Two co-registered intensity images of the same scene.
struct ImagePair {
    Image i1, i2;
    PairMetadata meta;

    std::size_t height() const { return i1.height; }
    std::size_t width() const { return i1.width; }
    // Throws ShapeError / ArgumentError if extents differ or an intensity is negative.
    void validate() const;
};

struct SynthParams {
    std::size_t height = 128;
    std::size_t width = 128;
    double change_fraction = 0.05;
    double looks = 4.0;
    double contrast = 2.0;

    // Throws ArgumentError on out-of-range values.
    void validate() const;
};

struct SynthResult {
    ImagePair pair;
    ChangeMask truth;
};

// Smooth reflectance (8x bilinear upsampling of a coarse noise grid, scaled to
// [20, 200]), a change mask grown from random ellipses, and independent gamma
// speckle (shape L, mean 1) on each acquisition. Changed pixels of the second
// image have their reflectance multiplied by `contrast`.
SynthResult generate_pair(const SynthParams& params, Rng& rng);

// Mean-1 gamma speckle with shape `looks`.
double speckle(Rng& rng, double looks);

struct Coord {
    std::size_t row = 0;
    std::size_t col = 0;
    friend bool operator==(const Coord&, const Coord&) = default;
};

struct PatchSet {
    TensorF patches;  // (B, 2, p, p)
    std::vector<int> labels;
    std::vector<Coord> coords;

    std::size_t size() const { return coords.size(); }
};

// Extracts p x p two-channel patches (i1, i2) with edge replication; intensities
// are divided by the pair's global maximum.
class PatchExtractor {
public:
    PatchExtractor(const ImagePair& pair, std::size_t patch_size);

    std::size_t patch_size() const { return patch_; }
    // Writes patches for `coords` into batch slots [first, first + coords.size()).
    void extract(std::span<const Coord> coords, TensorF& out, std::size_t first = 0) const;

private:
    const ImagePair* pair_;
    std::size_t patch_;
    double inv_max_;
};

PatchSet extract_patches(const ImagePair& pair, std::span<const Coord> coords, std::size_t patch_size);

}  // namespace drnet
