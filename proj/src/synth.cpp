#include "drnet/synth.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>

namespace drnet {

void ImagePair::validate() const {
    require_same_extents(i1.height, i1.width, i2.height, i2.width, "image pair");
    for (const Image* img : {&i1, &i2})
        for (double v : img->pixels)
            if (!(v >= 0.0) || !std::isfinite(v)) throw ArgumentError("image pair intensities must be finite and >= 0");
}

void SynthParams::validate() const {
    if (height < 32 || width < 32) throw ArgumentError("synthetic image extents must be >= 32");
    if (!(change_fraction > 0.0 && change_fraction <= 0.3))
        throw ArgumentError("change fraction must be in (0, 0.3], got " + std::to_string(change_fraction));
    if (!(looks >= 1.0)) throw ArgumentError("looks must be >= 1");
    if (!(contrast >= 1.0)) throw ArgumentError("contrast must be >= 1");
}

double speckle(Rng& rng, double looks) { return rng.gamma(looks) / looks; }

namespace {

constexpr std::size_t kUpsample = 8;
constexpr double kReflectanceLo = 20.0;
constexpr double kReflectanceHi = 200.0;

Image smooth_reflectance(std::size_t h, std::size_t w, Rng& rng) {
    const std::size_t gh = h / kUpsample + 2, gw = w / kUpsample + 2;
    std::vector<double> grid(gh * gw);
    for (auto& v : grid) v = rng.uniform();

    Image base(h, w);
    for (std::size_t y = 0; y < h; ++y) {
        const double gy = static_cast<double>(y) / kUpsample;
        const auto y0 = static_cast<std::size_t>(gy);
        const double fy = gy - static_cast<double>(y0);
        for (std::size_t x = 0; x < w; ++x) {
            const double gx = static_cast<double>(x) / kUpsample;
            const auto x0 = static_cast<std::size_t>(gx);
            const double fx = gx - static_cast<double>(x0);
            const double top = grid[y0 * gw + x0] * (1 - fx) + grid[y0 * gw + x0 + 1] * fx;
            const double bot = grid[(y0 + 1) * gw + x0] * (1 - fx) + grid[(y0 + 1) * gw + x0 + 1] * fx;
            base.at(y, x) = top * (1 - fy) + bot * fy;
        }
    }
    const auto [lo, hi] = std::minmax_element(base.pixels.begin(), base.pixels.end());
    const double lo_v = *lo, span = *hi - *lo;
    for (auto& v : base.pixels)
        v = span > 0 ? kReflectanceLo + (kReflectanceHi - kReflectanceLo) * (v - lo_v) / span : kReflectanceLo;
    return base;
}

// Grows a union of random ellipses until the changed fraction lands within
// +-20% (relative) of the target. Each ellipse covers at most ~1/3 of the
// target area, less than the width of the acceptance window, so growth cannot
// skip over it except through border clipping.
ChangeMask grow_mask(std::size_t h, std::size_t w, double fraction, Rng& rng) {
    const double total = static_cast<double>(h * w);
    const double target = fraction * total;
    const double lo = 0.8 * target, hi = 1.2 * target;
    const double radius = std::max(0.75, std::sqrt(target / (6.0 * std::numbers::pi)));
    constexpr int kAttempts = 20;
    constexpr int kMaxEllipses = 10000;

    for (int attempt = 0; attempt < kAttempts; ++attempt) {
        ChangeMask mask(h, w);
        std::size_t count = 0;
        for (int e = 0; e < kMaxEllipses; ++e) {
            const double cy = static_cast<double>(rng.below(h));
            const double cx = static_cast<double>(rng.below(w));
            const double a = std::max(0.5, radius * (0.6 + 0.8 * rng.uniform()));
            const double b = std::max(0.5, radius * (0.6 + 0.8 * rng.uniform()));
            const double theta = std::numbers::pi * rng.uniform();
            const double ct = std::cos(theta), st = std::sin(theta);
            const double reach = std::max(a, b);
            const auto y_lo = static_cast<long>(std::max(0.0, std::floor(cy - reach)));
            const auto y_hi = static_cast<long>(std::min(static_cast<double>(h) - 1, std::ceil(cy + reach)));
            const auto x_lo = static_cast<long>(std::max(0.0, std::floor(cx - reach)));
            const auto x_hi = static_cast<long>(std::min(static_cast<double>(w) - 1, std::ceil(cx + reach)));
            for (long y = y_lo; y <= y_hi; ++y)
                for (long x = x_lo; x <= x_hi; ++x) {
                    const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
                    const double u = (dx * ct + dy * st) / a, v = (-dx * st + dy * ct) / b;
                    if (u * u + v * v <= 1.0) {
                        auto& m = mask.at(static_cast<std::size_t>(y), static_cast<std::size_t>(x));
                        count += m == 0;
                        m = 1;
                    }
                }
            const double c = static_cast<double>(count);
            if (c >= lo && c <= hi) return mask;
            if (c > hi) break;
        }
    }
    throw GenerationError("could not reach change fraction " + std::to_string(fraction) + " within " +
                          std::to_string(kAttempts) + " attempts");
}

}  // namespace

SynthResult generate_pair(const SynthParams& params, Rng& rng) {
    params.validate();
    const std::size_t h = params.height, w = params.width;
    const Image base = smooth_reflectance(h, w, rng);
    ChangeMask truth = grow_mask(h, w, params.change_fraction, rng);

    SynthResult r{{Image(h, w), Image(h, w), {rng.seed(), params.looks, params.change_fraction, params.contrast}},
                  std::move(truth)};
    for (std::size_t i = 0; i < h * w; ++i) r.pair.i1.pixels[i] = base.pixels[i] * speckle(rng, params.looks);
    for (std::size_t i = 0; i < h * w; ++i) {
        const double reflectance = r.truth.values[i] ? base.pixels[i] * params.contrast : base.pixels[i];
        r.pair.i2.pixels[i] = reflectance * speckle(rng, params.looks);
    }
    return r;
}

PatchExtractor::PatchExtractor(const ImagePair& pair, std::size_t patch_size) : pair_(&pair), patch_(patch_size) {
    if (patch_size == 0 || patch_size % 2 == 0) throw ArgumentError("patch size must be odd");
    require_same_extents(pair.i1.height, pair.i1.width, pair.i2.height, pair.i2.width, "image pair");
    double mx = 0.0;
    for (const Image* img : {&pair.i1, &pair.i2})
        for (double v : img->pixels) mx = std::max(mx, v);
    inv_max_ = mx > 0 ? 1.0 / mx : 1.0;
}

void PatchExtractor::extract(std::span<const Coord> coords, TensorF& out, std::size_t first) const {
    const Shape& s = out.shape();
    if (s.c != 2 || s.h != patch_ || s.w != patch_ || first + coords.size() > s.n)
        throw ShapeError("patch buffer shape " + s.str() + " cannot hold the requested patches");
    const std::size_t h = pair_->height(), w = pair_->width();
    const long half = static_cast<long>(patch_ / 2);
    for (std::size_t k = 0; k < coords.size(); ++k) {
        const Coord c = coords[k];
        if (c.row >= h || c.col >= w)
            throw ArgumentError("coordinate (" + std::to_string(c.row) + ", " + std::to_string(c.col) +
                                ") outside " + std::to_string(h) + "x" + std::to_string(w) + " image");
        for (std::size_t ch = 0; ch < 2; ++ch) {
            const Image& img = ch == 0 ? pair_->i1 : pair_->i2;
            float* dst = out.plane(first + k, ch);
            for (long dy = -half; dy <= half; ++dy) {
                const auto y = static_cast<std::size_t>(
                    std::clamp(static_cast<long>(c.row) + dy, 0L, static_cast<long>(h) - 1));
                for (long dx = -half; dx <= half; ++dx) {
                    const auto x = static_cast<std::size_t>(
                        std::clamp(static_cast<long>(c.col) + dx, 0L, static_cast<long>(w) - 1));
                    *dst++ = static_cast<float>(img.at(y, x) * inv_max_);
                }
            }
        }
    }
}

PatchSet extract_patches(const ImagePair& pair, std::span<const Coord> coords, std::size_t patch_size) {
    PatchExtractor ex(pair, patch_size);
    PatchSet set{TensorF({coords.size(), 2, patch_size, patch_size}), {}, {coords.begin(), coords.end()}};
    ex.extract(coords, set.patches);
    return set;
}

}  // namespace drnet
