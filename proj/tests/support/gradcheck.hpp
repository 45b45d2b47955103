#pragma once

// Central finite-difference checks of analytic backward passes, in double.
// Coordinates whose +h / -h evaluations land on different pieces of a piecewise
// function (a bilinear tap changing cell or clamping, a max-pool argmax
// flipping) are skipped rather than compared.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "drnet/nn/conv.hpp"
#include "drnet/nn/dense.hpp"
#include "drnet/nn/pool.hpp"
#include "drnet/rng.hpp"
#include "drnet/tensor.hpp"

namespace drnet::gradcheck {

constexpr double kStep = 1e-5;
constexpr double kTolerance = 1e-5;
// Denominator floor so that near-zero gradients are compared absolutely.
constexpr double kFloor = 1e-3;

struct Stats {
    std::size_t checked = 0;
    std::size_t skipped = 0;
    std::size_t failed = 0;
    double max_rel = 0.0;
    std::string worst;

    bool ok(std::size_t min_checked) const { return failed == 0 && checked >= min_checked; }
    void merge(const Stats& o) {
        checked += o.checked;
        skipped += o.skipped;
        failed += o.failed;
        if (o.max_rel > max_rel) {
            max_rel = o.max_rel;
            worst = o.worst;
        }
    }
};

inline double relative_error(double a, double n) {
    return std::abs(a - n) / std::max({std::abs(a), std::abs(n), kFloor});
}

inline double dot(const TensorD& a, const TensorD& b) {
    double s = 0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

// Perturbs `param` by +-h and compares the central difference of `loss` with `analytic`.
template <class LossFn, class SigFn>
void check_coordinate(double& param, double analytic, LossFn&& loss, SigFn&& signature, Stats& st,
                      const std::string& label) {
    const double saved = param;
    const auto base = signature();
    param = saved + kStep;
    const double lp = loss();
    const auto sp = signature();
    param = saved - kStep;
    const double lm = loss();
    const auto sm = signature();
    param = saved;
    if (sp != base || sm != base) {
        ++st.skipped;
        return;
    }
    const double numeric = (lp - lm) / (2 * kStep);
    const double rel = relative_error(analytic, numeric);
    ++st.checked;
    if (rel > kTolerance) ++st.failed;
    if (rel > st.max_rel) {
        st.max_rel = rel;
        st.worst = label + " analytic=" + std::to_string(analytic) + " numeric=" + std::to_string(numeric);
    }
}

inline std::vector<long> no_signature() { return {}; }

// Cell and clamp state of every bilinear tap.
inline std::vector<long> tap_signature(const TensorD& offsets, std::size_t h, std::size_t w,
                                       const nn::SamplingGeometry& g) {
    const Shape os = offsets.shape();
    std::vector<long> sig;
    const std::size_t kk = g.kernel * g.kernel;
    for (std::size_t b = 0; b < os.n; ++b)
        for (std::size_t oy = 0; oy < os.h; ++oy)
            for (std::size_t ox = 0; ox < os.w; ++ox)
                for (std::size_t m = 0; m < kk; ++m) {
                    const std::size_t i = m / g.kernel, j = m % g.kernel;
                    const double bx = static_cast<double>(ox * g.stride + j) - static_cast<double>(g.pad);
                    const double by = static_cast<double>(oy * g.stride + i) - static_cast<double>(g.pad);
                    const nn::BilinearTap t =
                        nn::locate_tap(bx + offsets.at(b, 2 * m, oy, ox), by + offsets.at(b, 2 * m + 1, oy, ox), h, w,
                                       g.pad);
                    sig.insert(sig.end(), {t.x0, t.y0, t.clamped_x ? 1L : 0L, t.clamped_y ? 1L : 0L});
                }
    return sig;
}

template <class LossFn, class SigFn>
void check_tensor(Rng& rng, TensorD& param, const TensorD& analytic, std::size_t samples, LossFn&& loss,
                  SigFn&& signature, Stats& st, const std::string& name) {
    for (std::size_t k = 0; k < samples; ++k) {
        const std::size_t idx = rng.below(param.size());
        check_coordinate(param[idx], analytic[idx], loss, signature, st, name + "[" + std::to_string(idx) + "]");
    }
}

inline std::size_t pick(Rng& rng, std::size_t lo, std::size_t hi) { return lo + rng.below(hi - lo + 1); }

inline Stats conv2d_suite(std::uint64_t seed, std::size_t min_checked) {
    Rng rng(seed, 101);
    Stats st;
    while (st.checked < min_checked) {
        const std::size_t k = pick(rng, 1, 3), stride = pick(rng, 1, 2), pad = pick(rng, 0, k - 1);
        const std::size_t h = pick(rng, k, 6), w = pick(rng, k, 6);
        auto layer = nn::ConvLayer<double>::make(pick(rng, 1, 3), pick(rng, 1, 3), k, stride, pad);
        layer.weight = rng_normal<double>(rng, layer.weight.shape(), 0, 1);
        layer.bias = rng_normal<double>(rng, layer.bias.shape(), 0, 1);
        TensorD x = rng_normal<double>(rng, {pick(rng, 1, 2), layer.in_channels(), h, w}, 0, 1);
        const TensorD r = rng_normal<double>(rng, layer.output_shape(x.shape()), 0, 1);
        const auto g = nn::conv2d_backward(layer, x, r);
        auto loss = [&] { return dot(nn::conv2d_forward(layer, x), r); };
        check_tensor(rng, x, g.x, 4, loss, no_signature, st, "conv2d x");
        check_tensor(rng, layer.weight, g.weight, 4, loss, no_signature, st, "conv2d weight");
        check_tensor(rng, layer.bias, g.bias, 2, loss, no_signature, st, "conv2d bias");
    }
    return st;
}

inline Stats deformable_suite(std::uint64_t seed, std::size_t min_checked) {
    Rng rng(seed, 102);
    Stats st;
    while (st.checked < min_checked) {
        const std::size_t k = rng.below(3) == 0 ? 1 : 3;
        const std::size_t h = pick(rng, 3, 6), w = pick(rng, 3, 6);
        auto layer = nn::DeformableConvLayer<double>::make(pick(rng, 1, 3), pick(rng, 1, 3), k);
        layer.main.weight = rng_normal<double>(rng, layer.main.weight.shape(), 0, 1);
        layer.main.bias = rng_normal<double>(rng, layer.main.bias.shape(), 0, 1);
        layer.offset_branch.weight = rng_normal<double>(rng, layer.offset_branch.weight.shape(), 0, 0.4);
        layer.offset_branch.bias = rng_uniform<double>(rng, layer.offset_branch.bias.shape(), -1.5, 1.5);
        TensorD x = rng_normal<double>(rng, {pick(rng, 1, 2), layer.main.in_channels(), h, w}, 0, 1);
        const TensorD r = rng_normal<double>(rng, {x.shape().n, layer.main.out_channels(), h, w}, 0, 1);
        const auto g = nn::deformable_conv_backward(layer, x, r);
        auto loss = [&] { return dot(nn::deformable_conv_forward(layer, x), r); };
        auto sig = [&] { return tap_signature(nn::conv2d_forward(layer.offset_branch, x), h, w, layer.geometry()); };
        check_tensor(rng, x, g.x, 3, loss, sig, st, "deformable x");
        check_tensor(rng, layer.main.weight, g.weight, 3, loss, sig, st, "deformable weight");
        check_tensor(rng, layer.main.bias, g.bias, 1, loss, sig, st, "deformable bias");
        check_tensor(rng, layer.offset_branch.weight, g.offset_weight, 3, loss, sig, st, "deformable offset weight");
        check_tensor(rng, layer.offset_branch.bias, g.offset_bias, 2, loss, sig, st, "deformable offset bias");
    }
    return st;
}

inline std::vector<long> pool_signature(const nn::PoolResult<double>& p) {
    return {p.argmax.begin(), p.argmax.end()};
}

inline Stats residual_pool_suite(std::uint64_t seed, std::size_t min_checked) {
    Rng rng(seed, 103);
    Stats st;
    const std::size_t subset_choices[] = {1, 2, 4};
    while (st.checked < min_checked) {
        const std::size_t s = subset_choices[rng.below(3)];
        const std::size_t n = s * pick(rng, 1, 2) * (rng.below(2) ? 2 : 1);
        const nn::ResidualPoolLayer layer(s);
        TensorD x = rng_normal<double>(rng, {pick(rng, 1, 2), n, pick(rng, 2, 7), pick(rng, 2, 7)}, 0, 1);
        nn::ResidualPoolCache<double> cache;
        const TensorD out = nn::residual_pool_forward(layer, x, &cache);
        const TensorD r = rng_normal<double>(rng, out.shape(), 0, 1);
        const TensorD gx = nn::residual_pool_backward(layer, cache, r);
        auto loss = [&] { return dot(nn::residual_pool_forward(layer, x), r); };
        auto sig = [&] {
            nn::ResidualPoolCache<double> c;
            nn::residual_pool_forward(layer, x, &c);
            std::vector<long> v = pool_signature(c.downsample);
            for (const auto& b : c.branches) {
                const auto bs = pool_signature(b);
                v.insert(v.end(), bs.begin(), bs.end());
            }
            return v;
        };
        check_tensor(rng, x, gx, 8, loss, sig, st, "residual_pool x");
    }
    return st;
}

inline Stats stacked_pool_suite(std::uint64_t seed, std::size_t min_checked) {
    Rng rng(seed, 104);
    Stats st;
    while (st.checked < min_checked) {
        TensorD x = rng_normal<double>(rng, {pick(rng, 1, 2), pick(rng, 1, 3), pick(rng, 2, 7), pick(rng, 2, 7)}, 0, 1);
        nn::StackedPoolCache<double> cache;
        const TensorD out = nn::stacked_pool_forward(x, &cache);
        const TensorD r = rng_normal<double>(rng, out.shape(), 0, 1);
        const TensorD gx = nn::stacked_pool_backward(cache, r);
        auto loss = [&] { return dot(nn::stacked_pool_forward(x), r); };
        auto sig = [&] {
            nn::StackedPoolCache<double> c;
            nn::stacked_pool_forward(x, &c);
            std::vector<long> v = pool_signature(c.small);
            for (const auto* p : {&c.large, &c.downsample}) {
                const auto ps = pool_signature(*p);
                v.insert(v.end(), ps.begin(), ps.end());
            }
            return v;
        };
        check_tensor(rng, x, gx, 8, loss, sig, st, "stacked_pool x");
    }
    return st;
}

inline Stats fc_suite(std::uint64_t seed, std::size_t min_checked) {
    Rng rng(seed, 105);
    Stats st;
    while (st.checked < min_checked) {
        TensorD x = rng_normal<double>(rng, {pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3), pick(rng, 1, 3)}, 0, 1);
        const Shape xs = x.shape();
        auto layer = nn::FcLayer<double>::make(pick(rng, 1, 5), xs.c * xs.h * xs.w);
        layer.weight = rng_normal<double>(rng, layer.weight.shape(), 0, 1);
        layer.bias = rng_normal<double>(rng, layer.bias.shape(), 0, 1);
        const TensorD r = rng_normal<double>(rng, {xs.n, layer.out_features(), 1, 1}, 0, 1);
        const auto g = nn::fc_backward(layer, x, r);
        auto loss = [&] { return dot(nn::fc_forward(layer, x), r); };
        check_tensor(rng, x, g.x, 4, loss, no_signature, st, "fc x");
        check_tensor(rng, layer.weight, g.weight, 4, loss, no_signature, st, "fc weight");
        check_tensor(rng, layer.bias, g.bias, 2, loss, no_signature, st, "fc bias");
    }
    return st;
}

inline Stats xent_suite(std::uint64_t seed, std::size_t min_checked) {
    Rng rng(seed, 106);
    Stats st;
    while (st.checked < min_checked) {
        const std::size_t b = pick(rng, 1, 6);
        TensorD logits = rng_normal<double>(rng, {b, 2, 1, 1}, 0, 3);
        std::vector<int> labels(b);
        for (int& l : labels) l = static_cast<int>(rng.below(2));
        const auto res = nn::softmax_xent(logits, labels);
        auto loss = [&] { return nn::softmax_xent(logits, labels).loss; };
        check_tensor(rng, logits, res.grad_logits, 4, loss, no_signature, st, "softmax_xent logits");
    }
    return st;
}

}  // namespace drnet::gradcheck
