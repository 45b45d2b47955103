#pragma once

// Direct loop implementations used as references for the optimized layers.

#include <algorithm>
#include <cstddef>
#include <limits>

#include "drnet/nn/conv.hpp"
#include "drnet/tensor.hpp"

namespace drnet::oracle {

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias, std::size_t stride,
                 std::size_t pad) {
    const Shape xs = x.shape(), ws = weight.shape();
    const std::size_t k = ws.h;
    const std::size_t ho = (xs.h + 2 * pad - k) / stride + 1;
    const std::size_t wo = (xs.w + 2 * pad - k) / stride + 1;
    Tensor<T> out({xs.n, ws.n, ho, wo});
    for (std::size_t b = 0; b < xs.n; ++b)
        for (std::size_t o = 0; o < ws.n; ++o)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xx = 0; xx < wo; ++xx) {
                    double acc = bias[o];
                    for (std::size_t c = 0; c < xs.c; ++c)
                        for (std::size_t i = 0; i < k; ++i)
                            for (std::size_t j = 0; j < k; ++j) {
                                const long r = static_cast<long>(y * stride + i) - static_cast<long>(pad);
                                const long q = static_cast<long>(xx * stride + j) - static_cast<long>(pad);
                                if (r < 0 || q < 0 || r >= static_cast<long>(xs.h) || q >= static_cast<long>(xs.w))
                                    continue;
                                acc += static_cast<double>(weight.at(o, c, i, j)) *
                                       static_cast<double>(x.at(b, c, static_cast<std::size_t>(r),
                                                                static_cast<std::size_t>(q)));
                            }
                    out.at(b, o, y, xx) = static_cast<T>(acc);
                }
    return out;
}

// Clipped-window max pool: output y covers rows y*stride - (kernel-stride)/2 .. + kernel-1,
// restricted to the image.
template <typename T>
Tensor<T> maxpool(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
    const Shape s = x.shape();
    const std::size_t ho = (s.h + stride - 1) / stride, wo = (s.w + stride - 1) / stride;
    const long lead = static_cast<long>((kernel - stride) / 2);
    Tensor<T> out({s.n, s.c, ho, wo});
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t c = 0; c < s.c; ++c)
            for (std::size_t y = 0; y < ho; ++y)
                for (std::size_t xx = 0; xx < wo; ++xx) {
                    T best = -std::numeric_limits<T>::infinity();
                    for (long r = static_cast<long>(y * stride) - lead;
                         r < static_cast<long>(y * stride) - lead + static_cast<long>(kernel); ++r)
                        for (long q = static_cast<long>(xx * stride) - lead;
                             q < static_cast<long>(xx * stride) - lead + static_cast<long>(kernel); ++q) {
                            if (r < 0 || q < 0 || r >= static_cast<long>(s.h) || q >= static_cast<long>(s.w)) continue;
                            best = std::max(best, x.at(b, c, static_cast<std::size_t>(r), static_cast<std::size_t>(q)));
                        }
                    out.at(b, c, y, xx) = best;
                }
    return out;
}

// Split into s channel subsets, y_1 = P(x_1), y_i = P(x_i + y_{i-1}) with P a 2x2
// stride-1 clipped max, concatenate, then 2x2 stride-2 clipped max.
template <typename T>
Tensor<T> residual_pool(const Tensor<T>& x, std::size_t subsets) {
    const Shape s = x.shape();
    const std::size_t width = s.c / subsets;
    Tensor<T> concat(s);
    Tensor<T> prev;
    for (std::size_t i = 0; i < subsets; ++i) {
        Tensor<T> part({s.n, width, s.h, s.w});
        for (std::size_t b = 0; b < s.n; ++b)
            for (std::size_t c = 0; c < width; ++c)
                for (std::size_t y = 0; y < s.h; ++y)
                    for (std::size_t xx = 0; xx < s.w; ++xx) {
                        T v = x.at(b, i * width + c, y, xx);
                        if (i > 0) v = v + prev.at(b, c, y, xx);
                        part.at(b, c, y, xx) = v;
                    }
        prev = maxpool(part, 2, 1);
        for (std::size_t b = 0; b < s.n; ++b)
            for (std::size_t c = 0; c < width; ++c)
                for (std::size_t y = 0; y < s.h; ++y)
                    for (std::size_t xx = 0; xx < s.w; ++xx) concat.at(b, i * width + c, y, xx) = prev.at(b, c, y, xx);
    }
    return maxpool(concat, 2, 2);
}

// a = P2(x), b = P4(a), output = D(0.5 * (a + b)).
template <typename T>
Tensor<T> stacked_pool(const Tensor<T>& x) {
    const Tensor<T> a = maxpool(x, 2, 1);
    const Tensor<T> b = maxpool(a, 4, 1);
    Tensor<T> mean(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) mean[i] = static_cast<T>(0.5) * (a[i] + b[i]);
    return maxpool(mean, 2, 2);
}

}  // namespace drnet::oracle
