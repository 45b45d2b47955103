#include "drnet/nn/pool.hpp"

#include <algorithm>
#include <string>

namespace drnet::nn {

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& x, std::size_t kernel, std::size_t stride) {
    const Shape& s = x.shape();
    if (kernel == 0 || stride == 0 || stride > kernel) throw ArgumentError("maxpool: need 0 < stride <= kernel");
    if (s.h == 0 || s.w == 0) throw ShapeError("maxpool: empty spatial extent " + s.str());
    const std::size_t oh = (s.h + stride - 1) / stride;
    const std::size_t ow = (s.w + stride - 1) / stride;
    const long lead = static_cast<long>((kernel - stride) / 2);

    PoolResult<T> r{Tensor<T>({s.n, s.c, oh, ow}), std::vector<std::uint32_t>(s.n * s.c * oh * ow), s};
    std::size_t o = 0;
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = x.plane(b, c);
            const std::size_t plane_base = (b * s.c + c) * s.spatial();
            for (std::size_t oy = 0; oy < oh; ++oy) {
                const long y_start = static_cast<long>(oy * stride) - lead;
                const long y0 = std::max(0L, y_start);
                const long y1 = std::min(static_cast<long>(s.h), y_start + static_cast<long>(kernel));
                for (std::size_t ox = 0; ox < ow; ++ox, ++o) {
                    const long x_start = static_cast<long>(ox * stride) - lead;
                    const long x0 = std::max(0L, x_start);
                    const long x1 = std::min(static_cast<long>(s.w), x_start + static_cast<long>(kernel));
                    long best = y0 * static_cast<long>(s.w) + x0;
                    for (long yy = y0; yy < y1; ++yy)
                        for (long xx = x0; xx < x1; ++xx) {
                            const long idx = yy * static_cast<long>(s.w) + xx;
                            if (p[idx] > p[best]) best = idx;  // strict: first max wins
                        }
                    r.out[o] = p[best];
                    r.argmax[o] = static_cast<std::uint32_t>(plane_base + static_cast<std::size_t>(best));
                }
            }
        }
    return r;
}

template <typename T>
Tensor<T> maxpool_backward(const std::vector<std::uint32_t>& argmax, const Shape& input_shape,
                           const Tensor<T>& grad_out) {
    if (grad_out.size() != argmax.size()) throw ShapeError("maxpool_backward: gradient does not match argmax map");
    Tensor<T> gx(input_shape);
    for (std::size_t i = 0; i < argmax.size(); ++i) gx[argmax[i]] += grad_out[i];
    return gx;
}

ResidualPoolLayer::ResidualPoolLayer(std::size_t subsets) : subsets_(subsets) {
    if (subsets == 0) throw ConfigError("residual pooling needs s >= 1");
}

void ResidualPoolLayer::check_channels(std::size_t n) const {
    if (n % subsets_ != 0)
        throw ConfigError(std::to_string(n) + " not divisible by " + std::to_string(subsets_) +
                          " (residual pooling needs channel count n divisible by s)");
}

namespace {

// Channels [first, first+count) of x as a new tensor.
template <typename T>
Tensor<T> channel_slice(const Tensor<T>& x, std::size_t first, std::size_t count) {
    const Shape& s = x.shape();
    Tensor<T> out({s.n, count, s.h, s.w});
    for (std::size_t b = 0; b < s.n; ++b)
        std::copy_n(x.plane(b, first), count * s.spatial(), out.plane(b, 0));
    return out;
}

template <typename T>
void write_channels(Tensor<T>& dst, std::size_t first, const Tensor<T>& src) {
    const Shape& s = src.shape();
    for (std::size_t b = 0; b < s.n; ++b) std::copy_n(src.plane(b, 0), s.c * s.spatial(), dst.plane(b, first));
}

}  // namespace

template <typename T>
Tensor<T> residual_pool_forward(const ResidualPoolLayer& layer, const Tensor<T>& x, ResidualPoolCache<T>* cache) {
    const Shape& s = x.shape();
    layer.check_channels(s.c);
    const std::size_t w = s.c / layer.subsets();

    Tensor<T> concat(s);
    std::vector<PoolResult<T>> branches;
    branches.reserve(layer.subsets());
    for (std::size_t i = 0; i < layer.subsets(); ++i) {
        Tensor<T> input = channel_slice(x, i * w, w);
        if (i > 0) {
            const Tensor<T>& prev = branches.back().out;
            for (std::size_t e = 0; e < input.size(); ++e) input[e] += prev[e];
        }
        branches.push_back(maxpool_forward(input, 2, 1));
        write_channels(concat, i * w, branches.back().out);
    }
    PoolResult<T> down = maxpool_forward(concat, 2, 2);
    Tensor<T> out = down.out;
    if (cache) {
        cache->branches = std::move(branches);
        cache->downsample = std::move(down);
    }
    return out;
}

template <typename T>
Tensor<T> residual_pool_backward(const ResidualPoolLayer& layer, const ResidualPoolCache<T>& cache,
                                 const Tensor<T>& grad_out) {
    const Shape& s = cache.downsample.input_shape;
    layer.check_channels(s.c);
    if (cache.branches.size() != layer.subsets()) throw ShapeError("residual_pool_backward: cache/layer mismatch");
    const std::size_t w = s.c / layer.subsets();

    const Tensor<T> g_concat = maxpool_backward(cache.downsample.argmax, s, grad_out);
    Tensor<T> gx(s);
    Tensor<T> carry;  // gradient flowing from K_{i+1}'s input into y_i
    for (std::size_t i = layer.subsets(); i-- > 0;) {
        Tensor<T> g_y = channel_slice(g_concat, i * w, w);
        if (!carry.empty())
            for (std::size_t e = 0; e < g_y.size(); ++e) g_y[e] += carry[e];
        const PoolResult<T>& branch = cache.branches[i];
        carry = maxpool_backward(branch.argmax, branch.input_shape, g_y);
        write_channels(gx, i * w, carry);
    }
    return gx;
}

template <typename T>
Tensor<T> stacked_pool_forward(const Tensor<T>& x, StackedPoolCache<T>* cache) {
    const Shape& s = x.shape();
    if (s.h < 2 || s.w < 2) throw ShapeError("stacked pooling needs spatial extents >= 2, got " + s.str());
    PoolResult<T> small = maxpool_forward(x, 2, 1);
    PoolResult<T> large = maxpool_forward(small.out, 4, 1);
    Tensor<T> mean(s);
    for (std::size_t e = 0; e < mean.size(); ++e) mean[e] = T(0.5) * (small.out[e] + large.out[e]);
    PoolResult<T> down = maxpool_forward(mean, 2, 2);
    Tensor<T> out = down.out;
    if (cache) {
        cache->small = std::move(small);
        cache->large = std::move(large);
        cache->downsample = std::move(down);
    }
    return out;
}

template <typename T>
Tensor<T> stacked_pool_backward(const StackedPoolCache<T>& cache, const Tensor<T>& grad_out) {
    Tensor<T> g_mean = maxpool_backward(cache.downsample.argmax, cache.downsample.input_shape, grad_out);
    for (auto& v : g_mean.values()) v *= T(0.5);
    Tensor<T> g_small = maxpool_backward(cache.large.argmax, cache.large.input_shape, g_mean);
    accumulate(g_small, g_mean);
    return maxpool_backward(cache.small.argmax, cache.small.input_shape, g_small);
}

#define DRNET_INSTANTIATE_POOL(T)                                                                              \
    template PoolResult<T> maxpool_forward(const Tensor<T>&, std::size_t, std::size_t);                        \
    template Tensor<T> maxpool_backward(const std::vector<std::uint32_t>&, const Shape&, const Tensor<T>&);    \
    template Tensor<T> residual_pool_forward(const ResidualPoolLayer&, const Tensor<T>&, ResidualPoolCache<T>*); \
    template Tensor<T> residual_pool_backward(const ResidualPoolLayer&, const ResidualPoolCache<T>&,           \
                                              const Tensor<T>&);                                               \
    template Tensor<T> stacked_pool_forward(const Tensor<T>&, StackedPoolCache<T>*);                           \
    template Tensor<T> stacked_pool_backward(const StackedPoolCache<T>&, const Tensor<T>&);

DRNET_INSTANTIATE_POOL(float)
DRNET_INSTANTIATE_POOL(double)

}  // namespace drnet::nn
