#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "drnet/tensor.hpp"

namespace drnet::nn {

// Max pooling with border-clipped windows: positions outside the image are
// excluded, never zero-filled. Output extent is ceil(H / stride). Window for
// output y covers rows y*stride - (kernel-stride)/2 ... + kernel-1.
template <typename T>
struct PoolResult {
    Tensor<T> out;
    std::vector<std::uint32_t> argmax;  // flat input index per output element
    Shape input_shape;
};

template <typename T>
PoolResult<T> maxpool_forward(const Tensor<T>& x, std::size_t kernel, std::size_t stride);

// Routes each output gradient to its recorded argmax position.
template <typename T>
Tensor<T> maxpool_backward(const std::vector<std::uint32_t>& argmax, const Shape& input_shape,
                           const Tensor<T>& grad_out);

class ResidualPoolLayer {
public:
    explicit ResidualPoolLayer(std::size_t subsets);

    std::size_t subsets() const { return subsets_; }
    // Throws ConfigError naming n and s when n is not divisible by s.
    void check_channels(std::size_t n) const;

private:
    std::size_t subsets_;
};

template <typename T>
struct ResidualPoolCache {
    std::vector<PoolResult<T>> branches;  // K_i, stride 1
    PoolResult<T> downsample;
};

// Splits channels into s subsets; y_1 = K_1(x_1), y_i = K_i(x_i + y_{i-1}), with
// each K_i a 2x2 stride-1 max pool; the concatenated y is then downsampled by a
// 2x2 stride-2 max pool.
template <typename T>
Tensor<T> residual_pool_forward(const ResidualPoolLayer& layer, const Tensor<T>& x,
                                ResidualPoolCache<T>* cache = nullptr);

template <typename T>
Tensor<T> residual_pool_backward(const ResidualPoolLayer& layer, const ResidualPoolCache<T>& cache,
                                 const Tensor<T>& grad_out);

template <typename T>
struct StackedPoolCache {
    PoolResult<T> small;  // 2x2, stride 1
    PoolResult<T> large;  // 4x4, stride 1, fed by `small`
    PoolResult<T> downsample;
};

// Mean of a 2x2 stride-1 max pool and a 4x4 stride-1 max pool applied on top of
// it, followed by the same 2x2 stride-2 downsample as residual pooling.
template <typename T>
Tensor<T> stacked_pool_forward(const Tensor<T>& x, StackedPoolCache<T>* cache = nullptr);

template <typename T>
Tensor<T> stacked_pool_backward(const StackedPoolCache<T>& cache, const Tensor<T>& grad_out);

}  // namespace drnet::nn
