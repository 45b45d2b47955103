#pragma once

#include <cstddef>
#include <span>

#include "drnet/tensor.hpp"

namespace drnet::nn {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x);

// Subgradient 0 at x == 0.
template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out);

// Fully connected layer on (B, C, H, W) inputs flattened to (B, C*H*W).
template <typename T>
struct FcLayer {
    Tensor<T> weight;  // (out, in, 1, 1)
    Tensor<T> bias;    // (out, 1, 1, 1)

    static FcLayer make(std::size_t out_features, std::size_t in_features);
    std::size_t out_features() const { return weight.shape().n; }
    std::size_t in_features() const { return weight.shape().c; }
};

template <typename T>
struct FcGrads {
    Tensor<T> x;  // same shape as the (unflattened) input
    Tensor<T> weight;
    Tensor<T> bias;
};

// Output shape (B, out, 1, 1).
template <typename T>
Tensor<T> fc_forward(const FcLayer<T>& layer, const Tensor<T>& x);

template <typename T>
FcGrads<T> fc_backward(const FcLayer<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out);

template <typename T>
struct XentResult {
    double loss = 0;        // mean over the batch
    Tensor<T> grad_logits;  // gradient of the mean loss
};

// Softmax cross-entropy on (B, 2, 1, 1) logits with labels in {0, 1}.
// Max-subtracted; per-sample loss is -log softmax(label), gradient softmax - onehot.
template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels);

}  // namespace drnet::nn
