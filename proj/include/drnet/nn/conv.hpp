#pragma once

#include <cstddef>

#include "drnet/tensor.hpp"

namespace drnet::nn {

template <typename T>
struct ConvLayer {
    Tensor<T> weight;  // (out_c, in_c, k, k)
    Tensor<T> bias;    // (out_c, 1, 1, 1)
    std::size_t stride = 1;
    std::size_t pad = 0;

    // Zero-initialized layer.
    static ConvLayer make(std::size_t out_c, std::size_t in_c, std::size_t k, std::size_t stride,
                          std::size_t pad);

    std::size_t out_channels() const { return weight.shape().n; }
    std::size_t in_channels() const { return weight.shape().c; }
    std::size_t kernel() const { return weight.shape().h; }

    // Throws ShapeError for a channel mismatch or empty output.
    Shape output_shape(const Shape& in) const;
};

template <typename T>
struct ConvGrads {
    Tensor<T> x;
    Tensor<T> weight;
    Tensor<T> bias;
};

template <typename T>
Tensor<T> conv2d_forward(const ConvLayer<T>& layer, const Tensor<T>& x);

template <typename T>
ConvGrads<T> conv2d_backward(const ConvLayer<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out);

// Where a kernel tap lands after applying its offset.
//
// Coordinates live in the zero-padded frame of the input: the clamp bounds are
// [-pad, extent-1+pad] per axis and anything outside the image reads as 0. With
// pad = 0 this is exactly min(max(0, x+dx), N-1).
struct BilinearTap {
    long x0 = 0, y0 = 0;  // lower-left cell corner; the cell spans x0..x0+1, y0..y0+1
    double fx = 0, fy = 0;  // fractional position inside the cell
    bool clamped_x = false, clamped_y = false;
};

// Computes the cell for a raw (unclamped) sampling coordinate.
// Integral coordinates use the cell whose lower corner is the coordinate itself,
// except at the upper clamp bound where the cell is [hi-1, hi].
BilinearTap locate_tap(double raw_x, double raw_y, std::size_t height, std::size_t width, std::size_t pad);

// Offsets (B, 2*k*k, Ho, Wo): channel 2m is dx and 2m+1 is dy for kernel tap
// m = i*k + j (row-major over the k x k grid). x is the column axis.
struct SamplingGeometry {
    std::size_t kernel = 3;
    std::size_t stride = 1;
    std::size_t pad = 1;
};

// Bilinear sample of channel c of batch element b at kernel tap (i, j) for output (oy, ox).
template <typename T>
T deformable_sample(const Tensor<T>& x, const Tensor<T>& offsets, std::size_t b, std::size_t c,
                    std::size_t i, std::size_t j, std::size_t oy, std::size_t ox, const SamplingGeometry& geom);

template <typename T>
struct DeformableConvLayer {
    ConvLayer<T> offset_branch;  // in_c -> 2*k*k, 3x3, stride 1, pad 1
    ConvLayer<T> main;           // k x k, stride 1, pad (k-1)/2

    // Zero-initialized; the offset branch stays zero until trained.
    static DeformableConvLayer make(std::size_t out_c, std::size_t in_c, std::size_t k);

    SamplingGeometry geometry() const { return {main.kernel(), main.stride, main.pad}; }
};

template <typename T>
struct DeformableConvGrads {
    Tensor<T> x;
    Tensor<T> weight;
    Tensor<T> bias;
    Tensor<T> offset_weight;
    Tensor<T> offset_bias;
};

template <typename T>
Tensor<T> deformable_conv_forward(const DeformableConvLayer<T>& layer, const Tensor<T>& x);

// Main convolution evaluated at the deformed locations given by an explicit offset field.
template <typename T>
Tensor<T> deformable_conv_with_offsets(const ConvLayer<T>& main, const Tensor<T>& x, const Tensor<T>& offsets);

template <typename T>
DeformableConvGrads<T> deformable_conv_backward(const DeformableConvLayer<T>& layer, const Tensor<T>& x,
                                                const Tensor<T>& grad_out);

// True when every tap of output pixel (b, oy, ox) is unclamped and at least
// `margin` away from an integer coordinate on both axes.
template <typename T>
bool taps_away_from_kinks(const Tensor<T>& offsets, std::size_t b, std::size_t oy, std::size_t ox,
                          std::size_t height, std::size_t width, const SamplingGeometry& geom, double margin);

}  // namespace drnet::nn
