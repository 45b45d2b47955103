#include "drnet/nn/dense.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace drnet::nn {

template <typename T>
Tensor<T> relu_forward(const Tensor<T>& x) {
    Tensor<T> out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > T(0) ? x[i] : T(0);
    return out;
}

template <typename T>
Tensor<T> relu_backward(const Tensor<T>& x, const Tensor<T>& grad_out) {
    require_same_shape(x.shape(), grad_out.shape(), "relu_backward");
    Tensor<T> g(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) g[i] = x[i] > T(0) ? grad_out[i] : T(0);
    return g;
}

template <typename T>
FcLayer<T> FcLayer<T>::make(std::size_t out_features, std::size_t in_features) {
    return {Tensor<T>({out_features, in_features, 1, 1}), Tensor<T>({out_features, 1, 1, 1})};
}

namespace {

template <typename T>
std::size_t check_fc_input(const FcLayer<T>& layer, const Tensor<T>& x) {
    const Shape& s = x.shape();
    const std::size_t features = s.c * s.h * s.w;
    if (features != layer.in_features())
        throw ShapeError("fc input has " + std::to_string(features) + " features, layer expects " +
                         std::to_string(layer.in_features()));
    return features;
}

}  // namespace

template <typename T>
Tensor<T> fc_forward(const FcLayer<T>& layer, const Tensor<T>& x) {
    const std::size_t in = check_fc_input(layer, x);
    const std::size_t out_f = layer.out_features();
    const std::size_t batch = x.shape().n;

    // Transposed weights keep the inner loop an axpy over outputs.
    std::vector<T> wt(in * out_f);
    for (std::size_t o = 0; o < out_f; ++o)
        for (std::size_t i = 0; i < in; ++i) wt[i * out_f + o] = layer.weight[o * in + i];

    Tensor<T> out({batch, out_f, 1, 1});
    for (std::size_t b = 0; b < batch; ++b) {
        T* y = out.data() + b * out_f;
        for (std::size_t o = 0; o < out_f; ++o) y[o] = layer.bias[o];
        const T* xb = x.data() + b * in;
        for (std::size_t i = 0; i < in; ++i) {
            const T v = xb[i];
            const T* w = wt.data() + i * out_f;
            for (std::size_t o = 0; o < out_f; ++o) y[o] += v * w[o];
        }
    }
    return out;
}

template <typename T>
FcGrads<T> fc_backward(const FcLayer<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out) {
    const std::size_t in = check_fc_input(layer, x);
    const std::size_t out_f = layer.out_features();
    const std::size_t batch = x.shape().n;
    require_same_shape(grad_out.shape(), Shape{batch, out_f, 1, 1}, "fc_backward");

    FcGrads<T> g{Tensor<T>(x.shape()), Tensor<T>(layer.weight.shape()), Tensor<T>(layer.bias.shape())};
    for (std::size_t b = 0; b < batch; ++b) {
        const T* go = grad_out.data() + b * out_f;
        const T* xb = x.data() + b * in;
        T* gxb = g.x.data() + b * in;
        for (std::size_t o = 0; o < out_f; ++o) {
            const T gv = go[o];
            g.bias[o] += gv;
            T* gw = g.weight.data() + o * in;
            const T* w = layer.weight.data() + o * in;
            for (std::size_t i = 0; i < in; ++i) {
                gw[i] += gv * xb[i];
                gxb[i] += gv * w[i];
            }
        }
    }
    return g;
}

template <typename T>
XentResult<T> softmax_xent(const Tensor<T>& logits, std::span<const int> labels) {
    const Shape& s = logits.shape();
    if (s.c != 2 || s.h != 1 || s.w != 1) throw ShapeError("softmax_xent expects (B, 2, 1, 1) logits, got " + s.str());
    if (labels.size() != s.n) throw ShapeError("softmax_xent: label count does not match batch");
    XentResult<T> r{0.0, Tensor<T>(s)};
    if (s.n == 0) return r;
    const double inv_batch = 1.0 / static_cast<double>(s.n);
    for (std::size_t b = 0; b < s.n; ++b) {
        const int label = labels[b];
        if (label != 0 && label != 1) throw ArgumentError("label " + std::to_string(label) + " outside {0,1}");
        const double z0 = logits[2 * b], z1 = logits[2 * b + 1];
        const double m = std::max(z0, z1);
        const double e0 = std::exp(z0 - m), e1 = std::exp(z1 - m);
        const double sum = e0 + e1;
        const double zl = label == 0 ? z0 : z1;
        r.loss += (m + std::log(sum) - zl) * inv_batch;
        r.grad_logits[2 * b] = static_cast<T>((e0 / sum - (label == 0 ? 1.0 : 0.0)) * inv_batch);
        r.grad_logits[2 * b + 1] = static_cast<T>((e1 / sum - (label == 1 ? 1.0 : 0.0)) * inv_batch);
    }
    return r;
}

#define DRNET_INSTANTIATE_DENSE(T)                                                            \
    template Tensor<T> relu_forward(const Tensor<T>&);                                        \
    template Tensor<T> relu_backward(const Tensor<T>&, const Tensor<T>&);                     \
    template struct FcLayer<T>;                                                               \
    template Tensor<T> fc_forward(const FcLayer<T>&, const Tensor<T>&);                        \
    template FcGrads<T> fc_backward(const FcLayer<T>&, const Tensor<T>&, const Tensor<T>&);   \
    template XentResult<T> softmax_xent(const Tensor<T>&, std::span<const int>);

DRNET_INSTANTIATE_DENSE(float)
DRNET_INSTANTIATE_DENSE(double)

}  // namespace drnet::nn
