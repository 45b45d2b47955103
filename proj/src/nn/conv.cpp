#include "drnet/nn/conv.hpp"

#include <cmath>
#include <cstdint>
#include <vector>

#include <Eigen/Core>

namespace drnet::nn {

namespace {

// Convolution is lowered to a row matrix: one row per output pixel
// n = (b, oy, ox), one column per kernel tap kk = (c, i, j). Regular and
// deformable convolution differ only in how the rows are filled; the matrix
// products are shared, so zero offsets give bitwise-identical outputs.

template <typename T>
std::vector<T> im2row(const Tensor<T>& x, std::size_t k, std::size_t stride, std::size_t pad, std::size_t out_h,
                      std::size_t out_w) {
    const Shape& s = x.shape();
    const std::size_t cols = s.c * k * k;
    std::vector<T> rows(s.n * out_h * out_w * cols, T(0));
    std::size_t n = 0;
    for (std::size_t b = 0; b < s.n; ++b)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox, ++n) {
                T* r = rows.data() + n * cols;
                for (std::size_t c = 0; c < s.c; ++c) {
                    const T* p = x.plane(b, c);
                    for (std::size_t i = 0; i < k; ++i) {
                        const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
                        if (iy < 0 || iy >= static_cast<long>(s.h)) continue;
                        for (std::size_t j = 0; j < k; ++j) {
                            const long ix = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
                            if (ix < 0 || ix >= static_cast<long>(s.w)) continue;
                            r[(c * k + i) * k + j] = p[iy * static_cast<long>(s.w) + ix];
                        }
                    }
                }
            }
    return rows;
}

template <typename T>
using RowMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using ColMajor = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor>;

// out(b, o, oy, ox) = bias_o + sum_kk rows(n, kk) * W(o, kk)
template <typename T>
Tensor<T> rows_times_kernel(const std::vector<T>& rows, const ConvLayer<T>& layer, const Shape& out_shape) {
    const auto out_c = static_cast<Eigen::Index>(layer.out_channels());
    const auto cols = static_cast<Eigen::Index>(layer.weight.size()) / out_c;
    const std::size_t pixels = out_shape.spatial();
    const auto total = static_cast<Eigen::Index>(out_shape.n * pixels);

    const Eigen::Map<const RowMajor<T>> w(layer.weight.data(), out_c, cols);
    const Eigen::Map<const ColMajor<T>> rows_t(rows.data(), cols, total);
    RowMajor<T> y(out_c, total);
    y.noalias() = w * rows_t;

    Tensor<T> out(out_shape);
    for (std::size_t b = 0; b < out_shape.n; ++b)
        for (Eigen::Index o = 0; o < out_c; ++o) {
            const T bias = layer.bias[static_cast<std::size_t>(o)];
            const T* src = y.data() + o * total + static_cast<Eigen::Index>(b * pixels);
            T* dst = out.plane(b, static_cast<std::size_t>(o));
            for (std::size_t p = 0; p < pixels; ++p) dst[p] = src[p] + bias;
        }
    return out;
}

// Gradients of rows_times_kernel: fills grad_weight/grad_bias, returns d/d rows.
template <typename T>
std::vector<T> rows_backward(const std::vector<T>& rows, const ConvLayer<T>& layer, const Tensor<T>& grad_out,
                             Tensor<T>& grad_weight, Tensor<T>& grad_bias) {
    const auto out_c = static_cast<Eigen::Index>(layer.out_channels());
    const auto cols = static_cast<Eigen::Index>(layer.weight.size()) / out_c;
    const Shape& gs = grad_out.shape();
    const std::size_t pixels = gs.spatial();
    const auto total = static_cast<Eigen::Index>(gs.n * pixels);

    RowMajor<T> g(out_c, total);
    for (std::size_t b = 0; b < gs.n; ++b)
        for (Eigen::Index o = 0; o < out_c; ++o)
            std::copy_n(grad_out.plane(b, static_cast<std::size_t>(o)), pixels,
                        g.data() + o * total + static_cast<Eigen::Index>(b * pixels));

    grad_weight = Tensor<T>(layer.weight.shape());
    grad_bias = Tensor<T>(layer.bias.shape());
    const Eigen::Map<const RowMajor<T>> rows_m(rows.data(), total, cols);
    Eigen::Map<RowMajor<T>> gw(grad_weight.data(), out_c, cols);
    gw.noalias() = g * rows_m;
    for (Eigen::Index o = 0; o < out_c; ++o) {
        T sum(0);
        for (Eigen::Index n = 0; n < total; ++n) sum += g(o, n);
        grad_bias[static_cast<std::size_t>(o)] = sum;
    }

    std::vector<T> grad_rows(static_cast<std::size_t>(total * cols));
    const Eigen::Map<const RowMajor<T>> w(layer.weight.data(), out_c, cols);
    Eigen::Map<RowMajor<T>> gr(grad_rows.data(), total, cols);
    gr.noalias() = g.transpose() * w;
    return grad_rows;
}

template <typename T>
Tensor<T> row2im(const std::vector<T>& grad_rows, const Shape& in_shape, std::size_t k, std::size_t stride,
                 std::size_t pad, std::size_t out_h, std::size_t out_w) {
    Tensor<T> gx(in_shape);
    const std::size_t cols = in_shape.c * k * k;
    std::size_t n = 0;
    for (std::size_t b = 0; b < in_shape.n; ++b)
        for (std::size_t oy = 0; oy < out_h; ++oy)
            for (std::size_t ox = 0; ox < out_w; ++ox, ++n) {
                const T* r = grad_rows.data() + n * cols;
                for (std::size_t c = 0; c < in_shape.c; ++c) {
                    T* p = gx.plane(b, c);
                    for (std::size_t i = 0; i < k; ++i) {
                        const long iy = static_cast<long>(oy * stride + i) - static_cast<long>(pad);
                        if (iy < 0 || iy >= static_cast<long>(in_shape.h)) continue;
                        for (std::size_t j = 0; j < k; ++j) {
                            const long ix = static_cast<long>(ox * stride + j) - static_cast<long>(pad);
                            if (ix < 0 || ix >= static_cast<long>(in_shape.w)) continue;
                            p[iy * static_cast<long>(in_shape.w) + ix] += r[(c * k + i) * k + j];
                        }
                    }
                }
            }
    return gx;
}

// Four bilinear corners of one tap; index -1 marks a corner outside the image.
template <typename T>
struct Corners {
    std::int64_t idx[4];  // 00, 01 (x+1), 10 (y+1), 11
    T w[4];
    T fx, fy;
    bool clamped_x, clamped_y;
};

template <typename T>
Corners<T> corners_for(const BilinearTap& tap, std::size_t h, std::size_t w) {
    Corners<T> c{};
    const long xs[2] = {tap.x0, tap.x0 + 1};
    const long ys[2] = {tap.y0, tap.y0 + 1};
    const T fx = static_cast<T>(tap.fx), fy = static_cast<T>(tap.fy);
    const T wx[2] = {T(1) - fx, fx};
    const T wy[2] = {T(1) - fy, fy};
    for (int a = 0; a < 2; ++a)
        for (int bb = 0; bb < 2; ++bb) {
            const int q = a * 2 + bb;
            const bool inside =
                ys[a] >= 0 && ys[a] < static_cast<long>(h) && xs[bb] >= 0 && xs[bb] < static_cast<long>(w);
            c.idx[q] = inside ? ys[a] * static_cast<long>(w) + xs[bb] : -1;
            c.w[q] = wy[a] * wx[bb];
        }
    c.fx = fx;
    c.fy = fy;
    c.clamped_x = tap.clamped_x;
    c.clamped_y = tap.clamped_y;
    return c;
}

template <typename T>
T corner_value(const T* plane, std::int64_t idx) {
    return idx < 0 ? T(0) : plane[idx];
}

template <typename T>
T interpolate(const T* plane, const Corners<T>& c) {
    T acc(0);
    for (int q = 0; q < 4; ++q)
        if (c.idx[q] >= 0) acc += plane[c.idx[q]] * c.w[q];
    return acc;
}

// Taps for every (output pixel, kernel position), shared across input channels.
template <typename T>
std::vector<Corners<T>> build_taps(const Tensor<T>& offsets, const Shape& in_shape, const SamplingGeometry& g) {
    const Shape& os = offsets.shape();
    const std::size_t kk = g.kernel * g.kernel;
    std::vector<Corners<T>> taps(os.n * os.h * os.w * kk);
    std::size_t t = 0;
    for (std::size_t b = 0; b < os.n; ++b)
        for (std::size_t oy = 0; oy < os.h; ++oy)
            for (std::size_t ox = 0; ox < os.w; ++ox)
                for (std::size_t m = 0; m < kk; ++m, ++t) {
                    const std::size_t i = m / g.kernel, j = m % g.kernel;
                    const double base_x = static_cast<double>(ox * g.stride + j) - static_cast<double>(g.pad);
                    const double base_y = static_cast<double>(oy * g.stride + i) - static_cast<double>(g.pad);
                    const double dx = offsets.at(b, 2 * m, oy, ox);
                    const double dy = offsets.at(b, 2 * m + 1, oy, ox);
                    taps[t] = corners_for<T>(locate_tap(base_x + dx, base_y + dy, in_shape.h, in_shape.w, g.pad),
                                             in_shape.h, in_shape.w);
                }
    return taps;
}

template <typename T>
std::vector<T> deformable_im2row(const Tensor<T>& x, const std::vector<Corners<T>>& taps, std::size_t k,
                                 std::size_t total) {
    const Shape& s = x.shape();
    const std::size_t kk = k * k;
    const std::size_t cols = s.c * kk;
    const std::size_t pixels = total / s.n;
    std::vector<T> rows(total * cols, T(0));
    for (std::size_t n = 0; n < total; ++n) {
        const std::size_t b = n / pixels;
        T* r = rows.data() + n * cols;
        const Corners<T>* tp = taps.data() + n * kk;
        for (std::size_t c = 0; c < s.c; ++c) {
            const T* p = x.plane(b, c);
            for (std::size_t m = 0; m < kk; ++m) r[c * kk + m] = interpolate(p, tp[m]);
        }
    }
    return rows;
}

void check_deformable(const SamplingGeometry& g) {
    if (g.stride != 1 || g.pad != (g.kernel - 1) / 2 || g.kernel % 2 == 0)
        throw ShapeError("deformable convolution requires an odd kernel, stride 1 and pad (k-1)/2");
}

}  // namespace

template <typename T>
ConvLayer<T> ConvLayer<T>::make(std::size_t out_c, std::size_t in_c, std::size_t k, std::size_t stride,
                                std::size_t pad) {
    if (k == 0 || stride == 0) throw ArgumentError("conv layer needs positive kernel and stride");
    ConvLayer<T> layer;
    layer.weight = Tensor<T>({out_c, in_c, k, k});
    layer.bias = Tensor<T>({out_c, 1, 1, 1});
    layer.stride = stride;
    layer.pad = pad;
    return layer;
}

template <typename T>
Shape ConvLayer<T>::output_shape(const Shape& in) const {
    if (in.c != in_channels())
        throw ShapeError("conv input has " + std::to_string(in.c) + " channels, layer expects " +
                         std::to_string(in_channels()));
    const std::size_t k = kernel();
    if (in.h + 2 * pad < k || in.w + 2 * pad < k) throw ShapeError("conv output extent would be empty");
    return {in.n, out_channels(), (in.h + 2 * pad - k) / stride + 1, (in.w + 2 * pad - k) / stride + 1};
}

template <typename T>
Tensor<T> conv2d_forward(const ConvLayer<T>& layer, const Tensor<T>& x) {
    const Shape os = layer.output_shape(x.shape());
    const auto rows = im2row(x, layer.kernel(), layer.stride, layer.pad, os.h, os.w);
    return rows_times_kernel(rows, layer, os);
}

template <typename T>
ConvGrads<T> conv2d_backward(const ConvLayer<T>& layer, const Tensor<T>& x, const Tensor<T>& grad_out) {
    const Shape os = layer.output_shape(x.shape());
    require_same_shape(grad_out.shape(), os, "conv2d_backward");
    const auto rows = im2row(x, layer.kernel(), layer.stride, layer.pad, os.h, os.w);
    ConvGrads<T> g;
    const auto grad_rows = rows_backward(rows, layer, grad_out, g.weight, g.bias);
    g.x = row2im(grad_rows, x.shape(), layer.kernel(), layer.stride, layer.pad, os.h, os.w);
    return g;
}

BilinearTap locate_tap(double raw_x, double raw_y, std::size_t height, std::size_t width, std::size_t pad) {
    BilinearTap tap;
    auto axis = [pad](double raw, std::size_t extent, long& lower, double& frac, bool& clamped) {
        const double lo = -static_cast<double>(pad);
        const double hi = static_cast<double>(extent) - 1.0 + static_cast<double>(pad);
        clamped = raw < lo || raw > hi;
        const double c = std::min(std::max(lo, raw), hi);
        lower = static_cast<long>(std::floor(c));
        if (static_cast<double>(lower) >= hi && hi > lo) lower = static_cast<long>(hi) - 1;
        frac = c - static_cast<double>(lower);
    };
    axis(raw_x, width, tap.x0, tap.fx, tap.clamped_x);
    axis(raw_y, height, tap.y0, tap.fy, tap.clamped_y);
    return tap;
}

template <typename T>
T deformable_sample(const Tensor<T>& x, const Tensor<T>& offsets, std::size_t b, std::size_t c, std::size_t i,
                    std::size_t j, std::size_t oy, std::size_t ox, const SamplingGeometry& geom) {
    const Shape& s = x.shape();
    const Shape& os = offsets.shape();
    const std::size_t kk = geom.kernel * geom.kernel;
    if (os.c != 2 * kk || os.n != s.n || b >= s.n || c >= s.c || i >= geom.kernel || j >= geom.kernel ||
        oy >= os.h || ox >= os.w)
        throw ShapeError("deformable_sample: index or offset field shape out of range");
    const std::size_t m = i * geom.kernel + j;
    const double base_x = static_cast<double>(ox * geom.stride + j) - static_cast<double>(geom.pad);
    const double base_y = static_cast<double>(oy * geom.stride + i) - static_cast<double>(geom.pad);
    const BilinearTap tap = locate_tap(base_x + static_cast<double>(offsets.at(b, 2 * m, oy, ox)),
                                       base_y + static_cast<double>(offsets.at(b, 2 * m + 1, oy, ox)), s.h, s.w,
                                       geom.pad);
    return interpolate(x.plane(b, c), corners_for<T>(tap, s.h, s.w));
}

template <typename T>
DeformableConvLayer<T> DeformableConvLayer<T>::make(std::size_t out_c, std::size_t in_c, std::size_t k) {
    if (k % 2 == 0) throw ArgumentError("deformable convolution needs an odd kernel");
    DeformableConvLayer<T> layer;
    layer.offset_branch = ConvLayer<T>::make(2 * k * k, in_c, 3, 1, 1);
    layer.main = ConvLayer<T>::make(out_c, in_c, k, 1, (k - 1) / 2);
    return layer;
}

template <typename T>
Tensor<T> deformable_conv_with_offsets(const ConvLayer<T>& main, const Tensor<T>& x, const Tensor<T>& offsets) {
    const SamplingGeometry g{main.kernel(), main.stride, main.pad};
    check_deformable(g);
    const Shape os = main.output_shape(x.shape());
    const Shape expected{os.n, 2 * g.kernel * g.kernel, os.h, os.w};
    require_same_shape(offsets.shape(), expected, "deformable offsets");
    const auto taps = build_taps(offsets, x.shape(), g);
    const auto rows = deformable_im2row(x, taps, g.kernel, os.n * os.spatial());
    return rows_times_kernel(rows, main, os);
}

template <typename T>
Tensor<T> deformable_conv_forward(const DeformableConvLayer<T>& layer, const Tensor<T>& x) {
    const Tensor<T> offsets = conv2d_forward(layer.offset_branch, x);
    return deformable_conv_with_offsets(layer.main, x, offsets);
}

template <typename T>
DeformableConvGrads<T> deformable_conv_backward(const DeformableConvLayer<T>& layer, const Tensor<T>& x,
                                                const Tensor<T>& grad_out) {
    const SamplingGeometry g = layer.geometry();
    check_deformable(g);
    const Shape& s = x.shape();
    const Shape os = layer.main.output_shape(s);
    require_same_shape(grad_out.shape(), os, "deformable_conv_backward");

    const Tensor<T> offsets = conv2d_forward(layer.offset_branch, x);
    require_same_shape(offsets.shape(), Shape{os.n, 2 * g.kernel * g.kernel, os.h, os.w}, "deformable offsets");
    const std::size_t total = os.n * os.spatial();
    const std::size_t kk = g.kernel * g.kernel;
    const auto taps = build_taps(offsets, s, g);
    const auto rows = deformable_im2row(x, taps, g.kernel, total);

    DeformableConvGrads<T> out;
    const auto grad_rows = rows_backward(rows, layer.main, grad_out, out.weight, out.bias);

    // Scatter into the input through the bilinear weights, and into the offsets
    // through the derivative of the weights with respect to the coordinate.
    Tensor<T> gx(s);
    Tensor<T> goff(offsets.shape());
    const std::size_t pixels = os.spatial();
    const std::size_t cols = s.c * kk;
    for (std::size_t n = 0; n < total; ++n) {
        const std::size_t b = n / pixels, p = n % pixels;
        const T* gr = grad_rows.data() + n * cols;
        const Corners<T>* tp = taps.data() + n * kk;
        for (std::size_t m = 0; m < kk; ++m) {
            const Corners<T>& t = tp[m];
            T gdx(0), gdy(0);
            for (std::size_t c = 0; c < s.c; ++c) {
                const T gv = gr[c * kk + m];
                const T* xp = x.plane(b, c);
                T* gp = gx.plane(b, c);
                for (int q = 0; q < 4; ++q)
                    if (t.idx[q] >= 0) gp[t.idx[q]] += gv * t.w[q];
                const T v00 = corner_value(xp, t.idx[0]), v01 = corner_value(xp, t.idx[1]);
                const T v10 = corner_value(xp, t.idx[2]), v11 = corner_value(xp, t.idx[3]);
                gdx += gv * ((T(1) - t.fy) * (v01 - v00) + t.fy * (v11 - v10));
                gdy += gv * ((T(1) - t.fx) * (v10 - v00) + t.fx * (v11 - v01));
            }
            goff.plane(b, 2 * m)[p] = t.clamped_x ? T(0) : gdx;
            goff.plane(b, 2 * m + 1)[p] = t.clamped_y ? T(0) : gdy;
        }
    }

    ConvGrads<T> branch = conv2d_backward(layer.offset_branch, x, goff);
    accumulate(gx, branch.x);
    out.x = std::move(gx);
    out.offset_weight = std::move(branch.weight);
    out.offset_bias = std::move(branch.bias);
    return out;
}

template <typename T>
bool taps_away_from_kinks(const Tensor<T>& offsets, std::size_t b, std::size_t oy, std::size_t ox,
                          std::size_t height, std::size_t width, const SamplingGeometry& geom, double margin) {
    const std::size_t kk = geom.kernel * geom.kernel;
    const double lo = -static_cast<double>(geom.pad);
    const double hi_x = static_cast<double>(width) - 1.0 + static_cast<double>(geom.pad);
    const double hi_y = static_cast<double>(height) - 1.0 + static_cast<double>(geom.pad);
    auto near_int = [margin](double v) { return std::abs(v - std::round(v)) < margin; };
    for (std::size_t m = 0; m < kk; ++m) {
        const std::size_t i = m / geom.kernel, j = m % geom.kernel;
        const double cx = static_cast<double>(ox * geom.stride + j) - static_cast<double>(geom.pad) +
                          static_cast<double>(offsets.at(b, 2 * m, oy, ox));
        const double cy = static_cast<double>(oy * geom.stride + i) - static_cast<double>(geom.pad) +
                          static_cast<double>(offsets.at(b, 2 * m + 1, oy, ox));
        if (cx < lo + margin || cx > hi_x - margin || cy < lo + margin || cy > hi_y - margin) return false;
        if (near_int(cx) || near_int(cy)) return false;
    }
    return true;
}

#define DRNET_INSTANTIATE_CONV(T)                                                                             \
    template struct ConvLayer<T>;                                                                             \
    template struct DeformableConvLayer<T>;                                                                   \
    template Tensor<T> conv2d_forward(const ConvLayer<T>&, const Tensor<T>&);                                  \
    template ConvGrads<T> conv2d_backward(const ConvLayer<T>&, const Tensor<T>&, const Tensor<T>&);          \
    template T deformable_sample(const Tensor<T>&, const Tensor<T>&, std::size_t, std::size_t, std::size_t,   \
                                 std::size_t, std::size_t, std::size_t, const SamplingGeometry&);             \
    template Tensor<T> deformable_conv_forward(const DeformableConvLayer<T>&, const Tensor<T>&);              \
    template Tensor<T> deformable_conv_with_offsets(const ConvLayer<T>&, const Tensor<T>&, const Tensor<T>&); \
    template DeformableConvGrads<T> deformable_conv_backward(const DeformableConvLayer<T>&, const Tensor<T>&, \
                                                             const Tensor<T>&);                               \
    template bool taps_away_from_kinks(const Tensor<T>&, std::size_t, std::size_t, std::size_t, std::size_t,  \
                                       std::size_t, const SamplingGeometry&, double);

DRNET_INSTANTIATE_CONV(float)
DRNET_INSTANTIATE_CONV(double)

}  // namespace drnet::nn
