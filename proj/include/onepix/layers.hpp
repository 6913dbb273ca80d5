#pragma once

#include <algorithm>
#include <cstddef>
#include <variant>
#include <vector>

#include "onepix/errors.hpp"
#include "onepix/types.hpp"

namespace onepix {

// Layers operate on feature maps stored as FeatMat (one channel per row,
// pixel index p = y*w + x within a row). They are plain value types; all
// per-call state lives in an Activations workspace so a const layer stack is
// safe to evaluate from many threads at once.

// 2-D convolution, stride 1, zero padding k/2 (spatial size preserved).
// weight(o, (ci*k + ky)*k + kx) multiplies input channel ci at kernel row ky,
// kernel column kx.
template <class T>
struct Conv2d {
    int in_channels = 0;
    int out_channels = 0;
    int ksize = 3;
    FeatMat<T> weight;  // out_channels x in_channels*k*k
    Vector<T> bias;     // out_channels

    Conv2d() = default;
    Conv2d(int in_c, int out_c, int k)
        : in_channels(in_c), out_channels(out_c), ksize(k),
          weight(FeatMat<T>::Zero(out_c, in_c * k * k)), bias(Vector<T>::Zero(out_c)) {
        if (k % 2 == 0) throw ShapeError("conv kernel size must be odd");
    }

    Shape out_shape(const Shape& in) const {
        if (in.channels != in_channels) throw ShapeError("conv input channel mismatch");
        return Shape{out_channels, in.height, in.width};
    }
};

template <class T>
struct ReLU {
    Shape out_shape(const Shape& in) const { return in; }
};

// 2x2 max pooling, stride 2. Odd trailing rows/columns pool over the
// remaining 1-wide window, so output dims are ceil(in/2). First occurrence
// in row-major window order wins ties.
template <class T>
struct MaxPool2 {
    Shape out_shape(const Shape& in) const {
        return Shape{in.channels, (in.height + 1) / 2, (in.width + 1) / 2};
    }
};

// Fully connected layer on the flattened feature map. Flattening follows the
// FeatMat storage order: index = c*(h*w) + y*w + x.
template <class T>
struct Dense {
    int in_size = 0;
    int out_size = 0;
    FeatMat<T> weight;  // out_size x in_size
    Vector<T> bias;

    Dense() = default;
    Dense(int in, int out)
        : in_size(in), out_size(out), weight(FeatMat<T>::Zero(out, in)), bias(Vector<T>::Zero(out)) {}

    Shape out_shape(const Shape& in) const {
        if (in.size() != in_size) throw ShapeError("dense input size mismatch");
        return Shape{out_size, 1, 1};
    }
};

template <class T>
struct Softmax {
    Shape out_shape(const Shape& in) const {
        if (in.height != 1 || in.width != 1) throw ShapeError("softmax expects a flat input");
        return in;
    }
};

template <class T>
using Layer = std::variant<Conv2d<T>, ReLU<T>, MaxPool2<T>, Dense<T>, Softmax<T>>;

template <class T>
inline Shape layer_out_shape(const Layer<T>& layer, const Shape& in) {
    return std::visit([&](const auto& l) { return l.out_shape(in); }, layer);
}

// Per-call scratch space. feat[i] is the input of layer i; feat[L] the final
// output. Buffers keep their size across calls, so reusing one Activations
// across many forward passes avoids reallocation.
template <class T>
struct Activations {
    std::vector<FeatMat<T>> feat;
    std::vector<FeatMat<T>> col;            // im2col buffer per layer (convs only)
    std::vector<std::vector<int>> pool_src;  // winning source pixel per output (pools only)
};

namespace detail {

// Gather the k*k neighborhood of every pixel into columns of `col`
// (in_c*k*k rows, h*w cols). Out-of-bounds taps are zero.
template <class T>
inline void im2col(const FeatMat<T>& x, int h, int w, int k, FeatMat<T>& col) {
    const int pad = k / 2;
    const int in_c = static_cast<int>(x.rows());
    col.resize(static_cast<Eigen::Index>(in_c) * k * k, static_cast<Eigen::Index>(h) * w);
    for (int ci = 0; ci < in_c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (ci * k + ky) * k + kx;
                auto dst = col.row(row);
                const int dy = ky - pad;
                const int dx = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int ys = y + dy;
                    if (ys < 0 || ys >= h) {
                        dst.segment(static_cast<Eigen::Index>(y) * w, w).setZero();
                        continue;
                    }
                    // Valid x range for this tap: xs = x + dx in [0, w).
                    const int x0 = dx < 0 ? -dx : 0;
                    const int x1 = dx > 0 ? w - dx : w;
                    if (x0 > 0) dst.segment(static_cast<Eigen::Index>(y) * w, x0).setZero();
                    if (x1 < w) dst.segment(static_cast<Eigen::Index>(y) * w + x1, w - x1).setZero();
                    if (x1 > x0)
                        dst.segment(static_cast<Eigen::Index>(y) * w + x0, x1 - x0) =
                            x.row(ci).segment(static_cast<Eigen::Index>(ys) * w + x0 + dx, x1 - x0);
                }
            }
        }
    }
}

// Scatter-add transpose of im2col.
template <class T>
inline void col2im_add(const FeatMat<T>& dcol, int h, int w, int k, FeatMat<T>& dx) {
    const int pad = k / 2;
    const int in_c = static_cast<int>(dx.rows());
    for (int ci = 0; ci < in_c; ++ci) {
        for (int ky = 0; ky < k; ++ky) {
            for (int kx = 0; kx < k; ++kx) {
                const int row = (ci * k + ky) * k + kx;
                const int dy = ky - pad;
                const int dx_off = kx - pad;
                for (int y = 0; y < h; ++y) {
                    const int ys = y + dy;
                    if (ys < 0 || ys >= h) continue;
                    const int x0 = dx_off < 0 ? -dx_off : 0;
                    const int x1 = dx_off > 0 ? w - dx_off : w;
                    if (x1 > x0)
                        dx.row(ci).segment(static_cast<Eigen::Index>(ys) * w + x0 + dx_off, x1 - x0) +=
                            dcol.row(row).segment(static_cast<Eigen::Index>(y) * w + x0, x1 - x0);
                }
            }
        }
    }
}

}  // namespace detail

// ---- forward ----
// x has shape `in`; y is resized to layer_out_shape(layer, in).

template <class T>
inline void layer_forward(const Conv2d<T>& l, const Shape& in, const FeatMat<T>& x, FeatMat<T>& y,
                          FeatMat<T>& col) {
    detail::im2col(x, in.height, in.width, l.ksize, col);
    y.noalias() = l.weight * col;
    y.colwise() += l.bias;
}

template <class T>
inline void layer_forward(const ReLU<T>&, const Shape&, const FeatMat<T>& x, FeatMat<T>& y) {
    y = x.cwiseMax(T(0));
}

template <class T>
inline void layer_forward(const MaxPool2<T>&, const Shape& in, const FeatMat<T>& x, FeatMat<T>& y,
                          std::vector<int>& src) {
    const int oh = (in.height + 1) / 2;
    const int ow = (in.width + 1) / 2;
    y.resize(in.channels, static_cast<Eigen::Index>(oh) * ow);
    src.assign(static_cast<std::size_t>(in.channels) * oh * ow, 0);
    for (int c = 0; c < in.channels; ++c) {
        for (int oy = 0; oy < oh; ++oy) {
            const int y0 = 2 * oy;
            const int y1 = std::min(y0 + 2, in.height);
            for (int ox = 0; ox < ow; ++ox) {
                const int x0 = 2 * ox;
                const int x1 = std::min(x0 + 2, in.width);
                T best = x(c, static_cast<Eigen::Index>(y0) * in.width + x0);
                int best_p = y0 * in.width + x0;
                for (int yy = y0; yy < y1; ++yy)
                    for (int xx = x0; xx < x1; ++xx) {
                        const int p = yy * in.width + xx;
                        if (x(c, p) > best) {
                            best = x(c, p);
                            best_p = p;
                        }
                    }
                y(c, static_cast<Eigen::Index>(oy) * ow + ox) = best;
                src[static_cast<std::size_t>(c) * oh * ow + static_cast<std::size_t>(oy) * ow + ox] = best_p;
            }
        }
    }
}

template <class T>
inline void layer_forward(const Dense<T>& l, const Shape&, const FeatMat<T>& x, FeatMat<T>& y) {
    // FeatMat is row-major, so x's storage is already the flattened vector.
    Eigen::Map<const Vector<T>> v(x.data(), x.size());
    y.resize(l.out_size, 1);
    y.col(0).noalias() = l.weight * v + l.bias;
}

template <class T>
inline void layer_forward(const Softmax<T>&, const Shape&, const FeatMat<T>& x, FeatMat<T>& y) {
    const T m = x.maxCoeff();
    y = (x.array() - m).exp().matrix();
    y /= y.sum();
}

// ---- backward (input gradients) ----
// Given dy = dL/dy, accumulate nothing: dx is overwritten.

template <class T>
inline void layer_backward(const Conv2d<T>& l, const Shape& in, const FeatMat<T>& /*x*/,
                           const FeatMat<T>& /*y*/, const FeatMat<T>& dy, FeatMat<T>& dx,
                           FeatMat<T>& dcol) {
    dcol.noalias() = l.weight.transpose() * dy;
    dx = FeatMat<T>::Zero(in.channels, in.pixels());
    detail::col2im_add(dcol, in.height, in.width, l.ksize, dx);
}

template <class T>
inline void layer_backward(const ReLU<T>&, const Shape&, const FeatMat<T>& x, const FeatMat<T>& /*y*/,
                           const FeatMat<T>& dy, FeatMat<T>& dx) {
    // Subgradient 0 at the kink.
    dx = (x.array() > T(0)).select(dy, FeatMat<T>::Zero(dy.rows(), dy.cols()));
}

template <class T>
inline void layer_backward(const MaxPool2<T>&, const Shape& in, const FeatMat<T>& /*x*/,
                           const FeatMat<T>& /*y*/, const FeatMat<T>& dy, FeatMat<T>& dx,
                           const std::vector<int>& src) {
    dx = FeatMat<T>::Zero(in.channels, in.pixels());
    const int opix = static_cast<int>(dy.cols());
    for (int c = 0; c < in.channels; ++c)
        for (int p = 0; p < opix; ++p)
            dx(c, src[static_cast<std::size_t>(c) * opix + p]) += dy(c, p);
}

template <class T>
inline void layer_backward(const Dense<T>& l, const Shape& in, const FeatMat<T>& /*x*/,
                           const FeatMat<T>& /*y*/, const FeatMat<T>& dy, FeatMat<T>& dx) {
    Vector<T> dv = l.weight.transpose() * dy.col(0);
    dx = Eigen::Map<const FeatMat<T>>(dv.data(), in.channels, in.pixels());
}

template <class T>
inline void layer_backward(const Softmax<T>&, const Shape&, const FeatMat<T>& /*x*/, const FeatMat<T>& y,
                           const FeatMat<T>& dy, FeatMat<T>& dx) {
    const T dot = (y.array() * dy.array()).sum();
    dx = (y.array() * (dy.array() - dot)).matrix();
}

// ---- parameter gradients ----

template <class T>
struct ParamGrads {
    FeatMat<T> weight;
    Vector<T> bias;
    bool used = false;
};

template <class T>
inline void layer_param_grads(const Conv2d<T>& l, const FeatMat<T>& col, const FeatMat<T>& dy,
                              ParamGrads<T>& g) {
    if (!g.used) {
        g.weight = FeatMat<T>::Zero(l.weight.rows(), l.weight.cols());
        g.bias = Vector<T>::Zero(l.bias.size());
        g.used = true;
    }
    g.weight.noalias() += dy * col.transpose();
    g.bias.noalias() += dy.rowwise().sum();
}

template <class T>
inline void layer_param_grads(const Dense<T>& l, const FeatMat<T>& x, const FeatMat<T>& dy,
                              ParamGrads<T>& g) {
    if (!g.used) {
        g.weight = FeatMat<T>::Zero(l.weight.rows(), l.weight.cols());
        g.bias = Vector<T>::Zero(l.bias.size());
        g.used = true;
    }
    Eigen::Map<const Vector<T>> v(x.data(), x.size());
    g.weight.noalias() += dy.col(0) * v.transpose();
    g.bias.noalias() += dy.col(0);
}

}  // namespace onepix
