#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>

#include "ran/rng.hpp"
#include "ran/tensor.hpp"

namespace ran {

enum class Mode { train, infer };

enum class Activation { sigmoid, tanh, relu };

inline const char* activation_name(Activation a) {
    switch (a) {
        case Activation::sigmoid: return "sigmoid";
        case Activation::tanh: return "tanh";
        case Activation::relu: return "relu";
    }
    return "?";
}

// ---------------------------------------------------------------------------
// Pointwise activations
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> pointwise(Activation kind, const TensorT<T>& x) {
    TensorT<T> y(x.shape);
    const size_t n = x.data.size();
    switch (kind) {
        case Activation::sigmoid:
            for (size_t i = 0; i < n; ++i) y.data[i] = T(1) / (T(1) + std::exp(-x.data[i]));
            break;
        case Activation::tanh:
            for (size_t i = 0; i < n; ++i) y.data[i] = std::tanh(x.data[i]);
            break;
        case Activation::relu:
            for (size_t i = 0; i < n; ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
            break;
    }
    debug_check_finite(y, "pointwise");
    return y;
}

/// Accumulates dL/dx into gx given the op OUTPUT y (every supported
/// activation's derivative is a function of its output).
template <typename T>
void pointwise_backward(Activation kind, const TensorT<T>& y, const TensorT<T>& gy, TensorT<T>& gx) {
    if (gx.shape != y.shape) gx = TensorT<T>(y.shape);
    const size_t n = y.data.size();
    switch (kind) {
        case Activation::sigmoid:
            for (size_t i = 0; i < n; ++i) gx.data[i] += gy.data[i] * y.data[i] * (T(1) - y.data[i]);
            break;
        case Activation::tanh:
            for (size_t i = 0; i < n; ++i) gx.data[i] += gy.data[i] * (T(1) - y.data[i] * y.data[i]);
            break;
        case Activation::relu:
            for (size_t i = 0; i < n; ++i) gx.data[i] += y.data[i] > T(0) ? gy.data[i] : T(0);
            break;
    }
}

// ---------------------------------------------------------------------------
// 3x3 same convolution over H x W x C maps (zero padded by one pixel)
// ---------------------------------------------------------------------------

template <typename T>
inline void check_conv_shapes(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.shape.rank != 3)
        throw ShapeError("conv2d_3x3: input must be HxWxC, got " + x.shape.str());
    if (w.shape.rank != 4 || w.shape[0] != 3 || w.shape[1] != 3)
        throw ShapeError("conv2d_3x3: weights must be 3x3xCinxCout, got " + w.shape.str());
    if (w.shape[2] != x.shape[2])
        throw ShapeError("conv2d_3x3: input channel dim " + std::to_string(x.shape[2]) +
                         " != weight Cin dim " + std::to_string(w.shape[2]));
    if (b.shape.rank != 1 || b.shape[0] != w.shape[3])
        throw ShapeError("conv2d_3x3: bias dim " + b.shape.str() + " != weight Cout dim " +
                         std::to_string(w.shape[3]));
}

template <typename T>
TensorT<T> conv2d_3x3(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    check_conv_shapes(x, w, b);
    const int h = x.shape[0], wid = x.shape[1], cin = x.shape[2], cout = w.shape[3];
    TensorT<T> y(Shape(h, wid, cout));
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < wid; ++j) {
            T* out = &y.data[(static_cast<size_t>(i) * wid + j) * cout];
            for (int o = 0; o < cout; ++o) out[o] = b.data[static_cast<size_t>(o)];
            for (int dy = -1; dy <= 1; ++dy) {
                const int ii = i + dy;
                if (ii < 0 || ii >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int jj = j + dx;
                    if (jj < 0 || jj >= wid) continue;
                    const T* xp = &x.data[(static_cast<size_t>(ii) * wid + jj) * cin];
                    const T* wp = &w.data[((static_cast<size_t>(dy + 1) * 3 + (dx + 1)) * cin) * cout];
                    for (int c = 0; c < cin; ++c) {
                        const T xv = xp[c];
                        const T* wrow = wp + static_cast<size_t>(c) * cout;
                        for (int o = 0; o < cout; ++o) out[o] += xv * wrow[o];
                    }
                }
            }
        }
    }
    debug_check_finite(y, "conv2d_3x3");
    return y;
}

/// Accumulates into gw, gb and (when gx != nullptr) gx.
template <typename T>
void conv2d_3x3_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                         TensorT<T>* gx, TensorT<T>& gw, TensorT<T>& gb) {
    if (x.shape.rank != 3 || w.shape.rank != 4 || w.shape[2] != x.shape[2])
        throw ShapeError("conv2d_3x3_backward: input " + x.shape.str() + " / weight " + w.shape.str());
    const int h = x.shape[0], wid = x.shape[1], cin = x.shape[2], cout = w.shape[3];
    if (gy.shape != Shape(h, wid, cout))
        throw ShapeError("conv2d_3x3_backward: upstream grad shape " + gy.shape.str() +
                         " != " + Shape(h, wid, cout).str());
    if (gw.shape != w.shape) gw = TensorT<T>(w.shape);
    if (gb.shape != Shape(cout)) gb = TensorT<T>(Shape(cout));
    if (gx && gx->shape != x.shape) *gx = TensorT<T>(x.shape);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < wid; ++j) {
            const T* gout = &gy.data[(static_cast<size_t>(i) * wid + j) * cout];
            for (int o = 0; o < cout; ++o) gb.data[static_cast<size_t>(o)] += gout[o];
            for (int dy = -1; dy <= 1; ++dy) {
                const int ii = i + dy;
                if (ii < 0 || ii >= h) continue;
                for (int dx = -1; dx <= 1; ++dx) {
                    const int jj = j + dx;
                    if (jj < 0 || jj >= wid) continue;
                    const size_t xoff = (static_cast<size_t>(ii) * wid + jj) * cin;
                    const size_t woff = (static_cast<size_t>(dy + 1) * 3 + (dx + 1)) * cin * cout;
                    for (int c = 0; c < cin; ++c) {
                        const T xv = x.data[xoff + static_cast<size_t>(c)];
                        T* gwrow = &gw.data[woff + static_cast<size_t>(c) * cout];
                        const T* wrow = &w.data[woff + static_cast<size_t>(c) * cout];
                        T acc = T(0);
                        for (int o = 0; o < cout; ++o) {
                            gwrow[o] += xv * gout[o];
                            acc += wrow[o] * gout[o];
                        }
                        if (gx) gx->data[xoff + static_cast<size_t>(c)] += acc;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// 1x1 channel-mapping convolution (class head): y[i,j,:] = x[i,j,:] W + b
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> conv1x1(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (x.shape.rank != 3) throw ShapeError("conv1x1: input must be HxWxC, got " + x.shape.str());
    if (w.shape.rank != 2 || w.shape[0] != x.shape[2])
        throw ShapeError("conv1x1: weight " + w.shape.str() + " does not map channel dim " +
                         std::to_string(x.shape[2]));
    if (b.shape.rank != 1 || b.shape[0] != w.shape[1])
        throw ShapeError("conv1x1: bias dim mismatch");
    const int h = x.shape[0], wid = x.shape[1], cin = x.shape[2], cout = w.shape[1];
    TensorT<T> y(Shape(h, wid, cout));
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < wid; ++j) {
            const T* xp = &x.data[(static_cast<size_t>(i) * wid + j) * cin];
            T* out = &y.data[(static_cast<size_t>(i) * wid + j) * cout];
            for (int o = 0; o < cout; ++o) out[o] = b.data[static_cast<size_t>(o)];
            for (int c = 0; c < cin; ++c) {
                const T xv = xp[c];
                const T* wrow = &w.data[static_cast<size_t>(c) * cout];
                for (int o = 0; o < cout; ++o) out[o] += xv * wrow[o];
            }
        }
    }
    debug_check_finite(y, "conv1x1");
    return y;
}

template <typename T>
void conv1x1_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                      TensorT<T>* gx, TensorT<T>& gw, TensorT<T>& gb) {
    const int h = x.shape[0], wid = x.shape[1], cin = x.shape[2], cout = w.shape[1];
    if (gw.shape != w.shape) gw = TensorT<T>(w.shape);
    if (gb.shape != Shape(cout)) gb = TensorT<T>(Shape(cout));
    if (gx && gx->shape != x.shape) *gx = TensorT<T>(x.shape);
    for (int i = 0; i < h; ++i) {
        for (int j = 0; j < wid; ++j) {
            const T* xp = &x.data[(static_cast<size_t>(i) * wid + j) * cin];
            const T* gout = &gy.data[(static_cast<size_t>(i) * wid + j) * cout];
            for (int o = 0; o < cout; ++o) gb.data[static_cast<size_t>(o)] += gout[o];
            for (int c = 0; c < cin; ++c) {
                T* gwrow = &gw.data[static_cast<size_t>(c) * cout];
                const T* wrow = &w.data[static_cast<size_t>(c) * cout];
                T acc = T(0);
                for (int o = 0; o < cout; ++o) {
                    gwrow[o] += xp[c] * gout[o];
                    acc += wrow[o] * gout[o];
                }
                if (gx) gx->data[(static_cast<size_t>(i) * wid + j) * cin + static_cast<size_t>(c)] += acc;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Dense affine map: y = flatten(x) W + b, W is D x K
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> dense(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& b) {
    if (w.shape.rank != 2)
        throw ShapeError("dense: weights must be DxK, got " + w.shape.str());
    const int d = w.shape[0], k = w.shape[1];
    if (x.numel() != d)
        throw ShapeError("dense: input size " + std::to_string(x.numel()) + " != weight input dim " +
                         std::to_string(d));
    if (b.shape.rank != 1 || b.shape[0] != k) throw ShapeError("dense: bias dim mismatch");
    TensorT<T> y(Shape(k));
    for (int o = 0; o < k; ++o) y.data[static_cast<size_t>(o)] = b.data[static_cast<size_t>(o)];
    for (int c = 0; c < d; ++c) {
        const T xv = x.data[static_cast<size_t>(c)];
        const T* wrow = &w.data[static_cast<size_t>(c) * k];
        for (int o = 0; o < k; ++o) y.data[static_cast<size_t>(o)] += xv * wrow[o];
    }
    debug_check_finite(y, "dense");
    return y;
}

template <typename T>
void dense_backward(const TensorT<T>& x, const TensorT<T>& w, const TensorT<T>& gy,
                    TensorT<T>* gx, TensorT<T>& gw, TensorT<T>& gb) {
    const int d = w.shape[0], k = w.shape[1];
    if (gw.shape != w.shape) gw = TensorT<T>(w.shape);
    if (gb.shape != Shape(k)) gb = TensorT<T>(Shape(k));
    if (gx && gx->shape != x.shape) *gx = TensorT<T>(x.shape);
    for (int o = 0; o < k; ++o) gb.data[static_cast<size_t>(o)] += gy.data[static_cast<size_t>(o)];
    for (int c = 0; c < d; ++c) {
        const T xv = x.data[static_cast<size_t>(c)];
        T* gwrow = &gw.data[static_cast<size_t>(c) * k];
        const T* wrow = &w.data[static_cast<size_t>(c) * k];
        T acc = T(0);
        for (int o = 0; o < k; ++o) {
            gwrow[o] += xv * gy.data[static_cast<size_t>(o)];
            acc += wrow[o] * gy.data[static_cast<size_t>(o)];
        }
        if (gx) gx->data[static_cast<size_t>(c)] += acc;
    }
}

// ---------------------------------------------------------------------------
// Inverted dropout: survivors are scaled at train time, inference is identity
// ---------------------------------------------------------------------------

template <typename T>
struct DropoutMask {
    std::vector<uint8_t> keep;
    T scale = T(1);
    bool active = false;
};

template <typename T>
TensorT<T> dropout(const TensorT<T>& x, double rate, Mode mode, Rng* rng, DropoutMask<T>* mask) {
    if (rate < 0.0 || rate >= 1.0)
        throw Error("dropout: rate must be in [0, 1), got " + std::to_string(rate));
    if (mode == Mode::infer || rate == 0.0) {
        if (mask) mask->active = false;
        return x;
    }
    if (!rng) throw Error("dropout: train mode requires an rng");
    TensorT<T> y(x.shape);
    const T scale = T(1.0 / (1.0 - rate));
    std::vector<uint8_t> keep(x.data.size());
    for (size_t i = 0; i < x.data.size(); ++i) {
        keep[i] = rng->uniform() >= rate ? 1 : 0;
        y.data[i] = keep[i] ? x.data[i] * scale : T(0);
    }
    if (mask) {
        mask->keep = std::move(keep);
        mask->scale = scale;
        mask->active = true;
    }
    return y;
}

/// Re-applies a recorded mask (frozen-mask mode for gradient checking).
template <typename T>
TensorT<T> dropout_frozen(const TensorT<T>& x, const DropoutMask<T>& mask) {
    if (!mask.active) return x;
    TensorT<T> y(x.shape);
    for (size_t i = 0; i < x.data.size(); ++i)
        y.data[i] = mask.keep[i] ? x.data[i] * mask.scale : T(0);
    return y;
}

template <typename T>
void dropout_backward(const DropoutMask<T>& mask, const TensorT<T>& gy, TensorT<T>& gx) {
    if (gx.shape != gy.shape) gx = TensorT<T>(gy.shape);
    if (!mask.active) {
        for (size_t i = 0; i < gy.data.size(); ++i) gx.data[i] += gy.data[i];
        return;
    }
    for (size_t i = 0; i < gy.data.size(); ++i)
        gx.data[i] += mask.keep[i] ? gy.data[i] * mask.scale : T(0);
}

// ---------------------------------------------------------------------------
// 2x2 average pooling (stride 2); used by the patch encoder between convs
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> avgpool2x2(const TensorT<T>& x) {
    if (x.shape.rank != 3) throw ShapeError("avgpool2x2: input must be HxWxC");
    const int h = x.shape[0], w = x.shape[1], c = x.shape[2];
    if (h % 2 != 0) throw ShapeError("avgpool2x2: height " + std::to_string(h) + " not even");
    if (w % 2 != 0) throw ShapeError("avgpool2x2: width " + std::to_string(w) + " not even");
    TensorT<T> y(Shape(h / 2, w / 2, c));
    for (int i = 0; i < h / 2; ++i) {
        for (int j = 0; j < w / 2; ++j) {
            for (int ch = 0; ch < c; ++ch) {
                const T s = x.at(2 * i, 2 * j, ch) + x.at(2 * i, 2 * j + 1, ch) +
                            x.at(2 * i + 1, 2 * j, ch) + x.at(2 * i + 1, 2 * j + 1, ch);
                y.at(i, j, ch) = s * T(0.25);
            }
        }
    }
    return y;
}

template <typename T>
void avgpool2x2_backward(const Shape& in_shape, const TensorT<T>& gy, TensorT<T>& gx) {
    if (gx.shape != in_shape) gx = TensorT<T>(in_shape);
    const int h = in_shape[0], w = in_shape[1], c = in_shape[2];
    for (int i = 0; i < h / 2; ++i) {
        for (int j = 0; j < w / 2; ++j) {
            for (int ch = 0; ch < c; ++ch) {
                const T g = gy.at(i, j, ch) * T(0.25);
                gx.at(2 * i, 2 * j, ch) += g;
                gx.at(2 * i, 2 * j + 1, ch) += g;
                gx.at(2 * i + 1, 2 * j, ch) += g;
                gx.at(2 * i + 1, 2 * j + 1, ch) += g;
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Softmax over the last dimension (numerically stable)
// ---------------------------------------------------------------------------

template <typename T>
TensorT<T> softmax_lastdim(const TensorT<T>& z) {
    if (z.shape.rank < 1) throw ShapeError("softmax_lastdim: rank-0 input");
    const int k = z.shape[z.shape.rank - 1];
    const int64_t rows = z.numel() / k;
    TensorT<T> p(z.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const T* zi = &z.data[static_cast<size_t>(r) * k];
        T* pi = &p.data[static_cast<size_t>(r) * k];
        T m = zi[0];
        for (int i = 1; i < k; ++i) m = std::max(m, zi[i]);
        T sum = T(0);
        for (int i = 0; i < k; ++i) {
            pi[i] = std::exp(zi[i] - m);
            sum += pi[i];
        }
        for (int i = 0; i < k; ++i) pi[i] /= sum;
    }
    return p;
}

} // namespace ran
