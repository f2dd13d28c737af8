#include "cfrep/ops.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>

namespace cfrep::ops {

namespace {

template <typename T>
using RowMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using MatMap = Eigen::Map<RowMat<T>>;
template <typename T>
using ConstMatMap = Eigen::Map<const RowMat<T>>;

template <typename T>
bool any_grad(const BasicTensor<T>& a);

template <typename T, typename... Ts>
bool needs_grad(const BasicGraph<T>& g, const BasicTensor<T>& a, const Ts&... rest);

template <typename T>
bool any_grad(const BasicTensor<T>& a) {
    return a.defined() && a.requires_grad();
}

template <typename T, typename... Rest>
bool any_grad(const BasicTensor<T>& a, const Rest&... rest) {
    return any_grad(a) || any_grad(rest...);
}

template <typename T, typename... Ts>
bool needs_grad(const BasicGraph<T>& g, const BasicTensor<T>& a, const Ts&... rest) {
    if (!g.recording()) return false;
    if constexpr (sizeof...(rest) == 0) {
        return any_grad(a);
    } else {
        return any_grad(a, rest...);
    }
}

void require_rank(const Shape& s, std::size_t rank, const char* op, const char* arg) {
    if (s.size() != rank) {
        throw ShapeError(std::string(op) + ": " + arg + " must have rank " + std::to_string(rank) +
                         ", got shape " + shape_str(s));
    }
}

/// Geometry shared by im2col/col2im: an image of `channels` x height x
/// width sampled by a kh x kw window at the given stride and padding,
/// producing an out_h x out_w grid of window positions per sample.
struct Patches {
    std::size_t batch, channels, height, width, kh, kw, stride, pad, out_h, out_w;
    std::size_t rows() const { return channels * kh * kw; }
    std::size_t cols() const { return batch * out_h * out_w; }
};

// col[(c*kh + i)*kw + j][n*P + oy*out_w + ox] = image[n][c][oy*s - pad + i][ox*s - pad + j]
template <typename T>
void im2col(const Patches& p, const T* image, T* col) {
    const std::size_t plane = p.out_h * p.out_w;
    const std::size_t ncols = p.cols();
    for (std::size_t c = 0; c < p.channels; ++c) {
        for (std::size_t i = 0; i < p.kh; ++i) {
            for (std::size_t j = 0; j < p.kw; ++j) {
                T* row = col + ((c * p.kh + i) * p.kw + j) * ncols;
                for (std::size_t n = 0; n < p.batch; ++n) {
                    const T* src = image + (n * p.channels + c) * p.height * p.width;
                    T* dst = row + n * plane;
                    for (std::size_t oy = 0; oy < p.out_h; ++oy) {
                        const long iy = static_cast<long>(oy * p.stride + i) - static_cast<long>(p.pad);
                        T* drow = dst + oy * p.out_w;
                        if (iy < 0 || iy >= static_cast<long>(p.height)) {
                            std::fill(drow, drow + p.out_w, T(0));
                            continue;
                        }
                        const T* srow = src + static_cast<std::size_t>(iy) * p.width;
                        for (std::size_t ox = 0; ox < p.out_w; ++ox) {
                            const long ix = static_cast<long>(ox * p.stride + j) - static_cast<long>(p.pad);
                            drow[ox] = (ix < 0 || ix >= static_cast<long>(p.width)) ? T(0)
                                                                                   : srow[ix];
                        }
                    }
                }
            }
        }
    }
}

// Adjoint of im2col: accumulates every column entry back onto its pixel.
template <typename T>
void col2im(const Patches& p, const T* col, T* image) {
    const std::size_t plane = p.out_h * p.out_w;
    const std::size_t ncols = p.cols();
    for (std::size_t c = 0; c < p.channels; ++c) {
        for (std::size_t i = 0; i < p.kh; ++i) {
            for (std::size_t j = 0; j < p.kw; ++j) {
                const T* row = col + ((c * p.kh + i) * p.kw + j) * ncols;
                for (std::size_t n = 0; n < p.batch; ++n) {
                    T* dst = image + (n * p.channels + c) * p.height * p.width;
                    const T* src = row + n * plane;
                    for (std::size_t oy = 0; oy < p.out_h; ++oy) {
                        const long iy = static_cast<long>(oy * p.stride + i) - static_cast<long>(p.pad);
                        if (iy < 0 || iy >= static_cast<long>(p.height)) continue;
                        T* drow = dst + static_cast<std::size_t>(iy) * p.width;
                        const T* srow = src + oy * p.out_w;
                        for (std::size_t ox = 0; ox < p.out_w; ++ox) {
                            const long ix = static_cast<long>(ox * p.stride + j) - static_cast<long>(p.pad);
                            if (ix < 0 || ix >= static_cast<long>(p.width)) continue;
                            drow[ix] += srow[ox];
                        }
                    }
                }
            }
        }
    }
}

// [N, C, P] <-> [C, N*P]
template <typename T>
void batch_to_channel_major(const T* src, std::size_t n, std::size_t c, std::size_t plane, T* dst) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(src + (b * c + ch) * plane, plane, dst + ch * n * plane + b * plane);
}

template <typename T>
void channel_major_to_batch(const T* src, std::size_t n, std::size_t c, std::size_t plane, T* dst) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch)
            std::copy_n(src + ch * n * plane + b * plane, plane, dst + (b * c + ch) * plane);
}

template <typename T>
void add_channel_bias(T* out, const T* bias, std::size_t n, std::size_t c, std::size_t plane) {
    for (std::size_t b = 0; b < n; ++b)
        for (std::size_t ch = 0; ch < c; ++ch) {
            T* o = out + (b * c + ch) * plane;
            const T v = bias[ch];
            for (std::size_t q = 0; q < plane; ++q) o[q] += v;
        }
}

template <typename T>
void accumulate_channel_bias_grad(const T* dout, T* dbias, std::size_t n, std::size_t c, std::size_t plane) {
    for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t b = 0; b < n; ++b) {
            const T* o = dout + (b * c + ch) * plane;
            for (std::size_t q = 0; q < plane; ++q) acc += o[q];
        }
        dbias[ch] += static_cast<T>(acc);
    }
}

template <typename T>
void check_bias(const BasicTensor<T>& bias, std::size_t expected, const char* op) {
    if (!bias.defined()) return;
    if (bias.rank() != 1 || bias.dim(0) != expected) {
        throw ShapeError(std::string(op) + ": bias must be [" + std::to_string(expected) + "], got " +
                         shape_str(bias.shape()));
    }
}

}  // namespace

template <typename T>
BasicTensor<T> conv2d(BasicGraph<T>& g, const BasicTensor<T>& input, const BasicTensor<T>& kernel,
                      const BasicTensor<T>& bias, std::size_t stride, std::size_t padding) {
    require_rank(input.shape(), 4, "conv2d", "input");
    require_rank(kernel.shape(), 4, "conv2d", "kernel");
    if (stride < 1) throw ShapeError("conv2d: stride must be >= 1");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t f = kernel.dim(0), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(1) != c) {
        throw ShapeError("conv2d: kernel has " + std::to_string(kernel.dim(1)) + " input channels, input has " +
                         std::to_string(c));
    }
    if (kh > h + 2 * padding || kw > w + 2 * padding) {
        throw ShapeError("conv2d: kernel " + shape_str(kernel.shape()) + " larger than padded input " +
                         shape_str(input.shape()));
    }
    check_bias(bias, f, "conv2d");
    const Patches p{n, c, h, w, kh, kw, stride, padding, (h + 2 * padding - kh) / stride + 1,
                    (w + 2 * padding - kw) / stride + 1};
    const std::size_t plane = p.out_h * p.out_w;

    std::vector<T> col(p.rows() * p.cols());
    im2col(p, input.data(), col.data());
    std::vector<T> tmp(f * p.cols());
    MatMap<T>(tmp.data(), f, p.cols()).noalias() =
        ConstMatMap<T>(kernel.data(), f, p.rows()) * ConstMatMap<T>(col.data(), p.rows(), p.cols());

    BasicTensor<T> out(Shape{n, f, p.out_h, p.out_w});
    channel_major_to_batch(tmp.data(), n, f, plane, out.data());
    if (bias.defined()) add_channel_bias(out.data(), bias.data(), n, f, plane);

    if (needs_grad(g, input, kernel, bias)) {
        g.record(out, [=, col = std::move(col)]() mutable {
            std::vector<T> dtmp(f * p.cols());
            batch_to_channel_major(out.grad().data(), n, f, plane, dtmp.data());
            ConstMatMap<T> dt(dtmp.data(), f, p.cols());
            if (kernel.requires_grad()) {
                MatMap<T>(kernel.grad_buffer().data(), f, p.rows()).noalias() +=
                    dt * ConstMatMap<T>(col.data(), p.rows(), p.cols()).transpose();
            }
            if (any_grad(bias)) {
                accumulate_channel_bias_grad(out.grad().data(), bias.grad_buffer().data(), n, f, plane);
            }
            if (input.requires_grad()) {
                std::vector<T> dcol(p.rows() * p.cols());
                MatMap<T>(dcol.data(), p.rows(), p.cols()).noalias() =
                    ConstMatMap<T>(kernel.data(), f, p.rows()).transpose() * dt;
                col2im(p, dcol.data(), input.grad_buffer().data());
            }
        });
    }
    return out;
}

template <typename T>
BasicTensor<T> conv_transpose2d(BasicGraph<T>& g, const BasicTensor<T>& input,
                                const BasicTensor<T>& kernel, const BasicTensor<T>& bias,
                                std::size_t stride, std::size_t padding) {
    require_rank(input.shape(), 4, "conv_transpose2d", "input");
    require_rank(kernel.shape(), 4, "conv_transpose2d", "kernel");
    if (stride < 1) throw ShapeError("conv_transpose2d: stride must be >= 1");
    const std::size_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
    const std::size_t f = kernel.dim(1), kh = kernel.dim(2), kw = kernel.dim(3);
    if (kernel.dim(0) != c) {
        throw ShapeError("conv_transpose2d: kernel has " + std::to_string(kernel.dim(0)) +
                         " input channels, input has " + std::to_string(c));
    }
    const long oh = static_cast<long>((h - 1) * stride + kh) - 2 * static_cast<long>(padding);
    const long ow = static_cast<long>((w - 1) * stride + kw) - 2 * static_cast<long>(padding);
    if (oh <= 0 || ow <= 0) throw ShapeError("conv_transpose2d: padding leaves an empty output");
    check_bias(bias, f, "conv_transpose2d");
    // The output plays the role of the convolution's input image.
    const Patches p{n, f, static_cast<std::size_t>(oh), static_cast<std::size_t>(ow), kh, kw, stride, padding, h, w};
    const std::size_t in_plane = h * w;
    const std::size_t out_plane = p.height * p.width;
    const std::size_t fkk = p.rows();

    std::vector<T> xm(c * p.cols());
    batch_to_channel_major(input.data(), n, c, in_plane, xm.data());
    std::vector<T> col(fkk * p.cols());
    MatMap<T>(col.data(), fkk, p.cols()).noalias() =
        ConstMatMap<T>(kernel.data(), c, fkk).transpose() * ConstMatMap<T>(xm.data(), c, p.cols());

    BasicTensor<T> out(Shape{n, f, p.height, p.width});
    col2im(p, col.data(), out.data());
    if (bias.defined()) add_channel_bias(out.data(), bias.data(), n, f, out_plane);

    if (needs_grad(g, input, kernel, bias)) {
        g.record(out, [=, xm = std::move(xm)]() mutable {
            std::vector<T> dcol(fkk * p.cols());
            im2col(p, out.grad().data(), dcol.data());
            ConstMatMap<T> dc(dcol.data(), fkk, p.cols());
            if (kernel.requires_grad()) {
                MatMap<T>(kernel.grad_buffer().data(), c, fkk).noalias() +=
                    ConstMatMap<T>(xm.data(), c, p.cols()) * dc.transpose();
            }
            if (any_grad(bias)) {
                accumulate_channel_bias_grad(out.grad().data(), bias.grad_buffer().data(), n, f, out_plane);
            }
            if (input.requires_grad()) {
                std::vector<T> dxm(c * p.cols());
                MatMap<T>(dxm.data(), c, p.cols()).noalias() = ConstMatMap<T>(kernel.data(), c, fkk) * dc;
                std::vector<T> dx(input.numel());
                channel_major_to_batch(dxm.data(), n, c, in_plane, dx.data());
                auto& gi = input.grad_buffer();
                for (std::size_t i = 0; i < dx.size(); ++i) gi[i] += dx[i];
            }
        });
    }
    return out;
}

template <typename T>
BasicTensor<T> dense(BasicGraph<T>& g, const BasicTensor<T>& input, const BasicTensor<T>& weight,
                     const BasicTensor<T>& bias) {
    require_rank(input.shape(), 2, "dense", "input");
    require_rank(weight.shape(), 2, "dense", "weight");
    const std::size_t n = input.dim(0), d = input.dim(1), k = weight.dim(1);
    if (weight.dim(0) != d) {
        throw ShapeError("dense: input " + shape_str(input.shape()) + " and weight " + shape_str(weight.shape()) +
                         " have mismatched inner dimensions");
    }
    check_bias(bias, k, "dense");
    BasicTensor<T> out(Shape{n, k});
    MatMap<T> o(out.data(), n, k);
    o.noalias() = ConstMatMap<T>(input.data(), n, d) * ConstMatMap<T>(weight.data(), d, k);
    if (bias.defined()) {
        for (std::size_t r = 0; r < n; ++r)
            for (std::size_t j = 0; j < k; ++j) o(r, j) += bias[j];
    }
    if (needs_grad(g, input, weight, bias)) {
        g.record(out, [=]() mutable {
            ConstMatMap<T> dout(out.grad().data(), n, k);
            if (input.requires_grad()) {
                MatMap<T>(input.grad_buffer().data(), n, d).noalias() +=
                    dout * ConstMatMap<T>(weight.data(), d, k).transpose();
            }
            if (weight.requires_grad()) {
                MatMap<T>(weight.grad_buffer().data(), d, k).noalias() +=
                    ConstMatMap<T>(input.data(), n, d).transpose() * dout;
            }
            if (any_grad(bias)) {
                auto& gb = bias.grad_buffer();
                for (std::size_t j = 0; j < k; ++j) {
                    double acc = 0.0;
                    for (std::size_t r = 0; r < n; ++r) acc += dout(r, j);
                    gb[j] += static_cast<T>(acc);
                }
            }
        });
    }
    return out;
}

namespace {

/// Elementwise unary op: forward f(x), backward multiplies by df(x, y).
template <typename T, typename F, typename DF>
BasicTensor<T> unary(BasicGraph<T>& g, const BasicTensor<T>& x, F f, DF df) {
    BasicTensor<T> out(x.shape());
    auto xv = x.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < xv.size(); ++i) ov[i] = f(xv[i]);
    if (needs_grad(g, x)) {
        g.record(out, [=]() mutable {
            auto gi = x.grad_buffer().data();
            auto go = out.grad();
            auto xs = x.values();
            auto ys = out.values();
            for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i] * df(xs[i], ys[i]);
        });
    }
    return out;
}

enum class BinOp { add, sub, mul, div };

template <typename T>
BasicTensor<T> binary(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b, BinOp op,
                      const char* name) {
    const std::size_t na = a.numel(), nb = b.numel();
    if (a.shape() != b.shape() && na != 1 && nb != 1) {
        throw ShapeError(std::string(name) + ": shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not match");
    }
    const bool a_is_big = na >= nb && !(na == 1 && nb != 1);
    BasicTensor<T> out(a_is_big ? a.shape() : b.shape());
    const std::size_t m = out.numel();
    const std::size_t sa = na == 1 ? 0 : 1, sb = nb == 1 ? 0 : 1;
    auto av = a.values();
    auto bv = b.values();
    auto ov = out.values();
    for (std::size_t i = 0; i < m; ++i) {
        const T x = av[i * sa], y = bv[i * sb];
        switch (op) {
            case BinOp::add: ov[i] = x + y; break;
            case BinOp::sub: ov[i] = x - y; break;
            case BinOp::mul: ov[i] = x * y; break;
            case BinOp::div: ov[i] = x / y; break;
        }
    }
    if (needs_grad(g, a, b)) {
        g.record(out, [=]() mutable {
            auto go = out.grad();
            auto xv = a.values();
            auto yv = b.values();
            if (a.requires_grad()) {
                auto& ga = a.grad_buffer();
                if (sa == 0) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) {
                        const T y = yv[i * sb];
                        switch (op) {
                            case BinOp::add:
                            case BinOp::sub: acc += go[i]; break;
                            case BinOp::mul: acc += static_cast<double>(go[i]) * y; break;
                            case BinOp::div: acc += static_cast<double>(go[i]) / y; break;
                        }
                    }
                    ga[0] += static_cast<T>(acc);
                } else {
                    for (std::size_t i = 0; i < m; ++i) {
                        const T y = yv[i * sb];
                        switch (op) {
                            case BinOp::add:
                            case BinOp::sub: ga[i] += go[i]; break;
                            case BinOp::mul: ga[i] += go[i] * y; break;
                            case BinOp::div: ga[i] += go[i] / y; break;
                        }
                    }
                }
            }
            if (b.requires_grad()) {
                auto& gb = b.grad_buffer();
                auto term = [&](std::size_t i) -> T {
                    const T x = xv[i * sa], y = yv[i * sb];
                    switch (op) {
                        case BinOp::add: return go[i];
                        case BinOp::sub: return -go[i];
                        case BinOp::mul: return go[i] * x;
                        case BinOp::div: return -go[i] * x / (y * y);
                    }
                    return T(0);
                };
                if (sb == 0) {
                    double acc = 0.0;
                    for (std::size_t i = 0; i < m; ++i) acc += term(i);
                    gb[0] += static_cast<T>(acc);
                } else {
                    for (std::size_t i = 0; i < m; ++i) gb[i] += term(i);
                }
            }
        });
    }
    return out;
}

}  // namespace

template <typename T>
BasicTensor<T> leaky_relu(BasicGraph<T>& g, const BasicTensor<T>& x, T slope) {
    return unary(
        g, x, [slope](T v) { return v > T(0) ? v : slope * v; },
        [slope](T v, T) { return v > T(0) ? T(1) : slope; });
}

template <typename T>
BasicTensor<T> sigmoid(BasicGraph<T>& g, const BasicTensor<T>& x) {
    return unary(
        g, x,
        [](T v) {
            if (v >= T(0)) return T(1) / (T(1) + std::exp(-v));
            const T e = std::exp(v);
            return e / (T(1) + e);
        },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
BasicTensor<T> abs(BasicGraph<T>& g, const BasicTensor<T>& x) {
    return unary(
        g, x, [](T v) { return std::abs(v); },
        [](T v, T) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

template <typename T>
BasicTensor<T> square(BasicGraph<T>& g, const BasicTensor<T>& x) {
    return unary(
        g, x, [](T v) { return v * v; }, [](T v, T) { return T(2) * v; });
}

template <typename T>
BasicTensor<T> sqrt(BasicGraph<T>& g, const BasicTensor<T>& x) {
    for (auto v : x.values()) {
        if (v < T(0)) throw DomainError("sqrt: negative input");
    }
    return unary(
        g, x, [](T v) { return std::sqrt(v); }, [](T, T y) { return y > T(0) ? T(0.5) / y : T(0); });
}

template <typename T>
BasicTensor<T> add(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(g, a, b, BinOp::add, "add");
}
template <typename T>
BasicTensor<T> sub(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(g, a, b, BinOp::sub, "sub");
}
template <typename T>
BasicTensor<T> mul(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(g, a, b, BinOp::mul, "mul");
}
template <typename T>
BasicTensor<T> div(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b) {
    return binary(g, a, b, BinOp::div, "div");
}

template <typename T>
BasicTensor<T> add_scalar(BasicGraph<T>& g, const BasicTensor<T>& x, T c) {
    return unary(
        g, x, [c](T v) { return v + c; }, [](T, T) { return T(1); });
}

template <typename T>
BasicTensor<T> mul_scalar(BasicGraph<T>& g, const BasicTensor<T>& x, T c) {
    return unary(
        g, x, [c](T v) { return v * c; }, [c](T, T) { return c; });
}

template <typename T>
BasicTensor<T> sum(BasicGraph<T>& g, const BasicTensor<T>& x) {
    double acc = 0.0;
    for (auto v : x.values()) acc += v;
    auto out = BasicTensor<T>::scalar(static_cast<T>(acc));
    if (needs_grad(g, x)) {
        g.record(out, [=]() mutable {
            const T go = out.grad()[0];
            for (auto& gi : x.grad_buffer()) gi += go;
        });
    }
    return out;
}

template <typename T>
BasicTensor<T> mean(BasicGraph<T>& g, const BasicTensor<T>& x) {
    double acc = 0.0;
    for (auto v : x.values()) acc += v;
    const std::size_t count = x.numel();
    auto out = BasicTensor<T>::scalar(static_cast<T>(acc / static_cast<double>(count)));
    if (needs_grad(g, x)) {
        g.record(out, [=]() mutable {
            const T go = out.grad()[0] / static_cast<T>(count);
            for (auto& gi : x.grad_buffer()) gi += go;
        });
    }
    return out;
}

template <typename T>
BasicTensor<T> reshape(BasicGraph<T>& g, const BasicTensor<T>& x, Shape shape) {
    auto out = x.reshaped(std::move(shape));
    if (needs_grad(g, x)) {
        g.record(out, [=]() mutable {
            auto go = out.grad();
            auto& gi = x.grad_buffer();
            for (std::size_t i = 0; i < go.size(); ++i) gi[i] += go[i];
        });
    }
    return out;
}

template <typename T>
BasicTensor<T> windowed_zncc(BasicGraph<T>& g, const BasicTensor<T>& a, const BasicTensor<T>& b,
                             std::size_t window, T eps) {
    if (a.shape() != b.shape()) {
        throw ShapeError("windowed_zncc: shapes " + shape_str(a.shape()) + " and " + shape_str(b.shape()) +
                         " do not match");
    }
    require_rank(a.shape(), 4, "windowed_zncc", "input");
    const std::size_t planes = a.dim(0) * a.dim(1), h = a.dim(2), w = a.dim(3);
    if (window == 0 || window > h || window > w) {
        throw ShapeError("windowed_zncc: window " + std::to_string(window) + " does not fit " +
                         shape_str(a.shape()));
    }
    const std::size_t wy = h / window, wx = w / window;
    const std::size_t tiles = planes * wy * wx;
    const double cnt = static_cast<double>(window * window);

    struct Tile {
        double ma, mb, va, vb, z;
    };
    std::vector<Tile> stats(tiles);
    const T* av = a.data();
    const T* bv = b.data();
    double total = 0.0;
    auto for_tile = [=](std::size_t t, auto&& fn) {
        const std::size_t pl = t / (wy * wx), ty = (t / wx) % wy, tx = t % wx;
        for (std::size_t y = 0; y < window; ++y) {
            const std::size_t row = pl * h * w + (ty * window + y) * w + tx * window;
            for (std::size_t x = 0; x < window; ++x) fn(row + x);
        }
    };
    for (std::size_t t = 0; t < tiles; ++t) {
        double sa = 0, sb = 0;
        for_tile(t, [&](std::size_t i) {
            sa += av[i];
            sb += bv[i];
        });
        const double ma = sa / cnt, mb = sb / cnt;
        double saa = 0, sbb = 0, sab = 0;
        for_tile(t, [&](std::size_t i) {
            const double da = av[i] - ma, db = bv[i] - mb;
            saa += da * da;
            sbb += db * db;
            sab += da * db;
        });
        const double va = saa / cnt + static_cast<double>(eps);
        const double vb = sbb / cnt + static_cast<double>(eps);
        const double z = (sab / cnt) / std::sqrt(va * vb);
        stats[t] = Tile{ma, mb, va, vb, z};
        total += z;
    }
    auto out = BasicTensor<T>::scalar(static_cast<T>(total / static_cast<double>(tiles)));
    if (needs_grad(g, a, b)) {
        g.record(out, [=, stats = std::move(stats)]() mutable {
            const double go = static_cast<double>(out.grad()[0]) / static_cast<double>(tiles);
            const T* xa = a.data();
            const T* xb = b.data();
            T* ga = a.requires_grad() ? a.grad_buffer().data() : nullptr;
            T* gb = b.requires_grad() ? b.grad_buffer().data() : nullptr;
            for (std::size_t t = 0; t < tiles; ++t) {
                const Tile& s = stats[t];
                const double d = std::sqrt(s.va * s.vb);
                for_tile(t, [&](std::size_t i) {
                    const double da = xa[i] - s.ma, db = xb[i] - s.mb;
                    if (ga) ga[i] += static_cast<T>(go * (db / (cnt * d) - s.z * da / (cnt * s.va)));
                    if (gb) gb[i] += static_cast<T>(go * (da / (cnt * d) - s.z * db / (cnt * s.vb)));
                });
            }
        });
    }
    return out;
}

#define CFREP_INSTANTIATE_OPS(T)                                                                          \
    template BasicTensor<T> conv2d(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&,          \
                                   const BasicTensor<T>&, std::size_t, std::size_t);                      \
    template BasicTensor<T> conv_transpose2d(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&, \
                                             const BasicTensor<T>&, std::size_t, std::size_t);            \
    template BasicTensor<T> dense(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&,           \
                                  const BasicTensor<T>&);                                                 \
    template BasicTensor<T> leaky_relu(BasicGraph<T>&, const BasicTensor<T>&, T);                         \
    template BasicTensor<T> sigmoid(BasicGraph<T>&, const BasicTensor<T>&);                               \
    template BasicTensor<T> abs(BasicGraph<T>&, const BasicTensor<T>&);                                   \
    template BasicTensor<T> square(BasicGraph<T>&, const BasicTensor<T>&);                                \
    template BasicTensor<T> sqrt(BasicGraph<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> add(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&);            \
    template BasicTensor<T> sub(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&);            \
    template BasicTensor<T> mul(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&);            \
    template BasicTensor<T> div(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&);            \
    template BasicTensor<T> add_scalar(BasicGraph<T>&, const BasicTensor<T>&, T);                         \
    template BasicTensor<T> mul_scalar(BasicGraph<T>&, const BasicTensor<T>&, T);                         \
    template BasicTensor<T> sum(BasicGraph<T>&, const BasicTensor<T>&);                                   \
    template BasicTensor<T> mean(BasicGraph<T>&, const BasicTensor<T>&);                                  \
    template BasicTensor<T> reshape(BasicGraph<T>&, const BasicTensor<T>&, Shape);                        \
    template BasicTensor<T> windowed_zncc(BasicGraph<T>&, const BasicTensor<T>&, const BasicTensor<T>&,   \
                                          std::size_t, T);

CFREP_INSTANTIATE_OPS(float)
CFREP_INSTANTIATE_OPS(double)

#undef CFREP_INSTANTIATE_OPS

}  // namespace cfrep::ops
