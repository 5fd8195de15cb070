#include "cmt/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cmt/errors.hpp"

namespace cmt {

namespace {

void require_rank(const Tensor& t, std::size_t rank, const char* op) {
    if (t.rank() != rank)
        throw DimensionError(fmt::format("{}: expected rank {}, got shape {}", op, rank, shape_str(t.shape())));
}

// ---- matmul ---------------------------------------------------------------

// out (m x n) += a (m x k) * b (k x n)
void gemm_nn(const double* a, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* o = out + i * n;
        const double* ar = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            const double* br = b + p * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += av * br[j];
        }
    }
}

// out (m x k) += g (m x n) * b^T, b is (k x n)
void gemm_nt(const double* g, const double* b, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* gr = g + i * n;
        double* o = out + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double* br = b + p * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += gr[j] * br[j];
            o[p] += s;
        }
    }
}

// out (k x n) += a^T g, a is (m x k), g is (m x n)
void gemm_tn(const double* a, const double* g, double* out, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ar = a + i * k;
        const double* gr = g + i * n;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = ar[p];
            double* o = out + p * n;
            for (std::size_t j = 0; j < n; ++j) o[j] += av * gr[j];
        }
    }
}

void check_matmul(const Tensor& a, const Tensor& b) {
    if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0))
        throw DimensionError(fmt::format("matmul: cannot multiply {} by {}", shape_str(a.shape()), shape_str(b.shape())));
}

// ---- convolution ----------------------------------------------------------

struct ConvGeom {
    std::size_t h, w, cin, cout, kh, kw, ho, wo;
    long ph, pw;
    bool depthwise;
};

ConvGeom conv_geometry(const Tensor& x, const Tensor& k, Padding padding, bool depthwise) {
    require_rank(x, 3, "conv2d input");
    ConvGeom g{};
    g.h = x.dim(0);
    g.w = x.dim(1);
    g.cin = x.dim(2);
    g.depthwise = depthwise;
    if (depthwise) {
        require_rank(k, 3, "conv2d depthwise kernel");
        if (k.dim(2) != g.cin)
            throw DimensionError(fmt::format("conv2d: depthwise kernel {} does not match input channels of {}",
                                             shape_str(k.shape()), shape_str(x.shape())));
        g.cout = g.cin;
    } else {
        require_rank(k, 4, "conv2d kernel");
        if (k.dim(2) != g.cin)
            throw DimensionError(fmt::format("conv2d: kernel {} does not match input channels of {}",
                                             shape_str(k.shape()), shape_str(x.shape())));
        g.cout = k.dim(3);
    }
    g.kh = k.dim(0);
    g.kw = k.dim(1);
    if (padding == Padding::Same) {
        if (g.kh % 2 == 0 || g.kw % 2 == 0)
            throw ArgumentError(fmt::format("conv2d: same padding needs odd kernel extents, got {}", shape_str(k.shape())));
        g.ph = static_cast<long>(g.kh / 2);
        g.pw = static_cast<long>(g.kw / 2);
        g.ho = g.h;
        g.wo = g.w;
    } else {
        if (g.kh > g.h || g.kw > g.w)
            throw DimensionError(fmt::format("conv2d: kernel {} larger than input {}", shape_str(k.shape()), shape_str(x.shape())));
        g.ph = g.pw = 0;
        g.ho = g.h - g.kh + 1;
        g.wo = g.w - g.kw + 1;
    }
    return g;
}

// Visits every (output pixel, kernel tap) pair whose input pixel is in range.
template <typename F>
void for_each_tap(const ConvGeom& g, F&& f) {
    for (std::size_t y = 0; y < g.ho; ++y) {
        for (std::size_t ky = 0; ky < g.kh; ++ky) {
            const long iy = static_cast<long>(y + ky) - g.ph;
            if (iy < 0 || iy >= static_cast<long>(g.h)) continue;
            for (std::size_t x = 0; x < g.wo; ++x) {
                for (std::size_t kx = 0; kx < g.kw; ++kx) {
                    const long ix = static_cast<long>(x + kx) - g.pw;
                    if (ix < 0 || ix >= static_cast<long>(g.w)) continue;
                    f(y * g.wo + x, static_cast<std::size_t>(iy) * g.w + static_cast<std::size_t>(ix), ky * g.kw + kx);
                }
            }
        }
    }
}

Tensor conv_forward(const ConvGeom& g, const Tensor& x, const Tensor& k) {
    Tensor out({g.ho, g.wo, g.cout});
    const double* xp = x.ptr();
    const double* kp = k.ptr();
    double* op = out.ptr();
    if (g.depthwise) {
        const std::size_t c = g.cin;
        for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t tap) {
            const double* in = xp + i * c;
            const double* kr = kp + tap * c;
            double* dst = op + o * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += in[ch] * kr[ch];
        });
    } else {
        const std::size_t cin = g.cin, cout = g.cout;
        for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t tap) {
            const double* in = xp + i * cin;
            const double* kt = kp + tap * cin * cout;
            double* dst = op + o * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double v = in[ci];
                const double* kr = kt + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) dst[co] += v * kr[co];
            }
        });
    }
    return out;
}

void conv_backward_input(const ConvGeom& g, const Tensor& grad_out, const Tensor& k, Tensor& dx) {
    const double* gp = grad_out.ptr();
    const double* kp = k.ptr();
    double* dp = dx.ptr();
    if (g.depthwise) {
        const std::size_t c = g.cin;
        for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t tap) {
            const double* go = gp + o * c;
            const double* kr = kp + tap * c;
            double* d = dp + i * c;
            for (std::size_t ch = 0; ch < c; ++ch) d[ch] += go[ch] * kr[ch];
        });
    } else {
        const std::size_t cin = g.cin, cout = g.cout;
        for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t tap) {
            const double* go = gp + o * cout;
            const double* kt = kp + tap * cin * cout;
            double* d = dp + i * cin;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double* kr = kt + ci * cout;
                double s = 0.0;
                for (std::size_t co = 0; co < cout; ++co) s += go[co] * kr[co];
                d[ci] += s;
            }
        });
    }
}

void conv_backward_kernel(const ConvGeom& g, const Tensor& grad_out, const Tensor& x, Tensor& dk) {
    const double* gp = grad_out.ptr();
    const double* xp = x.ptr();
    double* dp = dk.ptr();
    if (g.depthwise) {
        const std::size_t c = g.cin;
        for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t tap) {
            const double* go = gp + o * c;
            const double* in = xp + i * c;
            double* d = dp + tap * c;
            for (std::size_t ch = 0; ch < c; ++ch) d[ch] += go[ch] * in[ch];
        });
    } else {
        const std::size_t cin = g.cin, cout = g.cout;
        for_each_tap(g, [&](std::size_t o, std::size_t i, std::size_t tap) {
            const double* go = gp + o * cout;
            const double* in = xp + i * cin;
            double* dt = dp + tap * cin * cout;
            for (std::size_t ci = 0; ci < cin; ++ci) {
                const double v = in[ci];
                double* d = dt + ci * cout;
                for (std::size_t co = 0; co < cout; ++co) d[co] += v * go[co];
            }
        });
    }
}

// ---- layer norm -----------------------------------------------------------

struct LayerNormCache {
    Tensor xhat;
    std::vector<double> inv_std;
};

void check_layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    require_rank(x, 2, "layer_norm input");
    const std::size_t c = x.dim(1);
    if (gain.size() != c || bias.size() != c)
        throw DimensionError(fmt::format("layer_norm: gain {} / bias {} do not match channels of {}",
                                         shape_str(gain.shape()), shape_str(bias.shape()), shape_str(x.shape())));
    if (!(eps > 0.0)) throw ArgumentError("layer_norm: eps must be positive");
}

Tensor layer_norm_impl(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, LayerNormCache* cache) {
    check_layer_norm(x, gain, bias, eps);
    const std::size_t t = x.dim(0), c = x.dim(1);
    Tensor out(x.shape());
    if (cache) {
        cache->xhat = Tensor(x.shape());
        cache->inv_std.resize(t);
    }
    for (std::size_t r = 0; r < t; ++r) {
        const double* xr = x.ptr() + r * c;
        double mu = 0.0;
        for (std::size_t j = 0; j < c; ++j) mu += xr[j];
        mu /= static_cast<double>(c);
        double var = 0.0;
        for (std::size_t j = 0; j < c; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= static_cast<double>(c);
        const double inv = 1.0 / std::sqrt(var + eps);
        double* orow = out.ptr() + r * c;
        for (std::size_t j = 0; j < c; ++j) {
            const double xh = (xr[j] - mu) * inv;
            if (cache) cache->xhat[r * c + j] = xh;
            orow[j] = gain[j] * xh + bias[j];
        }
        if (cache) cache->inv_std[r] = inv;
    }
    return out;
}

// ---- resample -------------------------------------------------------------

struct AxisTap {
    std::size_t i0, i1;
    double t;  // weight of i1
};

std::size_t scaled_extent(std::size_t n, Ratio f) {
    if (f.num == 0 || f.den == 0) throw ArgumentError("resample: factor must be positive");
    if ((n * f.num) % f.den != 0)
        throw ArgumentError(fmt::format("resample: extent {} times {}/{} is not an integer", n, f.num, f.den));
    return n * f.num / f.den;
}

std::vector<AxisTap> axis_taps(std::size_t in, std::size_t out, Ratio f, ResampleMode mode) {
    std::vector<AxisTap> taps(out);
    const double inv = static_cast<double>(f.den) / static_cast<double>(f.num);
    for (std::size_t i = 0; i < out; ++i) {
        if (mode == ResampleMode::Nearest) {
            // floor((i + 0.5) * den / num) in exact integer arithmetic.
            std::size_t s = ((2 * i + 1) * f.den) / (2 * f.num);
            s = std::min(s, in - 1);
            taps[i] = {s, s, 0.0};
        } else {
            double src = (static_cast<double>(i) + 0.5) * inv - 0.5;
            src = std::clamp(src, 0.0, static_cast<double>(in - 1));
            const auto i0 = static_cast<std::size_t>(std::floor(src));
            const std::size_t i1 = std::min(i0 + 1, in - 1);
            taps[i] = {i0, i1, src - static_cast<double>(i0)};
        }
    }
    return taps;
}

// ---- small helpers --------------------------------------------------------

template <typename F>
Tensor map(const Tensor& x, F&& f) {
    Tensor out(x.shape());
    for (std::size_t i = 0; i < x.size(); ++i) out[i] = f(x[i]);
    return out;
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// Leading extent (product of all but the last axis) and last extent.
std::pair<std::size_t, std::size_t> rows_cols(const Tensor& t) {
    const std::size_t cols = t.shape().back();
    return {t.size() / cols, cols};
}

}  // namespace

// ===========================================================================
// Plain kernels
// ===========================================================================

Tensor matmul(const Tensor& a, const Tensor& b) {
    check_matmul(a, b);
    Tensor out({a.dim(0), b.dim(1)});
    gemm_nn(a.ptr(), b.ptr(), out.ptr(), a.dim(0), a.dim(1), b.dim(1));
    return out;
}

Tensor transpose(const Tensor& a) {
    require_rank(a, 2, "transpose");
    const std::size_t m = a.dim(0), n = a.dim(1);
    Tensor out({n, m});
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) out[j * m + i] = a[i * n + j];
    return out;
}

Tensor softmax_columns(const Tensor& s) {
    require_rank(s, 2, "softmax_columns");
    const std::size_t m = s.dim(0), n = s.dim(1);
    Tensor out(s.shape());
    for (std::size_t j = 0; j < n; ++j) {
        double mx = s[j];
        for (std::size_t i = 1; i < m; ++i) mx = std::max(mx, s[i * n + j]);
        double total = 0.0;
        for (std::size_t i = 0; i < m; ++i) {
            const double e = std::exp(s[i * n + j] - mx);
            out[i * n + j] = e;
            total += e;
        }
        for (std::size_t i = 0; i < m; ++i) out[i * n + j] /= total;
    }
    return out;
}

Tensor conv2d(const Tensor& x, const Tensor& kernel, Padding padding, bool depthwise) {
    return conv_forward(conv_geometry(x, kernel, padding, depthwise), x, kernel);
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps) {
    return layer_norm_impl(x, gain, bias, eps, nullptr);
}

namespace {

Tensor resample_apply(const Tensor& x, const std::vector<AxisTap>& ty, const std::vector<AxisTap>& tx) {
    const std::size_t w = x.dim(1), c = x.dim(2);
    Tensor out({ty.size(), tx.size(), c});
    for (std::size_t y = 0; y < ty.size(); ++y) {
        const auto& a = ty[y];
        for (std::size_t xo = 0; xo < tx.size(); ++xo) {
            const auto& b = tx[xo];
            const double* p00 = x.ptr() + (a.i0 * w + b.i0) * c;
            const double* p01 = x.ptr() + (a.i0 * w + b.i1) * c;
            const double* p10 = x.ptr() + (a.i1 * w + b.i0) * c;
            const double* p11 = x.ptr() + (a.i1 * w + b.i1) * c;
            double* o = out.ptr() + (y * tx.size() + xo) * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                // Lerp form keeps constant images exactly constant.
                const double top = p00[ch] + b.t * (p01[ch] - p00[ch]);
                const double bot = p10[ch] + b.t * (p11[ch] - p10[ch]);
                o[ch] = top + a.t * (bot - top);
            }
        }
    }
    return out;
}

void resample_transpose(const Tensor& g, const std::vector<AxisTap>& ty, const std::vector<AxisTap>& tx, Tensor& dx) {
    const std::size_t w = dx.dim(1), c = dx.dim(2);
    for (std::size_t y = 0; y < ty.size(); ++y) {
        const auto& a = ty[y];
        for (std::size_t xo = 0; xo < tx.size(); ++xo) {
            const auto& b = tx[xo];
            const double* go = g.ptr() + (y * tx.size() + xo) * c;
            const double w00 = (1.0 - a.t) * (1.0 - b.t), w01 = (1.0 - a.t) * b.t;
            const double w10 = a.t * (1.0 - b.t), w11 = a.t * b.t;
            double* d00 = dx.ptr() + (a.i0 * w + b.i0) * c;
            double* d01 = dx.ptr() + (a.i0 * w + b.i1) * c;
            double* d10 = dx.ptr() + (a.i1 * w + b.i0) * c;
            double* d11 = dx.ptr() + (a.i1 * w + b.i1) * c;
            for (std::size_t ch = 0; ch < c; ++ch) {
                d00[ch] += w00 * go[ch];
                d01[ch] += w01 * go[ch];
                d10[ch] += w10 * go[ch];
                d11[ch] += w11 * go[ch];
            }
        }
    }
}

}  // namespace

Tensor resample(const Tensor& x, Ratio factor, ResampleMode mode) {
    require_rank(x, 3, "resample");
    const std::size_t ho = scaled_extent(x.dim(0), factor), wo = scaled_extent(x.dim(1), factor);
    return resample_apply(x, axis_taps(x.dim(0), ho, factor, mode), axis_taps(x.dim(1), wo, factor, mode));
}

// ===========================================================================
// Differentiable ops
// ===========================================================================

Var matmul(const Var& a, const Var& b) {
    check_matmul(a.value(), b.value());
    const std::size_t m = a.value().dim(0), k = a.value().dim(1), n = b.value().dim(1);
    return make_node(matmul(a.value(), b.value()), {a, b}, [a, b, m, k, n](const Tensor& g, std::span<GradSink> in) {
        if (in[0].wanted()) gemm_nt(g.ptr(), b.value().ptr(), in[0].grad().ptr(), m, k, n);
        if (in[1].wanted()) gemm_tn(a.value().ptr(), g.ptr(), in[1].grad().ptr(), m, k, n);
    });
}

Var transpose(const Var& a) {
    return make_node(transpose(a.value()), {a}, [](const Tensor& g, std::span<GradSink> in) {
        in[0].grad() += transpose(g);
    });
}

Var softmax_columns(const Var& s) {
    Tensor y = softmax_columns(s.value());
    return make_node(y, {s}, [y](const Tensor& g, std::span<GradSink> in) {
        const std::size_t m = y.dim(0), n = y.dim(1);
        Tensor& d = in[0].grad();
        for (std::size_t j = 0; j < n; ++j) {
            double dot = 0.0;
            for (std::size_t i = 0; i < m; ++i) dot += g[i * n + j] * y[i * n + j];
            for (std::size_t i = 0; i < m; ++i) d[i * n + j] += y[i * n + j] * (g[i * n + j] - dot);
        }
    });
}

Var conv2d(const Var& x, const Var& kernel, Padding padding, bool depthwise) {
    const ConvGeom geom = conv_geometry(x.value(), kernel.value(), padding, depthwise);
    return make_node(conv_forward(geom, x.value(), kernel.value()), {x, kernel},
                     [x, kernel, geom](const Tensor& g, std::span<GradSink> in) {
                         if (in[0].wanted()) conv_backward_input(geom, g, kernel.value(), in[0].grad());
                         if (in[1].wanted()) conv_backward_kernel(geom, g, x.value(), in[1].grad());
                     });
}

Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps) {
    LayerNormCache cache;
    Tensor out = layer_norm_impl(x.value(), gain.value(), bias.value(), eps, &cache);
    return make_node(std::move(out), {x, gain, bias},
                     [gain, cache = std::move(cache)](const Tensor& g, std::span<GradSink> in) {
                         const std::size_t t = g.dim(0), c = g.dim(1);
                         const Tensor& gv = gain.value();
                         for (std::size_t r = 0; r < t; ++r) {
                             const double* gr = g.ptr() + r * c;
                             const double* xh = cache.xhat.ptr() + r * c;
                             if (in[0].wanted()) {
                                 double m1 = 0.0, m2 = 0.0;
                                 for (std::size_t j = 0; j < c; ++j) {
                                     const double dxh = gr[j] * gv[j];
                                     m1 += dxh;
                                     m2 += dxh * xh[j];
                                 }
                                 m1 /= static_cast<double>(c);
                                 m2 /= static_cast<double>(c);
                                 double* d = in[0].grad().ptr() + r * c;
                                 for (std::size_t j = 0; j < c; ++j)
                                     d[j] += cache.inv_std[r] * (gr[j] * gv[j] - m1 - xh[j] * m2);
                             }
                             if (in[1].wanted()) {
                                 Tensor& dg = in[1].grad();
                                 for (std::size_t j = 0; j < c; ++j) dg[j] += gr[j] * xh[j];
                             }
                             if (in[2].wanted()) {
                                 Tensor& db = in[2].grad();
                                 for (std::size_t j = 0; j < c; ++j) db[j] += gr[j];
                             }
                         }
                     });
}

Var resample(const Var& x, Ratio factor, ResampleMode mode) {
    require_rank(x.value(), 3, "resample");
    const std::size_t ho = scaled_extent(x.value().dim(0), factor), wo = scaled_extent(x.value().dim(1), factor);
    auto ty = axis_taps(x.value().dim(0), ho, factor, mode);
    auto tx = axis_taps(x.value().dim(1), wo, factor, mode);
    Tensor out = resample_apply(x.value(), ty, tx);
    return make_node(std::move(out), {x}, [ty = std::move(ty), tx = std::move(tx)](const Tensor& g, std::span<GradSink> in) {
        resample_transpose(g, ty, tx, in[0].grad());
    });
}

Var add(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "add");
    Tensor out = a.value();
    out += b.value();
    return make_node(std::move(out), {a, b}, [](const Tensor& g, std::span<GradSink> in) {
        if (in[0].wanted()) in[0].grad() += g;
        if (in[1].wanted()) in[1].grad() += g;
    });
}

Var sub(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "sub");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] - b.value()[i];
    return make_node(std::move(out), {a, b}, [](const Tensor& g, std::span<GradSink> in) {
        if (in[0].wanted()) in[0].grad() += g;
        if (in[1].wanted()) {
            Tensor& d = in[1].grad();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
        }
    });
}

Var mul(const Var& a, const Var& b) {
    require_same_shape(a.value(), b.value(), "mul");
    Tensor out(a.shape());
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = a.value()[i] * b.value()[i];
    return make_node(std::move(out), {a, b}, [a, b](const Tensor& g, std::span<GradSink> in) {
        if (in[0].wanted()) {
            Tensor& d = in[0].grad();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * b.value()[i];
        }
        if (in[1].wanted()) {
            Tensor& d = in[1].grad();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * a.value()[i];
        }
    });
}

Var scale(const Var& x, double s) {
    Tensor out = x.value();
    out *= s;
    return make_node(std::move(out), {x}, [s](const Tensor& g, std::span<GradSink> in) {
        Tensor& d = in[0].grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += s * g[i];
    });
}

Var mul_scalar(const Var& x, const Var& s) {
    if (s.value().size() != 1)
        throw DimensionError(fmt::format("mul_scalar: scale must have one element, got {}", shape_str(s.shape())));
    const double sv = s.value()[0];
    Tensor out = x.value();
    out *= sv;
    return make_node(std::move(out), {x, s}, [x, sv](const Tensor& g, std::span<GradSink> in) {
        if (in[0].wanted()) {
            Tensor& d = in[0].grad();
            for (std::size_t i = 0; i < g.size(); ++i) d[i] += sv * g[i];
        }
        if (in[1].wanted()) {
            double acc = 0.0;
            for (std::size_t i = 0; i < g.size(); ++i) acc += g[i] * x.value()[i];
            in[1].grad()[0] += acc;
        }
    });
}

Var exp(const Var& x) {
    Tensor y = map(x.value(), [](double v) { return std::exp(v); });
    return make_node(y, {x}, [y](const Tensor& g, std::span<GradSink> in) {
        Tensor& d = in[0].grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * y[i];
    });
}

Var reciprocal(const Var& x) {
    Tensor y = map(x.value(), [](double v) { return 1.0 / v; });
    return make_node(y, {x}, [y](const Tensor& g, std::span<GradSink> in) {
        Tensor& d = in[0].grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i] * y[i] * y[i];
    });
}

Var add_bias(const Var& x, const Var& b) {
    const auto [rows, cols] = rows_cols(x.value());
    if (b.value().size() != cols)
        throw DimensionError(fmt::format("add_bias: bias {} does not match last axis of {}", shape_str(b.shape()),
                                         shape_str(x.shape())));
    Tensor out = x.value();
    for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t j = 0; j < cols; ++j) out[r * cols + j] += b.value()[j];
    return make_node(std::move(out), {x, b}, [rows, cols](const Tensor& g, std::span<GradSink> in) {
        if (in[0].wanted()) in[0].grad() += g;
        if (in[1].wanted()) {
            Tensor& d = in[1].grad();
            for (std::size_t r = 0; r < rows; ++r)
                for (std::size_t j = 0; j < cols; ++j) d[j] += g[r * cols + j];
        }
    });
}

Var sum(const Var& x) {
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return make_node(Tensor::scalar(s), {x}, [](const Tensor& g, std::span<GradSink> in) {
        Tensor& d = in[0].grad();
        for (auto& v : d.data()) v += g[0];
    });
}

Var mean(const Var& x) {
    const double n = static_cast<double>(x.value().size());
    double s = 0.0;
    for (double v : x.value().data()) s += v;
    return make_node(Tensor::scalar(s / n), {x}, [n](const Tensor& g, std::span<GradSink> in) {
        Tensor& d = in[0].grad();
        const double gv = g[0] / n;
        for (auto& v : d.data()) v += gv;
    });
}

Var abs(const Var& x) {
    return make_node(map(x.value(), [](double v) { return std::abs(v); }), {x},
                     [x](const Tensor& g, std::span<GradSink> in) {
                         Tensor& d = in[0].grad();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             const double v = x.value()[i];
                             if (v > 0.0) d[i] += g[i];
                             else if (v < 0.0) d[i] -= g[i];
                         }
                     });
}

Var complex_abs(const Var& re, const Var& im) {
    require_same_shape(re.value(), im.value(), "complex_abs");
    Tensor mag(re.shape());
    for (std::size_t i = 0; i < mag.size(); ++i) mag[i] = std::hypot(re.value()[i], im.value()[i]);
    return make_node(mag, {re, im}, [re, im, mag](const Tensor& g, std::span<GradSink> in) {
        for (std::size_t k = 0; k < 2; ++k) {
            if (!in[k].wanted()) continue;
            const Tensor& part = k == 0 ? re.value() : im.value();
            Tensor& d = in[k].grad();
            for (std::size_t i = 0; i < g.size(); ++i)
                if (mag[i] > 0.0) d[i] += g[i] * part[i] / mag[i];
        }
    });
}

Var silu(const Var& x) {
    return make_node(map(x.value(), [](double v) { return v * sigmoid(v); }), {x},
                     [x](const Tensor& g, std::span<GradSink> in) {
                         Tensor& d = in[0].grad();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             const double v = x.value()[i];
                             const double s = sigmoid(v);
                             d[i] += g[i] * (s + v * s * (1.0 - s));
                         }
                     });
}

Var gelu(const Var& x) {
    constexpr double inv_sqrt2 = 0.70710678118654752440;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    return make_node(map(x.value(), [](double v) { return 0.5 * v * (1.0 + std::erf(v * inv_sqrt2)); }), {x},
                     [x, inv_sqrt_2pi](const Tensor& g, std::span<GradSink> in) {
                         Tensor& d = in[0].grad();
                         for (std::size_t i = 0; i < g.size(); ++i) {
                             const double v = x.value()[i];
                             const double cdf = 0.5 * (1.0 + std::erf(v * inv_sqrt2));
                             const double pdf = inv_sqrt_2pi * std::exp(-0.5 * v * v);
                             d[i] += g[i] * (cdf + v * pdf);
                         }
                     });
}

Var reshape(const Var& x, Shape shape) {
    return make_node(x.value().reshaped(std::move(shape)), {x}, [](const Tensor& g, std::span<GradSink> in) {
        Tensor& d = in[0].grad();
        for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    });
}

Var slice_last(const Var& x, std::size_t start, std::size_t len) {
    const auto [rows, cols] = rows_cols(x.value());
    if (len == 0 || start + len > cols)
        throw ArgumentError(fmt::format("slice_last: [{}, {}) out of range for {}", start, start + len, shape_str(x.shape())));
    Shape shape = x.shape();
    shape.back() = len;
    Tensor out(shape);
    for (std::size_t r = 0; r < rows; ++r)
        std::copy_n(x.value().ptr() + r * cols + start, len, out.ptr() + r * len);
    return make_node(std::move(out), {x}, [rows, cols, start, len](const Tensor& g, std::span<GradSink> in) {
        Tensor& d = in[0].grad();
        for (std::size_t r = 0; r < rows; ++r)
            for (std::size_t j = 0; j < len; ++j) d[r * cols + start + j] += g[r * len + j];
    });
}

Var concat_last(std::span<const Var> parts) {
    if (parts.empty()) throw ArgumentError("concat_last: no inputs");
    Shape lead = parts[0].shape();
    lead.pop_back();
    std::size_t total = 0;
    std::vector<std::size_t> widths;
    for (const auto& p : parts) {
        Shape l = p.shape();
        widths.push_back(l.back());
        l.pop_back();
        if (l != lead)
            throw DimensionError(fmt::format("concat_last: leading extents differ, {} vs {}", shape_str(parts[0].shape()),
                                             shape_str(p.shape())));
        total += widths.back();
    }
    const std::size_t rows = shape_numel(lead.empty() ? Shape{1} : lead);
    Shape shape = lead;
    shape.push_back(total);
    Tensor out(shape);
    std::size_t off = 0;
    for (std::size_t k = 0; k < parts.size(); ++k) {
        const std::size_t w = widths[k];
        for (std::size_t r = 0; r < rows; ++r)
            std::copy_n(parts[k].value().ptr() + r * w, w, out.ptr() + r * total + off);
        off += w;
    }
    return make_node(std::move(out), std::vector<Var>(parts.begin(), parts.end()),
                     [rows, total, widths](const Tensor& g, std::span<GradSink> in) {
                         std::size_t off = 0;
                         for (std::size_t k = 0; k < in.size(); ++k) {
                             const std::size_t w = widths[k];
                             if (in[k].wanted()) {
                                 Tensor& d = in[k].grad();
                                 for (std::size_t r = 0; r < rows; ++r)
                                     for (std::size_t j = 0; j < w; ++j) d[r * w + j] += g[r * total + off + j];
                             }
                             off += w;
                         }
                     });
}

}  // namespace cmt
