#include "cmt/transforms.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cmt/errors.hpp"
#include "cmt/ops.hpp"

namespace cmt {

namespace {

struct Twiddles {
    Tensor cos, sin;  // symmetric N x N
};

Twiddles twiddles(std::size_t n) {
    Twiddles t{Tensor({n, n}), Tensor({n, n})};
    for (std::size_t u = 0; u < n; ++u) {
        for (std::size_t k = 0; k < n; ++k) {
            // Reduce the phase index first so large u*k keep full accuracy.
            const double angle = 2.0 * std::numbers::pi * static_cast<double>((u * k) % n) / static_cast<double>(n);
            t.cos[u * n + k] = std::cos(angle);
            t.sin[u * n + k] = std::sin(angle);
        }
    }
    return t;
}

Tensor sub(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = a[i] - b[i];
    return out;
}

Tensor neg_add(const Tensor& a, const Tensor& b) {
    Tensor out(a.shape());
    for (std::size_t i = 0; i < a.size(); ++i) out[i] = -(a[i] + b[i]);
    return out;
}

// Real and imaginary planes of the DFT of a real H x W input.
struct DftPlan {
    Twiddles rows, cols;

    Tensor real(const Tensor& x) const {
        return sub(matmul(rows.cos, matmul(x, cols.cos)), matmul(rows.sin, matmul(x, cols.sin)));
    }
    Tensor imag(const Tensor& x) const {
        return neg_add(matmul(rows.sin, matmul(x, cols.cos)), matmul(rows.cos, matmul(x, cols.sin)));
    }
};

void require_image(const Tensor& x, const char* op) {
    if (x.rank() != 2)
        throw DimensionError(fmt::format("{}: expected an H x W tensor, got {}", op, shape_str(x.shape())));
}

void require_divisible(const Tensor& x, std::size_t levels) {
    if (levels == 0) throw ArgumentError("dwt2_haar: levels must be at least 1");
    const std::size_t block = std::size_t{1} << levels;
    if (x.dim(0) % block != 0 || x.dim(1) % block != 0)
        throw ArgumentError(fmt::format("dwt2_haar: extents {} must be divisible by 2^{} = {}", shape_str(x.shape()),
                                        levels, block));
}

// Signs of (a, b, c, d) for each subband, in LL, HL, LH, HH order.
constexpr int kHaarSigns[4][4] = {
    {1, 1, 1, 1},
    {1, -1, 1, -1},
    {1, 1, -1, -1},
    {1, -1, -1, 1},
};

Tensor haar_band(const Tensor& x, int band) {
    const std::size_t h = x.dim(0) / 2, w = x.dim(1) / 2, stride = x.dim(1);
    const auto& s = kHaarSigns[band];
    Tensor out({h, w});
    for (std::size_t i = 0; i < h; ++i) {
        const double* r0 = x.ptr() + 2 * i * stride;
        const double* r1 = r0 + stride;
        for (std::size_t j = 0; j < w; ++j) {
            const double a = r0[2 * j], b = r0[2 * j + 1], c = r1[2 * j], d = r1[2 * j + 1];
            out[i * w + j] = 0.5 * (s[0] * a + s[1] * b + s[2] * c + s[3] * d);
        }
    }
    return out;
}

// Adds the synthesis of one subband into dst (2h x 2w).
void haar_band_transpose(const Tensor& coeffs, int band, Tensor& dst) {
    const std::size_t h = coeffs.dim(0), w = coeffs.dim(1), stride = dst.dim(1);
    const auto& s = kHaarSigns[band];
    for (std::size_t i = 0; i < h; ++i) {
        double* r0 = dst.ptr() + 2 * i * stride;
        double* r1 = r0 + stride;
        for (std::size_t j = 0; j < w; ++j) {
            const double v = 0.5 * coeffs[i * w + j];
            r0[2 * j] += s[0] * v;
            r0[2 * j + 1] += s[1] * v;
            r1[2 * j] += s[2] * v;
            r1[2 * j + 1] += s[3] * v;
        }
    }
}

enum Band { LL = 0, HL = 1, LH = 2, HH = 3 };

Var haar_band(const Var& x, int band) {
    return make_node(haar_band(x.value(), band), {x},
                     [band](const Tensor& g, std::span<GradSink> in) { haar_band_transpose(g, band, in[0].grad()); });
}

}  // namespace

ComplexPlane dft2(const Tensor& x) {
    require_image(x, "dft2");
    const DftPlan plan{twiddles(x.dim(0)), twiddles(x.dim(1))};
    return {plan.real(x), plan.imag(x)};
}

Tensor idft2(const ComplexPlane& f) {
    require_image(f.real, "idft2");
    require_same_shape(f.real, f.imag, "idft2");
    const std::size_t h = f.real.dim(0), w = f.real.dim(1);
    const Twiddles r = twiddles(h), c = twiddles(w);
    // Re[(C + iS)_H (Xr + i Xi) (C + iS)_W]
    const Tensor p = sub(matmul(r.cos, f.real), matmul(r.sin, f.imag));
    const Tensor q = matmul(r.sin, f.real);
    const Tensor q2 = matmul(r.cos, f.imag);
    Tensor out = matmul(p, c.cos);
    const Tensor qs = matmul(q, c.sin);
    const Tensor q2s = matmul(q2, c.sin);
    const double norm = 1.0 / static_cast<double>(h * w);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = (out[i] - qs[i] - q2s[i]) * norm;
    return out;
}

WaveletPyramid dwt2_haar(const Tensor& x, std::size_t levels) {
    require_image(x, "dwt2_haar");
    require_divisible(x, levels);
    WaveletPyramid p;
    Tensor cur = x;
    for (std::size_t j = 0; j < levels; ++j) {
        p.details.push_back({haar_band(cur, LH), haar_band(cur, HL), haar_band(cur, HH)});
        cur = haar_band(cur, LL);
    }
    p.ll = std::move(cur);
    return p;
}

Tensor idwt2_haar(const WaveletPyramid& p) {
    if (p.details.empty()) throw StructureError("idwt2_haar: pyramid has no levels");
    require_image(p.ll, "idwt2_haar");
    Tensor cur = p.ll;
    for (std::size_t j = p.details.size(); j-- > 0;) {
        const auto& d = p.details[j];
        for (const Tensor* t : {&d.lh, &d.hl, &d.hh}) {
            if (t->shape() != cur.shape())
                throw StructureError(fmt::format("idwt2_haar: level {} subband {} does not match approximation {}", j + 1,
                                                 shape_str(t->shape()), shape_str(cur.shape())));
        }
        Tensor up({2 * cur.dim(0), 2 * cur.dim(1)});
        haar_band_transpose(cur, LL, up);
        haar_band_transpose(d.hl, HL, up);
        haar_band_transpose(d.lh, LH, up);
        haar_band_transpose(d.hh, HH, up);
        cur = std::move(up);
    }
    return cur;
}

double pyramid_energy(const WaveletPyramid& p) {
    double e = 0.0;
    auto add = [&e](const Tensor& t) {
        for (double v : t.data()) e += v * v;
    };
    for (const auto& d : p.details) {
        add(d.lh);
        add(d.hl);
        add(d.hh);
    }
    add(p.ll);
    return e;
}

ComplexVar dft2(const Var& x) {
    require_image(x.value(), "dft2");
    auto plan = std::make_shared<const DftPlan>(DftPlan{twiddles(x.value().dim(0)), twiddles(x.value().dim(1))});
    // The DFT matrices are symmetric, so each plane's adjoint is the plane itself.
    Var re = make_node(plan->real(x.value()), {x},
                       [plan](const Tensor& g, std::span<GradSink> in) { in[0].grad() += plan->real(g); });
    Var im = make_node(plan->imag(x.value()), {x},
                       [plan](const Tensor& g, std::span<GradSink> in) { in[0].grad() += plan->imag(g); });
    return {re, im};
}

WaveletPyramidVar dwt2_haar(const Var& x, std::size_t levels) {
    require_image(x.value(), "dwt2_haar");
    require_divisible(x.value(), levels);
    WaveletPyramidVar p;
    Var cur = x;
    for (std::size_t j = 0; j < levels; ++j) {
        p.details.push_back({haar_band(cur, LH), haar_band(cur, HL), haar_band(cur, HH)});
        cur = haar_band(cur, LL);
    }
    p.ll = cur;
    return p;
}

}  // namespace cmt
