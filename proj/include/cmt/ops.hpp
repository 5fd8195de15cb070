#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "cmt/autograd.hpp"
#include "cmt/tensor.hpp"

namespace cmt {

enum class Padding { Same, None };
enum class ResampleMode { Nearest, Bilinear };

/// Positive rational scale factor num/den.
struct Ratio {
    std::size_t num = 1;
    std::size_t den = 1;
};

// ---------------------------------------------------------------------------
// Plain kernels. Shapes follow the layouts documented on Tensor.
// ---------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

/// Normalizes each column of a 2-D tensor (max-subtracted exponentials).
Tensor softmax_columns(const Tensor& s);

/// Cross-correlation of x [H,W,Cin]. Dense kernels are [kh,kw,Cin,Cout];
/// depthwise kernels are [kh,kw,C]. Same padding zero-pads by (k-1)/2.
Tensor conv2d(const Tensor& x, const Tensor& kernel, Padding padding, bool depthwise = false);

/// Per-row normalization of x [T,C] over C, then gain * xhat + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps);

/// Resize x [H,W,C] by factor. Half-pixel centres: output pixel i samples
/// input coordinate (i + 0.5) / factor - 0.5. Bilinear clamps the sample
/// coordinate to the image (edge replication); nearest picks
/// floor((i + 0.5) / factor).
Tensor resample(const Tensor& x, Ratio factor, ResampleMode mode);

// ---------------------------------------------------------------------------
// Differentiable counterparts.
// ---------------------------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var softmax_columns(const Var& s);
Var conv2d(const Var& x, const Var& kernel, Padding padding, bool depthwise = false);
Var layer_norm(const Var& x, const Var& gain, const Var& bias, double eps);
Var resample(const Var& x, Ratio factor, ResampleMode mode);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
/// Hadamard product.
Var mul(const Var& a, const Var& b);
Var scale(const Var& x, double s);
/// s * x for a one-element s.
Var mul_scalar(const Var& x, const Var& s);
Var exp(const Var& x);
/// Elementwise 1/x.
Var reciprocal(const Var& x);
/// Adds b [C] along the last axis of x.
Var add_bias(const Var& x, const Var& b);

/// Sum of all elements, shape [1].
Var sum(const Var& x);
Var mean(const Var& x);

/// |x| with derivative sign(x), and 0 at x == 0.
Var abs(const Var& x);
/// sqrt(re^2 + im^2) elementwise; derivative taken as 0 where the modulus is 0.
Var complex_abs(const Var& re, const Var& im);

/// x * sigmoid(x).
Var silu(const Var& x);
/// x * Phi(x), exact erf form.
Var gelu(const Var& x);

Var reshape(const Var& x, Shape shape);
/// Columns [start, start + len) of the last axis.
Var slice_last(const Var& x, std::size_t start, std::size_t len);
/// Concatenate along the last axis; leading extents must agree.
Var concat_last(std::span<const Var> parts);

inline Var operator+(const Var& a, const Var& b) { return add(a, b); }
inline Var operator-(const Var& a, const Var& b) { return sub(a, b); }
inline Var operator*(const Var& a, const Var& b) { return mul(a, b); }

}  // namespace cmt
