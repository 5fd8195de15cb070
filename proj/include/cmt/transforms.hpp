#pragma once

#include <cstddef>
#include <vector>

#include "cmt/autograd.hpp"
#include "cmt/tensor.hpp"

namespace cmt {

struct ComplexPlane {
    Tensor real;
    Tensor imag;
};

struct HaarDetails {
    Tensor lh, hl, hh;
};

/// details[j - 1] holds level j (finest first); ll is the coarsest approximation.
struct WaveletPyramid {
    std::vector<HaarDetails> details;
    Tensor ll;

    std::size_t levels() const noexcept { return details.size(); }
};

/// Unnormalized forward 2-D DFT of x [H,W]: X[u,v] = sum x[h,w] e^{-2 pi i (uh/H + vw/W)}.
ComplexPlane dft2(const Tensor& x);
/// Inverse with 1/(HW) scaling; returns the real part.
Tensor idft2(const ComplexPlane& f);

/// Orthonormal Haar analysis, J levels. For the 2x2 block [[a,b],[c,d]]:
/// LL = (a+b+c+d)/2, HL = (a-b+c-d)/2, LH = (a+b-c-d)/2, HH = (a-b-c+d)/2.
WaveletPyramid dwt2_haar(const Tensor& x, std::size_t levels);
Tensor idwt2_haar(const WaveletPyramid& p);

/// Sum of squares over every subband.
double pyramid_energy(const WaveletPyramid& p);

// Differentiable forms used by the loss.

struct ComplexVar {
    Var real;
    Var imag;
};

struct HaarDetailVars {
    Var lh, hl, hh;
};

struct WaveletPyramidVar {
    std::vector<HaarDetailVars> details;
    Var ll;
};

ComplexVar dft2(const Var& x);
WaveletPyramidVar dwt2_haar(const Var& x, std::size_t levels);

}  // namespace cmt
