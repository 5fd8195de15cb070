#pragma once

#include <cstddef>
#include <span>

#include "cmt/autograd.hpp"
#include "cmt/tensor.hpp"

namespace cmt {

struct LossWeights {
    double lambda1 = 0.7;  // Fourier term
    double lambda2 = 0.2;  // wavelet term
    std::size_t wavelet_levels = 2;

    void validate() const;
    bool operator==(const LossWeights&) const = default;
};

struct LossBreakdown {
    double spa = 0.0;
    double fourier = 0.0;
    double wavelet = 0.0;
    double total = 0.0;
};

/// total = spa + lambda1 * fourier + lambda2 * wavelet.
LossBreakdown combine(double spa, double fourier, double wavelet, const LossWeights& w);

struct LossTerms {
    Var spa, fourier, wavelet, total;
    LossBreakdown values() const;
};

// Per-sample terms on H x W x c images. Every term is a mean over its own
// elements, then over bands; |0| has derivative 0.

/// Mean absolute difference.
Var spatial_l1(const Var& pi, const Tensor& gt);
/// Mean over frequency bins of the complex modulus |DFT(pi_b) - DFT(gt_b)|.
Var fourier_loss(const Var& pi, const Tensor& gt);
/// Sum over levels of the mean absolute LH/HL/HH differences, plus the
/// coarsest LL difference.
Var wavelet_loss(const Var& pi, const Tensor& gt, std::size_t levels);
LossTerms total_loss(const Var& pi, const Tensor& gt, const LossWeights& w);

double spatial_l1(const Tensor& pi, const Tensor& gt);
double fourier_loss(const Tensor& pi, const Tensor& gt);
double wavelet_loss(const Tensor& pi, const Tensor& gt, std::size_t levels);

/// Batch objective: each component averaged over the M sample pairs.
LossBreakdown total_loss(std::span<const Tensor> pi, std::span<const Tensor> gt, const LossWeights& w);

}  // namespace cmt
