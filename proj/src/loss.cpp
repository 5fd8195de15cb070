#include "cmt/loss.hpp"

#include <fmt/format.h>

#include "cmt/errors.hpp"
#include "cmt/ops.hpp"
#include "cmt/transforms.hpp"

namespace cmt {

void LossWeights::validate() const {
    if (!(lambda1 >= 0.0) || !(lambda2 >= 0.0))
        throw ConfigError(fmt::format("loss weights must be non-negative, got ({}, {})", lambda1, lambda2));
    if (wavelet_levels == 0) throw ConfigError("loss: wavelet levels must be at least 1");
}

LossBreakdown combine(double spa, double fourier, double wavelet, const LossWeights& w) {
    return {spa, fourier, wavelet, spa + w.lambda1 * fourier + w.lambda2 * wavelet};
}

LossBreakdown LossTerms::values() const {
    return {spa.value().item(), fourier.value().item(), wavelet.value().item(), total.value().item()};
}

namespace {

Var difference(const Var& pi, const Tensor& gt, const char* op) {
    require_same_shape(pi.value(), gt, op);
    if (gt.rank() != 3) throw DimensionError(fmt::format("{}: expected H x W x bands, got {}", op, shape_str(gt.shape())));
    return sub(pi, Var(gt));
}

Var band(const Var& x, std::size_t b) {
    const Shape& s = x.shape();
    return reshape(slice_last(x, b, 1), {s[0], s[1]});
}

// Mean of per-band terms.
template <typename F>
Var band_average(const Var& diff, F&& per_band) {
    const std::size_t bands = diff.shape()[2];
    Var acc = per_band(band(diff, 0));
    for (std::size_t b = 1; b < bands; ++b) acc = add(acc, per_band(band(diff, b)));
    return scale(acc, 1.0 / static_cast<double>(bands));
}

}  // namespace

Var spatial_l1(const Var& pi, const Tensor& gt) {
    return mean(abs(difference(pi, gt, "spatial_l1")));
}

Var fourier_loss(const Var& pi, const Tensor& gt) {
    // DFT linearity: DFT(pi) - DFT(gt) == DFT(pi - gt).
    return band_average(difference(pi, gt, "fourier_loss"), [](const Var& d) {
        const ComplexVar f = dft2(d);
        return mean(complex_abs(f.real, f.imag));
    });
}

Var wavelet_loss(const Var& pi, const Tensor& gt, std::size_t levels) {
    return band_average(difference(pi, gt, "wavelet_loss"), [levels](const Var& d) {
        const WaveletPyramidVar p = dwt2_haar(d, levels);
        Var acc = mean(abs(p.ll));
        for (const auto& lvl : p.details) {
            acc = add(acc, mean(abs(lvl.lh)));
            acc = add(acc, mean(abs(lvl.hl)));
            acc = add(acc, mean(abs(lvl.hh)));
        }
        return acc;
    });
}

LossTerms total_loss(const Var& pi, const Tensor& gt, const LossWeights& w) {
    w.validate();
    LossTerms t;
    t.spa = spatial_l1(pi, gt);
    t.fourier = fourier_loss(pi, gt);
    t.wavelet = wavelet_loss(pi, gt, w.wavelet_levels);
    t.total = add(add(t.spa, scale(t.fourier, w.lambda1)), scale(t.wavelet, w.lambda2));
    return t;
}

double spatial_l1(const Tensor& pi, const Tensor& gt) { return spatial_l1(Var(pi), gt).value().item(); }
double fourier_loss(const Tensor& pi, const Tensor& gt) { return fourier_loss(Var(pi), gt).value().item(); }
double wavelet_loss(const Tensor& pi, const Tensor& gt, std::size_t levels) {
    return wavelet_loss(Var(pi), gt, levels).value().item();
}

LossBreakdown total_loss(std::span<const Tensor> pi, std::span<const Tensor> gt, const LossWeights& w) {
    if (pi.size() != gt.size())
        throw DimensionError(fmt::format("total_loss: {} predictions vs {} references", pi.size(), gt.size()));
    if (pi.empty()) throw ArgumentError("total_loss: empty batch");
    double spa = 0.0, fourier = 0.0, wavelet = 0.0;
    for (std::size_t i = 0; i < pi.size(); ++i) {
        const LossBreakdown b = total_loss(Var(pi[i]), gt[i], w).values();
        spa += b.spa;
        fourier += b.fourier;
        wavelet += b.wavelet;
    }
    const double m = static_cast<double>(pi.size());
    return combine(spa / m, fourier / m, wavelet / m, w);
}

}  // namespace cmt
