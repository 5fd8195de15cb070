#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "cmt/data.hpp"
#include "cmt/tensor.hpp"

namespace cmt {

inline constexpr std::size_t kQualityWindow = 32;

/// Mean spectral angle in degrees. Zero-vector pixels contribute 0.
double sam(const Tensor& fused, const Tensor& gt);

/// 100 / ratio * sqrt(mean_b (RMSE_b / mean_b)^2). A zero band mean throws
/// DegenerateInputError.
double ergas(const Tensor& fused, const Tensor& gt, std::size_t ratio);

/// Hypercomplex UIQI (Q4 for up to 4 bands, Q8 up to 8), computed on
/// window x window blocks at stride `window` and averaged over blocks.
double q2n(const Tensor& fused, const Tensor& gt, std::size_t window = kQualityWindow);

/// Scalar UIQI of two H x W planes, block-averaged like q2n. Both variances
/// zero gives 1, exactly one zero gives 0.
double uiqi(const Tensor& a, const Tensor& b, std::size_t window);

/// Spectral distortion: mean over band pairs of |Q(fused) - Q(lrms)|. The
/// LRMS uses window / ratio.
double d_lambda(const Tensor& fused, const Tensor& lrms, std::size_t window = kQualityWindow);

/// Spatial distortion: mean over bands of |Q(fused_b, pan) - Q(lrms_b, pan_lr)|
/// where pan_lr is the Wald-degraded PAN.
double d_s(const Tensor& fused, const Tensor& lrms, const Tensor& pan, std::size_t window = kQualityWindow);

/// (1 - d_lambda) * (1 - d_s); inputs outside [0, 1] throw.
double hqnr(double d_lambda, double d_s);

struct MetricsReport {
    Protocol protocol = Protocol::Reduced;
    std::vector<std::string> columns;
    std::vector<std::vector<double>> rows;  // one per sample
    std::vector<double> mean;
    std::vector<double> stddev;  // sample standard deviation (n - 1), 0 for n < 2

    static MetricsReport make(Protocol protocol, std::vector<std::vector<double>> rows);
    static std::vector<std::string> columns_for(Protocol protocol);
    std::size_t column(const std::string& name) const;
    /// Header, one row per sample, then "mean" and "std" rows.
    std::string to_csv() const;
};

/// SAM, ERGAS, Q2n of one fused image.
std::vector<double> reduced_metrics(const Tensor& fused, const Tensor& gt, std::size_t ratio);
/// D_lambda, D_s, HQNR of one fused image.
std::vector<double> full_metrics(const Tensor& fused, const Tensor& lrms, const Tensor& pan);

}  // namespace cmt
