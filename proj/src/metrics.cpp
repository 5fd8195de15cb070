#include "cmt/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "cmt/errors.hpp"

namespace cmt {

namespace {

void check_image(const Tensor& t, const char* op) {
    if (t.rank() != 3) throw DimensionError(fmt::format("{}: expected H x W x bands, got {}", op, shape_str(t.shape())));
}

void check_pair(const Tensor& a, const Tensor& b, const char* op) {
    check_image(a, op);
    require_same_shape(a, b, op);
}

Tensor plane(const Tensor& t, std::size_t band) {
    const std::size_t h = t.dim(0), w = t.dim(1), c = t.dim(2);
    Tensor p({h, w});
    for (std::size_t i = 0; i < h * w; ++i) p[i] = t[i * c + band];
    return p;
}

std::vector<std::size_t> window_starts(std::size_t extent, std::size_t window) {
    std::vector<std::size_t> s;
    for (std::size_t p = 0; p + window <= extent; p += window) s.push_back(p);
    return s;
}

void check_window(std::size_t h, std::size_t w, std::size_t window, const char* op) {
    if (window == 0) throw ArgumentError(fmt::format("{}: window must be positive", op));
    if (window > h || window > w)
        throw ArgumentError(fmt::format("{}: window {} larger than image {}x{}", op, window, h, w));
}

// Cayley-Dickson product on 2^m components: (a,b)(c,d) = (ac - d*b, da + bc*).
void cd_conj(const double* x, double* out, std::size_t n) {
    out[0] = x[0];
    for (std::size_t i = 1; i < n; ++i) out[i] = -x[i];
}

void cd_mul(const double* x, const double* y, double* out, std::size_t n) {
    if (n == 1) {
        out[0] = x[0] * y[0];
        return;
    }
    const std::size_t h = n / 2;
    const double *a = x, *b = x + h, *c = y, *d = y + h;
    std::array<double, 8> dc{}, cc{}, t1{}, t2{};
    cd_conj(d, dc.data(), h);
    cd_conj(c, cc.data(), h);
    cd_mul(a, c, t1.data(), h);
    cd_mul(dc.data(), b, t2.data(), h);
    for (std::size_t i = 0; i < h; ++i) out[i] = t1[i] - t2[i];
    cd_mul(d, a, t1.data(), h);
    cd_mul(b, cc.data(), t2.data(), h);
    for (std::size_t i = 0; i < h; ++i) out[h + i] = t1[i] + t2[i];
}

double norm(const double* x, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * x[i];
    return std::sqrt(s);
}

// Shared UIQI assembly from moments; `cov_mod` is |sigma_zv| (signed for n = 1).
double uiqi_from_moments(double var_z, double var_v, double cov, double mean_z, double mean_v, double mean_sq_sum) {
    if (var_z == 0.0 && var_v == 0.0) return 1.0;
    if (var_z == 0.0 || var_v == 0.0) return 0.0;
    const double luminance = mean_sq_sum == 0.0 ? 1.0 : 2.0 * mean_z * mean_v / mean_sq_sum;
    return 2.0 * cov / (var_z + var_v) * luminance;
}

// Hypercomplex UIQI over one window, bands zero-padded to n.
double q2n_window(const Tensor& z, const Tensor& v, std::size_t y0, std::size_t x0, std::size_t window, std::size_t n) {
    const std::size_t w = z.dim(1), c = z.dim(2);
    const double count = static_cast<double>(window * window);
    std::array<double, 8> mz{}, mv{};
    for (std::size_t y = y0; y < y0 + window; ++y)
        for (std::size_t x = x0; x < x0 + window; ++x)
            for (std::size_t b = 0; b < c; ++b) {
                mz[b] += z[(y * w + x) * c + b];
                mv[b] += v[(y * w + x) * c + b];
            }
    for (std::size_t b = 0; b < n; ++b) {
        mz[b] /= count;
        mv[b] /= count;
    }
    double var_z = 0.0, var_v = 0.0;
    bool flat_z = true, flat_v = true;
    std::array<double, 8> cov{};
    for (std::size_t y = y0; y < y0 + window; ++y)
        for (std::size_t x = x0; x < x0 + window; ++x) {
            std::array<double, 8> dz{}, dv{}, dvc{}, prod{};
            for (std::size_t b = 0; b < c; ++b) {
                const double zb = z[(y * w + x) * c + b], vb = v[(y * w + x) * c + b];
                flat_z = flat_z && zb == z[(y0 * w + x0) * c + b];
                flat_v = flat_v && vb == v[(y0 * w + x0) * c + b];
                dz[b] = zb - mz[b];
                dv[b] = vb - mv[b];
                var_z += dz[b] * dz[b];
                var_v += dv[b] * dv[b];
            }
            cd_conj(dv.data(), dvc.data(), n);
            cd_mul(dz.data(), dvc.data(), prod.data(), n);
            for (std::size_t k = 0; k < n; ++k) cov[k] += prod[k];
        }
    // a constant window has zero variance even when its mean rounds
    var_z = flat_z ? 0.0 : var_z / count;
    var_v = flat_v ? 0.0 : var_v / count;
    for (std::size_t k = 0; k < n; ++k) cov[k] /= count;
    const double nz = norm(mz.data(), n), nv = norm(mv.data(), n);
    return uiqi_from_moments(var_z, var_v, norm(cov.data(), n), nz, nv, nz * nz + nv * nv);
}

double uiqi_window(const Tensor& a, const Tensor& b, std::size_t y0, std::size_t x0, std::size_t window) {
    const std::size_t w = a.dim(1);
    const double count = static_cast<double>(window * window);
    double ma = 0.0, mb = 0.0;
    for (std::size_t y = y0; y < y0 + window; ++y)
        for (std::size_t x = x0; x < x0 + window; ++x) {
            ma += a[y * w + x];
            mb += b[y * w + x];
        }
    ma /= count;
    mb /= count;
    double va = 0.0, vb = 0.0, cab = 0.0;
    bool flat_a = true, flat_b = true;
    for (std::size_t y = y0; y < y0 + window; ++y)
        for (std::size_t x = x0; x < x0 + window; ++x) {
            flat_a = flat_a && a[y * w + x] == a[y0 * w + x0];
            flat_b = flat_b && b[y * w + x] == b[y0 * w + x0];
            const double da = a[y * w + x] - ma, db = b[y * w + x] - mb;
            va += da * da;
            vb += db * db;
            cab += da * db;
        }
    return uiqi_from_moments(flat_a ? 0.0 : va / count, flat_b ? 0.0 : vb / count, cab / count, ma, mb,
                             ma * ma + mb * mb);
}

std::size_t extent_ratio(const Tensor& hi, const Tensor& lo, const char* op) {
    if (lo.dim(0) == 0 || hi.dim(0) % lo.dim(0) != 0 || hi.dim(1) % lo.dim(1) != 0 ||
        hi.dim(0) / lo.dim(0) != hi.dim(1) / lo.dim(1))
        throw ArgumentError(fmt::format("{}: extents {} and {} are not related by a single integer ratio", op,
                                        shape_str(hi.shape()), shape_str(lo.shape())));
    return hi.dim(0) / lo.dim(0);
}

std::size_t low_window(std::size_t window, std::size_t ratio, const char* op) {
    if (window % ratio != 0)
        throw ArgumentError(fmt::format("{}: window {} not divisible by ratio {}", op, window, ratio));
    return window / ratio;
}

}  // namespace

double sam(const Tensor& fused, const Tensor& gt) {
    check_pair(fused, gt, "sam");
    const std::size_t c = gt.dim(2), pixels = gt.dim(0) * gt.dim(1);
    if (c < 2) throw ArgumentError("sam: at least 2 bands are required");
    double total = 0.0;
    std::vector<double> u(c), s(c);
    for (std::size_t p = 0; p < pixels; ++p) {
        const double* a = fused.ptr() + p * c;
        const double* b = gt.ptr() + p * c;
        const double na = norm(a, c), nb = norm(b, c);
        if (na == 0.0 || nb == 0.0) continue;
        // Numerically stable angle between a and b.
        for (std::size_t k = 0; k < c; ++k) {
            u[k] = a[k] * nb - b[k] * na;
            s[k] = a[k] * nb + b[k] * na;
        }
        total += 2.0 * std::atan2(norm(u.data(), c), norm(s.data(), c));
    }
    return total / static_cast<double>(pixels) * 180.0 / std::numbers::pi;
}

double ergas(const Tensor& fused, const Tensor& gt, std::size_t ratio) {
    check_pair(fused, gt, "ergas");
    if (ratio == 0) throw ArgumentError("ergas: ratio must be positive");
    const std::size_t c = gt.dim(2), pixels = gt.dim(0) * gt.dim(1);
    double acc = 0.0;
    for (std::size_t b = 0; b < c; ++b) {
        double se = 0.0, mu = 0.0;
        for (std::size_t p = 0; p < pixels; ++p) {
            const double d = fused[p * c + b] - gt[p * c + b];
            se += d * d;
            mu += gt[p * c + b];
        }
        mu /= static_cast<double>(pixels);
        if (mu == 0.0) throw DegenerateInputError(fmt::format("ergas: band {} of the reference has zero mean", b));
        const double rmse = std::sqrt(se / static_cast<double>(pixels));
        acc += (rmse / mu) * (rmse / mu);
    }
    return 100.0 / static_cast<double>(ratio) * std::sqrt(acc / static_cast<double>(c));
}

double q2n(const Tensor& fused, const Tensor& gt, std::size_t window) {
    check_pair(fused, gt, "q2n");
    const std::size_t c = gt.dim(2);
    if (c > 8) throw ArgumentError(fmt::format("q2n: {} bands exceed the 8-component algebra", c));
    const std::size_t n = c <= 4 ? 4 : 8;
    check_window(gt.dim(0), gt.dim(1), window, "q2n");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t y : window_starts(gt.dim(0), window))
        for (std::size_t x : window_starts(gt.dim(1), window)) {
            total += q2n_window(fused, gt, y, x, window, n);
            ++count;
        }
    return total / static_cast<double>(count);
}

double uiqi(const Tensor& a, const Tensor& b, std::size_t window) {
    if (a.rank() != 2) throw DimensionError(fmt::format("uiqi: expected H x W, got {}", shape_str(a.shape())));
    require_same_shape(a, b, "uiqi");
    check_window(a.dim(0), a.dim(1), window, "uiqi");
    double total = 0.0;
    std::size_t count = 0;
    for (std::size_t y : window_starts(a.dim(0), window))
        for (std::size_t x : window_starts(a.dim(1), window)) {
            total += uiqi_window(a, b, y, x, window);
            ++count;
        }
    return total / static_cast<double>(count);
}

double d_lambda(const Tensor& fused, const Tensor& lrms, std::size_t window) {
    check_image(fused, "d_lambda");
    check_image(lrms, "d_lambda");
    const std::size_t c = fused.dim(2);
    if (lrms.dim(2) != c)
        throw DimensionError(fmt::format("d_lambda: band counts differ ({} vs {})", c, lrms.dim(2)));
    if (c < 2) throw ArgumentError("d_lambda: at least 2 bands are required");
    const std::size_t ratio = extent_ratio(fused, lrms, "d_lambda");
    const std::size_t lw = low_window(window, ratio, "d_lambda");
    std::vector<Tensor> fb, lb;
    for (std::size_t b = 0; b < c; ++b) {
        fb.push_back(plane(fused, b));
        lb.push_back(plane(lrms, b));
    }
    double acc = 0.0;
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = i + 1; j < c; ++j) acc += std::abs(uiqi(fb[i], fb[j], window) - uiqi(lb[i], lb[j], lw));
    return acc / static_cast<double>(c * (c - 1) / 2);
}

double d_s(const Tensor& fused, const Tensor& lrms, const Tensor& pan, std::size_t window) {
    check_image(fused, "d_s");
    check_image(lrms, "d_s");
    check_image(pan, "d_s");
    if (pan.dim(2) != 1) throw DimensionError(fmt::format("d_s: PAN must have 1 band, got {}", shape_str(pan.shape())));
    if (pan.dim(0) != fused.dim(0) || pan.dim(1) != fused.dim(1))
        throw DimensionError(fmt::format("d_s: PAN {} and fused {} differ spatially", shape_str(pan.shape()),
                                         shape_str(fused.shape())));
    const std::size_t c = fused.dim(2);
    if (lrms.dim(2) != c) throw DimensionError(fmt::format("d_s: band counts differ ({} vs {})", c, lrms.dim(2)));
    const std::size_t ratio = extent_ratio(fused, lrms, "d_s");
    const std::size_t lw = low_window(window, ratio, "d_s");
    const Tensor pan_hi = plane(pan, 0);
    const Tensor pan_lo = plane(wald_degrade(pan, ratio, default_blur_sigma(ratio)), 0);
    double acc = 0.0;
    for (std::size_t b = 0; b < c; ++b)
        acc += std::abs(uiqi(plane(fused, b), pan_hi, window) - uiqi(plane(lrms, b), pan_lo, lw));
    return acc / static_cast<double>(c);
}

double hqnr(double dl, double ds) {
    if (!(dl >= 0.0 && dl <= 1.0) || !(ds >= 0.0 && ds <= 1.0))
        throw ArgumentError(fmt::format("hqnr: distortions must lie in [0, 1], got ({}, {})", dl, ds));
    return (1.0 - dl) * (1.0 - ds);
}

std::vector<double> reduced_metrics(const Tensor& fused, const Tensor& gt, std::size_t ratio) {
    return {sam(fused, gt), ergas(fused, gt, ratio), q2n(fused, gt)};
}

std::vector<double> full_metrics(const Tensor& fused, const Tensor& lrms, const Tensor& pan) {
    const double dl = d_lambda(fused, lrms), ds = d_s(fused, lrms, pan);
    return {dl, ds, hqnr(dl, ds)};
}

std::vector<std::string> MetricsReport::columns_for(Protocol protocol) {
    if (protocol == Protocol::Reduced) return {"SAM", "ERGAS", "Q2n"};
    return {"D_lambda", "D_s", "HQNR"};
}

MetricsReport MetricsReport::make(Protocol protocol, std::vector<std::vector<double>> rows) {
    MetricsReport r;
    r.protocol = protocol;
    r.columns = columns_for(protocol);
    const std::size_t k = r.columns.size();
    for (const auto& row : rows)
        if (row.size() != k) throw DimensionError(fmt::format("metrics report: row with {} values, expected {}", row.size(), k));
    r.rows = std::move(rows);
    r.mean.assign(k, 0.0);
    r.stddev.assign(k, 0.0);
    const std::size_t n = r.rows.size();
    if (n == 0) return r;
    for (std::size_t j = 0; j < k; ++j) {
        double s = 0.0;
        for (const auto& row : r.rows) s += row[j];
        r.mean[j] = s / static_cast<double>(n);
        if (n < 2) continue;
        double ss = 0.0;
        for (const auto& row : r.rows) ss += (row[j] - r.mean[j]) * (row[j] - r.mean[j]);
        r.stddev[j] = std::sqrt(ss / static_cast<double>(n - 1));
    }
    return r;
}

std::size_t MetricsReport::column(const std::string& name) const {
    const auto it = std::find(columns.begin(), columns.end(), name);
    if (it == columns.end()) throw ArgumentError(fmt::format("metrics report has no column '{}'", name));
    return static_cast<std::size_t>(it - columns.begin());
}

std::string MetricsReport::to_csv() const {
    std::string out = "sample";
    for (const auto& c : columns) out += "," + c;
    out += "\n";
    auto emit = [&out](const std::string& label, const std::vector<double>& values) {
        out += label;
        for (double v : values) out += fmt::format(",{:.17g}", v);
        out += "\n";
    };
    for (std::size_t i = 0; i < rows.size(); ++i) emit(std::to_string(i), rows[i]);
    emit("mean", mean);
    emit("std", stddev);
    return out;
}

}  // namespace cmt
