#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "cmt/data.hpp"
#include "cmt/errors.hpp"
#include "cmt/metrics.hpp"
#include "cmt/ops.hpp"
#include "oracles.hpp"

using namespace cmt;

namespace {

Tensor permute_bands(const Tensor& x, const std::vector<std::size_t>& perm) {
    Tensor y = x;
    const std::size_t c = x.dim(2);
    for (std::size_t p = 0; p < x.size() / c; ++p)
        for (std::size_t b = 0; b < c; ++b) y[p * c + b] = x[p * c + perm[b]];
    return y;
}

bool is_even(const std::vector<std::size_t>& perm) {
    std::size_t inversions = 0;
    for (std::size_t i = 0; i < perm.size(); ++i)
        for (std::size_t j = i + 1; j < perm.size(); ++j) inversions += perm[i] > perm[j];
    return inversions % 2 == 0;
}

Tensor pad_bands(const Tensor& x, std::size_t n) {
    Tensor y({x.dim(0), x.dim(1), n});
    const std::size_t c = x.dim(2);
    for (std::size_t p = 0; p < x.size() / c; ++p)
        for (std::size_t b = 0; b < c; ++b) y[p * n + b] = x[p * c + b];
    return y;
}

Tensor crop(const Tensor& x, std::size_t y0, std::size_t x0, std::size_t h, std::size_t w) {
    Tensor r({h, w, x.dim(2)});
    for (std::size_t i = 0; i < h; ++i)
        for (std::size_t j = 0; j < w; ++j)
            for (std::size_t c = 0; c < x.dim(2); ++c) r.at(i, j, c) = x.at(y0 + i, x0 + j, c);
    return r;
}

// |Q(fused_b, pan) - Q(lrms_b, pan_lr)| with whole-image windows.
double ds_term(const Tensor& fused, const Tensor& lrms, const Tensor& pan, std::size_t b, std::size_t ratio) {
    const Tensor pan_lr = oracle::blur_decimate(pan, ratio, 1.7 * static_cast<double>(ratio) / 4.0);
    return std::abs(oracle::uiqi_plane(oracle::band(fused, b), oracle::band(pan, 0)) -
                    oracle::uiqi_plane(oracle::band(lrms, b), oracle::band(pan_lr, 0)));
}

}  // namespace

// -------------------------------------------------------------------- SAM ---

TEST(Sam, IdentityAndScaleInvariance) {
    Rng rng(1);
    const Tensor gt = rng.uniform_tensor({8, 8, 4}, 0.1, 1);
    EXPECT_EQ(sam(gt, gt), 0.0);
    Tensor twice = gt;
    twice *= 2.0;
    EXPECT_EQ(sam(twice, gt), 0.0);
}

TEST(Sam, FortyFiveDegrees) {
    const Tensor a({1, 1, 2}, std::vector<double>{1, 0}), b({1, 1, 2}, std::vector<double>{1, 1});
    EXPECT_NEAR(sam(a, b), 45.0, 1e-12);
}

TEST(Sam, MatchesArccosOracleAndSkipsZeroPixels) {
    Rng rng(2);
    Tensor a = rng.uniform_tensor({6, 5, 3}, 0, 1), b = rng.uniform_tensor({6, 5, 3}, 0, 1);
    for (std::size_t c = 0; c < 3; ++c) a.at(2, 2, c) = 0.0;
    double total = 0.0;
    for (std::size_t p = 0; p < 30; ++p) {
        double dot = 0, na = 0, nb = 0;
        for (std::size_t c = 0; c < 3; ++c) {
            dot += a[p * 3 + c] * b[p * 3 + c];
            na += a[p * 3 + c] * a[p * 3 + c];
            nb += b[p * 3 + c] * b[p * 3 + c];
        }
        if (na > 0) total += std::acos(std::clamp(dot / std::sqrt(na * nb), -1.0, 1.0));
    }
    EXPECT_NEAR(sam(a, b), total / 30 * 180 / std::numbers::pi, 1e-9);
}

TEST(Sam, Errors) {
    EXPECT_THROW(sam(Tensor::zeros({2, 2, 3}), Tensor::zeros({2, 2, 4})), DimensionError);
    EXPECT_THROW(sam(Tensor::zeros({2, 2, 1}), Tensor::zeros({2, 2, 1})), ArgumentError);
}

// ------------------------------------------------------------------ ERGAS ---

TEST(Ergas, IdentityAndClosedForm) {
    const Tensor gt({8, 8, 4}, 1.0);
    EXPECT_EQ(ergas(gt, gt, 4), 0.0);
    EXPECT_NEAR(ergas(Tensor({8, 8, 4}, 1.1), gt, 4), 2.5, 1e-12);
}

TEST(Ergas, MatchesDirectFormula) {
    Rng rng(3);
    const Tensor a = rng.uniform_tensor({8, 8, 3}, 0, 1), b = rng.uniform_tensor({8, 8, 3}, 0.2, 1);
    double acc = 0;
    for (std::size_t c = 0; c < 3; ++c) {
        const Tensor pa = oracle::band(a, c), pb = oracle::band(b, c);
        double se = 0, mu = 0;
        for (std::size_t i = 0; i < 64; ++i) {
            se += (pa[i] - pb[i]) * (pa[i] - pb[i]);
            mu += pb[i] / 64;
        }
        acc += se / 64 / (mu * mu);
    }
    EXPECT_NEAR(ergas(a, b, 4), 25.0 * std::sqrt(acc / 3), 1e-12);
}

TEST(Ergas, ZeroMeanBandIsDegenerate) {
    EXPECT_THROW(ergas(Tensor({4, 4, 2}, 0.5), Tensor::zeros({4, 4, 2}), 4), DegenerateInputError);
}

// -------------------------------------------------------------------- Q2n ---

TEST(Q2n, SelfSimilarityIsOne) {
    Rng rng(4);
    for (std::size_t c : {1u, 3u, 4u, 5u, 8u}) {
        const Tensor x = rng.uniform_tensor({32, 32, c}, 0, 1);
        EXPECT_NEAR(q2n(x, x), 1.0, 1e-12) << c;
    }
}

TEST(Q2n, MeanShiftIsPenalized) {
    Rng rng(5);
    const Tensor gt = rng.uniform_tensor({32, 32, 4}, 0, 1);
    Tensor shifted = gt;
    for (auto& v : shifted.data()) v += 10.0;
    EXPECT_LT(q2n(shifted, gt), 1.0);
}

TEST(Q2n, MatchesQuaternionOracle) {
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        const Tensor a = rng.uniform_tensor({32, 32, 4}, 0, 1), b = rng.uniform_tensor({32, 32, 4}, 0, 1);
        Tensor c = a;
        for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.6 * a[i] + 0.4 * b[i];
        EXPECT_NEAR(q2n(a, b), oracle::q4_window(a, b), 1e-12);
        EXPECT_NEAR(q2n(c, a), oracle::q4_window(c, a), 1e-12);
    }
    // three bands are zero-padded into the quaternion algebra
    const Tensor a = rng.uniform_tensor({32, 32, 3}, 0, 1), b = rng.uniform_tensor({32, 32, 3}, 0, 1);
    EXPECT_NEAR(q2n(a, b), oracle::q4_window(pad_bands(a, 4), pad_bands(b, 4)), 1e-12);
}

TEST(Q2n, AveragesNonOverlappingWindows) {
    Rng rng(7);
    const Tensor a = rng.uniform_tensor({64, 40, 4}, 0, 1), b = rng.uniform_tensor({64, 40, 4}, 0, 1);
    // partial windows at the right edge are dropped
    const double expect =
        (oracle::q4_window(crop(a, 0, 0, 32, 32), crop(b, 0, 0, 32, 32)) +
         oracle::q4_window(crop(a, 32, 0, 32, 32), crop(b, 32, 0, 32, 32))) / 2;
    EXPECT_NEAR(q2n(a, b), expect, 1e-12);
}

TEST(Q2n, Errors) {
    EXPECT_THROW(q2n(Tensor::zeros({16, 16, 4}), Tensor::zeros({16, 16, 4})), ArgumentError);
    EXPECT_THROW(q2n(Tensor::zeros({32, 32, 9}), Tensor::zeros({32, 32, 9})), ArgumentError);
    EXPECT_THROW(q2n(Tensor::zeros({32, 32, 4}), Tensor::zeros({32, 32, 3})), DimensionError);
}

TEST(Q2n, DegenerateWindowConventions) {
    const Tensor flat({32, 32, 4}, 0.3);
    EXPECT_EQ(q2n(flat, flat), 1.0);
    Rng rng(8);
    EXPECT_EQ(q2n(rng.uniform_tensor({32, 32, 4}, 0, 1), flat), 0.0);
}

// ---------------------------------------------------------- permutations ---

TEST(Permutation, SamAndErgasUnderAllPermutations) {
    Rng rng(9);
    const Tensor a = rng.uniform_tensor({32, 32, 4}, 0, 1), b = rng.uniform_tensor({32, 32, 4}, 0.1, 1);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    const double s = sam(a, b), e = ergas(a, b, 4);
    do {
        const Tensor pa = permute_bands(a, perm), pb = permute_bands(b, perm);
        EXPECT_NEAR(sam(pa, pb), s, 1e-12);
        EXPECT_NEAR(ergas(pa, pb, 4), e, 1e-12);
    } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST(Permutation, Q2nUnderEvenPermutations) {
    Rng rng(10);
    const Tensor a = rng.uniform_tensor({32, 32, 4}, 0, 1), b = rng.uniform_tensor({32, 32, 4}, 0, 1);
    Tensor c = a;
    for (std::size_t i = 0; i < c.size(); ++i) c[i] = 0.7 * a[i] + 0.3 * b[i];
    const double q = q2n(c, a);
    std::vector<std::size_t> perm{0, 1, 2, 3};
    int even = 0;
    do {
        if (!is_even(perm)) continue;
        ++even;
        EXPECT_NEAR(q2n(permute_bands(c, perm), permute_bands(a, perm)), q, 1e-12);
    } while (std::next_permutation(perm.begin(), perm.end()));
    EXPECT_EQ(even, 12);
}

TEST(Permutation, Q4CovarianceIsHandedUnderOddPermutations) {
    // the quaternion product is not symmetric under reflections of the
    // imaginary axes, so an odd band swap can move Q4 off its value
    Rng rng(11);
    const Tensor a = rng.uniform_tensor({32, 32, 4}, 0, 1), b = rng.uniform_tensor({32, 32, 4}, 0, 1);
    const std::vector<std::size_t> swap{1, 0, 2, 3};
    EXPECT_GT(std::abs(q2n(permute_bands(a, swap), permute_bands(b, swap)) - q2n(a, b)), 1e-6);
}

// ------------------------------------------------------------------- UIQI ---

TEST(Uiqi, ConventionsAndOracle) {
    Rng rng(12);
    const Tensor a = rng.uniform_tensor({16, 16}, 0, 1), b = rng.uniform_tensor({16, 16}, 0, 1);
    EXPECT_NEAR(uiqi(a, a, 16), 1.0, 1e-12);
    EXPECT_NEAR(uiqi(a, b, 16), oracle::uiqi_plane(a, b), 1e-12);
    EXPECT_EQ(uiqi(Tensor({16, 16}, 0.2), Tensor({16, 16}, 0.7), 16), 1.0);
    EXPECT_EQ(uiqi(a, Tensor({16, 16}, 0.7), 16), 0.0);
    Tensor neg = a;
    for (auto& v : neg.data()) v = 1.0 - v;
    EXPECT_LT(uiqi(a, neg, 16), 0.0);
}

// ---------------------------------------------------------------- D_lambda ---

TEST(DLambda, UpsampledLrmsIsNearZeroOnSyntheticScenes) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const Tensor hrms = synth_scene(rng, 128, 128, 4).hrms;
        const Tensor lrms = wald_degrade(hrms, 4, 1.7);
        EXPECT_LT(d_lambda(resample(lrms, Ratio{4, 1}, ResampleMode::Bilinear), lrms), 0.05) << seed;
    }
}

TEST(DLambda, ConstantImagesGiveZero) {
    EXPECT_EQ(d_lambda(Tensor({32, 32, 4}, 0.5), Tensor({8, 8, 4}, 0.5)), 0.0);
}

TEST(DLambda, MatchesDirectFormula) {
    Rng rng(13);
    const Tensor f = rng.uniform_tensor({32, 32, 3}, 0, 1), l = rng.uniform_tensor({8, 8, 3}, 0, 1);
    double acc = 0;
    for (std::size_t i = 0; i < 3; ++i)
        for (std::size_t j = i + 1; j < 3; ++j)
            acc += std::abs(oracle::uiqi_plane(oracle::band(f, i), oracle::band(f, j)) -
                            oracle::uiqi_plane(oracle::band(l, i), oracle::band(l, j)));
    EXPECT_NEAR(d_lambda(f, l), acc / 3, 1e-12);
}

TEST(DLambda, Errors) {
    EXPECT_THROW(d_lambda(Tensor::zeros({32, 32, 4}), Tensor::zeros({10, 10, 4})), ArgumentError);
    EXPECT_THROW(d_lambda(Tensor::zeros({32, 32, 4}), Tensor::zeros({8, 8, 3})), DimensionError);
    EXPECT_THROW(d_lambda(Tensor::zeros({48, 48, 4}), Tensor::zeros({16, 16, 4})), ArgumentError);
}

// -------------------------------------------------------------------- D_s ---

TEST(Ds, PerfectConsistencyGivesZero) {
    Rng rng(14);
    const Tensor pan = synth_scene(rng, 32, 32, 1).hrms;
    const Tensor pan_lr = wald_degrade(pan, 4, 1.7);
    Tensor fused({32, 32, 4}), lrms({8, 8, 4});
    for (std::size_t p = 0; p < 1024; ++p)
        for (std::size_t b = 0; b < 4; ++b) fused[p * 4 + b] = pan[p];
    for (std::size_t p = 0; p < 64; ++p)
        for (std::size_t b = 0; b < 4; ++b) lrms[p * 4 + b] = pan_lr[p];
    EXPECT_EQ(d_s(fused, lrms, pan), 0.0);
}

TEST(Ds, MatchesDirectFormulaAndBandSwapPerturbation) {
    Rng rng(15);
    const Tensor f = rng.uniform_tensor({32, 32, 4}, 0, 1), l = rng.uniform_tensor({8, 8, 4}, 0, 1),
                 pan = rng.uniform_tensor({32, 32, 1}, 0, 1);
    double acc = 0;
    for (std::size_t b = 0; b < 4; ++b) acc += ds_term(f, l, pan, b, 4);
    EXPECT_NEAR(d_s(f, l, pan), acc / 4, 1e-12);

    const Tensor swapped = permute_bands(f, {0, 2, 1, 3});
    double moved = ds_term(f, l, pan, 0, 4) + ds_term(f, l, pan, 3, 4);
    moved += std::abs(oracle::uiqi_plane(oracle::band(f, 2), oracle::band(pan, 0)) -
                      oracle::uiqi_plane(oracle::band(l, 1), oracle::band(oracle::blur_decimate(pan, 4, 1.7), 0)));
    moved += std::abs(oracle::uiqi_plane(oracle::band(f, 1), oracle::band(pan, 0)) -
                      oracle::uiqi_plane(oracle::band(l, 2), oracle::band(oracle::blur_decimate(pan, 4, 1.7), 0)));
    EXPECT_NEAR(d_s(swapped, l, pan), moved / 4, 1e-12);
}

TEST(Ds, Errors) {
    EXPECT_THROW(d_s(Tensor::zeros({32, 32, 4}), Tensor::zeros({8, 8, 4}), Tensor::zeros({32, 32, 2})), DimensionError);
    EXPECT_THROW(d_s(Tensor::zeros({32, 32, 4}), Tensor::zeros({8, 8, 4}), Tensor::zeros({16, 16, 1})), DimensionError);
}

// ------------------------------------------------------------------- HQNR ---

TEST(Hqnr, Examples) {
    EXPECT_EQ(hqnr(0, 0), 1.0);
    for (double ds : {0.0, 0.3, 1.0}) EXPECT_EQ(hqnr(1, ds), 0.0);
    EXPECT_NEAR(hqnr(0.0202, 0.0338), 0.9467, 0.0005);
    EXPECT_THROW(hqnr(-0.1, 0), ArgumentError);
    EXPECT_THROW(hqnr(0, 1.5), ArgumentError);
    EXPECT_THROW(hqnr(std::nan(""), 0), ArgumentError);
}

TEST(Hqnr, StrictlyDecreasingInEachArgument) {
    for (double a = 0.05; a < 1.0; a += 0.1)
        for (double b = 0.05; b < 1.0; b += 0.1) {
            EXPECT_GT(hqnr(a, b), hqnr(a + 0.01, b));
            EXPECT_GT(hqnr(a, b), hqnr(a, b + 0.01));
        }
}

// ----------------------------------------------------------------- report ---

TEST(Report, StatisticsAreRecomputable) {
    const std::vector<std::vector<double>> rows{{1, 2, 0.5}, {3, 5, 0.7}, {2, 2, 0.9}};
    const MetricsReport r = MetricsReport::make(Protocol::Reduced, rows);
    EXPECT_EQ(r.columns, (std::vector<std::string>{"SAM", "ERGAS", "Q2n"}));
    for (std::size_t j = 0; j < 3; ++j) {
        const double m = (rows[0][j] + rows[1][j] + rows[2][j]) / 3;
        double ss = 0;
        for (const auto& row : rows) ss += (row[j] - m) * (row[j] - m);
        EXPECT_NEAR(r.mean[j], m, 1e-12);
        EXPECT_NEAR(r.stddev[j], std::sqrt(ss / 2), 1e-12);
    }
    EXPECT_EQ(MetricsReport::make(Protocol::Full, {{0.1, 0.2, 0.72}}).stddev, (std::vector<double>{0, 0, 0}));
    EXPECT_THROW(MetricsReport::make(Protocol::Full, {{0.1, 0.2}}), DimensionError);
    EXPECT_EQ(r.column("ERGAS"), 1u);
    EXPECT_THROW(r.column("HQNR"), ArgumentError);
}

TEST(Report, CsvLayout) {
    const MetricsReport r = MetricsReport::make(Protocol::Full, {{0.1, 0.2, 0.72}, {0.3, 0.1, 0.63}});
    std::istringstream in(r.to_csv());
    std::vector<std::string> lines;
    for (std::string line; std::getline(in, line);) lines.push_back(line);
    ASSERT_EQ(lines.size(), 5u);
    EXPECT_EQ(lines[0], "sample,D_lambda,D_s,HQNR");
    EXPECT_EQ(lines[1].rfind("0,", 0), 0u);
    EXPECT_EQ(lines[3].rfind("mean,", 0), 0u);
    EXPECT_EQ(lines[4].rfind("std,", 0), 0u);
    EXPECT_EQ(std::stod(lines[1].substr(2)), 0.1);
}

TEST(Report, PerSampleMetricsArePure) {
    Rng rng(16);
    const Tensor gt = synth_scene(rng, 32, 32, 4).hrms;
    const Tensor lrms = wald_degrade(gt, 4, 1.7);
    const Tensor up = resample(lrms, Ratio{4, 1}, ResampleMode::Bilinear);
    const Tensor pan = pan_from_hrms(gt, uniform_band_weights(4));
    EXPECT_EQ(reduced_metrics(up, gt, 4), reduced_metrics(up, gt, 4));
    const auto full = full_metrics(up, lrms, pan);
    EXPECT_EQ(full, full_metrics(up, lrms, pan));
    EXPECT_NEAR(full[2], (1 - full[0]) * (1 - full[1]), 1e-15);
    const auto same = reduced_metrics(gt, gt, 4);
    EXPECT_EQ(same[0], 0.0);
    EXPECT_EQ(same[1], 0.0);
    EXPECT_NEAR(same[2], 1.0, 1e-12);
}
