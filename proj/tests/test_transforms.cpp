#include <gtest/gtest.h>

#include <cmath>

#include "cmt/errors.hpp"
#include "cmt/rng.hpp"
#include "cmt/transforms.hpp"
#include "grad_util.hpp"
#include "oracles.hpp"

using namespace cmt;

namespace {

double energy(const Tensor& t) {
    double s = 0.0;
    for (double v : t.data()) s += v * v;
    return s;
}

Tensor lin(double a, const Tensor& x, double b, const Tensor& y) {
    Tensor r = x;
    for (std::size_t i = 0; i < r.size(); ++i) r[i] = a * x[i] + b * y[i];
    return r;
}

}  // namespace

TEST(Dft2, ImpulseIsFlatSpectrum) {
    Tensor x = Tensor::zeros({4, 4});
    x.at(0, 0) = 1.0;
    const ComplexPlane f = dft2(x);
    for (double v : f.real.data()) EXPECT_NEAR(v, 1.0, 1e-15);
    for (double v : f.imag.data()) EXPECT_NEAR(v, 0.0, 1e-15);
}

TEST(Dft2, ConstantOnlyHasDc) {
    const ComplexPlane f = dft2(Tensor({3, 5}, 0.8));
    EXPECT_NEAR(f.real.at(0, 0), 0.8 * 15, 1e-12);
    for (std::size_t i = 1; i < f.real.size(); ++i) {
        EXPECT_NEAR(f.real[i], 0.0, 1e-12);
        EXPECT_NEAR(f.imag[i], 0.0, 1e-12);
    }
}

TEST(Dft2, MatchesDirectSumOracle) {
    Rng rng(31);
    for (Shape s : {Shape{4, 4}, Shape{3, 5}, Shape{8, 6}, Shape{1, 7}}) {
        const Tensor x = rng.uniform_tensor(s, -1, 1);
        const ComplexPlane f = dft2(x);
        const oracle::Complex2 o = oracle::dft2(x);
        EXPECT_LT(max_abs_diff(f.real, o.re), 1e-10);
        EXPECT_LT(max_abs_diff(f.imag, o.im), 1e-10);
    }
}

TEST(Idft2, RoundTripAndTrivialPlanes) {
    Rng rng(32);
    const Tensor x = rng.uniform_tensor({8, 8}, -1, 1);
    EXPECT_LT(max_abs_diff(idft2(dft2(x)), x), 1e-10);
    EXPECT_EQ(idft2({Tensor::zeros({3, 4}), Tensor::zeros({3, 4})}), Tensor::zeros({3, 4}));
    ComplexPlane dc{Tensor::zeros({3, 4}), Tensor::zeros({3, 4})};
    dc.real.at(0, 0) = 12.0;
    EXPECT_LT(max_abs_diff(idft2(dc), Tensor::ones({3, 4})), 1e-12);
}

TEST(Dft2, Parseval) {
    Rng rng(33);
    const Tensor x = rng.uniform_tensor({6, 8}, -2, 2);
    const ComplexPlane f = dft2(x);
    const double lhs = energy(f.real) + energy(f.imag), rhs = 48.0 * energy(x);
    EXPECT_LT(std::abs(lhs - rhs) / rhs, 1e-10);
}

TEST(Dft2, Linearity) {
    Rng rng(34);
    const Tensor x = rng.uniform_tensor({5, 6}, -1, 1), y = rng.uniform_tensor({5, 6}, -1, 1);
    const ComplexPlane fx = dft2(x), fy = dft2(y), fz = dft2(lin(1.5, x, -0.25, y));
    EXPECT_LT(max_abs_diff(fz.real, lin(1.5, fx.real, -0.25, fy.real)), 1e-10);
    EXPECT_LT(max_abs_diff(fz.imag, lin(1.5, fx.imag, -0.25, fy.imag)), 1e-10);
}

TEST(Dwt2Haar, ConstantKillsDetails) {
    const WaveletPyramid p = dwt2_haar(Tensor({4, 6}, 0.3), 1);
    for (double v : p.ll.data()) EXPECT_NEAR(v, 0.6, 1e-15);
    for (const Tensor* t : {&p.details[0].lh, &p.details[0].hl, &p.details[0].hh})
        for (double v : t->data()) EXPECT_EQ(v, 0.0);
}

TEST(Dwt2Haar, TwoByTwoClosedForm) {
    const double a = 1.0, b = -2.0, c = 3.5, d = 0.25;
    const WaveletPyramid p = dwt2_haar(Tensor({2, 2}, std::vector<double>{a, b, c, d}), 1);
    EXPECT_DOUBLE_EQ(p.ll.item(), (a + b + c + d) / 2);
    EXPECT_DOUBLE_EQ(p.details[0].hl.item(), (a - b + c - d) / 2);
    EXPECT_DOUBLE_EQ(p.details[0].lh.item(), (a + b - c - d) / 2);
    EXPECT_DOUBLE_EQ(p.details[0].hh.item(), (a - b - c + d) / 2);
}

TEST(Dwt2Haar, MatchesBlockOracleAcrossLevels) {
    Rng rng(35);
    const Tensor x = rng.uniform_tensor({8, 8}, -1, 1);
    const WaveletPyramid p = dwt2_haar(x, 2);
    const oracle::HaarLevel l1 = oracle::haar_level(x), l2 = oracle::haar_level(l1.ll);
    EXPECT_LT(max_abs_diff(p.details[0].lh, l1.lh), 1e-12);
    EXPECT_LT(max_abs_diff(p.details[0].hl, l1.hl), 1e-12);
    EXPECT_LT(max_abs_diff(p.details[0].hh, l1.hh), 1e-12);
    EXPECT_LT(max_abs_diff(p.details[1].lh, l2.lh), 1e-12);
    EXPECT_LT(max_abs_diff(p.details[1].hh, l2.hh), 1e-12);
    EXPECT_LT(max_abs_diff(p.ll, l2.ll), 1e-12);
    EXPECT_EQ(p.details[1].hl.shape(), (Shape{2, 2}));
}

TEST(Dwt2Haar, EnergyPreserved) {
    Rng rng(36);
    const Tensor x = rng.uniform_tensor({8, 8}, -1, 1);
    EXPECT_NEAR(pyramid_energy(dwt2_haar(x, 2)), energy(x), 1e-10);
}

TEST(Dwt2Haar, RoundTripAndTrivialPyramids) {
    Rng rng(37);
    const Tensor x = rng.uniform_tensor({16, 16}, -1, 1);
    EXPECT_LT(max_abs_diff(idwt2_haar(dwt2_haar(x, 2)), x), 1e-10);
    EXPECT_LT(max_abs_diff(idwt2_haar(dwt2_haar(x, 4)), x), 1e-10);

    WaveletPyramid p;
    p.details.push_back({Tensor::zeros({2, 3}), Tensor::zeros({2, 3}), Tensor::zeros({2, 3})});
    p.ll = Tensor({2, 3}, 2 * 0.7);
    const Tensor r = idwt2_haar(p);
    ASSERT_EQ(r.shape(), (Shape{4, 6}));
    for (double v : r.data()) EXPECT_NEAR(v, 0.7, 1e-15);
    p.ll = Tensor::zeros({2, 3});
    EXPECT_EQ(idwt2_haar(p), Tensor::zeros({4, 6}));
}

TEST(Dwt2Haar, Linearity) {
    Rng rng(38);
    const Tensor x = rng.uniform_tensor({8, 4}, -1, 1), y = rng.uniform_tensor({8, 4}, -1, 1);
    const WaveletPyramid px = dwt2_haar(x, 2), py = dwt2_haar(y, 2), pz = dwt2_haar(lin(2.0, x, 0.5, y), 2);
    EXPECT_LT(max_abs_diff(pz.ll, lin(2.0, px.ll, 0.5, py.ll)), 1e-10);
    for (std::size_t j = 0; j < 2; ++j) {
        EXPECT_LT(max_abs_diff(pz.details[j].lh, lin(2.0, px.details[j].lh, 0.5, py.details[j].lh)), 1e-10);
        EXPECT_LT(max_abs_diff(pz.details[j].hl, lin(2.0, px.details[j].hl, 0.5, py.details[j].hl)), 1e-10);
        EXPECT_LT(max_abs_diff(pz.details[j].hh, lin(2.0, px.details[j].hh, 0.5, py.details[j].hh)), 1e-10);
    }
}

TEST(Dwt2Haar, DivisibilityErrorNamesRequirement) {
    try {
        dwt2_haar(Tensor::zeros({6, 8}), 2);
        FAIL() << "expected ArgumentError";
    } catch (const ArgumentError& e) {
        EXPECT_NE(std::string(e.what()).find('4'), std::string::npos) << e.what();
    }
    EXPECT_THROW(dwt2_haar(Tensor::zeros({3, 4}), 1), ArgumentError);
}

TEST(Idwt2Haar, InconsistentSubbandsAreStructureError) {
    WaveletPyramid p = dwt2_haar(Tensor::zeros({8, 8}), 2);
    p.details[0].hh = Tensor::zeros({3, 4});
    EXPECT_THROW(idwt2_haar(p), StructureError);
    WaveletPyramid q = dwt2_haar(Tensor::zeros({8, 8}), 2);
    q.ll = Tensor::zeros({4, 4});
    EXPECT_THROW(idwt2_haar(q), StructureError);
}

TEST(TransformGradient, DftAndHaar) {
    Rng rng(39);
    const Tensor x = rng.uniform_tensor({4, 6}, -1, 1);
    EXPECT_LT(testutil::op_grad_error([](const auto& v) { return dft2(v[0]).real; }, {x}), 1e-4);
    EXPECT_LT(testutil::op_grad_error([](const auto& v) { return dft2(v[0]).imag; }, {x}), 1e-4);
    const Tensor y = rng.uniform_tensor({8, 8}, -1, 1);
    EXPECT_LT(testutil::op_grad_error([](const auto& v) { return dwt2_haar(v[0], 2).ll; }, {y}), 1e-4);
    EXPECT_LT(testutil::op_grad_error([](const auto& v) { return dwt2_haar(v[0], 2).details[0].hl; }, {y}), 1e-4);
    EXPECT_LT(testutil::op_grad_error([](const auto& v) { return dwt2_haar(v[0], 2).details[1].hh; }, {y}), 1e-4);
}

TEST(TransformGradient, DifferentiableFormsMatchPlainOnes) {
    Rng rng(40);
    const Tensor x = rng.uniform_tensor({8, 8}, -1, 1);
    EXPECT_EQ(dft2(Var(x)).real.value(), dft2(x).real);
    EXPECT_EQ(dwt2_haar(Var(x), 2).ll.value(), dwt2_haar(x, 2).ll);
}
