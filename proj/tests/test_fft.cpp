#include <doctest.h>

#include "fmsr/fft.hpp"
#include "fmsr/rng.hpp"
#include "oracles.hpp"

using namespace fmsr;

TEST_CASE("forward transform matches the naive DFT, pow2 and Bluestein sizes") {
    Rng rng(31);
    for (i64 H : {4, 5, 8}) {
        for (i64 W : {4, 6, 7, 9, 16}) {
            Tensor<double> x({1, 1, H, W});
            rng.fill_uniform(x, -1.0, 1.0);
            Tensor<double> s = rfft2_half(x);
            const auto ref = oracle::dft2_naive(x.ptr(), H, W);
            const i64 Wh = rfft_width(W);
            for (i64 p = 0; p < H; ++p)
                for (i64 q = 0; q < Wh; ++q) {
                    CHECK(s(0, 0, p, q) ==
                          doctest::Approx(ref[static_cast<size_t>(p * W + q)].real()).epsilon(1e-10));
                    CHECK(s(0, 1, p, q) ==
                          doctest::Approx(ref[static_cast<size_t>(p * W + q)].imag()).epsilon(1e-10));
                }
        }
    }
}

TEST_CASE("irfft2_half inverts rfft2_half") {
    Rng rng(32);
    for (i64 H : {3, 8}) {
        for (i64 W : {5, 8, 11}) {
            Tensor<double> x({2, 3, H, W});
            rng.fill_uniform(x, -1.0, 1.0);
            Tensor<double> back = irfft2_half(rfft2_half(x), W);
            CHECK(max_abs_diff(back, x) < 1e-12);
        }
    }
}

TEST_CASE("rfft2_half adjoint satisfies the inner-product identity") {
    Rng rng(33);
    for (i64 W : {6, 7, 8}) {
        const i64 H = 5;
        Tensor<double> x({1, 2, H, W});
        rng.fill_uniform(x, -1.0, 1.0);
        Tensor<double> g({1, 4, H, rfft_width(W)});
        rng.fill_uniform(g, -1.0, 1.0);
        const Tensor<double> ax = rfft2_half(x);
        const Tensor<double> atg = rfft2_half_adjoint(g, W);
        double lhs = 0, rhs = 0;
        for (i64 i = 0; i < ax.numel(); ++i) lhs += ax[i] * g[i];
        for (i64 i = 0; i < x.numel(); ++i) rhs += x[i] * atg[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("irfft2_half adjoint satisfies the inner-product identity") {
    Rng rng(34);
    for (i64 W : {6, 7, 8}) {
        const i64 H = 4;
        Tensor<double> s({1, 4, H, rfft_width(W)});
        rng.fill_uniform(s, -1.0, 1.0);
        Tensor<double> g({1, 2, H, W});
        rng.fill_uniform(g, -1.0, 1.0);
        const Tensor<double> as = irfft2_half(s, W);
        const Tensor<double> atg = irfft2_half_adjoint(g, 4);
        double lhs = 0, rhs = 0;
        for (i64 i = 0; i < as.numel(); ++i) lhs += as[i] * g[i];
        for (i64 i = 0; i < s.numel(); ++i) rhs += s[i] * atg[i];
        CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
    }
}

TEST_CASE("spectrum of a constant image is a single positive DC bin") {
    Tensor<double> x({1, 1, 6, 6}, 0.37);
    Tensor<double> s = rfft2_half(x);
    CHECK(s(0, 0, 0, 0) == doctest::Approx(0.37 * 36.0).epsilon(1e-12));
    double rest = 0;
    for (i64 i = 1; i < s.numel(); ++i) rest = std::max(rest, std::abs(s[i]));
    CHECK(rest < 1e-12);
}
