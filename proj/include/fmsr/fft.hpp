#pragma once

#include <vector>

#include "tensor.hpp"

namespace fmsr {

namespace fft {

/// Plain complex value. std::complex multiplication routes through __mulsc3
/// for NaN semantics, which dominates the FFT cost; this stays inline.
template <typename T>
struct cx {
    T re = 0, im = 0;
    cx() = default;
    cx(T r, T i) : re(r), im(i) {}
    cx operator+(cx o) const { return {re + o.re, im + o.im}; }
    cx operator-(cx o) const { return {re - o.re, im - o.im}; }
    cx operator*(cx o) const { return {re * o.re - im * o.im, re * o.im + im * o.re}; }
    cx conj() const { return {re, -im}; }
    cx scaled(T s) const { return {re * s, im * s}; }
};

inline bool is_pow2(i64 n) { return n > 0 && (n & (n - 1)) == 0; }

inline i64 next_pow2(i64 n) {
    i64 p = 1;
    while (p < n) p <<= 1;
    return p;
}

/// iterative radix-2 Cooley-Tukey, no normalization on either direction
template <typename T>
void fft_pow2(cx<T>* a, i64 n, bool inverse) {
    for (i64 i = 1, j = 0; i < n; ++i) {
        i64 bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (i64 len = 2; len <= n; len <<= 1) {
        const double ang = (inverse ? 2.0 : -2.0) * 3.14159265358979323846 / static_cast<double>(len);
        // double-precision twiddle recurrence keeps long transforms accurate
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (i64 i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (i64 k = 0; k < len / 2; ++k) {
                const cx<T> w(static_cast<T>(cr), static_cast<T>(ci));
                const cx<T> u = a[i + k];
                const cx<T> v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
                const double nr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = nr;
            }
        }
    }
}

/// Bluestein chirp-z for arbitrary length, no normalization
template <typename T>
void fft_bluestein(cx<T>* a, i64 n, bool inverse) {
    const i64 m = next_pow2(2 * n - 1);
    std::vector<cx<T>> chirp(static_cast<size_t>(n));
    const double sign = inverse ? 1.0 : -1.0;
    for (i64 k = 0; k < n; ++k) {
        // k^2 mod 2n keeps the phase argument exact for large k
        const i64 k2 = (k * k) % (2 * n);
        const double ang = sign * 3.14159265358979323846 * static_cast<double>(k2) / static_cast<double>(n);
        chirp[static_cast<size_t>(k)] = cx<T>(static_cast<T>(std::cos(ang)), static_cast<T>(std::sin(ang)));
    }
    std::vector<cx<T>> u(static_cast<size_t>(m));
    std::vector<cx<T>> v(static_cast<size_t>(m));
    for (i64 k = 0; k < n; ++k) u[static_cast<size_t>(k)] = a[k] * chirp[static_cast<size_t>(k)];
    for (i64 k = 0; k < n; ++k) {
        v[static_cast<size_t>(k)] = chirp[static_cast<size_t>(k)].conj();
        if (k > 0) v[static_cast<size_t>(m - k)] = chirp[static_cast<size_t>(k)].conj();
    }
    fft_pow2(u.data(), m, false);
    fft_pow2(v.data(), m, false);
    for (i64 k = 0; k < m; ++k) u[static_cast<size_t>(k)] = u[static_cast<size_t>(k)] * v[static_cast<size_t>(k)];
    fft_pow2(u.data(), m, true);
    const T inv_m = T(1) / static_cast<T>(m);
    for (i64 k = 0; k < n; ++k)
        a[k] = u[static_cast<size_t>(k)].scaled(inv_m) * chirp[static_cast<size_t>(k)];
}

template <typename T>
void fft_any(cx<T>* a, i64 n, bool inverse) {
    if (n == 1) return;
    if (is_pow2(n))
        fft_pow2(a, n, inverse);
    else
        fft_bluestein(a, n, inverse);
}

/// 2D transform of an H x W complex buffer (row-major), no normalization.
template <typename T>
void fft2_raw(cx<T>* a, i64 h, i64 w, bool inverse) {
    for (i64 r = 0; r < h; ++r) fft_any(a + r * w, w, inverse);
    std::vector<cx<T>> col(static_cast<size_t>(h));
    for (i64 c = 0; c < w; ++c) {
        for (i64 r = 0; r < h; ++r) col[static_cast<size_t>(r)] = a[r * w + c];
        fft_any(col.data(), h, inverse);
        for (i64 r = 0; r < h; ++r) a[r * w + c] = col[static_cast<size_t>(r)];
    }
}

}  // namespace fft

inline i64 rfft_width(i64 w) { return w / 2 + 1; }

/// Real 2D FFT of each channel, keeping the non-redundant half spectrum.
/// Output layout: [B, 2C, H, W/2+1] with channels [0,C) real parts and
/// [C,2C) imaginary parts.
template <typename T>
Tensor<T> rfft2_half(const Tensor<T>& x) {
    check_shape(x.rank() == 4, "rfft2_half: want [B,C,H,W]");
    const i64 B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const i64 Wh = rfft_width(W);
    Tensor<T> out({B, 2 * C, H, Wh});
    std::vector<fft::cx<T>> buf(static_cast<size_t>(H * W));
    for (i64 b = 0; b < B; ++b) {
        for (i64 c = 0; c < C; ++c) {
            for (i64 i = 0; i < H * W; ++i)
                buf[static_cast<size_t>(i)] = fft::cx<T>(x.ptr()[((b * C + c) * H * W) + i], T(0));
            fft::fft2_raw(buf.data(), H, W, false);
            for (i64 h = 0; h < H; ++h)
                for (i64 q = 0; q < Wh; ++q) {
                    out(b, c, h, q) = buf[static_cast<size_t>(h * W + q)].re;
                    out(b, C + c, h, q) = buf[static_cast<size_t>(h * W + q)].im;
                }
        }
    }
    return out;
}

namespace detail {

/// Hermitian extension of a half spectrum to the full W columns.
template <typename T>
void extend_half(const Tensor<T>& s, i64 b, i64 c, i64 C, i64 H, i64 W,
                 std::vector<fft::cx<T>>& full) {
    const i64 Wh = rfft_width(W);
    for (i64 h = 0; h < H; ++h) {
        for (i64 q = 0; q < Wh; ++q)
            full[static_cast<size_t>(h * W + q)] = fft::cx<T>(s(b, c, h, q), s(b, C + c, h, q));
        for (i64 q = Wh; q < W; ++q) {
            const i64 hs = (H - h) % H;
            const i64 qs = W - q;
            full[static_cast<size_t>(h * W + q)] =
                fft::cx<T>(s(b, c, hs, qs), -s(b, C + c, hs, qs));
        }
    }
}

}  // namespace detail

/// Inverse of rfft2_half: Hermitian-extend, inverse transform, keep the real
/// part. Linear in the half-spectrum entries (also well defined when the
/// network output is not exactly Hermitian).
template <typename T>
Tensor<T> irfft2_half(const Tensor<T>& s, i64 W) {
    check_shape(s.rank() == 4 && s.dim(1) % 2 == 0, "irfft2_half: want [B,2C,H,Wh]");
    const i64 B = s.dim(0), C = s.dim(1) / 2, H = s.dim(2), Wh = s.dim(3);
    check_shape(Wh == rfft_width(W), "irfft2_half: half-spectrum width mismatch");
    Tensor<T> out({B, C, H, W});
    std::vector<fft::cx<T>> buf(static_cast<size_t>(H * W));
    const T norm = T(1) / static_cast<T>(H * W);
    for (i64 b = 0; b < B; ++b) {
        for (i64 c = 0; c < C; ++c) {
            detail::extend_half(s, b, c, C, H, W, buf);
            fft::fft2_raw(buf.data(), H, W, true);
            for (i64 i = 0; i < H * W; ++i)
                out.ptr()[((b * C + c) * H * W) + i] = buf[static_cast<size_t>(i)].re * norm;
        }
    }
    return out;
}

/// Adjoint of rfft2_half as a real-linear map (used by the backward pass):
/// g = Re(F^H pad(G)) with F^H the unnormalized inverse kernel.
template <typename T>
Tensor<T> rfft2_half_adjoint(const Tensor<T>& grad_s, i64 W) {
    const i64 B = grad_s.dim(0), C = grad_s.dim(1) / 2, H = grad_s.dim(2), Wh = grad_s.dim(3);
    check_shape(Wh == rfft_width(W), "rfft2_half_adjoint: width mismatch");
    Tensor<T> out({B, C, H, W});
    std::vector<fft::cx<T>> buf(static_cast<size_t>(H * W));
    for (i64 b = 0; b < B; ++b) {
        for (i64 c = 0; c < C; ++c) {
            std::fill(buf.begin(), buf.end(), fft::cx<T>(0, 0));
            for (i64 h = 0; h < H; ++h)
                for (i64 q = 0; q < Wh; ++q)
                    buf[static_cast<size_t>(h * W + q)] =
                        fft::cx<T>(grad_s(b, c, h, q), grad_s(b, C + c, h, q));
            fft::fft2_raw(buf.data(), H, W, true);
            for (i64 i = 0; i < H * W; ++i)
                out.ptr()[((b * C + c) * H * W) + i] = buf[static_cast<size_t>(i)].re;
        }
    }
    return out;
}

/// Adjoint of irfft2_half: forward transform of the real cotangent scaled by
/// 1/(HW), then fold the Hermitian-mirror contributions back onto the half
/// spectrum.
template <typename T>
Tensor<T> irfft2_half_adjoint(const Tensor<T>& grad_x, i64 C2) {
    check_shape(grad_x.rank() == 4, "irfft2_half_adjoint: want [B,C,H,W]");
    const i64 B = grad_x.dim(0), C = grad_x.dim(1), H = grad_x.dim(2), W = grad_x.dim(3);
    check_shape(C2 == 2 * C, "irfft2_half_adjoint: channel mismatch");
    const i64 Wh = rfft_width(W);
    Tensor<T> out({B, 2 * C, H, Wh});
    std::vector<fft::cx<T>> buf(static_cast<size_t>(H * W));
    const T norm = T(1) / static_cast<T>(H * W);
    for (i64 b = 0; b < B; ++b) {
        for (i64 c = 0; c < C; ++c) {
            for (i64 i = 0; i < H * W; ++i)
                buf[static_cast<size_t>(i)] =
                    fft::cx<T>(grad_x.ptr()[((b * C + c) * H * W) + i] * norm, T(0));
            fft::fft2_raw(buf.data(), H, W, false);
            for (i64 h = 0; h < H; ++h)
                for (i64 q = 0; q < Wh; ++q) {
                    out(b, c, h, q) = buf[static_cast<size_t>(h * W + q)].re;
                    out(b, C + c, h, q) = buf[static_cast<size_t>(h * W + q)].im;
                }
            for (i64 h = 0; h < H; ++h)
                for (i64 q = Wh; q < W; ++q) {
                    const i64 hs = (H - h) % H;
                    const i64 qs = W - q;
                    const fft::cx<T> g = buf[static_cast<size_t>(h * W + q)];
                    out(b, c, hs, qs) += g.re;
                    out(b, C + c, hs, qs) += -g.im;
                }
        }
    }
    return out;
}

}  // namespace fmsr
