#pragma once

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>

namespace fmsr {

namespace detail {

/// Polynomial exp for f32, ~2 ulp over the clamp range. The scan and the
/// activation layers evaluate exp tens of millions of times per step; libm
/// expf is the bottleneck otherwise.
inline float fast_expf(float x) {
    // squash wild inputs so the exponent bit-trick cannot wrap; the selects
    // if-convert (build uses -fno-trapping-math) and the loop vectorizes.
    // exp(-87) ~ 1.6e-38 is the saturation floor, exp(88) ~ 1.7e38 the cap.
    x = (x < -87.0f) ? -87.0f : (x > 88.0f ? 88.0f : x);
    const float log2e = 1.442695040888963f;
    const float c0 = 0.693359375f;        // ln2 split (Cody-Waite)
    const float c1 = -2.12194440e-4f;
    const float t = x * log2e;
    const float magic = 12582912.0f;  // 1.5 * 2^23; add/sub rounds to nearest
    const float n = (t + magic) - magic;
    const std::int32_t ni = static_cast<std::int32_t>(n);
    float r = x - n * c0;
    r = r - n * c1;
    // degree-5 minimax for e^r on [-ln2/2, ln2/2]
    float p = 1.9875691500e-4f;
    p = p * r + 1.3981999507e-3f;
    p = p * r + 8.3334519073e-3f;
    p = p * r + 4.1665795894e-2f;
    p = p * r + 1.6666665459e-1f;
    p = p * r + 5.0000001201e-1f;
    p = p * r * r + r + 1.0f;
    const std::int32_t bits = std::bit_cast<std::int32_t>(p) + (ni << 23);
    return std::bit_cast<float>(bits);
}

/// Polynomial log for f32. Caller guarantees x is a positive normal float
/// (the only use is log1p on arguments >= 1).
inline float fast_logf(float x) {
    std::int32_t bits = std::bit_cast<std::int32_t>(x);
    std::int32_t e = ((bits >> 23) & 0xff) - 127;
    bits = (bits & 0x007fffff) | 0x3f800000;  // mantissa in [1,2)
    float m = std::bit_cast<float>(bits);
    const bool hi = m > 1.41421356f;  // center on sqrt(2) for accuracy
    m = hi ? m * 0.5f : m;
    e = hi ? e + 1 : e;
    const float f = m - 1.0f;
    float p = -1.1514610310e-1f;
    p = p * f + 1.1676998740e-1f;
    p = p * f - 1.2420140846e-1f;
    p = p * f + 1.4249322787e-1f;
    p = p * f - 1.6668057665e-1f;
    p = p * f + 2.0000714765e-1f;
    p = p * f - 2.4999993993e-1f;
    p = p * f + 3.3333331174e-1f;
    p = p * f * f * f - 0.5f * f * f + f;
    return p + 0.693147180559945f * static_cast<float>(e);
}

}  // namespace detail

/// scalar math dispatch: double paths use libm (oracle fidelity), float paths
/// use the fast approximations (training speed)
template <typename T>
struct scalar_math {
    static T exp(T x) { return std::exp(x); }
    static T log(T x) { return std::log(x); }
    static T erf(T x) { return std::erf(x); }
    static T sigmoid(T x) { return T(1) / (T(1) + std::exp(-x)); }
    static T softplus(T x) { return x > T(30) ? x : std::log1p(std::exp(x)); }
};

template <>
struct scalar_math<float> {
    static float exp(float x) { return detail::fast_expf(x); }
    static float log(float x) { return std::log(x); }
    static float erf(float x) {
        // Abramowitz-Stegun 7.1.26, |err| < 1.5e-7
        const float sgn = x < 0.0f ? -1.0f : 1.0f;
        const float a = std::fabs(x);
        const float t = 1.0f / (1.0f + 0.3275911f * a);
        float p = 1.061405429f;
        p = p * t - 1.453152027f;
        p = p * t + 1.421413741f;
        p = p * t - 0.284496736f;
        p = p * t + 0.254829592f;
        const float y = 1.0f - p * t * detail::fast_expf(-a * a);
        return sgn * y;
    }
    static float sigmoid(float x) { return 1.0f / (1.0f + detail::fast_expf(-x)); }
    static float softplus(float x) {
        const float z = detail::fast_expf(-std::fabs(x));
        // series below 2^-10 avoids the 1+z rounding loss
        const float l = z > 0.0009765625f ? detail::fast_logf(1.0f + z) : z * (1.0f - 0.5f * z);
        const float mx = 0.5f * (x + std::fabs(x));  // max(x, 0)
        return mx + l;
    }
};

template <typename T>
inline T silu_val(T x) {
    return x * scalar_math<T>::sigmoid(x);
}

template <typename T>
inline T gelu_val(T x) {
    // exact erf form
    const T inv_sqrt2 = T(0.70710678118654752440);
    return T(0.5) * x * (T(1) + scalar_math<T>::erf(x * inv_sqrt2));
}

template <typename T>
inline T gelu_grad_val(T x) {
    const T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt2pi = T(0.39894228040143267794);
    const T phi = T(0.5) * (T(1) + scalar_math<T>::erf(x * inv_sqrt2));
    const T pdf = inv_sqrt2pi * scalar_math<T>::exp(T(-0.5) * x * x);
    return phi + x * pdf;
}

}  // namespace fmsr
