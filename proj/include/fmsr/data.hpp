#pragma once

#include <utility>

#include "rng.hpp"
#include "tensor.hpp"

namespace fmsr {

/// Two-piece cubic kernel, a = -0.5, support 4.
inline double cubic_kernel(double t) {
    const double a = -0.5;
    const double x = std::abs(t);
    if (x <= 1.0) return (a + 2.0) * x * x * x - (a + 3.0) * x * x + 1.0;
    if (x < 2.0) return a * x * x * x - 5.0 * a * x * x + 8.0 * a * x - 4.0 * a;
    return 0.0;
}

struct ResampleRow {
    i64 lo = 0;                  // first source index (before edge clamping)
    std::vector<double> w;       // normalized tap weights
};

/// Per-output-pixel taps for one axis. Half-pixel centers; when downscaling
/// with antialias the kernel is dilated by the scale factor. Weights are
/// renormalized to sum to 1.
inline std::vector<ResampleRow> bicubic_weights(i64 in_size, i64 out_size, bool antialias) {
    check_shape(in_size >= 1, "bicubic_weights: empty input");
    if (out_size < 1) throw std::invalid_argument("bicubic_weights: output size must be positive");
    const double scale = static_cast<double>(in_size) / static_cast<double>(out_size);
    const double kscale = (antialias && scale > 1.0) ? scale : 1.0;
    const double support = 2.0 * kscale;
    std::vector<ResampleRow> rows(static_cast<size_t>(out_size));
    for (i64 i = 0; i < out_size; ++i) {
        const double center = (static_cast<double>(i) + 0.5) * scale - 0.5;
        const i64 lo = static_cast<i64>(std::floor(center - support)) + 1;
        const i64 hi = static_cast<i64>(std::floor(center + support));
        ResampleRow row;
        row.lo = lo;
        row.w.resize(static_cast<size_t>(hi - lo + 1));
        double sum = 0.0;
        for (i64 t = lo; t <= hi; ++t) {
            const double wv = cubic_kernel((center - static_cast<double>(t)) / kscale);
            row.w[static_cast<size_t>(t - lo)] = wv;
            sum += wv;
        }
        for (double& wv : row.w) wv /= sum;
        rows[static_cast<size_t>(i)] = std::move(row);
    }
    return rows;
}

namespace detail {

inline i64 clamp_index(i64 i, i64 n) { return i < 0 ? 0 : (i >= n ? n - 1 : i); }

}  // namespace detail

/// Separable cubic resampling of a [C,H,W] image (rows then columns).
template <typename T>
Tensor<T> bicubic_resize(const Tensor<T>& img, i64 out_h, i64 out_w, bool antialias) {
    check_shape(img.rank() == 3, "bicubic_resize: want [C,H,W]");
    if (out_h < 1 || out_w < 1)
        throw std::invalid_argument("bicubic_resize: output size must be positive");
    const i64 C = img.dim(0), H = img.dim(1), W = img.dim(2);
    const auto rows_h = bicubic_weights(H, out_h, antialias);
    const auto rows_w = bicubic_weights(W, out_w, antialias);
    Tensor<T> mid({C, out_h, W});
    for (i64 c = 0; c < C; ++c)
        for (i64 i = 0; i < out_h; ++i) {
            const ResampleRow& r = rows_h[static_cast<size_t>(i)];
            for (i64 j = 0; j < W; ++j) {
                double acc = 0.0;
                for (size_t k = 0; k < r.w.size(); ++k)
                    acc += r.w[k] * static_cast<double>(
                                        img(c, detail::clamp_index(r.lo + static_cast<i64>(k), H), j));
                mid(c, i, j) = static_cast<T>(acc);
            }
        }
    Tensor<T> out({C, out_h, out_w});
    for (i64 c = 0; c < C; ++c)
        for (i64 i = 0; i < out_h; ++i)
            for (i64 j = 0; j < out_w; ++j) {
                const ResampleRow& r = rows_w[static_cast<size_t>(j)];
                double acc = 0.0;
                for (size_t k = 0; k < r.w.size(); ++k)
                    acc += r.w[k] * static_cast<double>(
                                        mid(c, i, detail::clamp_index(r.lo + static_cast<i64>(k), W)));
                out(c, i, j) = static_cast<T>(acc);
            }
    return out;
}

template <typename T>
struct PairedSample {
    Tensor<T> lr;  // [3, h, w] in [0,1]
    Tensor<T> hr;  // [3, s*h, s*w] in [0,1]
    std::string provenance;
};

/// Center-crop to dimensions divisible by s, then degrade with the
/// antialiased cubic kernel. Images smaller than 8s per side are skipped.
template <typename T>
std::vector<PairedSample<T>> make_pairs(const std::vector<Tensor<T>>& hr_images, i64 s,
                                        std::vector<std::string>* warnings = nullptr,
                                        const std::vector<std::string>* names = nullptr) {
    check_config(s >= 2, "make_pairs: scale must be >= 2");
    std::vector<PairedSample<T>> out;
    for (size_t idx = 0; idx < hr_images.size(); ++idx) {
        const Tensor<T>& hr = hr_images[idx];
        check_shape(hr.rank() == 3 && hr.dim(0) == 3, "make_pairs: images must be [3,H,W]");
        const std::string name = names ? (*names)[idx] : ("image" + std::to_string(idx));
        const i64 H = hr.dim(1), W = hr.dim(2);
        if (H < 8 * s || W < 8 * s) {
            if (warnings) warnings->push_back("skipped " + name + ": smaller than 8*scale");
            continue;
        }
        const i64 Hc = H - H % s, Wc = W - W % s;
        const i64 oy = (H - Hc) / 2, ox = (W - Wc) / 2;
        PairedSample<T> p;
        p.hr = Tensor<T>({3, Hc, Wc});
        for (i64 c = 0; c < 3; ++c)
            for (i64 i = 0; i < Hc; ++i)
                for (i64 j = 0; j < Wc; ++j) p.hr(c, i, j) = hr(c, i + oy, j + ox);
        p.lr = bicubic_resize(p.hr, Hc / s, Wc / s, true);
        p.provenance = name + "+" + std::to_string(ox) + "+" + std::to_string(oy);
        out.push_back(std::move(p));
    }
    return out;
}

/// Aligned random LR/HR crops; crop offsets are uniform and seeded.
template <typename T>
std::pair<Tensor<T>, Tensor<T>> sample_patches(const PairedSample<T>& pair, i64 patch, i64 batch,
                                               Rng& rng) {
    const i64 h = pair.lr.dim(1), w = pair.lr.dim(2);
    if (patch > h || patch > w)
        throw std::invalid_argument("sample_patches: patch larger than LR image");
    const i64 s = pair.hr.dim(1) / h;
    Tensor<T> lr({batch, 3, patch, patch});
    Tensor<T> hr({batch, 3, s * patch, s * patch});
    for (i64 b = 0; b < batch; ++b) {
        const i64 oi = rng.uniform_int(0, h - patch);
        const i64 oj = rng.uniform_int(0, w - patch);
        for (i64 c = 0; c < 3; ++c) {
            for (i64 i = 0; i < patch; ++i)
                for (i64 j = 0; j < patch; ++j) lr(b, c, i, j) = pair.lr(c, oi + i, oj + j);
            for (i64 i = 0; i < s * patch; ++i)
                for (i64 j = 0; j < s * patch; ++j)
                    hr(b, c, i, j) = pair.hr(c, s * oi + i, s * oj + j);
        }
    }
    return {std::move(lr), std::move(hr)};
}

/// Dihedral transforms for augmentation-free geometry handling (rotations by
/// 90 degrees and horizontal flip). t in [0,8): rot = t & 3, flip = t >> 2.
template <typename T>
Tensor<T> dihedral(const Tensor<T>& x, int t) {
    check_shape(x.rank() == 3, "dihedral: want [C,H,W]");
    const i64 C = x.dim(0), H = x.dim(1), W = x.dim(2);
    const int rot = t & 3;
    const bool flip = (t >> 2) & 1;
    Tensor<T> f({C, H, W});
    for (i64 c = 0; c < C; ++c)
        for (i64 i = 0; i < H; ++i)
            for (i64 j = 0; j < W; ++j) f(c, i, j) = flip ? x(c, i, W - 1 - j) : x(c, i, j);
    const i64 oh = (rot % 2 == 0) ? H : W;
    const i64 ow = (rot % 2 == 0) ? W : H;
    Tensor<T> out({C, oh, ow});
    for (i64 c = 0; c < C; ++c)
        for (i64 i = 0; i < oh; ++i)
            for (i64 j = 0; j < ow; ++j) {
                i64 si = 0, sj = 0;
                switch (rot) {
                    case 0: si = i, sj = j; break;
                    case 1: si = j, sj = W - 1 - i; break;
                    case 2: si = H - 1 - i, sj = W - 1 - j; break;
                    case 3: si = H - 1 - j, sj = i; break;
                }
                out(c, i, j) = f(c, si, sj);
            }
    return out;
}

/// Inverse of dihedral(x, t).
template <typename T>
Tensor<T> dihedral_inverse(const Tensor<T>& y, int t) {
    const int rot = t & 3;
    const bool flip = (t >> 2) & 1;
    Tensor<T> x = y;
    if (rot != 0) {
        // undo rotation: apply the opposite rotation (4 - rot) without flip
        x = dihedral(x, 4 - rot);
    }
    if (flip) x = dihedral(x, 4);  // horizontal flip is self-inverse
    return x;
}

}  // namespace fmsr
