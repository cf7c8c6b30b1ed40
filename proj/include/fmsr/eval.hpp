#pragma once

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <functional>

#include "data.hpp"
#include "image_io.hpp"
#include "model.hpp"

namespace fmsr {

// ---- Y-channel metrics -----------------------------------------------------------

/// Studio-swing BT.601 luma from [0,1] RGB: Y = (16 + 65.481R + 128.553G + 24.966B)/255.
template <typename T>
Tensor<T> rgb_to_y(const Tensor<T>& img) {
    check_shape(img.rank() == 3 && img.dim(0) == 3, "rgb_to_y: want [3,H,W]");
    const i64 H = img.dim(1), W = img.dim(2);
    Tensor<T> y({H, W});
    for (i64 i = 0; i < H; ++i)
        for (i64 j = 0; j < W; ++j)
            y(i, j) = static_cast<T>((16.0 + 65.481 * img(0, i, j) + 128.553 * img(1, i, j) +
                                      24.966 * img(2, i, j)) /
                                     255.0);
    return y;
}

/// 10*log10(peak^2/MSE), capped at 100 dB (exactly 100 when MSE is zero).
template <typename T>
double psnr(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    check_shape(a.same_shape(b), "psnr: shape mismatch");
    double mse = 0.0;
    for (i64 i = 0; i < a.numel(); ++i) {
        const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
        mse += d * d;
    }
    mse /= static_cast<double>(a.numel());
    if (mse == 0.0) return 100.0;
    return std::min(100.0, 10.0 * std::log10(peak * peak / mse));
}

namespace detail {

inline const std::vector<double>& gaussian11() {
    static const std::vector<double> w = [] {
        std::vector<double> v(11);
        double sum = 0.0;
        for (int i = 0; i < 11; ++i) {
            const double x = static_cast<double>(i - 5);
            v[static_cast<size_t>(i)] = std::exp(-x * x / (2.0 * 1.5 * 1.5));
            sum += v[static_cast<size_t>(i)];
        }
        for (double& x : v) x /= sum;
        return v;
    }();
    return w;
}

/// separable 11x11 Gaussian filter, valid region only -> [H-10, W-10]
template <typename T>
std::vector<double> gauss_valid(const Tensor<T>& img, i64 H, i64 W) {
    const auto& g = gaussian11();
    const i64 Wv = W - 10;
    std::vector<double> mid(static_cast<size_t>(H * Wv));
    for (i64 i = 0; i < H; ++i)
        for (i64 j = 0; j < Wv; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 11; ++k) acc += g[static_cast<size_t>(k)] * static_cast<double>(img(i, j + k));
            mid[static_cast<size_t>(i * Wv + j)] = acc;
        }
    const i64 Hv = H - 10;
    std::vector<double> out(static_cast<size_t>(Hv * Wv));
    for (i64 i = 0; i < Hv; ++i)
        for (i64 j = 0; j < Wv; ++j) {
            double acc = 0.0;
            for (int k = 0; k < 11; ++k) acc += g[static_cast<size_t>(k)] * mid[static_cast<size_t>((i + k) * Wv + j)];
            out[static_cast<size_t>(i * Wv + j)] = acc;
        }
    return out;
}

}  // namespace detail

/// Mean SSIM over valid (unpadded) 11x11 Gaussian windows, sigma 1.5.
template <typename T>
double ssim(const Tensor<T>& a, const Tensor<T>& b, double peak = 1.0) {
    check_shape(a.same_shape(b) && a.rank() == 2, "ssim: want matching [H,W]");
    const i64 H = a.dim(0), W = a.dim(1);
    check_shape(H >= 11 && W >= 11, "ssim: image smaller than the 11x11 window");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    Tensor<double> aa({H, W}), bb({H, W}), ab({H, W}), ad = a.template cast<double>(),
                   bd = b.template cast<double>();
    for (i64 i = 0; i < H * W; ++i) {
        aa[i] = ad[i] * ad[i];
        bb[i] = bd[i] * bd[i];
        ab[i] = ad[i] * bd[i];
    }
    const auto mu_a = detail::gauss_valid(ad, H, W);
    const auto mu_b = detail::gauss_valid(bd, H, W);
    const auto m_aa = detail::gauss_valid(aa, H, W);
    const auto m_bb = detail::gauss_valid(bb, H, W);
    const auto m_ab = detail::gauss_valid(ab, H, W);
    double total = 0.0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double ma = mu_a[i], mb = mu_b[i];
        const double va = m_aa[i] - ma * ma;
        const double vb = m_bb[i] - mb * mb;
        const double cov = m_ab[i] - ma * mb;
        const double l = (2.0 * ma * mb + c1) / (ma * ma + mb * mb + c1);
        const double c = (2.0 * cov + c2) / (va + vb + c2);
        total += l * c;
    }
    return total / static_cast<double>(mu_a.size());
}

// ---- inference helpers --------------------------------------------------------------

/// Average of the 8 dihedral-transformed forwards, clamped at the end.
template <typename T>
Tensor<T> self_ensemble(const Model<T>& model, const Tensor<T>& lr_img) {
    check_shape(lr_img.rank() == 3 && lr_img.dim(0) == 3, "self_ensemble: want [3,h,w]");
    Tensor<T> acc;
    for (int t = 0; t < 8; ++t) {
        Tensor<T> xt = dihedral(lr_img, t);
        Tensor<T> yt = model_forward(model, xt.reshaped({1, 3, xt.dim(1), xt.dim(2)}));
        Tensor<T> y3 = yt.reshaped({3, yt.dim(2), yt.dim(3)});
        Tensor<T> inv = dihedral_inverse(y3, t);
        if (acc.empty())
            acc = std::move(inv);
        else
            for (i64 i = 0; i < acc.numel(); ++i) acc[i] += inv[i];
    }
    for (i64 i = 0; i < acc.numel(); ++i)
        acc[i] = std::min(T(1), std::max(T(0), acc[i] / T(8)));
    return acc;
}

template <typename T>
Tensor<T> sr_single(const Model<T>& model, const Tensor<T>& lr_img) {
    Tensor<T> y = model_infer(model, lr_img.reshaped({1, 3, lr_img.dim(1), lr_img.dim(2)}));
    return y.reshaped({3, y.dim(2), y.dim(3)});
}

// ---- directory evaluation --------------------------------------------------------------

struct MetricRow {
    std::string name;
    double psnr_db = 0, ssim_v = 0, psnr_bicubic = 0, ssim_bicubic = 0;
};

struct MetricReport {
    std::vector<MetricRow> rows;
    MetricRow means;

    std::string to_csv() const {
        std::ostringstream os;
        os << "image,psnr,ssim,psnr_bicubic,ssim_bicubic\n";
        os.precision(10);
        for (const auto& r : rows)
            os << r.name << "," << r.psnr_db << "," << r.ssim_v << "," << r.psnr_bicubic << ","
               << r.ssim_bicubic << "\n";
        os << "mean," << means.psnr_db << "," << means.ssim_v << "," << means.psnr_bicubic << ","
           << means.ssim_bicubic << "\n";
        return os.str();
    }
};

template <typename T>
Tensor<T> shave_border(const Tensor<T>& y, i64 n) {
    if (n <= 0) return y;
    const i64 H = y.dim(0), W = y.dim(1);
    check_shape(H > 2 * n && W > 2 * n, "shave_border: nothing left");
    Tensor<T> out({H - 2 * n, W - 2 * n});
    for (i64 i = 0; i < H - 2 * n; ++i)
        for (i64 j = 0; j < W - 2 * n; ++j) out(i, j) = y(i + n, j + n);
    return out;
}

/// Degrade each HR image, run the given upscaler, and report Y-channel
/// PSNR/SSIM next to the plain bicubic-upscale baseline.
template <typename T>
MetricReport evaluate_pairs(const std::vector<PairedSample<T>>& pairs,
                            const std::function<Tensor<T>(const Tensor<T>&)>& upscale, i64 shave) {
    MetricReport rep;
    double sp = 0, ss = 0, sbp = 0, sbs = 0;
    for (const auto& pair : pairs) {
        const i64 sh = pair.hr.dim(1), sw = pair.hr.dim(2);
        Tensor<T> sr = upscale(pair.lr);
        check_shape(sr.dim(1) == sh && sr.dim(2) == sw, "evaluate_pairs: upscaler output shape");
        Tensor<T> bic = bicubic_resize(pair.lr, sh, sw, false);
        for (i64 i = 0; i < bic.numel(); ++i) bic[i] = std::min(T(1), std::max(T(0), bic[i]));
        const Tensor<T> y_hr = shave_border(rgb_to_y(pair.hr), shave);
        const Tensor<T> y_sr = shave_border(rgb_to_y(sr), shave);
        const Tensor<T> y_bic = shave_border(rgb_to_y(bic), shave);
        MetricRow row;
        row.name = pair.provenance;
        row.psnr_db = psnr(y_sr, y_hr);
        row.ssim_v = ssim(y_sr, y_hr);
        row.psnr_bicubic = psnr(y_bic, y_hr);
        row.ssim_bicubic = ssim(y_bic, y_hr);
        sp += row.psnr_db;
        ss += row.ssim_v;
        sbp += row.psnr_bicubic;
        sbs += row.ssim_bicubic;
        rep.rows.push_back(std::move(row));
    }
    const double n = std::max<double>(1.0, static_cast<double>(rep.rows.size()));
    rep.means = {"mean", sp / n, ss / n, sbp / n, sbs / n};
    return rep;
}

template <typename T>
MetricReport evaluate_dir(const Model<T>& model, const std::string& hr_dir, i64 s, i64 shave,
                          bool use_self_ensemble) {
    std::vector<Tensor<T>> images;
    std::vector<std::string> names;
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(hr_dir))
        if (e.is_regular_file() && e.path().extension() == ".png") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        images.push_back(image_to_tensor<T>(load_png(f.string())));
        names.push_back(f.filename().string());
    }
    auto pairs = make_pairs(images, s, nullptr, &names);
    std::function<Tensor<T>(const Tensor<T>&)> up;
    if (use_self_ensemble)
        up = [&](const Tensor<T>& lr) { return self_ensemble(model, lr); };
    else
        up = [&](const Tensor<T>& lr) { return sr_single(model, lr); };
    return evaluate_pairs(pairs, up, shave);
}

// ---- effective receptive field -------------------------------------------------------------

/// |d out_center / d input| summed over channels, normalized to [0,1].
/// out_center is the channel sum of the output pixel at (s*h/2, s*w/2).
template <typename T>
Tensor<T> erf_map(const Model<T>& model, const Tensor<T>& input, bool log_scale = false) {
    check_shape(input.rank() == 3 && input.dim(0) == 3, "erf_map: want [3,h,w]");
    const i64 h = input.dim(1), w = input.dim(2);
    Graph<T> g(true);
    Value<T> x = g.leaf(input.reshaped({1, 3, h, w}), true);
    Value<T> out = ag::model_forward(g, model, x);
    const i64 ci = out->val.dim(2) / 2, cj = out->val.dim(3) / 2;
    Value<T> target = ag::pixel_channel_sum(g, out, 0, ci, cj);
    g.backward(target);
    Tensor<T> map({h, w});
    for (i64 i = 0; i < h; ++i)
        for (i64 j = 0; j < w; ++j) {
            T acc = 0;
            for (i64 c = 0; c < 3; ++c) acc += std::abs(x->grad(0, c, i, j));
            map(i, j) = acc;
        }
    T mx = map.max_abs();
    if (mx > T(0))
        for (i64 i = 0; i < map.numel(); ++i) map[i] /= mx;
    if (log_scale)
        for (i64 i = 0; i < map.numel(); ++i)
            map[i] = static_cast<T>(std::log1p(255.0 * static_cast<double>(map[i])) / std::log1p(255.0));
    return map;
}

/// Input-gradient map of a stack of 3x3 convolutions (receptive-field
/// reference: gradient support must stay inside the (2*layers+1)^2 window).
template <typename T>
Tensor<T> conv_stack_erf(i64 layers, i64 channels, const Tensor<T>& input, std::uint64_t seed) {
    const i64 h = input.dim(1), w = input.dim(2);
    Rng rng(seed);
    Graph<T> g(true);
    Value<T> x = g.leaf(input.reshaped({1, 3, h, w}), true);
    Value<T> cur = x;
    i64 cin = 3;
    std::vector<Tensor<T>> weights, biases;
    for (i64 l = 0; l < layers; ++l) {
        const i64 cout = (l + 1 == layers) ? 3 : channels;
        Tensor<T> wt, bt;
        detail::init_conv(wt, bt, cout, cin, 3, rng);
        weights.push_back(std::move(wt));
        biases.push_back(std::move(bt));
        cin = cout;
    }
    for (i64 l = 0; l < layers; ++l)
        cur = ag::conv2d(g, cur, g.constant(weights[static_cast<size_t>(l)]),
                         g.constant(biases[static_cast<size_t>(l)]));
    g.backward(ag::pixel_channel_sum(g, cur, 0, h / 2, w / 2));
    Tensor<T> map({h, w});
    for (i64 i = 0; i < h; ++i)
        for (i64 j = 0; j < w; ++j) {
            T acc = 0;
            for (i64 c = 0; c < 3; ++c) acc += std::abs(x->grad(0, c, i, j));
            map(i, j) = acc;
        }
    return map;
}

// ---- complexity benchmark --------------------------------------------------------------------

/// One standard multi-head self-attention layer (qkv + output projection)
/// over flattened tokens; the quadratic-scaling reference.
template <typename T>
struct MsaLayer {
    i64 dim = 0, heads = 0;
    Tensor<T> wqkv, bqkv, wout, bout;

    static MsaLayer init(i64 dim, i64 heads, Rng& rng) {
        check_config(dim % heads == 0, "MsaLayer: heads must divide dim");
        MsaLayer m;
        m.dim = dim;
        m.heads = heads;
        m.wqkv = Tensor<T>({3 * dim, dim});
        m.bqkv = Tensor<T>({3 * dim});
        m.wout = Tensor<T>({dim, dim});
        m.bout = Tensor<T>({dim});
        const double bound = 1.0 / std::sqrt(static_cast<double>(dim));
        rng.fill_uniform(m.wqkv, -bound, bound);
        rng.fill_uniform(m.bqkv, -bound, bound);
        rng.fill_uniform(m.wout, -bound, bound);
        rng.fill_uniform(m.bout, -bound, bound);
        return m;
    }

    i64 params() const { return 4 * dim * dim + 4 * dim; }

    /// MACs for the projections plus the two attention matmuls and softmax.
    i64 flops(i64 n_tokens) const {
        return 4 * dim * dim * n_tokens + 2 * n_tokens * n_tokens * dim + 3 * n_tokens * n_tokens * heads;
    }

    Tensor<T> forward(const Tensor<T>& x) const {  // x: [N, dim]
        check_shape(x.rank() == 2 && x.dim(1) == dim, "MsaLayer: want [N,dim]");
        const i64 N = x.dim(0), dh = dim / heads;
        Tensor<T> qkv({N, 3 * dim});
        for (i64 i = 0; i < N; ++i)
            for (i64 r = 0; r < 3 * dim; ++r) {
                T acc = bqkv[r];
                const T* xr = x.ptr() + i * dim;
                const T* wr = wqkv.ptr() + r * dim;
                for (i64 d = 0; d < dim; ++d) acc += wr[d] * xr[d];
                qkv(i, r) = acc;
            }
        Tensor<T> ctx({N, dim});
        std::vector<T> scores(static_cast<size_t>(N));
        const T scale = static_cast<T>(1.0 / std::sqrt(static_cast<double>(dh)));
        for (i64 hh = 0; hh < heads; ++hh) {
            const i64 qo = hh * dh, ko = dim + hh * dh, vo = 2 * dim + hh * dh;
            for (i64 i = 0; i < N; ++i) {
                const T* qi = qkv.ptr() + i * 3 * dim + qo;
                T mx = std::numeric_limits<T>::lowest();
                for (i64 j = 0; j < N; ++j) {
                    const T* kj = qkv.ptr() + j * 3 * dim + ko;
                    T acc = 0;
                    for (i64 d = 0; d < dh; ++d) acc += qi[d] * kj[d];
                    acc *= scale;
                    scores[static_cast<size_t>(j)] = acc;
                    mx = std::max(mx, acc);
                }
                T denom = 0;
                for (i64 j = 0; j < N; ++j) {
                    const T e = scalar_math<T>::exp(scores[static_cast<size_t>(j)] - mx);
                    scores[static_cast<size_t>(j)] = e;
                    denom += e;
                }
                const T inv = T(1) / denom;
                T* out = ctx.ptr() + i * dim + hh * dh;
                for (i64 d = 0; d < dh; ++d) out[d] = 0;
                for (i64 j = 0; j < N; ++j) {
                    const T p = scores[static_cast<size_t>(j)] * inv;
                    const T* vj = qkv.ptr() + j * 3 * dim + vo;
                    for (i64 d = 0; d < dh; ++d) out[d] += p * vj[d];
                }
            }
        }
        Tensor<T> y({N, dim});
        for (i64 i = 0; i < N; ++i)
            for (i64 r = 0; r < dim; ++r) {
                T acc = bout[r];
                const T* cr = ctx.ptr() + i * dim;
                const T* wr = wout.ptr() + r * dim;
                for (i64 d = 0; d < dim; ++d) acc += wr[d] * cr[d];
                y(i, r) = acc;
            }
        return y;
    }
};

struct BenchRecord {
    i64 size = 0;  // input side; token count is size*size
    std::string block;
    i64 params = 0;
    i64 flops = 0;
    double time_ms = 0;
};

inline std::string bench_csv(const std::vector<BenchRecord>& rows) {
    std::ostringstream os;
    os << "size,block,params,flops,time_ms\n";
    os.precision(10);
    for (const auto& r : rows)
        os << r.size << "," << r.block << "," << r.params << "," << r.flops << "," << r.time_ms
           << "\n";
    return os.str();
}

/// Least-squares slope of log(time) vs log(tokens).
inline double fit_exponent(const std::vector<std::pair<double, double>>& n_vs_t) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const double n = static_cast<double>(n_vs_t.size());
    for (const auto& [tokens, time] : n_vs_t) {
        const double x = std::log(tokens), y = std::log(time);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
    }
    return (n * sxy - sx * sy) / (n * sxx - sx * sx);
}

struct BenchSummary {
    std::vector<BenchRecord> records;
    double fmb_exponent = 0;
    double msa_exponent = 0;
    i64 msa_params = 0;
    i64 fmb_params = 0;
};

template <typename F>
double median_time_ms(F&& run, int reps) {
    using Clock = std::chrono::steady_clock;
    run();  // warm-up discarded
    std::vector<double> times;
    for (int i = 0; i < reps; ++i) {
        const auto t0 = Clock::now();
        run();
        const auto t1 = Clock::now();
        times.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::sort(times.begin(), times.end());
    return times[times.size() / 2];
}

/// Wall-time scaling of one FMB (width fmsr_c) against one MSA layer
/// (width msa_dim, 6 heads) over the given input sides.
inline BenchSummary bench_scaling(const std::vector<i64>& sizes = {32, 48, 64, 88},
                                  i64 fmsr_c = 144, i64 msa_dim = 180, int reps = 5) {
    BenchSummary out;
    ModelConfig cfg;
    cfg.c = fmsr_c;
    cfg.m = 1;
    cfg.n = 1;
    Rng rng(2024);
    auto fmb = init_fmb<float>(cfg, rng);
    {
        Model<float> probe = build_model<float>(cfg, 1);
        i64 per_block = 0;
        visit_params(probe, [&](const std::string& name, const Tensor<float>& t) {
            if (name.find(".b0.") != std::string::npos) per_block += t.numel();
        });
        out.fmb_params = per_block;
    }
    MsaLayer<float> msa = MsaLayer<float>::init(msa_dim, 6, rng);
    out.msa_params = msa.params();
    std::vector<std::pair<double, double>> fmb_nt, msa_nt;
    for (i64 s : sizes) {
        Tensor<float> x({1, fmsr_c, s, s});
        rng.fill_uniform(x, -1.0, 1.0);
        const double t_fmb = median_time_ms([&] { fmb_forward(x, fmb, cfg); }, reps);
        Model<float> probe = build_model<float>(cfg, 1);
        FlopReport fr = count_flops(probe, s, s);
        i64 fmb_flops = 0;
        for (const auto& [mod, fl] : fr.by_module)
            if (mod.rfind("fmb.", 0) == 0) fmb_flops += fl;
        out.records.push_back({s, "fmb", out.fmb_params, fmb_flops, t_fmb});
        fmb_nt.emplace_back(static_cast<double>(s * s), t_fmb);

        Tensor<float> tok({s * s, msa_dim});
        rng.fill_uniform(tok, -1.0, 1.0);
        const double t_msa = median_time_ms([&] { msa.forward(tok); }, reps);
        out.records.push_back({s, "msa", out.msa_params, msa.flops(s * s), t_msa});
        msa_nt.emplace_back(static_cast<double>(s * s), t_msa);
    }
    out.fmb_exponent = fit_exponent(fmb_nt);
    out.msa_exponent = fit_exponent(msa_nt);
    return out;
}

}  // namespace fmsr
