#pragma once

#include <iomanip>
#include <sstream>

#include "blocks.hpp"

namespace fmsr {

template <typename T>
struct Model {
    ModelConfig cfg;
    Tensor<T> head_w, head_b;            // 3x3 conv 3 -> c
    std::vector<FmgWeights<T>> groups;   // m groups
    Tensor<T> body_tail_w, body_tail_b;  // 3x3 conv c -> c before the global skip
    Tensor<T> up_w, up_b;                // 3x3 conv c -> 3*s^2
    Tensor<T> tail_w, tail_b;            // 3x3 conv 3 -> 3 after pixel shuffle
};

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    Model<T> m;
    m.cfg = cfg;
    detail::init_conv(m.head_w, m.head_b, cfg.c, 3, 3, rng);
    m.groups.reserve(static_cast<size_t>(cfg.m));
    for (i64 i = 0; i < cfg.m; ++i) m.groups.push_back(init_fmg<T>(cfg, rng));
    detail::init_conv(m.body_tail_w, m.body_tail_b, cfg.c, cfg.c, 3, rng);
    detail::init_conv(m.up_w, m.up_b, 3 * cfg.scale * cfg.scale, cfg.c, 3, rng);
    detail::init_conv(m.tail_w, m.tail_b, 3, 3, 3, rng);
    return m;
}

// ---- parameter registry ---------------------------------------------------------

/// Walk every trainable tensor in deterministic order. The order defines the
/// checkpoint layout and the optimizer-state pairing, so it must not change.
template <typename ModelT, typename F>
void visit_params(ModelT& m, F&& f) {
    const char variant = m.cfg.fsm_variant;
    auto visit_fsm = [&](auto& w, const std::string& p) {
        if (variant == 'a' || variant == 'c') {
            f(p + ".conv1.w", w.conv1_w);
            f(p + ".conv1.b", w.conv1_b);
        }
        if (variant == 'c') {
            f(p + ".conv2.w", w.conv2_w);
            f(p + ".conv2.b", w.conv2_b);
        }
    };
    f("head.w", m.head_w);
    f("head.b", m.head_b);
    for (size_t gi = 0; gi < m.groups.size(); ++gi) {
        auto& grp = m.groups[gi];
        const std::string gp = "g" + std::to_string(gi);
        for (size_t bi = 0; bi < grp.blocks.size(); ++bi) {
            auto& blk = grp.blocks[bi];
            const std::string bp = gp + ".b" + std::to_string(bi);
            f(bp + ".ln1.g", blk.ln1_g);
            f(bp + ".ln1.b", blk.ln1_b);
            f(bp + ".ln2.g", blk.ln2_g);
            f(bp + ".ln2.b", blk.ln2_b);
            auto& v = blk.vssm;
            f(bp + ".vssm.proj_in.w", v.proj_in_w);
            f(bp + ".vssm.proj_in.b", v.proj_in_b);
            f(bp + ".vssm.dw.w", v.dw_w);
            f(bp + ".vssm.dw.b", v.dw_b);
            f(bp + ".vssm.scan.a_log", v.scan.a_log);
            f(bp + ".vssm.scan.d_skip", v.scan.d_skip);
            f(bp + ".vssm.scan.x_proj.w", v.scan.x_proj_w);
            f(bp + ".vssm.scan.dt_proj.w", v.scan.dt_proj_w);
            f(bp + ".vssm.scan.dt_proj.b", v.scan.dt_proj_b);
            f(bp + ".vssm.ln.g", v.ln_scan_g);
            f(bp + ".vssm.ln.b", v.ln_scan_b);
            f(bp + ".vssm.gate.w", v.gate_w);
            f(bp + ".vssm.gate.b", v.gate_b);
            f(bp + ".vssm.proj_out.w", v.proj_out_w);
            f(bp + ".vssm.proj_out.b", v.proj_out_b);
            auto& h = blk.hgm;
            f(bp + ".hgm.expand.w", h.expand_w);
            f(bp + ".hgm.expand.b", h.expand_b);
            f(bp + ".hgm.coor1.w", h.coor1_w);
            f(bp + ".hgm.coor1.b", h.coor1_b);
            f(bp + ".hgm.dw3.w", h.dw3_w);
            f(bp + ".hgm.dw3.b", h.dw3_b);
            f(bp + ".hgm.ca.reduce.w", h.ca.reduce_w);
            f(bp + ".hgm.ca.reduce.b", h.ca.reduce_b);
            f(bp + ".hgm.ca.expand.w", h.ca.expand_w);
            f(bp + ".hgm.ca.expand.b", h.ca.expand_b);
            f(bp + ".hgm.gate.w", h.gate_w);
            f(bp + ".hgm.gate.b", h.gate_b);
            f(bp + ".hgm.out.w", h.out_w);
            f(bp + ".hgm.out.b", h.out_b);
            visit_fsm(blk.fsm_a, bp + ".fsm_a");
            visit_fsm(blk.fsm_b, bp + ".fsm_b");
            f(bp + ".alpha_g", blk.alpha_g);
            f(bp + ".alpha_l", blk.alpha_l);
        }
        f(gp + ".conv.w", grp.conv_w);
        f(gp + ".conv.b", grp.conv_b);
    }
    f("body_tail.w", m.body_tail_w);
    f("body_tail.b", m.body_tail_b);
    f("up.w", m.up_w);
    f("up.b", m.up_b);
    f("tail.w", m.tail_w);
    f("tail.b", m.tail_b);
}

struct ParamInfo {
    std::string name;
    std::vector<i64> shape;
    i64 count = 0;
};

template <typename T>
std::vector<ParamInfo> param_registry(const Model<T>& m) {
    std::vector<ParamInfo> out;
    visit_params(m, [&](const std::string& name, const Tensor<T>& t) {
        out.push_back({name, t.shape(), t.numel()});
    });
    return out;
}

template <typename T>
i64 count_params(const Model<T>& m) {
    i64 total = 0;
    visit_params(m, [&](const std::string&, const Tensor<T>& t) { total += t.numel(); });
    return total;
}

template <typename T>
std::string registry_table(const Model<T>& m) {
    std::ostringstream os;
    i64 total = 0;
    visit_params(m, [&](const std::string& name, const Tensor<T>& t) {
        os << name << " ";
        const auto& s = t.shape();
        for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << " " << t.numel() << "\n";
        total += t.numel();
    });
    os << "total - " << total << "\n";
    return os.str();
}

// ---- forward ---------------------------------------------------------------------

namespace ag {

template <typename T>
Value<T> model_forward(Graph<T>& g, const Model<T>& m, Value<T> input) {
    check_shape(input->val.rank() == 4 && input->val.dim(1) == 3,
                "model_forward: input must be [B,3,h,w]");
    check_shape(input->val.dim(2) >= 8 && input->val.dim(3) >= 8,
                "model_forward: input must be at least 8x8");
    const ModelConfig& cfg = m.cfg;
    Value<T> f0 = conv2d(g, input, g.param(m.head_w), g.param(m.head_b));
    Value<T> f = f0;
    for (const auto& grp : m.groups) f = fmg_forward(g, f, grp, cfg);
    Value<T> rec = add(g, conv2d(g, f, g.param(m.body_tail_w), g.param(m.body_tail_b)), f0);
    Value<T> up = conv2d(g, rec, g.param(m.up_w), g.param(m.up_b));
    up = pixel_shuffle(g, up, cfg.scale);
    return conv2d(g, up, g.param(m.tail_w), g.param(m.tail_b));
}

}  // namespace ag

/// Training-path forward without clamping.
template <typename T>
Tensor<T> model_forward(const Model<T>& m, const Tensor<T>& lr) {
    Graph<T> g(false);
    return ag::model_forward(g, m, g.leaf(lr, false))->val;
}

/// Inference: forward then clamp to [0,1].
template <typename T>
Tensor<T> model_infer(const Model<T>& m, const Tensor<T>& lr) {
    Tensor<T> out = model_forward(m, lr);
    for (i64 i = 0; i < out.numel(); ++i) out[i] = std::min(T(1), std::max(T(0), out[i]));
    return out;
}

template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, i64 s) {
    Graph<T> g(false);
    return ag::pixel_shuffle(g, g.leaf(x, false), s)->val;
}

/// Inverse rearrangement of pixel_shuffle.
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& y, i64 s) {
    check_shape(y.rank() == 4, "pixel_unshuffle: want [B,t,H,W]");
    const i64 B = y.dim(0), t = y.dim(1), Hs = y.dim(2), Ws = y.dim(3);
    check_shape(Hs % s == 0 && Ws % s == 0, "pixel_unshuffle: spatial not divisible by s");
    const i64 H = Hs / s, W = Ws / s;
    Tensor<T> x({B, t * s * s, H, W});
    for (i64 b = 0; b < B; ++b)
        for (i64 k = 0; k < t; ++k)
            for (i64 dy = 0; dy < s; ++dy)
                for (i64 dx = 0; dx < s; ++dx)
                    for (i64 i = 0; i < H; ++i)
                        for (i64 j = 0; j < W; ++j)
                            x(b, k * s * s + dy * s + dx, i, j) = y(b, k, s * i + dy, s * j + dx);
    return x;
}

// ---- FLOP accounting ---------------------------------------------------------------

struct FlopReport {
    i64 total = 0;
    std::vector<std::pair<std::string, i64>> by_module;

    void add(const std::string& module, i64 flops) {
        total += flops;
        for (auto& kv : by_module)
            if (kv.first == module) {
                kv.second += flops;
                return;
            }
        by_module.emplace_back(module, flops);
    }

    std::string table() const {
        std::ostringstream os;
        for (const auto& kv : by_module) os << kv.first << " " << kv.second << "\n";
        os << "total " << total << "\n";
        return os.str();
    }
};

namespace detail {

inline i64 conv_flops(i64 cin, i64 cout, i64 k, i64 groups, i64 pixels) {
    return (k * k * cin / groups) * cout * pixels + cout * pixels;  // MACs + bias adds
}

inline double log2i(i64 n) { return std::log2(static_cast<double>(n)); }

}  // namespace detail

/// Analytic operation count for one forward pass at LR resolution h x w.
///
/// Convention (one multiply-accumulate = one FLOP):
///  - convolutions / linear projections: k^2 * Cin/g * Cout MACs per output
///    pixel, plus bias adds;
///  - the selective-scan operator: 2 * d_state MACs per channel per token per
///    direction (the operator's conventional recurrence cost; its per-token
///    parameter projections are folded into this allowance);
///  - FFTs: 5 * N * log2(N) per channel per 2D transform, N = H*W;
///  - pointwise ops (activations, LN passes, adds, gates): 1 FLOP per element.
template <typename T>
FlopReport count_flops(const Model<T>& m, i64 h, i64 w) {
    const ModelConfig& cfg = m.cfg;
    const i64 c = cfg.c, di = cfg.d_inner(), ds = cfg.d_state, s = cfg.scale;
    const i64 P = h * w;
    const i64 Ph = h * rfft_width(w);
    FlopReport r;
    using detail::conv_flops;

    r.add("head", conv_flops(3, c, 3, 1, P));

    const i64 fmb_count = cfg.m * cfg.n;
    // VSSM
    i64 vssm = conv_flops(c, di, 1, 1, P);               // proj_in
    vssm += conv_flops(di, di, cfg.dw_kernel, di, P);    // depthwise
    vssm += di * P;                                      // silu
    vssm += 4 * P * di * 2 * ds;                         // selective scan
    vssm += 6 * di * P;                                  // ln
    vssm += conv_flops(c, di, 1, 1, P) + di * P;         // gate + silu
    vssm += di * P;                                      // hadamard
    vssm += conv_flops(di, c, 1, 1, P);                  // proj_out
    r.add("fmb.vssm", vssm * fmb_count);

    // FSM (two instances per block)
    const i64 fft_one = static_cast<i64>(5.0 * static_cast<double>(P) * detail::log2i(P));
    i64 fsm = 2 * c * fft_one;  // forward + inverse transform, c channels each
    if (cfg.fsm_variant == 'a') {
        fsm += conv_flops(2 * c, 2 * c, 1, 1, Ph);
    } else if (cfg.fsm_variant == 'b') {
        fsm += 2 * c * Ph;
    } else {
        fsm += 2 * (conv_flops(2 * c, 2 * c, 1, 1, Ph) + 2 * c * Ph);
    }
    r.add("fmb.fsm", 2 * fsm * fmb_count);

    // HGM
    i64 hgm = conv_flops(c, 2 * c, 1, 1, P);
    hgm += conv_flops(c, c, 1, 1, P);
    hgm += conv_flops(c, c, 3, c, P);
    hgm += c * P + conv_flops(c, c / cfg.r, 1, 1, 1) + c / cfg.r +
           conv_flops(c / cfg.r, c, 1, 1, 1) + c + c * P;  // pool, squeeze/excite, rescale
    hgm += conv_flops(c, c, 1, 1, P) + c * P;              // gate + gelu
    hgm += c * P;                                          // hadamard
    hgm += conv_flops(c, c, 1, 1, P);
    r.add("fmb.hgm", hgm * fmb_count);

    // per-block glue: two LNs, two scales, four adds
    r.add("fmb.glue", (2 * 6 * c * P + 2 * c * P + 4 * c * P) * fmb_count);

    r.add("fmg.conv", (conv_flops(c, c, 3, 1, P) + c * P) * cfg.m);
    r.add("body_tail", conv_flops(c, c, 3, 1, P) + c * P);
    r.add("upsampler", conv_flops(c, 3 * s * s, 3, 1, P) + conv_flops(3, 3, 3, 1, P * s * s));
    return r;
}

}  // namespace fmsr
