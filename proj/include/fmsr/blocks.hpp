#pragma once

#include "scan.hpp"

namespace fmsr {

/// Architecture hyperparameters for the whole network.
struct ModelConfig {
    i64 scale = 4;
    i64 m = 6;       // groups
    i64 n = 6;       // blocks per group
    i64 c = 96;      // channel width
    double lambda = 2.0;
    i64 d_state = 16;
    i64 r = 16;      // channel-attention reduction
    char fsm_variant = 'c';
    i64 dw_kernel = 1;
    bool residual_safe_init = false;

    i64 d_inner() const {
        const double di = lambda * static_cast<double>(c);
        const i64 r0 = static_cast<i64>(std::llround(di));
        check_config(std::abs(di - static_cast<double>(r0)) < 1e-9, "lambda*c must be integral");
        return r0;
    }

    void validate() const {
        check_config(scale == 2 || scale == 3 || scale == 4, "scale must be in {2,3,4}");
        check_config(m >= 1 && n >= 1, "m, n must be >= 1");
        check_config(c >= 1 && c % r == 0, "c must be positive and divisible by r");
        check_config(d_state >= 1, "d_state must be >= 1");
        check_config(dw_kernel == 1 || dw_kernel == 3, "dw_kernel must be 1 or 3");
        check_config(fsm_variant == 'a' || fsm_variant == 'b' || fsm_variant == 'c',
                     "fsm_variant must be a, b or c");
        (void)d_inner();
    }

    StateConfig state_config() const { return StateConfig::make(d_inner(), d_state); }
};

// ---- weight records ----------------------------------------------------------

template <typename T>
struct VssmWeights {
    Tensor<T> proj_in_w, proj_in_b;    // 1x1 conv c -> lambda*c
    Tensor<T> dw_w, dw_b;              // depthwise conv on lambda*c (kernel 1 or 3)
    ScanParams<T> scan;
    Tensor<T> ln_scan_g, ln_scan_b;    // LN after the scan, lambda*c
    Tensor<T> gate_w, gate_b;          // 1x1 conv c -> lambda*c
    Tensor<T> proj_out_w, proj_out_b;  // 1x1 conv lambda*c -> c
};

template <typename T>
struct CaWeights {
    Tensor<T> reduce_w, reduce_b;  // 1x1 conv c -> c/r
    Tensor<T> expand_w, expand_b;  // 1x1 conv c/r -> c
};

template <typename T>
struct HgmWeights {
    Tensor<T> expand_w, expand_b;  // 1x1 conv c -> 2c
    Tensor<T> coor1_w, coor1_b;    // 1x1 conv c -> c
    Tensor<T> dw3_w, dw3_b;        // 3x3 depthwise on c
    CaWeights<T> ca;
    Tensor<T> gate_w, gate_b;      // pixelwise linear c -> c
    Tensor<T> out_w, out_b;        // 1x1 conv c -> c
};

template <typename T>
struct FsmWeights {
    Tensor<T> conv1_w, conv1_b;  // 1x1 conv on 2c spectrum channels
    Tensor<T> conv2_w, conv2_b;
};

template <typename T>
struct FmbWeights {
    Tensor<T> ln1_g, ln1_b, ln2_g, ln2_b;
    VssmWeights<T> vssm;
    HgmWeights<T> hgm;
    FsmWeights<T> fsm_a, fsm_b;
    Tensor<T> alpha_g, alpha_l;  // [1] adaptors, init 1.0
};

template <typename T>
struct FmgWeights {
    std::vector<FmbWeights<T>> blocks;
    Tensor<T> conv_w, conv_b;  // 3x3 conv c -> c after the block chain
};

// ---- initialization ------------------------------------------------------------

namespace detail {

/// fan-in-scaled uniform: bound = 1/sqrt(fan_in)
template <typename T>
void init_conv(Tensor<T>& w, Tensor<T>& b, i64 cout, i64 cin_per_g, i64 k, Rng& rng) {
    w = Tensor<T>({cout, cin_per_g, k, k});
    b = Tensor<T>({cout});
    const double bound = 1.0 / std::sqrt(static_cast<double>(cin_per_g * k * k));
    rng.fill_uniform(w, -bound, bound);
    rng.fill_uniform(b, -bound, bound);
}

/// identity + 0.1-scaled fan-in noise; keeps early training near a frequency
/// passthrough
template <typename T>
void init_conv_near_identity(Tensor<T>& w, Tensor<T>& b, i64 ch, Rng& rng) {
    w = Tensor<T>({ch, ch, 1, 1});
    b = Tensor<T>({ch});
    const double bound = 0.1 / std::sqrt(static_cast<double>(ch));
    rng.fill_uniform(w, -bound, bound);
    for (i64 i = 0; i < ch; ++i) w(i, i, 0, 0) += T(1);
    b.fill(T(0));
}

}  // namespace detail

template <typename T>
VssmWeights<T> init_vssm(const ModelConfig& cfg, Rng& rng) {
    VssmWeights<T> w;
    const i64 c = cfg.c, di = cfg.d_inner();
    detail::init_conv(w.proj_in_w, w.proj_in_b, di, c, 1, rng);
    detail::init_conv(w.dw_w, w.dw_b, di, 1, cfg.dw_kernel, rng);
    w.scan = init_scan_params<T>(cfg.state_config(), rng);
    w.ln_scan_g = Tensor<T>({di}, T(1));
    w.ln_scan_b = Tensor<T>({di});
    detail::init_conv(w.gate_w, w.gate_b, di, c, 1, rng);
    detail::init_conv(w.proj_out_w, w.proj_out_b, c, di, 1, rng);
    if (cfg.residual_safe_init) {
        w.proj_out_w.fill(T(0));
        w.proj_out_b.fill(T(0));
    }
    return w;
}

template <typename T>
HgmWeights<T> init_hgm(const ModelConfig& cfg, Rng& rng) {
    HgmWeights<T> w;
    const i64 c = cfg.c, cr = cfg.c / cfg.r;
    detail::init_conv(w.expand_w, w.expand_b, 2 * c, c, 1, rng);
    detail::init_conv(w.coor1_w, w.coor1_b, c, c, 1, rng);
    detail::init_conv(w.dw3_w, w.dw3_b, c, 1, 3, rng);
    detail::init_conv(w.ca.reduce_w, w.ca.reduce_b, cr, c, 1, rng);
    detail::init_conv(w.ca.expand_w, w.ca.expand_b, c, cr, 1, rng);
    detail::init_conv(w.gate_w, w.gate_b, c, c, 1, rng);
    detail::init_conv(w.out_w, w.out_b, c, c, 1, rng);
    if (cfg.residual_safe_init) {
        w.out_w.fill(T(0));
        w.out_b.fill(T(0));
    }
    return w;
}

template <typename T>
FsmWeights<T> init_fsm(const ModelConfig& cfg, Rng& rng) {
    FsmWeights<T> w;
    const i64 ch = 2 * cfg.c;
    detail::init_conv_near_identity(w.conv1_w, w.conv1_b, ch, rng);
    detail::init_conv_near_identity(w.conv2_w, w.conv2_b, ch, rng);
    if (cfg.residual_safe_init) {
        // zero the variant's final conv so the block contributes nothing
        if (cfg.fsm_variant == 'a') {
            w.conv1_w.fill(T(0));
            w.conv1_b.fill(T(0));
        } else if (cfg.fsm_variant == 'c') {
            w.conv2_w.fill(T(0));
            w.conv2_b.fill(T(0));
        }
    }
    return w;
}

template <typename T>
FmbWeights<T> init_fmb(const ModelConfig& cfg, Rng& rng) {
    FmbWeights<T> w;
    w.ln1_g = Tensor<T>({cfg.c}, T(1));
    w.ln1_b = Tensor<T>({cfg.c});
    w.ln2_g = Tensor<T>({cfg.c}, T(1));
    w.ln2_b = Tensor<T>({cfg.c});
    w.vssm = init_vssm<T>(cfg, rng);
    w.hgm = init_hgm<T>(cfg, rng);
    w.fsm_a = init_fsm<T>(cfg, rng);
    w.fsm_b = init_fsm<T>(cfg, rng);
    w.alpha_g = Tensor<T>({1}, T(1));
    w.alpha_l = Tensor<T>({1}, T(1));
    return w;
}

template <typename T>
FmgWeights<T> init_fmg(const ModelConfig& cfg, Rng& rng) {
    FmgWeights<T> w;
    w.blocks.reserve(static_cast<size_t>(cfg.n));
    for (i64 i = 0; i < cfg.n; ++i) w.blocks.push_back(init_fmb<T>(cfg, rng));
    detail::init_conv(w.conv_w, w.conv_b, cfg.c, cfg.c, 3, rng);
    return w;
}

// ---- forwards ------------------------------------------------------------------

namespace ag {

/// VSSM: gated wrapper around the 2D selective scan. The caller applies the
/// outer LN.
template <typename T>
Value<T> vssm_forward(Graph<T>& g, Value<T> x, const VssmWeights<T>& w, const ModelConfig& cfg) {
    const i64 di = cfg.d_inner();
    Value<T> a = conv2d(g, x, g.param(w.proj_in_w), g.param(w.proj_in_b));
    a = conv2d(g, a, g.param(w.dw_w), g.param(w.dw_b), di);
    a = silu(g, a);
    a = ss2d(g, a, w.scan, cfg.state_config());
    a = layer_norm_channel(g, a, g.param(w.ln_scan_g), g.param(w.ln_scan_b));
    Value<T> h2 = silu(g, conv2d(g, x, g.param(w.gate_w), g.param(w.gate_b)));
    return conv2d(g, mul(g, a, h2), g.param(w.proj_out_w), g.param(w.proj_out_b));
}

/// FFT -> pointwise selection -> inverse FFT. Spectrum carried as 2c real
/// channels (real then imaginary halves).
template <typename T>
Value<T> fsm_forward(Graph<T>& g, Value<T> x, const FsmWeights<T>& w, char variant) {
    const i64 W = x->val.dim(3);
    Value<T> s = rfft2_half_op(g, x);
    switch (variant) {
        case 'a':
            s = conv2d(g, s, g.param(w.conv1_w), g.param(w.conv1_b));
            break;
        case 'b':
            s = relu(g, s);
            break;
        case 'c':
            s = gelu(g, conv2d(g, s, g.param(w.conv1_w), g.param(w.conv1_b)));
            s = gelu(g, conv2d(g, s, g.param(w.conv2_w), g.param(w.conv2_b)));
            break;
        default:
            throw config_error("fsm_forward: unknown variant");
    }
    return irfft2_half_op(g, s, W);
}

/// Channel-attention coordinates gated by a pixel-wise GELU mask.
template <typename T>
Value<T> hgm_forward(Graph<T>& g, Value<T> x, const HgmWeights<T>& w) {
    const i64 c = x->val.dim(1);
    Value<T> e = conv2d(g, x, g.param(w.expand_w), g.param(w.expand_b));
    check_shape(e->val.dim(1) % 2 == 0, "hgm_forward: expanded channels must be even");
    Value<T> x1 = slice_channels(g, e, 0, c);
    Value<T> x2 = slice_channels(g, e, c, 2 * c);
    Value<T> t = conv2d(g, x1, g.param(w.coor1_w), g.param(w.coor1_b));
    t = conv2d(g, t, g.param(w.dw3_w), g.param(w.dw3_b), c);
    Value<T> p = global_avg_pool(g, t);
    p = relu(g, conv2d(g, p, g.param(w.ca.reduce_w), g.param(w.ca.reduce_b)));
    p = sigmoid(g, conv2d(g, p, g.param(w.ca.expand_w), g.param(w.ca.expand_b)));
    Value<T> x_coor = broadcast_mul_channel(g, t, p);
    Value<T> m = gelu(g, conv2d(g, x2, g.param(w.gate_w), g.param(w.gate_b)));
    return conv2d(g, mul(g, m, x_coor), g.param(w.out_w), g.param(w.out_b));
}

/// Two-stage block: global exploration then local modeling, each with its own
/// learnable skip scale. The FSM consumes the un-normalized stage input.
template <typename T>
Value<T> fmb_forward(Graph<T>& g, Value<T> x, const FmbWeights<T>& w, const ModelConfig& cfg) {
    Value<T> y = add(g, scale(g, x, g.param(w.alpha_g)),
                     vssm_forward(g, layer_norm_channel(g, x, g.param(w.ln1_g), g.param(w.ln1_b)),
                                  w.vssm, cfg));
    y = add(g, y, fsm_forward(g, x, w.fsm_a, cfg.fsm_variant));
    Value<T> out = add(g, scale(g, y, g.param(w.alpha_l)),
                       hgm_forward(g, layer_norm_channel(g, y, g.param(w.ln2_g), g.param(w.ln2_b)),
                                   w.hgm));
    out = add(g, out, fsm_forward(g, y, w.fsm_b, cfg.fsm_variant));
    return out;
}

/// Group: chained blocks, a 3x3 conv, and a residual over the whole group.
template <typename T>
Value<T> fmg_forward(Graph<T>& g, Value<T> x, const FmgWeights<T>& w, const ModelConfig& cfg) {
    Value<T> f = x;
    for (const auto& blk : w.blocks) f = fmb_forward(g, f, blk, cfg);
    f = conv2d(g, f, g.param(w.conv_w), g.param(w.conv_b));
    return add(g, f, x);
}

}  // namespace ag

// ---- plain-tensor entry points ---------------------------------------------------

template <typename T>
Tensor<T> layer_norm_channel(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                             T eps = T(1e-6)) {
    Graph<T> g(false);
    return ag::layer_norm_channel(g, g.leaf(x, false), g.param(gain), g.param(bias), eps)->val;
}

template <typename T>
Tensor<T> vssm_forward(const Tensor<T>& x, const VssmWeights<T>& w, const ModelConfig& cfg) {
    Graph<T> g(false);
    return ag::vssm_forward(g, g.leaf(x, false), w, cfg)->val;
}

template <typename T>
Tensor<T> fsm_forward(const Tensor<T>& x, const FsmWeights<T>& w, char variant) {
    Graph<T> g(false);
    return ag::fsm_forward(g, g.leaf(x, false), w, variant)->val;
}

template <typename T>
Tensor<T> hgm_forward(const Tensor<T>& x, const HgmWeights<T>& w) {
    Graph<T> g(false);
    return ag::hgm_forward(g, g.leaf(x, false), w)->val;
}

template <typename T>
Tensor<T> fmb_forward(const Tensor<T>& x, const FmbWeights<T>& w, const ModelConfig& cfg) {
    Graph<T> g(false);
    return ag::fmb_forward(g, g.leaf(x, false), w, cfg)->val;
}

template <typename T>
Tensor<T> fmg_forward(const Tensor<T>& x, const FmgWeights<T>& w, const ModelConfig& cfg) {
    Graph<T> g(false);
    return ag::fmg_forward(g, g.leaf(x, false), w, cfg)->val;
}

}  // namespace fmsr
