#pragma once

#include "eval.hpp"
#include "train.hpp"

namespace fmsr {

/// Probe weights for finite-difference checks: same shapes as training
/// weights but uniform moderate magnitudes, keeping every path (scan decay,
/// softplus steps, gates) away from vanishing-gradient corners.
template <typename T>
void randomize_probe(FmbWeights<T>& w, Rng& rng) {
    auto fill = [&](Tensor<T>& t, double lo, double hi) { rng.fill_uniform(t, lo, hi); };
    fill(w.ln1_g, 0.5, 1.5);
    fill(w.ln1_b, -0.3, 0.3);
    fill(w.ln2_g, 0.5, 1.5);
    fill(w.ln2_b, -0.3, 0.3);
    fill(w.vssm.proj_in_w, -0.6, 0.6);
    fill(w.vssm.proj_in_b, -0.2, 0.2);
    fill(w.vssm.dw_w, -0.6, 0.6);
    fill(w.vssm.dw_b, -0.2, 0.2);
    fill(w.vssm.scan.a_log, -0.5, 0.8);
    fill(w.vssm.scan.d_skip, -0.8, 0.8);
    fill(w.vssm.scan.x_proj_w, -0.6, 0.6);
    fill(w.vssm.scan.dt_proj_w, -0.6, 0.6);
    fill(w.vssm.scan.dt_proj_b, -1.5, 0.5);
    fill(w.vssm.ln_scan_g, 0.5, 1.5);
    fill(w.vssm.ln_scan_b, -0.3, 0.3);
    fill(w.vssm.gate_w, -0.6, 0.6);
    fill(w.vssm.gate_b, -0.2, 0.2);
    fill(w.vssm.proj_out_w, -0.6, 0.6);
    fill(w.vssm.proj_out_b, -0.2, 0.2);
    fill(w.hgm.expand_w, -0.6, 0.6);
    fill(w.hgm.expand_b, -0.2, 0.2);
    fill(w.hgm.coor1_w, -0.6, 0.6);
    fill(w.hgm.coor1_b, -0.2, 0.2);
    fill(w.hgm.dw3_w, -0.6, 0.6);
    fill(w.hgm.dw3_b, -0.2, 0.2);
    fill(w.hgm.ca.reduce_w, -0.6, 0.6);
    fill(w.hgm.ca.reduce_b, -0.2, 0.2);
    fill(w.hgm.ca.expand_w, -0.6, 0.6);
    fill(w.hgm.ca.expand_b, -0.2, 0.2);
    fill(w.hgm.gate_w, -0.6, 0.6);
    fill(w.hgm.gate_b, -0.2, 0.2);
    fill(w.hgm.out_w, -0.6, 0.6);
    fill(w.hgm.out_b, -0.2, 0.2);
    fill(w.fsm_a.conv1_w, -0.6, 0.6);
    fill(w.fsm_a.conv1_b, -0.2, 0.2);
    fill(w.fsm_a.conv2_w, -0.6, 0.6);
    fill(w.fsm_a.conv2_b, -0.2, 0.2);
    fill(w.fsm_b.conv1_w, -0.6, 0.6);
    fill(w.fsm_b.conv1_b, -0.2, 0.2);
    fill(w.fsm_b.conv2_w, -0.6, 0.6);
    fill(w.fsm_b.conv2_b, -0.2, 0.2);
    fill(w.alpha_g, 0.7, 1.3);
    fill(w.alpha_l, 0.7, 1.3);
}

template <typename T>
std::vector<std::pair<std::string, Tensor<T>*>> fmb_param_list(FmbWeights<T>& w, char variant) {
    std::vector<std::pair<std::string, Tensor<T>*>> out = {
        {"ln1.g", &w.ln1_g},
        {"ln1.b", &w.ln1_b},
        {"ln2.g", &w.ln2_g},
        {"ln2.b", &w.ln2_b},
        {"vssm.proj_in.w", &w.vssm.proj_in_w},
        {"vssm.proj_in.b", &w.vssm.proj_in_b},
        {"vssm.dw.w", &w.vssm.dw_w},
        {"vssm.dw.b", &w.vssm.dw_b},
        {"vssm.scan.a_log", &w.vssm.scan.a_log},
        {"vssm.scan.d_skip", &w.vssm.scan.d_skip},
        {"vssm.scan.x_proj.w", &w.vssm.scan.x_proj_w},
        {"vssm.scan.dt_proj.w", &w.vssm.scan.dt_proj_w},
        {"vssm.scan.dt_proj.b", &w.vssm.scan.dt_proj_b},
        {"vssm.ln.g", &w.vssm.ln_scan_g},
        {"vssm.ln.b", &w.vssm.ln_scan_b},
        {"vssm.gate.w", &w.vssm.gate_w},
        {"vssm.gate.b", &w.vssm.gate_b},
        {"vssm.proj_out.w", &w.vssm.proj_out_w},
        {"vssm.proj_out.b", &w.vssm.proj_out_b},
        {"hgm.expand.w", &w.hgm.expand_w},
        {"hgm.expand.b", &w.hgm.expand_b},
        {"hgm.coor1.w", &w.hgm.coor1_w},
        {"hgm.coor1.b", &w.hgm.coor1_b},
        {"hgm.dw3.w", &w.hgm.dw3_w},
        {"hgm.dw3.b", &w.hgm.dw3_b},
        {"hgm.ca.reduce.w", &w.hgm.ca.reduce_w},
        {"hgm.ca.reduce.b", &w.hgm.ca.reduce_b},
        {"hgm.ca.expand.w", &w.hgm.ca.expand_w},
        {"hgm.ca.expand.b", &w.hgm.ca.expand_b},
        {"hgm.gate.w", &w.hgm.gate_w},
        {"hgm.gate.b", &w.hgm.gate_b},
        {"hgm.out.w", &w.hgm.out_w},
        {"hgm.out.b", &w.hgm.out_b},
        {"alpha_g", &w.alpha_g},
        {"alpha_l", &w.alpha_l},
    };
    if (variant == 'a' || variant == 'c') {
        out.emplace_back("fsm_a.conv1.w", &w.fsm_a.conv1_w);
        out.emplace_back("fsm_a.conv1.b", &w.fsm_a.conv1_b);
        out.emplace_back("fsm_b.conv1.w", &w.fsm_b.conv1_w);
        out.emplace_back("fsm_b.conv1.b", &w.fsm_b.conv1_b);
    }
    if (variant == 'c') {
        out.emplace_back("fsm_a.conv2.w", &w.fsm_a.conv2_w);
        out.emplace_back("fsm_a.conv2.b", &w.fsm_a.conv2_b);
        out.emplace_back("fsm_b.conv2.w", &w.fsm_b.conv2_w);
        out.emplace_back("fsm_b.conv2.b", &w.fsm_b.conv2_b);
    }
    return out;
}

struct SuiteResult {
    std::string name;
    double value = 0;    // measured error / metric
    double bound = 0;    // allowed bound
    bool pass = false;
};

/// f64 finite-difference checks of every block (probe config c=2).
inline std::vector<SuiteResult> gradient_suite(bool include_hgm_shape_probe = true) {
    std::vector<SuiteResult> results;
    auto record = [&](const std::string& name, double err, double bound) {
        results.push_back({name, err, bound, err <= bound});
    };
    ModelConfig cfg;
    cfg.c = 2;
    cfg.m = 1;
    cfg.n = 1;
    cfg.d_state = 4;
    cfg.r = 2;
    Rng rng(27182818);
    FmbWeights<double> w = init_fmb<double>(cfg, rng);
    randomize_probe(w, rng);
    Tensor<double> x({1, 2, 4, 4});
    rng.fill_uniform(x, -1.0, 1.0);
    auto proj = std::make_shared<Tensor<double>>(std::vector<i64>{1, 2, 4, 4});
    rng.fill_uniform(*proj, -1.0, 1.0);

    {  // layer_norm_channel
        auto build = [&](Graph<double>& g) {
            return ag::dot_with(
                g, ag::layer_norm_channel(g, g.param(x), g.param(w.ln1_g), g.param(w.ln1_b)), proj);
        };
        auto rep = grad_check<double>(build, {{"x", &x}, {"g", &w.ln1_g}, {"b", &w.ln1_b}});
        record("grad layer_norm", rep.worst, 1e-5);
    }
    {  // ss2d w.r.t. input and scan parameters
        auto sc = StateConfig::make(4, 4);
        auto p = init_scan_params<double>(sc, rng);
        rng.fill_uniform(p.a_log, -0.5, 0.8);
        rng.fill_uniform(p.dt_proj_b, -1.5, 0.5);
        Tensor<double> xi({1, 4, 4, 4});
        rng.fill_uniform(xi, -1.0, 1.0);
        auto proj4 = std::make_shared<Tensor<double>>(std::vector<i64>{1, 4, 4, 4});
        rng.fill_uniform(*proj4, -1.0, 1.0);
        auto build = [&](Graph<double>& g) {
            return ag::dot_with(g, ag::ss2d(g, g.param(xi), p, sc), proj4);
        };
        auto rep = grad_check<double>(build,
                                      {{"u", &xi},
                                       {"a_log", &p.a_log},
                                       {"d_skip", &p.d_skip},
                                       {"x_proj", &p.x_proj_w},
                                       {"dt_proj.w", &p.dt_proj_w},
                                       {"dt_proj.b", &p.dt_proj_b}});
        record("grad ss2d", rep.worst, 1e-5);
    }
    {  // vssm
        auto build = [&](Graph<double>& g) {
            return ag::dot_with(g, ag::vssm_forward(g, g.param(x), w.vssm, cfg), proj);
        };
        std::vector<std::pair<std::string, Tensor<double>*>> params = {
            {"x", &x},
            {"proj_in.w", &w.vssm.proj_in_w},
            {"dw.w", &w.vssm.dw_w},
            {"a_log", &w.vssm.scan.a_log},
            {"x_proj", &w.vssm.scan.x_proj_w},
            {"dt_proj.w", &w.vssm.scan.dt_proj_w},
            {"gate.w", &w.vssm.gate_w},
            {"proj_out.w", &w.vssm.proj_out_w}};
        auto rep = grad_check<double>(build, params);
        record("grad vssm", rep.worst, 1e-5);
    }
    for (char variant : {'a', 'b', 'c'}) {  // fsm variants
        auto build = [&, variant](Graph<double>& g) {
            return ag::dot_with(g, ag::fsm_forward(g, g.param(x), w.fsm_a, variant), proj);
        };
        std::vector<std::pair<std::string, Tensor<double>*>> params = {{"x", &x}};
        if (variant != 'b') {
            params.emplace_back("conv1.w", &w.fsm_a.conv1_w);
            params.emplace_back("conv1.b", &w.fsm_a.conv1_b);
        }
        if (variant == 'c') {
            params.emplace_back("conv2.w", &w.fsm_a.conv2_w);
            params.emplace_back("conv2.b", &w.fsm_a.conv2_b);
        }
        auto rep = grad_check<double>(build, params);
        record(std::string("grad fsm (") + variant + ")", rep.worst, 1e-5);
    }
    {  // hgm
        auto build = [&](Graph<double>& g) {
            return ag::dot_with(g, ag::hgm_forward(g, g.param(x), w.hgm), proj);
        };
        std::vector<std::pair<std::string, Tensor<double>*>> params = {
            {"x", &x},          {"expand.w", &w.hgm.expand_w}, {"coor1.w", &w.hgm.coor1_w},
            {"dw3.w", &w.hgm.dw3_w}, {"ca.reduce.w", &w.hgm.ca.reduce_w},
            {"ca.expand.w", &w.hgm.ca.expand_w}, {"gate.w", &w.hgm.gate_w},
            {"out.w", &w.hgm.out_w}};
        auto rep = grad_check<double>(build, params);
        record("grad hgm", rep.worst, 1e-5);
    }
    {  // full fmb, every weight tensor
        auto build = [&](Graph<double>& g) {
            return ag::dot_with(g, ag::fmb_forward(g, g.param(x), w, cfg), proj);
        };
        auto params = fmb_param_list(w, cfg.fsm_variant);
        params.emplace_back("x", &x);
        auto rep = grad_check<double>(build, params);
        record("grad fmb", rep.worst, 1e-5);
    }
    (void)include_hgm_shape_probe;
    return results;
}

/// L1-loss model gradient vs finite differences over a sampled weight subset,
/// aggregated as one inf-norm ratio.
inline SuiteResult model_gradient_check(i64 samples, const ModelConfig& cfg, i64 lr_side,
                                        double tolerance) {
    Model<double> model = build_model<double>(cfg, 31415926);
    Rng rng(141421);
    Tensor<double> x({1, 3, lr_side, lr_side});
    rng.fill_uniform(x, 0.0, 1.0);
    Tensor<double> gt({1, 3, cfg.scale * lr_side, cfg.scale * lr_side});
    rng.fill_uniform(gt, 0.0, 1.0);
    auto build = [&](Graph<double>& g) {
        Value<double> out = ag::model_forward(g, model, g.leaf(x, false));
        return ag::mean_abs_diff(g, out, g.constant(gt));
    };
    Graph<double> g(true);
    Value<double> loss = build(g);
    g.backward(loss);
    std::vector<std::pair<std::string, Tensor<double>*>> all;
    visit_params(model, [&](const std::string& name, Tensor<double>& p) {
        all.emplace_back(name, &p);
    });
    double norm_a = 0, norm_fd = 0, norm_diff = 0;
    const double h = 1e-6;
    for (i64 k = 0; k < samples; ++k) {
        auto& [name, tensor] = all[static_cast<size_t>(rng.uniform_int(0, static_cast<i64>(all.size()) - 1))];
        const i64 i = rng.uniform_int(0, tensor->numel() - 1);
        const Tensor<double>* ga = g.grad_of(*tensor);
        if (!ga) throw domain_error("model_gradient_check: missing gradient for " + name);
        const double saved = (*tensor)[i];
        (*tensor)[i] = saved + h;
        Graph<double> g1(false);
        const double up = build(g1)->val[0];
        (*tensor)[i] = saved - h;
        Graph<double> g2(false);
        const double dn = build(g2)->val[0];
        (*tensor)[i] = saved;
        const double fd = (up - dn) / (2.0 * h);
        const double a = (*ga)[i];
        norm_a = std::max(norm_a, std::abs(a));
        norm_fd = std::max(norm_fd, std::abs(fd));
        norm_diff = std::max(norm_diff, std::abs(a - fd));
    }
    const double err = norm_diff / (norm_a + norm_fd + 1e-12);
    return {"grad full model (L1)", err, tolerance, err <= tolerance};
}

/// Fast structural invariants (exactness properties that need no training).
inline std::vector<SuiteResult> invariant_suite() {
    std::vector<SuiteResult> results;
    auto record = [&](const std::string& name, double err, double bound) {
        results.push_back({name, err, bound, err <= bound});
    };
    Rng rng(55);
    {  // cross_scan / cross_merge roundtrip = 4x exactly
        Tensor<double> x({2, 3, 5, 7});
        rng.fill_uniform(x, -1.0, 1.0);
        Tensor<double> merged = cross_merge(cross_scan(x), 5, 7);
        double err = 0;
        for (i64 i = 0; i < x.numel(); ++i) err = std::max(err, std::abs(merged[i] - 4.0 * x[i]));
        record("cross_merge(cross_scan) = 4x", err, 0.0);
    }
    {  // FSM variant (a) with identity conv is an FFT roundtrip
        ModelConfig cfg;
        cfg.c = 4;
        cfg.r = 4;
        FsmWeights<float> w;
        w.conv1_w = Tensor<float>({8, 8, 1, 1});
        for (i64 i = 0; i < 8; ++i) w.conv1_w(i, i, 0, 0) = 1.0f;
        w.conv1_b = Tensor<float>({8});
        w.conv2_w = w.conv1_w;
        w.conv2_b = w.conv1_b;
        Tensor<float> x({1, 4, 12, 9});
        rng.fill_uniform(x, -1.0, 1.0);
        Tensor<float> y = fsm_forward(x, w, 'a');
        record("fsm(a) identity roundtrip", static_cast<double>(max_abs_diff(x, y)), 1e-5);
    }
    {  // selective_scan frozen scalar recurrence
        Tensor<double> u({1, 1, 2}, 1.0), delta({1, 1, 2}, std::log(2.0)), A({1, 1});
        Tensor<double> B({1, 1, 2}, 1.0), C({1, 1, 2}, 1.0), D({1});
        A[0] = -1.0;
        Tensor<double> y = selective_scan_1d(u, delta, A, B, C, D);
        const double l2 = std::log(2.0);
        const double err = std::max(std::abs(y[0] - l2), std::abs(y[1] - 1.5 * l2));
        record("scan scalar oracle", err, 1e-12);
    }
    {  // lr schedule halving
        TrainConfig tc;
        double err = std::abs(lr_schedule(0, tc) - 1e-4) + std::abs(lr_schedule(199, tc) - 1e-4) +
                     std::abs(lr_schedule(200, tc) - 5e-5) + std::abs(lr_schedule(400, tc) - 2.5e-5);
        record("lr schedule", err, 0.0);
    }
    {  // metric basics
        Tensor<double> a({16, 16}), b({16, 16}, 1.0);
        const double p0 = psnr(a, b);
        const double s_same = ssim(b, b);
        const double c1 = 1e-4;
        const double s_const = ssim(a, b);
        double err = std::abs(p0 - 0.0) + std::abs(s_same - 1.0) +
                     std::abs(s_const - c1 / (1.0 + c1));
        record("psnr/ssim closed forms", err, 1e-8);
    }
    {  // pixel shuffle bijection
        Tensor<float> x({2, 18, 3, 5});
        rng.fill_uniform(x, -1.0, 1.0);
        Tensor<float> y = pixel_shuffle(x, 3);
        Tensor<float> back = pixel_unshuffle(y, 3);
        record("pixel_shuffle roundtrip", static_cast<double>(max_abs_diff(x, back)), 0.0);
    }
    return results;
}

}  // namespace fmsr
