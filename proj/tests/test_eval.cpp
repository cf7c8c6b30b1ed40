#include <doctest.h>

#include "fmsr/eval.hpp"
#include "fmsr/selftest.hpp"

using namespace fmsr;

namespace {

ModelConfig toy_cfg() {
    ModelConfig cfg;
    cfg.c = 16;
    cfg.m = 1;
    cfg.n = 1;
    cfg.d_state = 4;
    cfg.r = 4;
    return cfg;
}

}  // namespace

TEST_CASE("rgb_to_y implements studio-swing BT.601") {
    Tensor<double> black({3, 2, 2});
    CHECK(rgb_to_y(black)(0, 0) == doctest::Approx(16.0 / 255.0).epsilon(1e-12));
    Tensor<double> white({3, 2, 2}, 1.0);
    CHECK(rgb_to_y(white)(0, 0) == doctest::Approx(235.0 / 255.0).epsilon(1e-12));
    // gray ramp: affine with slope 219/255
    for (double g : {0.1, 0.35, 0.8}) {
        Tensor<double> gray({3, 1, 1}, g);
        const double y = rgb_to_y(gray)(0, 0);
        CHECK(y == doctest::Approx((16.0 + 219.0 * g) / 255.0).epsilon(1e-12));
    }
}

TEST_CASE("psnr closed forms and the 100 dB cap") {
    Tensor<double> a({8, 8}), b({8, 8});
    CHECK(psnr(a, a) == 100.0);
    b.fill(1.0);
    CHECK(psnr(a, b) == doctest::Approx(0.0).epsilon(1e-12));
    Tensor<double> c({8, 8}, 0.1);
    CHECK(psnr(a, c) == doctest::Approx(20.0).epsilon(1e-12));
    CHECK(psnr(b, c) == psnr(c, b));
}

TEST_CASE("ssim closed forms") {
    Rng rng(1);
    Tensor<double> a({16, 16});
    rng.fill_uniform(a, 0.0, 1.0);
    CHECK(ssim(a, a) == 1.0);  // exactly
    Tensor<double> zero({16, 16}), one({16, 16}, 1.0);
    const double c1 = 1e-4;
    CHECK(std::abs(ssim(zero, one) - c1 / (1.0 + c1)) < 1e-8);
    // tiny perturbation stays close to 1
    Tensor<double> b = a;
    Rng rng2(2);
    for (i64 i = 0; i < b.numel(); ++i) b[i] += 1e-4 * rng2.uniform();
    CHECK(ssim(a, b) > 0.999);
    CHECK(ssim(a, b) == ssim(b, a));
}

TEST_CASE("metrics are invariant under shared dihedral relabelings") {
    Rng rng(3);
    Tensor<double> a3({1, 16, 16}), b3({1, 16, 16});
    rng.fill_uniform(a3, 0.0, 1.0);
    rng.fill_uniform(b3, 0.0, 1.0);
    Tensor<double> a = a3.reshaped({16, 16});
    Tensor<double> b = b3.reshaped({16, 16});
    const double p0 = psnr(a, b), s0 = ssim(a, b);
    for (int t = 1; t < 8; ++t) {
        Tensor<double> at = dihedral(a3, t).reshaped({16, 16});
        Tensor<double> bt = dihedral(b3, t).reshaped({16, 16});
        CHECK(psnr(at, bt) == doctest::Approx(p0).epsilon(1e-12));
        CHECK(ssim(at, bt) == doctest::Approx(s0).epsilon(1e-10));
    }
}

TEST_CASE("Y metrics ignore chroma-only perturbations") {
    Rng rng(4);
    Tensor<double> a({3, 16, 16}), b({3, 16, 16});
    rng.fill_uniform(a, 0.2, 0.8);
    rng.fill_uniform(b, 0.2, 0.8);
    // perturb along a null direction of the Y coefficients
    const double null_r = 128.553, null_g = -65.481;  // 65.481*r + 128.553*g = 0
    Tensor<double> a2 = a, b2 = b;
    for (i64 i = 0; i < 256; ++i) {
        a2[0 * 256 + i] += 1e-3 * null_r / 255.0;
        a2[1 * 256 + i] += 1e-3 * null_g / 255.0;
        b2[0 * 256 + i] -= 5e-4 * null_r / 255.0;
        b2[1 * 256 + i] -= 5e-4 * null_g / 255.0;
    }
    CHECK(max_abs_diff(rgb_to_y(a2), rgb_to_y(a)) < 1e-9);
    CHECK(std::abs(psnr(rgb_to_y(a2), rgb_to_y(b2)) - psnr(rgb_to_y(a), rgb_to_y(b))) < 1e-5);
    CHECK(std::abs(ssim(rgb_to_y(a2), rgb_to_y(b2)) - ssim(rgb_to_y(a), rgb_to_y(b))) < 1e-7);
}

TEST_CASE("self_ensemble on a constant input: dihedral group fixes the input") {
    // every transformed input is identical, so the ensemble reduces to the
    // symmetrization of one forward pass (and is itself dihedral-invariant)
    ModelConfig cfg = toy_cfg();
    Model<float> m = build_model<float>(cfg, 5);
    Tensor<float> x({3, 12, 12}, 0.31f);
    for (int t = 1; t < 8; ++t) CHECK(max_abs_diff(dihedral(x, t), x) == 0.0f);
    Tensor<float> y = model_forward(m, x.reshaped({1, 3, 12, 12})).reshaped({3, 48, 48});
    Tensor<float> want({3, 48, 48});
    for (int t = 0; t < 8; ++t) {
        Tensor<float> inv = dihedral_inverse(y, t);
        for (i64 i = 0; i < want.numel(); ++i) want[i] += inv[i];
    }
    for (i64 i = 0; i < want.numel(); ++i)
        want[i] = std::min(1.0f, std::max(0.0f, want[i] / 8.0f));
    Tensor<float> ens = self_ensemble(m, x);
    CHECK(max_abs_diff(ens, want) <= 1e-6f);
    for (int t = 1; t < 8; ++t) CHECK(max_abs_diff(dihedral(ens, t), ens) <= 1e-5f);
}

TEST_CASE("self_ensemble commutes with every dihedral transform") {
    ModelConfig cfg = toy_cfg();
    Model<float> m = build_model<float>(cfg, 6);
    Rng rng(7);
    Tensor<float> x({3, 10, 10});
    rng.fill_uniform(x, 0.0, 1.0);
    Tensor<float> base = self_ensemble(m, x);
    for (int t = 0; t < 8; ++t) {
        Tensor<float> lhs = self_ensemble(m, dihedral(x, t));
        Tensor<float> rhs = dihedral(base, t);
        CHECK(max_abs_diff(lhs, rhs) <= 1e-5f);
    }
}

TEST_CASE("evaluate_pairs: a bicubic 'model' matches the baseline columns") {
    Rng rng(8);
    std::vector<Tensor<float>> imgs = {Tensor<float>({3, 48, 48})};
    for (i64 i = 0; i < imgs[0].numel(); ++i)
        imgs[0][i] = static_cast<float>(0.5 + 0.3 * std::sin(0.21 * static_cast<double>(i % 53)));
    auto pairs = make_pairs(imgs, 4);
    auto up = [&](const Tensor<float>& lr) {
        Tensor<float> y = bicubic_resize(lr, lr.dim(1) * 4, lr.dim(2) * 4, false);
        for (i64 i = 0; i < y.numel(); ++i) y[i] = std::min(1.0f, std::max(0.0f, y[i]));
        return y;
    };
    MetricReport rep = evaluate_pairs<float>(pairs, up, 0);
    REQUIRE(rep.rows.size() == 1);
    CHECK(rep.rows[0].psnr_db == rep.rows[0].psnr_bicubic);
    CHECK(rep.rows[0].ssim_v == rep.rows[0].ssim_bicubic);
}

TEST_CASE("evaluate_pairs: self-consistent pair hits the PSNR cap") {
    Rng rng(9);
    Tensor<float> lr({3, 16, 16});
    rng.fill_uniform(lr, 0.2, 0.8);
    auto up = [&](const Tensor<float>& in) {
        Tensor<float> y = bicubic_resize(in, in.dim(1) * 4, in.dim(2) * 4, false);
        for (i64 i = 0; i < y.numel(); ++i) y[i] = std::min(1.0f, std::max(0.0f, y[i]));
        return y;
    };
    PairedSample<float> pair;
    pair.lr = lr;
    pair.hr = up(lr);
    pair.provenance = "selfconsistent";
    MetricReport rep = evaluate_pairs<float>({pair}, up, 0);
    CHECK(rep.rows[0].psnr_db == 100.0);
}

TEST_CASE("erf of a 3-layer conv stack is confined to its 7x7 window") {
    Tensor<float> x({3, 64, 64});
    Rng rng(10);
    rng.fill_uniform(x, 0.0, 1.0);
    Tensor<float> map = conv_stack_erf(3, 8, x, 77);
    i64 nonzero_outside = 0, nonzero_inside = 0;
    for (i64 i = 0; i < 64; ++i)
        for (i64 j = 0; j < 64; ++j) {
            const bool inside = std::abs(i - 32) <= 3 && std::abs(j - 32) <= 3;
            if (map(i, j) != 0.0f) (inside ? nonzero_inside : nonzero_outside)++;
        }
    CHECK(nonzero_outside == 0);
    CHECK(nonzero_inside > 0);
}

TEST_CASE("erf of a randomly initialized FMSR reaches all four corners") {
    ModelConfig cfg = toy_cfg();
    Model<float> m = build_model<float>(cfg, 11);
    Tensor<float> x({3, 64, 64});
    Rng rng(12);
    rng.fill_uniform(x, 0.0, 1.0);
    Tensor<float> map = erf_map(m, x);
    CHECK(map(0, 0) > 0.0f);
    CHECK(map(0, 63) > 0.0f);
    CHECK(map(63, 0) > 0.0f);
    CHECK(map(63, 63) > 0.0f);
}

TEST_CASE("linear-path ERF support mask is invariant to input scaling") {
    ModelConfig cfg = toy_cfg();
    cfg.residual_safe_init = true;
    Model<float> m = build_model<float>(cfg, 13);
    Tensor<float> x({3, 32, 32});
    Rng rng(14);
    rng.fill_uniform(x, 0.1, 0.5);
    Tensor<float> m1 = erf_map(m, x);
    Tensor<float> x2 = x;
    for (i64 i = 0; i < x2.numel(); ++i) x2[i] *= 2.0f;
    Tensor<float> m2 = erf_map(m, x2);
    for (i64 i = 0; i < m1.numel(); ++i) CHECK((m1[i] > 0.0f) == (m2[i] > 0.0f));
}

TEST_CASE("msa layer parameter and flop accounting") {
    Rng rng(15);
    MsaLayer<float> msa = MsaLayer<float>::init(180, 6, rng);
    CHECK(msa.params() == 130320);  // 4*180^2 + 4*180
    CHECK(std::abs(static_cast<double>(msa.params()) / 130800.0 - 1.0) < 0.01);
    // attention term grows quadratically in token count
    const i64 attn32 = msa.flops(32 * 32) - 4 * 180 * 180 * 32 * 32;
    const i64 attn88 = msa.flops(88 * 88) - 4 * 180 * 180 * 88 * 88;
    const double want = std::pow(88.0 * 88.0 / (32.0 * 32.0), 2.0);
    CHECK(static_cast<double>(attn88) / static_cast<double>(attn32) ==
          doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("msa forward shape and softmax normalization") {
    Rng rng(16);
    MsaLayer<double> msa = MsaLayer<double>::init(12, 3, rng);
    Tensor<double> x({9, 12});
    rng.fill_uniform(x, -1.0, 1.0);
    Tensor<double> y = msa.forward(x);
    CHECK(y.shape() == std::vector<i64>({9, 12}));
    CHECK(y.all_finite());
}

TEST_CASE("bench records are monotone and well formed on tiny sizes") {
    BenchSummary s = bench_scaling({8, 16}, 16, 12, 1);
    REQUIRE(s.records.size() == 4);
    double prev_fmb = 0, prev_msa = 0;
    i64 prev_fmb_fl = 0, prev_msa_fl = 0;
    for (const auto& r : s.records) {
        CHECK(r.time_ms > 0.0);
        CHECK(r.flops > 0);
        if (r.block == "fmb") {
            CHECK(r.flops >= prev_fmb_fl);
            prev_fmb_fl = r.flops;
            prev_fmb = r.time_ms;
        } else {
            CHECK(r.flops >= prev_msa_fl);
            prev_msa_fl = r.flops;
            prev_msa = r.time_ms;
        }
    }
    CHECK(prev_fmb > 0);
    CHECK(prev_msa > 0);
    const std::string csv = bench_csv(s.records);
    CHECK(csv.find("size,block,params,flops,time_ms") == 0);
    CHECK(csv.find("fmb") != std::string::npos);
    CHECK(csv.find("msa") != std::string::npos);
}

TEST_CASE("shave_border trims metrics input") {
    Tensor<double> y({6, 8}, 1.0);
    Tensor<double> t = shave_border(y, 2);
    CHECK(t.shape() == std::vector<i64>({2, 4}));
    CHECK_THROWS_AS(shave_border(y, 3), shape_error);
}
