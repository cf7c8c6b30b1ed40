#include <doctest.h>

#include "fmsr/model.hpp"
#include "fmsr/selftest.hpp"
#include "oracles.hpp"

using namespace fmsr;

namespace {

ModelConfig toy_cfg() {
    ModelConfig cfg;
    cfg.c = 32;
    cfg.m = 2;
    cfg.n = 2;
    cfg.d_state = 8;
    cfg.r = 8;
    return cfg;
}

}  // namespace

TEST_CASE("build_model is deterministic under a fixed seed") {
    ModelConfig cfg = toy_cfg();
    Model<float> a = build_model<float>(cfg, 123);
    Model<float> b = build_model<float>(cfg, 123);
    std::vector<const Tensor<float>*> ta, tb;
    visit_params(a, [&](const std::string&, const Tensor<float>& t) { ta.push_back(&t); });
    visit_params(b, [&](const std::string&, const Tensor<float>& t) { tb.push_back(&t); });
    REQUIRE(ta.size() == tb.size());
    for (size_t i = 0; i < ta.size(); ++i) {
        REQUIRE(ta[i]->shape() == tb[i]->shape());
        for (i64 j = 0; j < ta[i]->numel(); ++j) CHECK((*ta[i])[j] == (*tb[i])[j]);
    }
    Model<float> c = build_model<float>(cfg, 124);
    bool any_diff = false;
    std::vector<const Tensor<float>*> tc;
    visit_params(c, [&](const std::string&, const Tensor<float>& t) { tc.push_back(&t); });
    for (size_t i = 0; i < ta.size() && !any_diff; ++i)
        for (i64 j = 0; j < ta[i]->numel() && !any_diff; ++j) any_diff = (*ta[i])[j] != (*tc[i])[j];
    CHECK(any_diff);
}

TEST_CASE("default configuration lands on the published parameter budget") {
    ModelConfig cfg;  // defaults: s=4, m=n=6, c=96, lambda=2, d_state=16, r=16
    Model<float> m = build_model<float>(cfg, 1);
    const i64 total = count_params(m);
    CHECK(std::abs(static_cast<double>(total) / 11.76e6 - 1.0) <= 0.05);
    // and the closed-form walk agrees exactly
    CHECK(total == oracle::count_params_reference(cfg).total);
}

TEST_CASE("toy parameter count equals the shape-walking oracle exactly") {
    ModelConfig cfg = toy_cfg();
    Model<float> m = build_model<float>(cfg, 5);
    const auto ref = oracle::count_params_reference(cfg);
    CHECK(count_params(m) == ref.total);
    // per-module breakdown: group prefix sums must match n*fmb + conv
    i64 g0 = 0;
    visit_params(m, [&](const std::string& name, const Tensor<float>& t) {
        if (name.rfind("g0.", 0) == 0) g0 += t.numel();
    });
    CHECK(g0 == ref.fmg);
}

TEST_CASE("registry is deterministic, named, and exports a table") {
    ModelConfig cfg = toy_cfg();
    Model<float> m = build_model<float>(cfg, 5);
    const auto reg = param_registry(m);
    CHECK(reg.front().name == "head.w");
    CHECK(reg.back().name == "tail.b");
    const std::string table = registry_table(m);
    CHECK(table.find("g1.b0.vssm.scan.a_log 4x64x8 2048") != std::string::npos);
    CHECK(table.find("total - " + std::to_string(count_params(m))) != std::string::npos);
}

TEST_CASE("forward maps [1,3,32,32] to [1,3,128,128] at scale 4") {
    ModelConfig cfg = toy_cfg();
    Model<float> m = build_model<float>(cfg, 2);
    Rng rng(3);
    Tensor<float> x({1, 3, 32, 32});
    rng.fill_uniform(x, 0.0, 1.0);
    Tensor<float> y = model_forward(m, x);
    CHECK(y.shape() == std::vector<i64>({1, 3, 128, 128}));
    Tensor<float> yc = model_infer(m, x);
    for (i64 i = 0; i < yc.numel(); ++i) {
        CHECK(yc[i] >= 0.0f);
        CHECK(yc[i] <= 1.0f);
    }
    SUBCASE("wrong channel count raises a shape error") {
        Tensor<float> bad({1, 4, 32, 32});
        CHECK_THROWS_AS(model_forward(m, bad), shape_error);
    }
    SUBCASE("forward is deterministic") {
        Tensor<float> y2 = model_forward(m, x);
        CHECK(max_abs_diff(y, y2) == 0.0f);
    }
}

TEST_CASE("residual-safe model with zeroed body tail reduces to the skip path") {
    ModelConfig cfg = toy_cfg();
    cfg.residual_safe_init = true;
    Model<float> m = build_model<float>(cfg, 7);
    m.body_tail_w.fill(0.0f);
    m.body_tail_b.fill(0.0f);
    Rng rng(8);
    Tensor<float> x({1, 3, 16, 16});
    rng.fill_uniform(x, 0.0, 1.0);
    Tensor<float> got = model_forward(m, x);
    // tail(PS(up_conv(head(x))))
    Graph<float> g(false);
    Value<float> v = g.leaf(x, false);
    v = ag::conv2d(g, v, g.param(m.head_w), g.param(m.head_b));
    v = ag::conv2d(g, v, g.param(m.up_w), g.param(m.up_b));
    v = ag::pixel_shuffle(g, v, cfg.scale);
    v = ag::conv2d(g, v, g.param(m.tail_w), g.param(m.tail_b));
    CHECK(max_abs_diff(got, v->val) == 0.0f);
}

TEST_CASE("pixel_shuffle block-to-offset layout") {
    Tensor<double> x({1, 4, 1, 1});
    x[0] = 1;
    x[1] = 2;
    x[2] = 3;
    x[3] = 4;
    Tensor<double> y = pixel_shuffle(x, 2);
    CHECK(y.shape() == std::vector<i64>({1, 1, 2, 2}));
    CHECK(y(0, 0, 0, 0) == 1);
    CHECK(y(0, 0, 0, 1) == 2);
    CHECK(y(0, 0, 1, 0) == 3);
    CHECK(y(0, 0, 1, 1) == 4);
    SUBCASE("s=1 is the identity") {
        Rng rng(9);
        Tensor<double> z({2, 3, 4, 5});
        rng.fill_uniform(z, -1.0, 1.0);
        CHECK(max_abs_diff(pixel_shuffle(z, 1), z) == 0.0);
    }
    SUBCASE("inverse rearrangement recovers the input") {
        Rng rng(10);
        Tensor<double> z({2, 18, 3, 5});
        rng.fill_uniform(z, -1.0, 1.0);
        CHECK(max_abs_diff(pixel_unshuffle(pixel_shuffle(z, 3), 3), z) == 0.0);
    }
    SUBCASE("channel count must divide s^2") {
        Tensor<double> z({1, 6, 2, 2});
        CHECK_THROWS_AS(pixel_shuffle(z, 2), shape_error);
    }
}

TEST_CASE("registry closure: one backward pass touches every parameter") {
    ModelConfig cfg;
    cfg.c = 8;
    cfg.m = 1;
    cfg.n = 1;
    cfg.d_state = 4;
    cfg.r = 4;
    Model<float> m = build_model<float>(cfg, 11);
    Rng rng(12);
    Tensor<float> x({1, 3, 8, 8});
    rng.fill_uniform(x, 0.0, 1.0);
    Tensor<float> gt({1, 3, 32, 32});
    rng.fill_uniform(gt, 0.0, 1.0);
    Graph<float> g(true);
    Value<float> out = ag::model_forward(g, m, g.leaf(x, false));
    Value<float> loss = ag::mean_abs_diff(g, out, g.constant(gt));
    g.backward(loss);
    i64 missing = 0;
    visit_params(m, [&](const std::string& name, const Tensor<float>& p) {
        INFO("param: ", name);
        const Tensor<float>* grad = g.grad_of(p);
        if (!grad) ++missing;
        CHECK(grad != nullptr);
    });
    CHECK(missing == 0);
}

TEST_CASE("flop accounting") {
    SUBCASE("single 1x1 conv closed form") {
        CHECK(detail::conv_flops(96, 96, 1, 1, 64 * 64) ==
              96 * 96 * 64 * 64 + static_cast<i64>(96) * 64 * 64);
    }
    SUBCASE("default config within the published band at 128x128") {
        ModelConfig cfg;
        Model<float> m = build_model<float>(cfg, 1);
        const FlopReport fr = count_flops(m, 128, 128);
        CHECK(std::abs(static_cast<double>(fr.total) / 128.27e9 - 1.0) <= 0.25);
    }
    SUBCASE("toy config matches the analytic oracle") {
        ModelConfig cfg = toy_cfg();
        Model<float> m = build_model<float>(cfg, 1);
        CHECK(count_flops(m, 16, 16).total == oracle::count_flops_reference(cfg, 16, 16));
    }
    SUBCASE("doubling each spatial side scales flops by ~4") {
        ModelConfig cfg;
        Model<float> m = build_model<float>(cfg, 1);
        const double r = static_cast<double>(count_flops(m, 128, 128).total) /
                         static_cast<double>(count_flops(m, 64, 64).total);
        CHECK(r >= 3.9);
        CHECK(r <= 4.3);
    }
}

TEST_CASE("model gradient against finite differences on a small config") {
    ModelConfig cfg;
    cfg.c = 8;
    cfg.m = 1;
    cfg.n = 1;
    cfg.d_state = 4;
    cfg.r = 4;
    auto res = model_gradient_check(30, cfg, 8, 1e-4);
    INFO("err=", res.value);
    CHECK(res.pass);
}

TEST_CASE("model config validation") {
    ModelConfig cfg;
    cfg.scale = 5;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = ModelConfig{};
    cfg.c = 30;  // not divisible by r=16
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = ModelConfig{};
    cfg.lambda = 1.7;  // lambda*c = 163.2 not integral
    cfg.c = 96;
    CHECK_THROWS_AS(cfg.validate(), config_error);
    cfg = ModelConfig{};
    cfg.fsm_variant = 'd';
    CHECK_THROWS_AS(cfg.validate(), config_error);
}
