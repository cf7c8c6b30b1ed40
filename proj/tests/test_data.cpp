#include <doctest.h>

#include <cstdio>
#include <filesystem>

#include "fmsr/data.hpp"
#include "fmsr/image_io.hpp"
#include "oracles.hpp"

using namespace fmsr;

namespace {

/// chi-square 0.99 quantile via the Wilson-Hilferty cube approximation
double chi2_q99(double dof) {
    const double z = 2.3263478740408408;  // Phi^-1(0.99)
    const double t = 1.0 - 2.0 / (9.0 * dof) + z * std::sqrt(2.0 / (9.0 * dof));
    return dof * t * t * t;
}

}  // namespace

TEST_CASE("bicubic_resize identity when sizes match") {
    Rng rng(1);
    Tensor<double> img({3, 6, 7});
    rng.fill_uniform(img, 0.0, 1.0);
    Tensor<double> out = bicubic_resize(img, 6, 7, true);
    CHECK(max_abs_diff(out, img) < 1e-12);
}

TEST_CASE("bicubic_resize maps constants to constants at any scale") {
    Tensor<double> img({3, 9, 9}, 0.61803);
    for (auto [h, w] : {std::pair<i64, i64>{3, 3}, {18, 27}, {4, 13}}) {
        for (bool aa : {false, true}) {
            Tensor<double> out = bicubic_resize(img, h, w, aa);
            for (i64 i = 0; i < out.numel(); ++i)
                CHECK(out[i] == doctest::Approx(0.61803).epsilon(1e-12));
        }
    }
}

TEST_CASE("1x8 ramp downscaled to 1x2 matches the direct kernel-sum oracle") {
    Tensor<double> img({1, 1, 8});
    std::vector<double> row(8);
    for (i64 j = 0; j < 8; ++j) {
        img(0, 0, j) = static_cast<double>(j) / 7.0;
        row[static_cast<size_t>(j)] = static_cast<double>(j) / 7.0;
    }
    Tensor<double> out = bicubic_resize(img, 1, 2, true);
    const auto want = oracle::resample_row_reference(row, 2, true);
    CHECK(out(0, 0, 0) == doctest::Approx(want[0]).epsilon(1e-12));
    CHECK(out(0, 0, 1) == doctest::Approx(want[1]).epsilon(1e-12));
    // without antialiasing the plain kernel applies
    Tensor<double> out_na = bicubic_resize(img, 1, 2, false);
    const auto want_na = oracle::resample_row_reference(row, 2, false);
    CHECK(out_na(0, 0, 0) == doctest::Approx(want_na[0]).epsilon(1e-12));
    CHECK(out_na(0, 0, 1) == doctest::Approx(want_na[1]).epsilon(1e-12));
}

TEST_CASE("resampling weights sum to one for every output pixel") {
    for (i64 in = 1; in <= 64; ++in)
        for (i64 out : {i64(1), i64(2), i64(3), i64(5), i64(16), i64(33), i64(64)}) {
            for (bool aa : {false, true}) {
                for (const auto& row : bicubic_weights(in, out, aa)) {
                    double s = 0.0;
                    for (double w : row.w) s += w;
                    CHECK(std::abs(s - 1.0) < 1e-6);
                }
            }
        }
}

TEST_CASE("bicubic_resize rejects non-positive output sizes") {
    Tensor<double> img({3, 4, 4}, 0.5);
    CHECK_THROWS_AS(bicubic_resize(img, 0, 4, true), std::invalid_argument);
}

TEST_CASE("make_pairs center-crops to divisibility and degrades by scale") {
    Rng rng(2);
    std::vector<Tensor<float>> imgs;
    Tensor<float> hr({3, 641, 640});
    rng.fill_uniform(hr, 0.0, 1.0);
    imgs.push_back(hr);
    auto pairs = make_pairs(imgs, 4);
    REQUIRE(pairs.size() == 1);
    CHECK(pairs[0].hr.shape() == std::vector<i64>({3, 640, 640}));
    CHECK(pairs[0].lr.shape() == std::vector<i64>({3, 160, 160}));
}

TEST_CASE("make_pairs keeps constants constant") {
    std::vector<Tensor<float>> imgs = {Tensor<float>({3, 64, 64}, 0.25f)};
    auto pairs = make_pairs(imgs, 4);
    REQUIRE(pairs.size() == 1);
    for (i64 i = 0; i < pairs[0].lr.numel(); ++i)
        CHECK(pairs[0].lr[i] == doctest::Approx(0.25f).epsilon(1e-6));
}

TEST_CASE("make_pairs skips undersized images with a warning") {
    std::vector<Tensor<float>> imgs = {Tensor<float>({3, 20, 64}, 0.5f),
                                       Tensor<float>({3, 64, 64}, 0.5f)};
    std::vector<std::string> warnings;
    auto pairs = make_pairs(imgs, 4, &warnings);
    CHECK(pairs.size() == 1);
    REQUIRE(warnings.size() == 1);
    CHECK(warnings[0].find("image0") != std::string::npos);
}

TEST_CASE("make_pairs end-to-end digest matches the kernel-sum oracle") {
    // deterministic synthetic image, degrade through the library, then
    // re-derive the LR with the direct-enumeration oracle (rows then columns)
    const i64 H = 48, W = 36, s = 4;
    std::vector<Tensor<double>> imgs = {Tensor<double>({3, H, W})};
    for (i64 c = 0; c < 3; ++c)
        for (i64 i = 0; i < H; ++i)
            for (i64 j = 0; j < W; ++j)
                imgs[0](c, i, j) = 0.5 + 0.3 * std::sin(0.7 * i + 0.2 * c) * std::cos(0.5 * j);
    auto pairs = make_pairs(imgs, s);
    REQUIRE(pairs.size() == 1);
    // oracle resample: height first, then width (same order as the library)
    Tensor<double> mid({3, H / s, W});
    for (i64 c = 0; c < 3; ++c)
        for (i64 j = 0; j < W; ++j) {
            std::vector<double> col(static_cast<size_t>(H));
            for (i64 i = 0; i < H; ++i) col[static_cast<size_t>(i)] = imgs[0](c, i, j);
            const auto out = oracle::resample_row_reference(col, H / s, true);
            for (i64 i = 0; i < H / s; ++i) mid(c, i, j) = out[static_cast<size_t>(i)];
        }
    Tensor<double> want({3, H / s, W / s});
    for (i64 c = 0; c < 3; ++c)
        for (i64 i = 0; i < H / s; ++i) {
            std::vector<double> row(static_cast<size_t>(W));
            for (i64 j = 0; j < W; ++j) row[static_cast<size_t>(j)] = mid(c, i, j);
            const auto out = oracle::resample_row_reference(row, W / s, true);
            for (i64 j = 0; j < W / s; ++j) want(c, i, j) = out[static_cast<size_t>(j)];
        }
    CHECK(max_abs_diff(pairs[0].lr, want) < 1e-10);
}

TEST_CASE("band-limited content survives the down/up roundtrip") {
    const i64 N = 64, s = 4;
    SUBCASE("constant") {
        std::vector<Tensor<double>> imgs = {Tensor<double>({3, N, N}, 0.4)};
        auto pairs = make_pairs(imgs, s);
        Tensor<double> up = bicubic_resize(pairs[0].lr, N, N, false);
        CHECK(max_abs_diff(up, pairs[0].hr) < 1e-9);
    }
    SUBCASE("single low-frequency sinusoid") {
        std::vector<Tensor<double>> imgs = {Tensor<double>({3, N, N})};
        for (i64 c = 0; c < 3; ++c)
            for (i64 i = 0; i < N; ++i)
                for (i64 j = 0; j < N; ++j)
                    imgs[0](c, i, j) =
                        0.5 + 0.25 * std::sin(2.0 * 3.14159265 * (i + j) / 256.0);
        auto pairs = make_pairs(imgs, s);
        Tensor<double> up = bicubic_resize(pairs[0].lr, N, N, false);
        CHECK(max_abs_diff(up, pairs[0].hr) < 0.02);
    }
}

TEST_CASE("sample_patches basics") {
    Rng img_rng(4);
    PairedSample<float> pair;
    pair.lr = Tensor<float>({3, 16, 16});
    pair.hr = Tensor<float>({3, 64, 64});
    img_rng.fill_uniform(pair.lr, 0.0, 1.0);
    img_rng.fill_uniform(pair.hr, 0.0, 1.0);
    SUBCASE("full-size patch returns the whole pair") {
        Rng rng(0);
        auto [lr, hr] = sample_patches(pair, 16, 1, rng);
        for (i64 i = 0; i < pair.lr.numel(); ++i) CHECK(lr[i] == pair.lr[i]);
        for (i64 i = 0; i < pair.hr.numel(); ++i) CHECK(hr[i] == pair.hr[i]);
    }
    SUBCASE("same seed gives identical crops") {
        Rng r1(77), r2(77);
        auto [a_lr, a_hr] = sample_patches(pair, 8, 4, r1);
        auto [b_lr, b_hr] = sample_patches(pair, 8, 4, r2);
        CHECK(max_abs_diff(a_lr, b_lr) == 0.0f);
        CHECK(max_abs_diff(a_hr, b_hr) == 0.0f);
    }
    SUBCASE("oversized patch raises an argument error") {
        Rng rng(0);
        CHECK_THROWS_AS(sample_patches(pair, 17, 1, rng), std::invalid_argument);
    }
    SUBCASE("LR and HR crops stay aligned") {
        Rng rng(5);
        auto [lr, hr] = sample_patches(pair, 4, 8, rng);
        // HR crop downsample-position check: every HR crop value must exist in
        // the source at 4x the LR offset; verify by matching first pixels
        for (i64 b = 0; b < 8; ++b) {
            bool found = false;
            for (i64 oi = 0; oi <= 12 && !found; ++oi)
                for (i64 oj = 0; oj <= 12 && !found; ++oj) {
                    bool match = true;
                    for (i64 i = 0; i < 4 && match; ++i)
                        for (i64 j = 0; j < 4 && match; ++j)
                            match = lr(b, 0, i, j) == pair.lr(0, oi + i, oj + j);
                    if (match) {
                        found = true;
                        CHECK(hr(b, 0, 0, 0) == pair.hr(0, 4 * oi, 4 * oj));
                    }
                }
            CHECK(found);
        }
    }
}

TEST_CASE("patch offsets are uniform over the valid grid") {
    PairedSample<float> pair;
    pair.lr = Tensor<float>({3, 160, 160});
    pair.hr = Tensor<float>({3, 640, 640});
    // tag each LR pixel with its row/col so crops reveal their offsets
    for (i64 i = 0; i < 160; ++i)
        for (i64 j = 0; j < 160; ++j) {
            pair.lr(0, i, j) = static_cast<float>(i);
            pair.lr(1, i, j) = static_cast<float>(j);
        }
    Rng rng(20240505);
    const i64 draws = 10000;
    std::vector<i64> ci(97, 0), cj(97, 0);
    std::vector<i64> joint(100, 0);
    for (i64 k = 0; k < draws; ++k) {
        auto [lr, hr] = sample_patches(pair, 64, 1, rng);
        const i64 oi = static_cast<i64>(lr(0, 0, 0, 0));
        const i64 oj = static_cast<i64>(lr(0, 1, 0, 0));
        REQUIRE(oi >= 0);
        REQUIRE(oi <= 96);
        REQUIRE(oj >= 0);
        REQUIRE(oj <= 96);
        ci[static_cast<size_t>(oi)]++;
        cj[static_cast<size_t>(oj)]++;
        joint[static_cast<size_t>((oi * 10) / 97 * 10 + (oj * 10) / 97)]++;
    }
    auto chi2 = [&](const std::vector<i64>& counts, double expected) {
        double stat = 0.0;
        for (i64 c : counts) {
            const double d = static_cast<double>(c) - expected;
            stat += d * d / expected;
        }
        return stat;
    };
    // p > 0.01 <=> statistic below the 0.99 quantile
    CHECK(chi2(ci, draws / 97.0) < chi2_q99(96));
    CHECK(chi2(cj, draws / 97.0) < chi2_q99(96));
    CHECK(chi2(joint, draws / 100.0) < chi2_q99(99));
}

TEST_CASE("float/u8 conversion rounds half away from zero") {
    CHECK(quantize_u8(1.0) == 255);
    CHECK(quantize_u8(0.0) == 0);
    CHECK(quantize_u8(0.5) == 128);  // 127.5 rounds away from zero
    CHECK(quantize_u8(-0.2) == 0);
    CHECK(quantize_u8(1.7) == 255);
    // rounding-rule oracle over the u8 grid: k/255 must map back to k, and
    // midpoints must round up
    for (int k = 0; k < 256; ++k) {
        CHECK(quantize_u8(static_cast<double>(k) / 255.0) == k);
        if (k < 255) {
            const double mid = (static_cast<double>(k) + 0.5) / 255.0;
            CHECK(quantize_u8(mid) == k + 1);
        }
    }
}

TEST_CASE("png save/load roundtrip is bitwise on pixel data") {
    Rng rng(6);
    ImageU8 img;
    img.height = 13;
    img.width = 17;
    img.pixels.resize(13 * 17 * 3);
    for (auto& p : img.pixels) p = static_cast<unsigned char>(rng.uniform_int(0, 255));
    const std::string path = (std::filesystem::temp_directory_path() / "fmsr_io_test.png").string();
    save_png(img, path);
    ImageU8 back = load_png(path);
    REQUIRE(back.height == img.height);
    REQUIRE(back.width == img.width);
    CHECK(back.pixels == img.pixels);
    std::filesystem::remove(path);
    SUBCASE("missing file raises io_error with the path") {
        try {
            load_png("/nonexistent/fmsr.png");
            CHECK(false);
        } catch (const io_error& e) {
            CHECK(std::string(e.what()).find("/nonexistent/fmsr.png") != std::string::npos);
        }
    }
}

TEST_CASE("dihedral transforms compose to the identity") {
    Rng rng(7);
    Tensor<float> x({3, 5, 8});
    rng.fill_uniform(x, 0.0, 1.0);
    for (int t = 0; t < 8; ++t) {
        Tensor<float> y = dihedral(x, t);
        Tensor<float> back = dihedral_inverse(y, t);
        CHECK(max_abs_diff(back, x) == 0.0f);
    }
}
