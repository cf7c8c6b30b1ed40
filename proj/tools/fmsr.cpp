#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

#include "fmsr/fmsr.hpp"

namespace fs = std::filesystem;
using namespace fmsr;

namespace {

std::string read_text_file(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open " + path);
    std::ostringstream os;
    os << is.rdbuf();
    return os.str();
}

std::vector<std::string> load_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw io_error("cannot open manifest " + path);
    std::vector<std::string> out;
    std::string line;
    const fs::path base = fs::path(path).parent_path();
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        fs::path p(line);
        if (p.is_relative()) p = base / p;
        out.push_back(p.string());
    }
    return out;
}

void add_config_flags(CLI::App* app, KvMap& overrides) {
    static const char* keys[] = {"scale", "m", "n", "c", "lambda", "d_state", "r",
                                 "fsm_variant", "dw_kernel", "residual_safe_init",
                                 "lr0", "halve_every", "total", "steps_per_epoch", "batch",
                                 "patch", "beta1", "beta2", "eps", "seed", "checkpoint_every"};
    for (const char* key : keys) {
        app->add_option_function<std::string>(
            "--" + std::string(key),
            [&overrides, key = std::string(key)](const std::string& v) { overrides[key] = v; },
            "override config key " + std::string(key));
    }
}

int cmd_train(const std::string& config_path, const std::string& manifest,
              const std::string& out_dir, const KvMap& overrides) {
    ModelConfig mc;
    TrainConfig tc;
    if (!config_path.empty()) apply_kv(parse_kv(read_text_file(config_path)), &mc, &tc);
    apply_kv(overrides, &mc, &tc);
    mc.validate();
    tc.validate();
    std::vector<Tensor<float>> images;
    std::vector<std::string> names;
    for (const std::string& p : load_manifest(manifest)) {
        images.push_back(image_to_tensor<float>(load_png(p)));
        names.push_back(fs::path(p).filename().string());
    }
    std::vector<std::string> warnings;
    auto pairs = make_pairs(images, mc.scale, &warnings, &names);
    for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
    if (pairs.empty()) throw io_error("no usable training images in manifest");
    fs::create_directories(out_dir);
    Model<float> model = build_model<float>(mc, tc.seed);
    AdamState<float> st = make_adam_state(model);
    std::cout << "training: " << count_params(model) << " parameters, " << pairs.size()
              << " pairs, " << tc.total << " epochs x " << tc.steps_per_epoch << " steps\n";
    auto hist = train_loop(model, pairs, tc, st, out_dir, [&](i64 step, double loss) {
        if (step % 50 == 0) std::cout << "step " << step << " loss " << loss << "\n";
    });
    std::cout << "done; wrote " << out_dir << "/ckpt_final.ckpt and loss.csv\n";
    return 0;
}

int cmd_sr(const std::string& ckpt, const std::string& input, const std::string& output,
           bool ensemble) {
    auto data = read_checkpoint<float>(ckpt);
    Model<float> model = model_from_checkpoint(data);
    Tensor<float> lr = image_to_tensor<float>(load_png(input));
    Tensor<float> sr = ensemble ? self_ensemble(model, lr) : sr_single(model, lr);
    save_png(tensor_to_image(sr), output);
    std::cout << "wrote " << output << " (" << sr.dim(2) << "x" << sr.dim(1) << ")\n";
    return 0;
}

int cmd_eval(const std::string& ckpt, const std::string& hr_dir, i64 scale, i64 shave,
             bool ensemble, const std::string& out_csv) {
    auto data = read_checkpoint<float>(ckpt);
    Model<float> model = model_from_checkpoint(data);
    if (model.cfg.scale != scale)
        throw config_error("checkpoint scale " + std::to_string(model.cfg.scale) +
                           " does not match --scale " + std::to_string(scale));
    MetricReport rep = evaluate_dir(model, hr_dir, scale, shave, ensemble);
    std::ofstream os(out_csv);
    os << rep.to_csv();
    std::cout << rep.to_csv();
    return 0;
}

int cmd_bench(const std::string& sizes_arg, const std::string& out_csv, int reps) {
    std::vector<i64> sizes;
    std::istringstream is(sizes_arg);
    std::string tok;
    while (std::getline(is, tok, ',')) sizes.push_back(std::stoll(tok));
    BenchSummary summary = bench_scaling(sizes, 144, 180, reps);
    std::ofstream os(out_csv);
    os << bench_csv(summary.records);
    std::cout << bench_csv(summary.records);
    std::cout << "fitted exponents: fmb " << summary.fmb_exponent << ", msa "
              << summary.msa_exponent << "\n";
    std::cout << "params: fmb " << summary.fmb_params << ", msa " << summary.msa_params << "\n";
    return 0;
}

int cmd_erf(const std::string& ckpt, const std::string& input, const std::string& out_png,
            bool log1p_scale) {
    auto data = read_checkpoint<float>(ckpt);
    Model<float> model = model_from_checkpoint(data);
    Tensor<float> img = image_to_tensor<float>(load_png(input));
    Tensor<float> map = erf_map(model, img, log1p_scale);
    const i64 H = map.dim(0), W = map.dim(1);
    Tensor<float> rgb({3, H, W});
    for (i64 c = 0; c < 3; ++c)
        for (i64 i = 0; i < H * W; ++i) rgb[c * H * W + i] = map[i];
    save_png(tensor_to_image(rgb), out_png);
    const std::string raw_path = out_png + ".values.csv";
    std::ofstream os(raw_path);
    os.precision(9);
    for (i64 i = 0; i < H; ++i) {
        for (i64 j = 0; j < W; ++j) os << (j ? "," : "") << map(i, j);
        os << "\n";
    }
    std::cout << "wrote " << out_png << " and " << raw_path << "\n";
    return 0;
}

int cmd_selftest() {
    int failures = 0;
    auto report = [&](const SuiteResult& r) {
        std::cout << (r.pass ? "[PASS] " : "[FAIL] ") << r.name << " (" << r.value
                  << " vs bound " << r.bound << ")\n";
        if (!r.pass) ++failures;
    };
    for (const auto& r : invariant_suite()) report(r);
    for (const auto& r : gradient_suite()) report(r);
    {
        ModelConfig toy;
        toy.c = 8;
        toy.m = 1;
        toy.n = 1;
        toy.d_state = 4;
        toy.r = 4;
        report(model_gradient_check(24, toy, 8, 1e-4));
    }
    std::cout << (failures == 0 ? "selftest passed\n" : "selftest FAILED\n");
    return failures == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"FMSR: frequency-assisted selective-scan super-resolution"};
    app.require_subcommand(1);

    KvMap overrides;
    std::string config_path, manifest, out_dir;
    auto* train = app.add_subcommand("train", "train a model on a manifest of HR images");
    train->add_option("--config", config_path, "key=value config file");
    train->add_option("--data", manifest, "manifest: one HR PNG path per line")->required();
    train->add_option("--out", out_dir, "output directory")->required();
    add_config_flags(train, overrides);

    std::string sr_ckpt, sr_in, sr_out;
    bool sr_ens = false;
    auto* sr = app.add_subcommand("sr", "super-resolve one PNG");
    sr->add_option("--ckpt", sr_ckpt, "checkpoint file")->required();
    sr->add_option("--input", sr_in, "input PNG")->required();
    sr->add_option("--output", sr_out, "output PNG")->required();
    sr->add_flag("--self-ensemble", sr_ens, "average the 8 dihedral transforms");

    std::string ev_ckpt, ev_dir, ev_csv = "metrics.csv";
    i64 ev_scale = 4, ev_shave = 0;
    bool ev_ens = false;
    auto* ev = app.add_subcommand("eval", "evaluate on a directory of HR PNGs");
    ev->add_option("--ckpt", ev_ckpt)->required();
    ev->add_option("--hr-dir", ev_dir)->required();
    ev->add_option("--scale", ev_scale);
    ev->add_option("--shave", ev_shave, "shave N border pixels before metrics");
    ev->add_flag("--self-ensemble", ev_ens);
    ev->add_option("--out", ev_csv);

    std::string bn_sizes = "32,48,64,88", bn_csv = "bench.csv";
    int bn_reps = 5;
    auto* bn = app.add_subcommand("bench", "linear-vs-quadratic scaling benchmark");
    bn->add_option("--sizes", bn_sizes, "comma-separated input sides");
    bn->add_option("--out", bn_csv);
    bn->add_option("--reps", bn_reps, "timing repetitions (median)");

    std::string erf_ckpt, erf_in, erf_out;
    bool erf_log = false;
    auto* erf = app.add_subcommand("erf", "effective receptive field heatmap");
    erf->add_option("--ckpt", erf_ckpt)->required();
    erf->add_option("--input", erf_in)->required();
    erf->add_option("--out", erf_out)->required();
    erf->add_flag("--log1p", erf_log, "log-scale the normalized map");

    auto* st = app.add_subcommand("selftest", "gradient-check and invariant suites");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        if (e.get_name() == "CallForHelp" || e.get_name() == "CallForAllHelp") {
            std::cout << app.help();
            return 0;
        }
        std::cerr << e.what() << "\n" << app.help();
        return 2;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, manifest, out_dir, overrides);
        if (sr->parsed()) return cmd_sr(sr_ckpt, sr_in, sr_out, sr_ens);
        if (ev->parsed()) return cmd_eval(ev_ckpt, ev_dir, ev_scale, ev_shave, ev_ens, ev_csv);
        if (bn->parsed()) return cmd_bench(bn_sizes, bn_csv, bn_reps);
        if (erf->parsed()) return cmd_erf(erf_ckpt, erf_in, erf_out, erf_log);
        if (st->parsed()) return cmd_selftest();
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}
