#pragma once

#include <map>
#include <sstream>

#include "blocks.hpp"

namespace fmsr {

struct TrainConfig {
    double lr0 = 1e-4;
    i64 halve_every = 200;  // epochs
    i64 total = 500;        // epochs
    i64 steps_per_epoch = 100;
    i64 batch = 4;
    i64 patch = 64;  // LR patch side
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    std::uint64_t seed = 0;
    i64 checkpoint_every = 100;  // epochs

    void validate() const {
        check_config(lr0 > 0, "lr0 must be positive");
        check_config(beta1 > 0 && beta1 < 1 && beta2 > 0 && beta2 < 1, "betas must be in (0,1)");
        check_config(halve_every >= 1 && halve_every <= std::max<i64>(total, 1),
                     "halve_every must be in [1, total]");
        check_config(total >= 0 && steps_per_epoch >= 0, "epoch counts must be non-negative");
        check_config(batch >= 1 && patch >= 1, "batch and patch must be >= 1");
    }
};

using KvMap = std::map<std::string, std::string>;

/// Flat `key=value` text, one pair per line. Used by config files and the
/// checkpoint config echo.
inline KvMap parse_kv(const std::string& text) {
    KvMap out;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        if (line.empty() || line[0] == '#') continue;
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw config_error("bad config line: " + line);
        out[line.substr(0, eq)] = line.substr(eq + 1);
    }
    return out;
}

inline std::string format_double(double v) {
    std::ostringstream os;
    os.precision(17);
    os << v;
    return os.str();
}

inline KvMap model_config_to_kv(const ModelConfig& c) {
    KvMap kv;
    kv["scale"] = std::to_string(c.scale);
    kv["m"] = std::to_string(c.m);
    kv["n"] = std::to_string(c.n);
    kv["c"] = std::to_string(c.c);
    kv["lambda"] = format_double(c.lambda);
    kv["d_state"] = std::to_string(c.d_state);
    kv["r"] = std::to_string(c.r);
    kv["fsm_variant"] = std::string(1, c.fsm_variant);
    kv["dw_kernel"] = std::to_string(c.dw_kernel);
    kv["residual_safe_init"] = c.residual_safe_init ? "1" : "0";
    return kv;
}

inline KvMap train_config_to_kv(const TrainConfig& c) {
    KvMap kv;
    kv["lr0"] = format_double(c.lr0);
    kv["halve_every"] = std::to_string(c.halve_every);
    kv["total"] = std::to_string(c.total);
    kv["steps_per_epoch"] = std::to_string(c.steps_per_epoch);
    kv["batch"] = std::to_string(c.batch);
    kv["patch"] = std::to_string(c.patch);
    kv["beta1"] = format_double(c.beta1);
    kv["beta2"] = format_double(c.beta2);
    kv["eps"] = format_double(c.eps);
    kv["seed"] = std::to_string(c.seed);
    kv["checkpoint_every"] = std::to_string(c.checkpoint_every);
    return kv;
}

namespace detail {

inline i64 kv_i64(const KvMap& kv, const std::string& key, i64 fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stoll(it->second);
}
inline double kv_double(const KvMap& kv, const std::string& key, double fallback) {
    auto it = kv.find(key);
    return it == kv.end() ? fallback : std::stod(it->second);
}

}  // namespace detail

/// Apply recognized keys onto the two config structs; unknown keys reject.
inline void apply_kv(const KvMap& kv, ModelConfig* mc, TrainConfig* tc) {
    static const char* model_keys[] = {"scale", "m", "n", "c", "lambda", "d_state",
                                       "r", "fsm_variant", "dw_kernel", "residual_safe_init"};
    static const char* train_keys[] = {"lr0", "halve_every", "total", "steps_per_epoch",
                                       "batch", "patch", "beta1", "beta2", "eps",
                                       "seed", "checkpoint_every"};
    for (const auto& [key, value] : kv) {
        bool known = false;
        for (const char* k : model_keys) known = known || key == k;
        for (const char* k : train_keys) known = known || key == k;
        if (!known) throw config_error("unknown config key: " + key);
        (void)value;
    }
    if (mc) {
        mc->scale = detail::kv_i64(kv, "scale", mc->scale);
        mc->m = detail::kv_i64(kv, "m", mc->m);
        mc->n = detail::kv_i64(kv, "n", mc->n);
        mc->c = detail::kv_i64(kv, "c", mc->c);
        mc->lambda = detail::kv_double(kv, "lambda", mc->lambda);
        mc->d_state = detail::kv_i64(kv, "d_state", mc->d_state);
        mc->r = detail::kv_i64(kv, "r", mc->r);
        if (auto it = kv.find("fsm_variant"); it != kv.end()) {
            check_config(it->second.size() == 1, "fsm_variant must be a single letter");
            mc->fsm_variant = it->second[0];
        }
        mc->dw_kernel = detail::kv_i64(kv, "dw_kernel", mc->dw_kernel);
        mc->residual_safe_init = detail::kv_i64(kv, "residual_safe_init", mc->residual_safe_init) != 0;
    }
    if (tc) {
        tc->lr0 = detail::kv_double(kv, "lr0", tc->lr0);
        tc->halve_every = detail::kv_i64(kv, "halve_every", tc->halve_every);
        tc->total = detail::kv_i64(kv, "total", tc->total);
        tc->steps_per_epoch = detail::kv_i64(kv, "steps_per_epoch", tc->steps_per_epoch);
        tc->batch = detail::kv_i64(kv, "batch", tc->batch);
        tc->patch = detail::kv_i64(kv, "patch", tc->patch);
        tc->beta1 = detail::kv_double(kv, "beta1", tc->beta1);
        tc->beta2 = detail::kv_double(kv, "beta2", tc->beta2);
        tc->eps = detail::kv_double(kv, "eps", tc->eps);
        tc->seed = static_cast<std::uint64_t>(detail::kv_i64(kv, "seed", static_cast<i64>(tc->seed)));
        tc->checkpoint_every = detail::kv_i64(kv, "checkpoint_every", tc->checkpoint_every);
    }
}

}  // namespace fmsr
