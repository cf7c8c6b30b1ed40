#pragma once

#include <filesystem>
#include <fstream>
#include <functional>

#include "config.hpp"
#include "data.hpp"
#include "model.hpp"

namespace fmsr {

// ---- loss & schedule ---------------------------------------------------------

template <typename T>
T l1_loss(const Tensor<T>& pred, const Tensor<T>& gt) {
    check_shape(pred.same_shape(gt), "l1_loss: shape mismatch");
    double s = 0;
    for (i64 i = 0; i < pred.numel(); ++i) s += std::abs(static_cast<double>(pred[i] - gt[i]));
    return static_cast<T>(s / static_cast<double>(pred.numel()));
}

inline double lr_schedule(i64 epoch, const TrainConfig& cfg) {
    check_config(epoch >= 0 && epoch < std::max<i64>(cfg.total, 1), "lr_schedule: epoch out of range");
    return cfg.lr0 * std::pow(0.5, static_cast<double>(epoch / cfg.halve_every));
}

// ---- ADAM ----------------------------------------------------------------------

template <typename T>
struct AdamState {
    std::vector<Tensor<T>> m, v;
    i64 t = 0;
};

template <typename T>
AdamState<T> make_adam_state(const Model<T>& model) {
    AdamState<T> st;
    visit_params(model, [&](const std::string&, const Tensor<T>& p) {
        st.m.push_back(Tensor<T>(p.shape()));
        st.v.push_back(Tensor<T>(p.shape()));
    });
    return st;
}

/// Bias-corrected update for one tensor. t is the post-increment step count.
template <typename T>
void adam_update(Tensor<T>& theta, const Tensor<T>& grad, Tensor<T>& m, Tensor<T>& v, i64 t,
                 double lr, double beta1, double beta2, double eps) {
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (i64 i = 0; i < theta.numel(); ++i) {
        const double g = static_cast<double>(grad[i]);
        const double mi = beta1 * static_cast<double>(m[i]) + (1.0 - beta1) * g;
        const double vi = beta2 * static_cast<double>(v[i]) + (1.0 - beta2) * g * g;
        m[i] = static_cast<T>(mi);
        v[i] = static_cast<T>(vi);
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        theta[i] = static_cast<T>(static_cast<double>(theta[i]) - lr * mhat / (std::sqrt(vhat) + eps));
    }
}

/// One optimizer step over every model parameter; gradients are pulled from
/// the graph after backward(). A non-finite gradient aborts with the
/// parameter name.
template <typename T>
void adam_step(Model<T>& model, Graph<T>& g, AdamState<T>& st, double lr, const TrainConfig& cfg) {
    st.t += 1;
    size_t idx = 0;
    visit_params(model, [&](const std::string& name, Tensor<T>& p) {
        const Tensor<T>* grad = g.grad_of(p);
        if (grad) {
            for (i64 i = 0; i < grad->numel(); ++i)
                if (!std::isfinite(static_cast<double>((*grad)[i])))
                    throw domain_error("adam_step: non-finite gradient in " + name);
            adam_update(p, *grad, st.m[idx], st.v[idx], st.t, lr, cfg.beta1, cfg.beta2, cfg.eps);
        }
        ++idx;
    });
}

// ---- checkpoint archive ----------------------------------------------------------

namespace detail {

template <typename T>
const char* dtype_tag() {
    return sizeof(T) == 4 ? "f32" : "f64";
}

inline std::string shape_tag(const std::vector<i64>& s) {
    if (s.empty()) return "0";
    std::string out;
    for (size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out;
}

inline std::vector<i64> parse_shape_tag(const std::string& tag) {
    std::vector<i64> shape;
    size_t pos = 0;
    while (pos < tag.size()) {
        size_t next = tag.find('x', pos);
        if (next == std::string::npos) next = tag.size();
        shape.push_back(std::stoll(tag.substr(pos, next - pos)));
        pos = next + 1;
    }
    return shape;
}

}  // namespace detail

/// Checkpoint layout:
///   FMSRCKPT\n
///   v1\n
///   config <count>\n  followed by key=value lines
///   tensors <count>\n followed by `name dtype d0xd1x... offset` lines
///   data\n            followed by little-endian payloads in header order
template <typename T>
void save_checkpoint(const std::string& path, const Model<T>& model, const AdamState<T>* optim,
                     const TrainConfig* tcfg) {
    std::vector<std::pair<std::string, const Tensor<T>*>> entries;
    visit_params(model, [&](const std::string& name, const Tensor<T>& p) {
        entries.emplace_back(name, &p);
    });
    Tensor<T> step_tensor({1});
    if (optim) {
        size_t idx = 0;
        visit_params(model, [&](const std::string& name, const Tensor<T>&) {
            entries.emplace_back("optim/m/" + name, &optim->m[idx]);
            entries.emplace_back("optim/v/" + name, &optim->v[idx]);
            ++idx;
        });
        step_tensor[0] = static_cast<T>(optim->t);
        entries.emplace_back("optim/t", &step_tensor);
    }
    KvMap kv = model_config_to_kv(model.cfg);
    if (tcfg) {
        const KvMap tkv = train_config_to_kv(*tcfg);
        kv.insert(tkv.begin(), tkv.end());
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) throw io_error("cannot write checkpoint " + path);
    os << "FMSRCKPT\n";
    os << "v1\n";
    os << "config " << kv.size() << "\n";
    for (const auto& [k, v] : kv) os << k << "=" << v << "\n";
    os << "tensors " << entries.size() << "\n";
    i64 offset = 0;
    for (const auto& [name, t] : entries) {
        os << name << " " << detail::dtype_tag<T>() << " " << detail::shape_tag(t->shape()) << " "
           << offset << "\n";
        offset += t->numel() * static_cast<i64>(sizeof(T));
    }
    os << "data\n";
    for (const auto& [name, t] : entries)
        os.write(reinterpret_cast<const char*>(t->ptr()),
                 static_cast<std::streamsize>(t->numel() * sizeof(T)));
    if (!os) throw io_error("write failed for checkpoint " + path);
}

template <typename T>
struct CheckpointData {
    KvMap config;
    std::vector<std::string> order;
    std::map<std::string, Tensor<T>> tensors;
};

template <typename T>
CheckpointData<T> read_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw io_error("cannot open checkpoint " + path);
    std::string line;
    std::getline(is, line);
    if (line != "FMSRCKPT") throw io_error("bad checkpoint magic in " + path);
    std::getline(is, line);
    if (line != "v1") throw io_error("unsupported checkpoint version: " + line);
    CheckpointData<T> out;
    std::getline(is, line);
    std::istringstream ch(line);
    std::string word;
    size_t count = 0;
    ch >> word >> count;
    if (word != "config") throw io_error("corrupt checkpoint header (config)");
    for (size_t i = 0; i < count; ++i) {
        std::getline(is, line);
        const size_t eq = line.find('=');
        if (eq == std::string::npos) throw io_error("corrupt config echo line: " + line);
        out.config[line.substr(0, eq)] = line.substr(eq + 1);
    }
    std::getline(is, line);
    std::istringstream th(line);
    th >> word >> count;
    if (word != "tensors") throw io_error("corrupt checkpoint header (tensors)");
    struct Entry {
        std::string name, dtype;
        std::vector<i64> shape;
        i64 offset;
    };
    std::vector<Entry> entries;
    for (size_t i = 0; i < count; ++i) {
        std::getline(is, line);
        std::istringstream es(line);
        Entry e;
        std::string shape_tag;
        es >> e.name >> e.dtype >> shape_tag >> e.offset;
        if (!es) throw io_error("corrupt tensor entry: " + line);
        if (e.dtype != detail::dtype_tag<T>())
            throw io_error("dtype mismatch for tensor " + e.name + ": " + e.dtype);
        e.shape = detail::parse_shape_tag(shape_tag);
        entries.push_back(std::move(e));
    }
    std::getline(is, line);
    if (line != "data") throw io_error("corrupt checkpoint header (data)");
    const std::streampos data_start = is.tellg();
    for (const Entry& e : entries) {
        Tensor<T> t(e.shape);
        is.seekg(data_start + static_cast<std::streamoff>(e.offset));
        is.read(reinterpret_cast<char*>(t.ptr()), static_cast<std::streamsize>(t.numel() * sizeof(T)));
        if (!is) throw io_error("truncated payload for tensor " + e.name);
        out.order.push_back(e.name);
        out.tensors.emplace(e.name, std::move(t));
    }
    return out;
}

/// Restore weights into a model built from the archived config; shape or name
/// mismatches raise a structured error naming the tensor.
template <typename T>
void restore_model(Model<T>& model, const CheckpointData<T>& ckpt) {
    const KvMap model_kv = model_config_to_kv(model.cfg);
    for (const auto& [k, v] : model_kv) {
        auto it = ckpt.config.find(k);
        if (it == ckpt.config.end()) throw io_error("checkpoint config missing key " + k);
        if (it->second != v)
            throw io_error("checkpoint config mismatch for " + k + ": " + it->second + " vs " + v);
    }
    visit_params(model, [&](const std::string& name, Tensor<T>& p) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) throw io_error("checkpoint missing tensor " + name);
        if (!(it->second.shape() == p.shape()))
            throw io_error("checkpoint shape mismatch for tensor " + name + ": stored " +
                           it->second.shape_str() + " vs model " + p.shape_str());
        p = it->second;
    });
}

template <typename T>
Model<T> model_from_checkpoint(const CheckpointData<T>& ckpt) {
    ModelConfig mc;
    apply_kv(ckpt.config, &mc, nullptr);
    Model<T> model = build_model<T>(mc, 0);
    restore_model(model, ckpt);
    return model;
}

template <typename T>
void restore_optim(const Model<T>& model, const CheckpointData<T>& ckpt, AdamState<T>& st) {
    size_t idx = 0;
    visit_params(model, [&](const std::string& name, const Tensor<T>&) {
        auto mit = ckpt.tensors.find("optim/m/" + name);
        auto vit = ckpt.tensors.find("optim/v/" + name);
        if (mit == ckpt.tensors.end() || vit == ckpt.tensors.end())
            throw io_error("checkpoint missing optimizer state for " + name);
        st.m[idx] = mit->second;
        st.v[idx] = vit->second;
        ++idx;
    });
    auto tit = ckpt.tensors.find("optim/t");
    if (tit == ckpt.tensors.end()) throw io_error("checkpoint missing optim/t");
    st.t = static_cast<i64>(tit->second[0]);
}

// ---- training loop -----------------------------------------------------------------

struct LossRecord {
    i64 step;
    i64 epoch;
    double lr;
    double loss;
};

inline void write_loss_csv(const std::string& path, const std::vector<LossRecord>& hist) {
    std::ofstream os(path);
    os << "step,epoch,lr,loss\n";
    os.precision(10);
    for (const auto& r : hist) os << r.step << "," << r.epoch << "," << r.lr << "," << r.loss << "\n";
}

/// L1/ADAM loop. Batches draw (pair, crop) uniformly under the config seed;
/// single-threaded runs are bitwise reproducible.
template <typename T>
std::vector<LossRecord> train_loop(Model<T>& model, const std::vector<PairedSample<T>>& pairs,
                                   const TrainConfig& cfg, AdamState<T>& st,
                                   const std::string& out_dir = "",
                                   std::function<void(i64, double)> on_step = nullptr) {
    cfg.validate();
    check_config(!pairs.empty() || cfg.total * cfg.steps_per_epoch == 0,
                 "train_loop: no training pairs");
    Rng rng(cfg.seed);
    std::vector<LossRecord> hist;
    const i64 s = model.cfg.scale;
    i64 gstep = 0;
    for (i64 epoch = 0; epoch < cfg.total; ++epoch) {
        const double lr = lr_schedule(epoch, cfg);
        for (i64 step = 0; step < cfg.steps_per_epoch; ++step, ++gstep) {
            Tensor<T> lr_batch({cfg.batch, 3, cfg.patch, cfg.patch});
            Tensor<T> hr_batch({cfg.batch, 3, s * cfg.patch, s * cfg.patch});
            for (i64 b = 0; b < cfg.batch; ++b) {
                const auto& pair = pairs[static_cast<size_t>(
                    rng.uniform_int(0, static_cast<i64>(pairs.size()) - 1))];
                auto [lr1, hr1] = sample_patches(pair, cfg.patch, 1, rng);
                for (i64 i = 0; i < lr1.numel(); ++i) lr_batch[b * lr1.numel() + i] = lr1[i];
                for (i64 i = 0; i < hr1.numel(); ++i) hr_batch[b * hr1.numel() + i] = hr1[i];
            }
            Graph<T> g(true);
            Value<T> out = ag::model_forward(g, model, g.leaf(std::move(lr_batch), false));
            Value<T> loss = ag::mean_abs_diff(g, out, g.constant(std::move(hr_batch)));
            const double loss_v = static_cast<double>(loss->val[0]);
            if (!std::isfinite(loss_v))
                throw domain_error("train_loop: non-finite loss at step " + std::to_string(gstep));
            g.backward(loss);
            adam_step(model, g, st, lr, cfg);
            hist.push_back({gstep, epoch, lr, loss_v});
            if (on_step) on_step(gstep, loss_v);
        }
        if (!out_dir.empty() && cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0)
            save_checkpoint(out_dir + "/ckpt_epoch" + std::to_string(epoch + 1) + ".ckpt", model,
                            &st, &cfg);
    }
    if (!out_dir.empty()) {
        save_checkpoint(out_dir + "/ckpt_final.ckpt", model, &st, &cfg);
        write_loss_csv(out_dir + "/loss.csv", hist);
    }
    return hist;
}

// ---- finite-difference gradient checks ------------------------------------------------

struct GradCheckEntry {
    std::string name;
    double max_rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double worst = 0.0;
    bool passed(double tol) const { return worst <= tol; }
};

/// Compare the tape's analytic gradients against central finite differences.
/// `build_loss` must register every checked tensor through g.param and return
/// a scalar. Set samples_per_tensor > 0 to probe a random subset of elements.
template <typename T>
GradCheckReport grad_check(const std::function<Value<T>(Graph<T>&)>& build_loss,
                           const std::vector<std::pair<std::string, Tensor<T>*>>& params,
                           double fd_step = 1e-6, i64 samples_per_tensor = -1,
                           std::uint64_t sample_seed = 0) {
    GradCheckReport report;
    Graph<T> g(true);
    Value<T> loss = build_loss(g);
    g.backward(loss);
    auto eval = [&](void) -> double {
        Graph<T> ng(false);
        return static_cast<double>(build_loss(ng)->val[0]);
    };
    Rng rng(sample_seed);
    for (const auto& [name, tensor] : params) {
        const Tensor<T>* ga = g.grad_of(*tensor);
        if (!ga) throw domain_error("grad_check: no analytic gradient for " + name);
        for (i64 i = 0; i < ga->numel(); ++i)
            if (!std::isfinite(static_cast<double>((*ga)[i])))
                throw domain_error("grad_check: non-finite analytic gradient in " + name);
        std::vector<i64> idx;
        if (samples_per_tensor > 0 && samples_per_tensor < tensor->numel()) {
            for (i64 k = 0; k < samples_per_tensor; ++k)
                idx.push_back(rng.uniform_int(0, tensor->numel() - 1));
        } else {
            idx.resize(static_cast<size_t>(tensor->numel()));
            for (i64 k = 0; k < tensor->numel(); ++k) idx[static_cast<size_t>(k)] = k;
        }
        GradCheckEntry entry{name, 0.0};
        std::vector<double> fd(idx.size());
        double norm_a = 0.0, norm_fd = 0.0, norm_diff = 0.0;
        for (size_t k = 0; k < idx.size(); ++k) {
            const i64 i = idx[k];
            const T saved = (*tensor)[i];
            (*tensor)[i] = saved + static_cast<T>(fd_step);
            const double up = eval();
            (*tensor)[i] = saved - static_cast<T>(fd_step);
            const double dn = eval();
            (*tensor)[i] = saved;
            fd[k] = (up - dn) / (2.0 * fd_step);
            const double a = static_cast<double>((*ga)[i]);
            norm_a = std::max(norm_a, std::abs(a));
            norm_fd = std::max(norm_fd, std::abs(fd[k]));
            norm_diff = std::max(norm_diff, std::abs(a - fd[k]));
        }
        // relative to the checked gradient's own scale (inf-norm ratio)
        entry.max_rel_err = norm_diff / (norm_a + norm_fd + 1e-12);
        report.worst = std::max(report.worst, entry.max_rel_err);
        report.entries.push_back(std::move(entry));
    }
    return report;
}

}  // namespace fmsr
