#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <utility>
#include <vector>

#include "mathx.hpp"
#include "tensor.hpp"

namespace fmsr {

/// Reverse-mode autodiff over Tensor<T>. Ops run eagerly; when the graph is
/// recording, each op appends a node with a backward closure to the tape.
/// With recording off the same op functions behave as plain tensor math and
/// intermediates are freed as soon as the last Value handle drops.
template <typename T>
struct Node {
    Tensor<T> val;
    Tensor<T> grad;  // allocated on first accumulation
    bool needs = false;
    std::function<void(Node<T>&)> back;  // pulls this->grad into the parents
};

template <typename T>
using Value = std::shared_ptr<Node<T>>;

template <typename T>
inline Tensor<T>& ensure_grad(Node<T>& n) {
    if (n.grad.empty() && n.val.numel() > 0) n.grad = Tensor<T>(n.val.shape());
    return n.grad;
}

template <typename T>
class Graph {
 public:
    explicit Graph(bool recording = true) : recording_(recording) {}

    bool recording() const { return recording_; }

    Value<T> constant(Tensor<T> v) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(v);
        n->needs = false;
        track(n);
        return n;
    }

    Value<T> leaf(Tensor<T> v, bool requires_grad) {
        auto n = std::make_shared<Node<T>>();
        n->val = std::move(v);
        n->needs = requires_grad && recording_;
        track(n);
        return n;
    }

    /// Trainable tensor owned by a model struct; deduplicated by address so a
    /// weight used twice maps to one node with one accumulated gradient.
    Value<T> param(const Tensor<T>& t) {
        if (!recording_) {
            auto n = std::make_shared<Node<T>>();
            n->val = t;
            return n;
        }
        auto it = params_.find(&t);
        if (it != params_.end()) return it->second;
        auto n = std::make_shared<Node<T>>();
        n->val = t;
        n->needs = true;
        track(n);
        params_.emplace(&t, n);
        return n;
    }

    void track(const Value<T>& n) {
        if (recording_) tape_.push_back(n);
    }

    /// Seed the root with ones (scalar roots) and sweep the tape in reverse.
    void backward(const Value<T>& root) {
        check_shape(recording_, "backward: graph is not recording");
        check_shape(root->val.numel() == 1, "backward: root must be scalar");
        ensure_grad(*root).fill(T(1));
        for (auto it = tape_.rbegin(); it != tape_.rend(); ++it) {
            Node<T>& n = **it;
            if (n.back && n.needs && !n.grad.empty()) n.back(n);
        }
    }

    const Tensor<T>* grad_of(const Tensor<T>& t) const {
        auto it = params_.find(&t);
        if (it == params_.end() || it->second->grad.empty()) return nullptr;
        return &it->second->grad;
    }

    size_t num_nodes() const { return tape_.size(); }

 private:
    bool recording_;
    std::vector<Value<T>> tape_;
    std::unordered_map<const Tensor<T>*, Value<T>> params_;
};

namespace ag {

template <typename T, typename BackF>
Value<T> make_op(Graph<T>& g, Tensor<T> out, bool needs, BackF&& back) {
    auto n = std::make_shared<Node<T>>();
    n->val = std::move(out);
    if (g.recording() && needs) {
        n->needs = true;
        n->back = std::forward<BackF>(back);
    }
    g.track(n);
    return n;
}

template <typename T>
inline void accum(Node<T>& dst, const Tensor<T>& piece) {
    Tensor<T>& gd = ensure_grad(dst);
    for (i64 i = 0; i < gd.numel(); ++i) gd[i] += piece[i];
}

// ---- arithmetic -----------------------------------------------------------

template <typename T>
Value<T> add(Graph<T>& g, Value<T> a, Value<T> b) {
    check_shape(a->val.same_shape(b->val), "add: shape mismatch");
    Tensor<T> out(a->val.shape());
    for (i64 i = 0; i < out.numel(); ++i) out[i] = a->val[i] + b->val[i];
    return make_op(g, std::move(out), a->needs || b->needs, [a, b](Node<T>& n) {
        if (a->needs) accum(*a, n.grad);
        if (b->needs) accum(*b, n.grad);
    });
}

template <typename T>
Value<T> mul(Graph<T>& g, Value<T> a, Value<T> b) {
    check_shape(a->val.same_shape(b->val), "mul: shape mismatch");
    Tensor<T> out(a->val.shape());
    for (i64 i = 0; i < out.numel(); ++i) out[i] = a->val[i] * b->val[i];
    return make_op(g, std::move(out), a->needs || b->needs, [a, b](Node<T>& n) {
        if (a->needs) {
            Tensor<T>& ga = ensure_grad(*a);
            for (i64 i = 0; i < ga.numel(); ++i) ga[i] += n.grad[i] * b->val[i];
        }
        if (b->needs) {
            Tensor<T>& gb = ensure_grad(*b);
            for (i64 i = 0; i < gb.numel(); ++i) gb[i] += n.grad[i] * a->val[i];
        }
    });
}

/// y = alpha * x with alpha a [1]-shaped trainable scalar
template <typename T>
Value<T> scale(Graph<T>& g, Value<T> x, Value<T> alpha) {
    check_shape(alpha->val.numel() == 1, "scale: alpha must be scalar");
    const T a = alpha->val[0];
    Tensor<T> out(x->val.shape());
    for (i64 i = 0; i < out.numel(); ++i) out[i] = a * x->val[i];
    return make_op(g, std::move(out), x->needs || alpha->needs, [x, alpha, a](Node<T>& n) {
        if (x->needs) {
            Tensor<T>& gx = ensure_grad(*x);
            for (i64 i = 0; i < gx.numel(); ++i) gx[i] += a * n.grad[i];
        }
        if (alpha->needs) {
            T s = 0;
            for (i64 i = 0; i < n.grad.numel(); ++i) s += n.grad[i] * x->val[i];
            ensure_grad(*alpha)[0] += s;
        }
    });
}

// ---- pointwise nonlinearities ----------------------------------------------

template <typename T, typename FwdF, typename GradF>
Value<T> unary_ew(Graph<T>& g, Value<T> x, FwdF f, GradF dfdx) {
    Tensor<T> out(x->val.shape());
    for (i64 i = 0; i < out.numel(); ++i) out[i] = f(x->val[i]);
    return make_op(g, std::move(out), x->needs, [x, dfdx](Node<T>& n) {
        Tensor<T>& gx = ensure_grad(*x);
        for (i64 i = 0; i < gx.numel(); ++i) gx[i] += n.grad[i] * dfdx(x->val[i], n.val[i]);
    });
}

template <typename T>
Value<T> relu(Graph<T>& g, Value<T> x) {
    return unary_ew(
        g, x, [](T v) { return v > T(0) ? v : T(0); },
        [](T v, T) { return v > T(0) ? T(1) : T(0); });
}

template <typename T>
Value<T> sigmoid(Graph<T>& g, Value<T> x) {
    return unary_ew(
        g, x, [](T v) { return scalar_math<T>::sigmoid(v); },
        [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Value<T> silu(Graph<T>& g, Value<T> x) {
    return unary_ew(
        g, x, [](T v) { return silu_val(v); },
        [](T v, T) {
            const T s = scalar_math<T>::sigmoid(v);
            return s * (T(1) + v * (T(1) - s));
        });
}

template <typename T>
Value<T> gelu(Graph<T>& g, Value<T> x) {
    return unary_ew(
        g, x, [](T v) { return gelu_val(v); }, [](T v, T) { return gelu_grad_val(v); });
}

template <typename T>
Value<T> softplus(Graph<T>& g, Value<T> x) {
    return unary_ew(
        g, x, [](T v) { return scalar_math<T>::softplus(v); },
        [](T v, T) { return scalar_math<T>::sigmoid(v); });
}

/// y = -exp(x); the state matrix A built from its log parameterization
template <typename T>
Value<T> neg_exp(Graph<T>& g, Value<T> x) {
    return unary_ew(
        g, x, [](T v) { return -scalar_math<T>::exp(v); }, [](T, T y) { return y; });
}

// ---- structure -------------------------------------------------------------

template <typename T>
Value<T> reshape(Graph<T>& g, Value<T> x, std::vector<i64> shape) {
    Tensor<T> out = x->val.reshaped(std::move(shape));
    return make_op(g, std::move(out), x->needs, [x](Node<T>& n) {
        Tensor<T>& gx = ensure_grad(*x);
        for (i64 i = 0; i < gx.numel(); ++i) gx[i] += n.grad[i];
    });
}

/// channels [c0, c1) of a [B,C,...] tensor
template <typename T>
Value<T> slice_channels(Graph<T>& g, Value<T> x, i64 c0, i64 c1) {
    const i64 B = x->val.dim(0), C = x->val.dim(1);
    check_shape(0 <= c0 && c0 < c1 && c1 <= C, "slice_channels: bad range");
    const i64 inner = x->val.numel() / (B * C);
    std::vector<i64> shape = x->val.shape();
    shape[1] = c1 - c0;
    Tensor<T> out(shape);
    for (i64 b = 0; b < B; ++b)
        for (i64 c = c0; c < c1; ++c)
            for (i64 i = 0; i < inner; ++i)
                out[(b * (c1 - c0) + (c - c0)) * inner + i] = x->val[(b * C + c) * inner + i];
    return make_op(g, std::move(out), x->needs, [x, c0, c1, B, C, inner](Node<T>& n) {
        Tensor<T>& gx = ensure_grad(*x);
        for (i64 b = 0; b < B; ++b)
            for (i64 c = c0; c < c1; ++c)
                for (i64 i = 0; i < inner; ++i)
                    gx[(b * C + c) * inner + i] += n.grad[(b * (c1 - c0) + (c - c0)) * inner + i];
    });
}

/// index k of the leading axis (per-direction scan parameters)
template <typename T>
Value<T> slice_axis0(Graph<T>& g, Value<T> x, i64 k) {
    const i64 K = x->val.dim(0);
    check_shape(0 <= k && k < K, "slice_axis0: index out of range");
    const i64 inner = x->val.numel() / K;
    std::vector<i64> shape(x->val.shape().begin() + 1, x->val.shape().end());
    Tensor<T> out(shape);
    for (i64 i = 0; i < inner; ++i) out[i] = x->val[k * inner + i];
    return make_op(g, std::move(out), x->needs, [x, k, inner](Node<T>& n) {
        Tensor<T>& gx = ensure_grad(*x);
        for (i64 i = 0; i < inner; ++i) gx[k * inner + i] += n.grad[i];
    });
}

/// x[B,C,...] + b[C] broadcast
template <typename T>
Value<T> add_channel_bias(Graph<T>& g, Value<T> x, Value<T> bias) {
    const i64 B = x->val.dim(0), C = x->val.dim(1);
    check_shape(bias->val.numel() == C, "add_channel_bias: bad bias length");
    const i64 inner = x->val.numel() / (B * C);
    Tensor<T> out(x->val.shape());
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            const T bv = bias->val[c];
            const i64 base = (b * C + c) * inner;
            for (i64 i = 0; i < inner; ++i) out[base + i] = x->val[base + i] + bv;
        }
    return make_op(g, std::move(out), x->needs || bias->needs, [x, bias, B, C, inner](Node<T>& n) {
        if (x->needs) accum(*x, n.grad);
        if (bias->needs) {
            Tensor<T>& gb = ensure_grad(*bias);
            for (i64 b = 0; b < B; ++b)
                for (i64 c = 0; c < C; ++c) {
                    T s = 0;
                    const i64 base = (b * C + c) * inner;
                    for (i64 i = 0; i < inner; ++i) s += n.grad[base + i];
                    gb[c] += s;
                }
        }
    });
}

// ---- normalization / attention helpers -------------------------------------

/// LayerNorm over the channel axis at each (b,h,w); eps inside the sqrt.
template <typename T>
Value<T> layer_norm_channel(Graph<T>& g, Value<T> x, Value<T> gain, Value<T> bias, T eps = T(1e-6)) {
    check_shape(x->val.rank() == 4, "layer_norm_channel: want [B,C,H,W]");
    const i64 B = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_shape(gain->val.numel() == C && bias->val.numel() == C, "layer_norm_channel: affine length");
    const i64 P = H * W;
    Tensor<T> out(x->val.shape());
    // cache per-pixel inverse sigma and normalized values for the backward
    auto xhat = std::make_shared<Tensor<T>>(x->val.shape());
    auto inv_sigma = std::make_shared<Tensor<T>>(std::vector<i64>{B, P});
    for (i64 b = 0; b < B; ++b) {
        for (i64 p = 0; p < P; ++p) {
            T mu = 0;
            for (i64 c = 0; c < C; ++c) mu += x->val[(b * C + c) * P + p];
            mu /= static_cast<T>(C);
            T var = 0;
            for (i64 c = 0; c < C; ++c) {
                const T d = x->val[(b * C + c) * P + p] - mu;
                var += d * d;
            }
            var /= static_cast<T>(C);
            const T is = T(1) / std::sqrt(var + eps);
            (*inv_sigma)[b * P + p] = is;
            for (i64 c = 0; c < C; ++c) {
                const T xh = (x->val[(b * C + c) * P + p] - mu) * is;
                (*xhat)[(b * C + c) * P + p] = xh;
                out[(b * C + c) * P + p] = xh * gain->val[c] + bias->val[c];
            }
        }
    }
    if (!g.recording()) return make_op(g, std::move(out), false, nullptr);
    return make_op(g, std::move(out), x->needs || gain->needs || bias->needs,
                   [x, gain, bias, xhat, inv_sigma, B, C, P](Node<T>& n) {
                       if (gain->needs) {
                           Tensor<T>& gg = ensure_grad(*gain);
                           for (i64 b = 0; b < B; ++b)
                               for (i64 c = 0; c < C; ++c) {
                                   T s = 0;
                                   for (i64 p = 0; p < P; ++p)
                                       s += n.grad[(b * C + c) * P + p] * (*xhat)[(b * C + c) * P + p];
                                   gg[c] += s;
                               }
                       }
                       if (bias->needs) {
                           Tensor<T>& gb = ensure_grad(*bias);
                           for (i64 b = 0; b < B; ++b)
                               for (i64 c = 0; c < C; ++c) {
                                   T s = 0;
                                   for (i64 p = 0; p < P; ++p) s += n.grad[(b * C + c) * P + p];
                                   gb[c] += s;
                               }
                       }
                       if (x->needs) {
                           Tensor<T>& gx = ensure_grad(*x);
                           for (i64 b = 0; b < B; ++b)
                               for (i64 p = 0; p < P; ++p) {
                                   T sum_dy = 0, sum_dy_xh = 0;
                                   for (i64 c = 0; c < C; ++c) {
                                       const T dy = n.grad[(b * C + c) * P + p] * gain->val[c];
                                       sum_dy += dy;
                                       sum_dy_xh += dy * (*xhat)[(b * C + c) * P + p];
                                   }
                                   const T is = (*inv_sigma)[b * P + p];
                                   const T inv_c = T(1) / static_cast<T>(C);
                                   for (i64 c = 0; c < C; ++c) {
                                       const T dy = n.grad[(b * C + c) * P + p] * gain->val[c];
                                       const T xh = (*xhat)[(b * C + c) * P + p];
                                       gx[(b * C + c) * P + p] +=
                                           is * (dy - inv_c * sum_dy - xh * inv_c * sum_dy_xh);
                                   }
                               }
                       }
                   });
}

template <typename T>
Value<T> global_avg_pool(Graph<T>& g, Value<T> x) {
    const i64 B = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    Tensor<T> out({B, C, 1, 1});
    const T inv = T(1) / static_cast<T>(H * W);
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            T s = 0;
            const i64 base = (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) s += x->val[base + i];
            out(b, c, 0, 0) = s * inv;
        }
    return make_op(g, std::move(out), x->needs, [x, B, C, H, W, inv](Node<T>& n) {
        Tensor<T>& gx = ensure_grad(*x);
        for (i64 b = 0; b < B; ++b)
            for (i64 c = 0; c < C; ++c) {
                const T gv = n.grad(b, c, 0, 0) * inv;
                const i64 base = (b * C + c) * H * W;
                for (i64 i = 0; i < H * W; ++i) gx[base + i] += gv;
            }
    });
}

/// x[B,C,H,W] * s[B,C,1,1] (channel attention application)
template <typename T>
Value<T> broadcast_mul_channel(Graph<T>& g, Value<T> x, Value<T> s) {
    const i64 B = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_shape(s->val.dim(0) == B && s->val.dim(1) == C, "broadcast_mul_channel: shape");
    Tensor<T> out(x->val.shape());
    for (i64 b = 0; b < B; ++b)
        for (i64 c = 0; c < C; ++c) {
            const T sv = s->val(b, c, 0, 0);
            const i64 base = (b * C + c) * H * W;
            for (i64 i = 0; i < H * W; ++i) out[base + i] = x->val[base + i] * sv;
        }
    return make_op(g, std::move(out), x->needs || s->needs, [x, s, B, C, H, W](Node<T>& n) {
        if (x->needs) {
            Tensor<T>& gx = ensure_grad(*x);
            for (i64 b = 0; b < B; ++b)
                for (i64 c = 0; c < C; ++c) {
                    const T sv = s->val(b, c, 0, 0);
                    const i64 base = (b * C + c) * H * W;
                    for (i64 i = 0; i < H * W; ++i) gx[base + i] += n.grad[base + i] * sv;
                }
        }
        if (s->needs) {
            Tensor<T>& gs = ensure_grad(*s);
            for (i64 b = 0; b < B; ++b)
                for (i64 c = 0; c < C; ++c) {
                    T acc = 0;
                    const i64 base = (b * C + c) * H * W;
                    for (i64 i = 0; i < H * W; ++i) acc += n.grad[base + i] * x->val[base + i];
                    gs(b, c, 0, 0) += acc;
                }
        }
    });
}

// ---- reductions -------------------------------------------------------------

/// mean |a - b| over all elements (L1 training loss)
template <typename T>
Value<T> mean_abs_diff(Graph<T>& g, Value<T> a, Value<T> b) {
    check_shape(a->val.same_shape(b->val), "mean_abs_diff: shape mismatch");
    const i64 N = a->val.numel();
    T s = 0;
    for (i64 i = 0; i < N; ++i) s += std::abs(a->val[i] - b->val[i]);
    Tensor<T> out({1});
    out[0] = s / static_cast<T>(N);
    return make_op(g, std::move(out), a->needs || b->needs, [a, b, N](Node<T>& n) {
        const T gy = n.grad[0] / static_cast<T>(N);
        for (i64 i = 0; i < N; ++i) {
            const T d = a->val[i] - b->val[i];
            const T sg = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
            if (a->needs) ensure_grad(*a)[i] += gy * sg;
            if (b->needs) ensure_grad(*b)[i] -= gy * sg;
        }
    });
}

/// sum over channels at one spatial location (ERF probe target)
template <typename T>
Value<T> pixel_channel_sum(Graph<T>& g, Value<T> x, i64 b, i64 i, i64 j) {
    const i64 C = x->val.dim(1);
    Tensor<T> out({1});
    T s = 0;
    for (i64 c = 0; c < C; ++c) s += x->val(b, c, i, j);
    out[0] = s;
    return make_op(g, std::move(out), x->needs, [x, b, i, j, C](Node<T>& n) {
        Tensor<T>& gx = ensure_grad(*x);
        for (i64 c = 0; c < C; ++c) gx(b, c, i, j) += n.grad[0];
    });
}

/// dot with a fixed projection tensor (well-scaled scalar for grad checks)
template <typename T>
Value<T> dot_with(Graph<T>& g, Value<T> x, std::shared_ptr<Tensor<T>> r) {
    check_shape(x->val.numel() == r->numel(), "dot_with: size mismatch");
    const i64 N = x->val.numel();
    T s = 0;
    for (i64 i = 0; i < N; ++i) s += x->val[i] * (*r)[i];
    Tensor<T> out({1});
    out[0] = s / static_cast<T>(N);
    return make_op(g, std::move(out), x->needs, [x, r, N](Node<T>& n) {
        Tensor<T>& gx = ensure_grad(*x);
        const T gy = n.grad[0] / static_cast<T>(N);
        for (i64 i = 0; i < N; ++i) gx[i] += gy * (*r)[i];
    });
}

}  // namespace ag

}  // namespace fmsr
