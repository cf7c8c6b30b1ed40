#pragma once

#include "autograd.hpp"
#include "fft.hpp"
#include "threading.hpp"

namespace fmsr {

namespace detail {

/// 1x1 convolution as a register-blocked matmul over pixels: four output
/// channels accumulate per input-row pass.
template <typename T>
void conv1x1_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, i64 groups,
                 Tensor<T>& y) {
    const i64 B = x.dim(0), Cin = x.dim(1);
    const i64 Cout = w.dim(0), Cg = w.dim(1);
    const i64 P = x.dim(2) * x.dim(3);
    const i64 cin_per_g = Cin / groups;
    const i64 cout_per_g = Cout / groups;
    parallel_for(B, [&](i64 b) {
        for (i64 g = 0; g < groups; ++g) {
            const i64 co_base = g * cout_per_g;
            const i64 ci_base = g * cin_per_g;
            i64 co = 0;
            for (; co + 4 <= cout_per_g; co += 4) {
                T* y0 = y.ptr() + (b * Cout + co_base + co) * P;
                T* y1 = y0 + P;
                T* y2 = y1 + P;
                T* y3 = y2 + P;
                const T b0 = bias.empty() ? T(0) : bias[co_base + co];
                const T b1 = bias.empty() ? T(0) : bias[co_base + co + 1];
                const T b2 = bias.empty() ? T(0) : bias[co_base + co + 2];
                const T b3 = bias.empty() ? T(0) : bias[co_base + co + 3];
                for (i64 j = 0; j < P; ++j) {
                    y0[j] = b0;
                    y1[j] = b1;
                    y2[j] = b2;
                    y3[j] = b3;
                }
                for (i64 cl = 0; cl < Cg; ++cl) {
                    const T* xr = x.ptr() + (b * Cin + ci_base + cl) * P;
                    const T w0 = w[(co_base + co) * Cg + cl];
                    const T w1 = w[(co_base + co + 1) * Cg + cl];
                    const T w2 = w[(co_base + co + 2) * Cg + cl];
                    const T w3 = w[(co_base + co + 3) * Cg + cl];
                    for (i64 j = 0; j < P; ++j) {
                        const T xv = xr[j];
                        y0[j] += w0 * xv;
                        y1[j] += w1 * xv;
                        y2[j] += w2 * xv;
                        y3[j] += w3 * xv;
                    }
                }
            }
            for (; co < cout_per_g; ++co) {
                T* yr = y.ptr() + (b * Cout + co_base + co) * P;
                const T bv = bias.empty() ? T(0) : bias[co_base + co];
                for (i64 j = 0; j < P; ++j) yr[j] = bv;
                for (i64 cl = 0; cl < Cg; ++cl) {
                    const T* xr = x.ptr() + (b * Cin + ci_base + cl) * P;
                    const T wv = w[(co_base + co) * Cg + cl];
                    for (i64 j = 0; j < P; ++j) yr[j] += wv * xr[j];
                }
            }
        }
    });
}

template <typename T>
void conv1x1_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 groups, Tensor<T>& gx) {
    const i64 B = gx.dim(0), Cin = gx.dim(1);
    const i64 Cout = w.dim(0), Cg = w.dim(1);
    const i64 P = gx.dim(2) * gx.dim(3);
    const i64 cin_per_g = Cin / groups;
    const i64 cout_per_g = Cout / groups;
    for (i64 b = 0; b < B; ++b) {
        for (i64 g = 0; g < groups; ++g) {
            const i64 co_base = g * cout_per_g;
            const i64 ci_base = g * cin_per_g;
            i64 cl = 0;
            for (; cl + 4 <= Cg; cl += 4) {
                T* x0 = gx.ptr() + (b * Cin + ci_base + cl) * P;
                T* x1 = x0 + P;
                T* x2 = x1 + P;
                T* x3 = x2 + P;
                for (i64 co = 0; co < cout_per_g; ++co) {
                    const T* gr = gy.ptr() + (b * Cout + co_base + co) * P;
                    const T w0 = w[(co_base + co) * Cg + cl];
                    const T w1 = w[(co_base + co) * Cg + cl + 1];
                    const T w2 = w[(co_base + co) * Cg + cl + 2];
                    const T w3 = w[(co_base + co) * Cg + cl + 3];
                    for (i64 j = 0; j < P; ++j) {
                        const T gv = gr[j];
                        x0[j] += w0 * gv;
                        x1[j] += w1 * gv;
                        x2[j] += w2 * gv;
                        x3[j] += w3 * gv;
                    }
                }
            }
            for (; cl < Cg; ++cl) {
                T* xr = gx.ptr() + (b * Cin + ci_base + cl) * P;
                for (i64 co = 0; co < cout_per_g; ++co) {
                    const T* gr = gy.ptr() + (b * Cout + co_base + co) * P;
                    const T wv = w[(co_base + co) * Cg + cl];
                    for (i64 j = 0; j < P; ++j) xr[j] += wv * gr[j];
                }
            }
        }
    }
}

template <typename T>
void conv1x1_bwd_weight(const Tensor<T>& x, const Tensor<T>& gy, i64 groups, Tensor<T>& gw,
                        Tensor<T>* gb) {
    const i64 B = x.dim(0), Cin = x.dim(1);
    const i64 Cout = gy.dim(1), Cg = gw.dim(1);
    const i64 P = x.dim(2) * x.dim(3);
    const i64 cin_per_g = Cin / groups;
    const i64 cout_per_g = Cout / groups;
    for (i64 b = 0; b < B; ++b) {
        for (i64 g = 0; g < groups; ++g) {
            const i64 co_base = g * cout_per_g;
            const i64 ci_base = g * cin_per_g;
            for (i64 co = 0; co < cout_per_g; ++co) {
                const T* gr = gy.ptr() + (b * Cout + co_base + co) * P;
                if (gb) {
                    T s = 0;
                    for (i64 j = 0; j < P; ++j) s += gr[j];
                    (*gb)[co_base + co] += s;
                }
                i64 cl = 0;
                for (; cl + 4 <= Cg; cl += 4) {
                    const T* x0 = x.ptr() + (b * Cin + ci_base + cl) * P;
                    const T* x1 = x0 + P;
                    const T* x2 = x1 + P;
                    const T* x3 = x2 + P;
                    T s0 = 0, s1 = 0, s2 = 0, s3 = 0;
                    for (i64 j = 0; j < P; ++j) {
                        const T gv = gr[j];
                        s0 += gv * x0[j];
                        s1 += gv * x1[j];
                        s2 += gv * x2[j];
                        s3 += gv * x3[j];
                    }
                    gw[(co_base + co) * Cg + cl] += s0;
                    gw[(co_base + co) * Cg + cl + 1] += s1;
                    gw[(co_base + co) * Cg + cl + 2] += s2;
                    gw[(co_base + co) * Cg + cl + 3] += s3;
                }
                for (; cl < Cg; ++cl) {
                    const T* xr = x.ptr() + (b * Cin + ci_base + cl) * P;
                    T s = 0;
                    for (i64 j = 0; j < P; ++j) s += gr[j] * xr[j];
                    gw[(co_base + co) * Cg + cl] += s;
                }
            }
        }
    }
}

/// Direct stride-1 same-size convolution with edge-replicate padding, via
/// shift-and-accumulate rows.
/// w: [Cout, Cin/groups, k, k], x: [B, Cin, H, W] -> y: [B, Cout, H, W].
template <typename T>
void conv2d_fwd(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias, i64 groups,
                Tensor<T>& y) {
    const i64 B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const i64 Cout = w.dim(0), Cg = w.dim(1), k = w.dim(2);
    if (k == 1) {
        conv1x1_fwd(x, w, bias, groups, y);
        return;
    }
    const i64 pad = k / 2;
    const i64 cin_per_g = Cin / groups;
    const i64 cout_per_g = Cout / groups;
    parallel_for(B * Cout, [&](i64 bc) {
        const i64 b = bc / Cout;
        const i64 co = bc % Cout;
        const i64 gidx = co / cout_per_g;
        T* yp = y.ptr() + (b * Cout + co) * H * W;
        const T bv = bias.empty() ? T(0) : bias[co];
        for (i64 i = 0; i < H * W; ++i) yp[i] = bv;
        for (i64 cl = 0; cl < Cg; ++cl) {
            const i64 ci = gidx * cin_per_g + cl;
            const T* xp = x.ptr() + (b * Cin + ci) * H * W;
            for (i64 u = 0; u < k; ++u) {
                const i64 di = u - pad;
                for (i64 v = 0; v < k; ++v) {
                    const i64 dj = v - pad;
                    const T wv = w[((co * Cg + cl) * k + u) * k + v];
                    for (i64 i = 0; i < H; ++i) {
                        const i64 si = std::min<i64>(H - 1, std::max<i64>(0, i + di));
                        T* yrow = yp + i * W;
                        const T* xrow = xp + si * W;
                        if (dj == 0) {
                            for (i64 j = 0; j < W; ++j) yrow[j] += wv * xrow[j];
                        } else if (dj < 0) {
                            const i64 n = std::min<i64>(-dj, W);
                            for (i64 j = 0; j < n; ++j) yrow[j] += wv * xrow[0];
                            for (i64 j = n; j < W; ++j) yrow[j] += wv * xrow[j + dj];
                        } else {
                            const i64 n = std::max<i64>(W - dj, 0);
                            for (i64 j = 0; j < n; ++j) yrow[j] += wv * xrow[j + dj];
                            for (i64 j = n; j < W; ++j) yrow[j] += wv * xrow[W - 1];
                        }
                    }
                }
            }
        }
    });
}

template <typename T>
void conv2d_bwd_input(const Tensor<T>& gy, const Tensor<T>& w, i64 groups, Tensor<T>& gx) {
    const i64 B = gx.dim(0), Cin = gx.dim(1), H = gx.dim(2), W = gx.dim(3);
    const i64 Cout = w.dim(0), Cg = w.dim(1), k = w.dim(2);
    if (k == 1) {
        conv1x1_bwd_input(gy, w, groups, gx);
        return;
    }
    const i64 pad = k / 2;
    const i64 cin_per_g = Cin / groups;
    const i64 cout_per_g = Cout / groups;
    for (i64 b = 0; b < B; ++b) {
        for (i64 co = 0; co < Cout; ++co) {
            const i64 gidx = co / cout_per_g;
            const T* gp = gy.ptr() + (b * Cout + co) * H * W;
            for (i64 cl = 0; cl < Cg; ++cl) {
                const i64 ci = gidx * cin_per_g + cl;
                T* xp = gx.ptr() + (b * Cin + ci) * H * W;
                for (i64 u = 0; u < k; ++u) {
                    const i64 di = u - pad;
                    for (i64 v = 0; v < k; ++v) {
                        const i64 dj = v - pad;
                        const T wv = w[((co * Cg + cl) * k + u) * k + v];
                        if (wv == T(0)) continue;
                        for (i64 i = 0; i < H; ++i) {
                            const i64 si = std::min<i64>(H - 1, std::max<i64>(0, i + di));
                            const T* grow = gp + i * W;
                            T* xrow = xp + si * W;
                            if (dj == 0) {
                                for (i64 j = 0; j < W; ++j) xrow[j] += wv * grow[j];
                            } else if (dj < 0) {
                                const i64 n = std::min<i64>(-dj, W);
                                for (i64 j = 0; j < n; ++j) xrow[0] += wv * grow[j];
                                for (i64 j = n; j < W; ++j) xrow[j + dj] += wv * grow[j];
                            } else {
                                const i64 n = std::max<i64>(W - dj, 0);
                                for (i64 j = 0; j < n; ++j) xrow[j + dj] += wv * grow[j];
                                for (i64 j = n; j < W; ++j) xrow[W - 1] += wv * grow[j];
                            }
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void conv2d_bwd_weight(const Tensor<T>& x, const Tensor<T>& gy, i64 groups, Tensor<T>& gw,
                       Tensor<T>* gb) {
    const i64 B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
    const i64 Cout = gy.dim(1), Cg = gw.dim(1), k = gw.dim(2);
    if (k == 1) {
        conv1x1_bwd_weight(x, gy, groups, gw, gb);
        return;
    }
    const i64 pad = k / 2;
    const i64 cin_per_g = Cin / groups;
    const i64 cout_per_g = Cout / groups;
    for (i64 b = 0; b < B; ++b) {
        for (i64 co = 0; co < Cout; ++co) {
            const i64 gidx = co / cout_per_g;
            const T* gp = gy.ptr() + (b * Cout + co) * H * W;
            if (gb) {
                T s = 0;
                for (i64 i = 0; i < H * W; ++i) s += gp[i];
                (*gb)[co] += s;
            }
            for (i64 cl = 0; cl < Cg; ++cl) {
                const i64 ci = gidx * cin_per_g + cl;
                const T* xp = x.ptr() + (b * Cin + ci) * H * W;
                for (i64 u = 0; u < k; ++u) {
                    const i64 di = u - pad;
                    for (i64 v = 0; v < k; ++v) {
                        const i64 dj = v - pad;
                        T s = 0;
                        for (i64 i = 0; i < H; ++i) {
                            const i64 si = std::min<i64>(H - 1, std::max<i64>(0, i + di));
                            const T* grow = gp + i * W;
                            const T* xrow = xp + si * W;
                            if (dj == 0) {
                                for (i64 j = 0; j < W; ++j) s += grow[j] * xrow[j];
                            } else if (dj < 0) {
                                const i64 n = std::min<i64>(-dj, W);
                                for (i64 j = 0; j < n; ++j) s += grow[j] * xrow[0];
                                for (i64 j = n; j < W; ++j) s += grow[j] * xrow[j + dj];
                            } else {
                                const i64 n = std::max<i64>(W - dj, 0);
                                for (i64 j = 0; j < n; ++j) s += grow[j] * xrow[j + dj];
                                for (i64 j = n; j < W; ++j) s += grow[j] * xrow[W - 1];
                            }
                        }
                        gw[((co * Cg + cl) * k + u) * k + v] += s;
                    }
                }
            }
        }
    }
}

}  // namespace detail

namespace ag {

/// conv2d, stride 1, same padding. Pass an empty bias node for bias-free.
template <typename T>
Value<T> conv2d(Graph<T>& g, Value<T> x, Value<T> w, Value<T> bias, i64 groups = 1) {
    check_shape(x->val.rank() == 4, "conv2d: input must be [B,C,H,W]");
    check_shape(w->val.rank() == 4, "conv2d: weight must be [Cout,Cin/g,k,k]");
    const i64 Cin = x->val.dim(1), Cout = w->val.dim(0), k = w->val.dim(2);
    check_shape(k == w->val.dim(3), "conv2d: kernel must be square");
    check_shape(Cin % groups == 0 && Cout % groups == 0, "conv2d: groups must divide channels");
    check_shape(w->val.dim(1) == Cin / groups,
                "conv2d: weight in-channels " + std::to_string(w->val.dim(1)) + " != " +
                    std::to_string(Cin / groups));
    if (!bias->val.empty())
        check_shape(bias->val.numel() == Cout, "conv2d: bias length mismatch");
    Tensor<T> y({x->val.dim(0), Cout, x->val.dim(2), x->val.dim(3)});
    detail::conv2d_fwd(x->val, w->val, bias->val, groups, y);
    const bool needs = x->needs || w->needs || bias->needs;
    return make_op(g, std::move(y), needs, [x, w, bias, groups](Node<T>& n) {
        if (x->needs) detail::conv2d_bwd_input(n.grad, w->val, groups, ensure_grad(*x));
        if (w->needs || bias->needs) {
            Tensor<T>& gw = ensure_grad(*w);
            Tensor<T>* gb = nullptr;
            if (bias->needs) gb = &ensure_grad(*bias);
            detail::conv2d_bwd_weight(x->val, n.grad, groups, gw, gb);
        }
    });
}

/// y[b,r,l] = sum_d w[r,d] * x[b,d,l]; the per-token scan projections
template <typename T>
Value<T> channel_matmul(Graph<T>& g, Value<T> w, Value<T> x) {
    check_shape(x->val.rank() == 3, "channel_matmul: input must be [B,D,L]");
    const i64 B = x->val.dim(0), D = x->val.dim(1), L = x->val.dim(2);
    const i64 R = w->val.dim(0);
    check_shape(w->val.rank() == 2 && w->val.dim(1) == D, "channel_matmul: weight must be [R,D]");
    Tensor<T> y({B, R, L});
    y.fill(T(0));
    for (i64 b = 0; b < B; ++b)
        for (i64 r = 0; r < R; ++r) {
            T* yp = y.ptr() + (b * R + r) * L;
            for (i64 d = 0; d < D; ++d) {
                const T wv = w->val(r, d);
                const T* xp = x.get()->val.ptr() + (b * D + d) * L;
                for (i64 l = 0; l < L; ++l) yp[l] += wv * xp[l];
            }
        }
    return make_op(g, std::move(y), w->needs || x->needs, [w, x, B, D, L, R](Node<T>& n) {
        if (x->needs) {
            Tensor<T>& gx = ensure_grad(*x);
            for (i64 b = 0; b < B; ++b)
                for (i64 r = 0; r < R; ++r) {
                    const T* gp = n.grad.ptr() + (b * R + r) * L;
                    for (i64 d = 0; d < D; ++d) {
                        const T wv = w->val(r, d);
                        T* xp = gx.ptr() + (b * D + d) * L;
                        for (i64 l = 0; l < L; ++l) xp[l] += wv * gp[l];
                    }
                }
        }
        if (w->needs) {
            Tensor<T>& gw = ensure_grad(*w);
            for (i64 b = 0; b < B; ++b)
                for (i64 r = 0; r < R; ++r) {
                    const T* gp = n.grad.ptr() + (b * R + r) * L;
                    for (i64 d = 0; d < D; ++d) {
                        const T* xp = x->val.ptr() + (b * D + d) * L;
                        T s = 0;
                        for (i64 l = 0; l < L; ++l) s += gp[l] * xp[l];
                        gw(r, d) += s;
                    }
                }
        }
    });
}

/// [B, t*s^2, h, w] -> [B, t, s*h, s*w]; channel block index (row-major over
/// (dy,dx)) becomes the spatial offset.
template <typename T>
Value<T> pixel_shuffle(Graph<T>& g, Value<T> x, i64 s) {
    const i64 B = x->val.dim(0), C = x->val.dim(1), H = x->val.dim(2), W = x->val.dim(3);
    check_shape(C % (s * s) == 0, "pixel_shuffle: channels not divisible by s^2");
    const i64 t = C / (s * s);
    Tensor<T> y({B, t, s * H, s * W});
    for (i64 b = 0; b < B; ++b)
        for (i64 kk = 0; kk < t; ++kk)
            for (i64 dy = 0; dy < s; ++dy)
                for (i64 dx = 0; dx < s; ++dx) {
                    const i64 cin = kk * s * s + dy * s + dx;
                    for (i64 i = 0; i < H; ++i)
                        for (i64 j = 0; j < W; ++j)
                            y(b, kk, s * i + dy, s * j + dx) = x->val(b, cin, i, j);
                }
    return make_op(g, std::move(y), x->needs, [x, s, B, C, H, W](Node<T>& n) {
        const i64 t = C / (s * s);
        Tensor<T>& gx = ensure_grad(*x);
        for (i64 b = 0; b < B; ++b)
            for (i64 kk = 0; kk < t; ++kk)
                for (i64 dy = 0; dy < s; ++dy)
                    for (i64 dx = 0; dx < s; ++dx) {
                        const i64 cin = kk * s * s + dy * s + dx;
                        for (i64 i = 0; i < H; ++i)
                            for (i64 j = 0; j < W; ++j)
                                gx(b, cin, i, j) += n.grad(b, kk, s * i + dy, s * j + dx);
                    }
    });
}

// ---- spectrum transforms (FSM) ----------------------------------------------

template <typename T>
Value<T> rfft2_half_op(Graph<T>& g, Value<T> x) {
    Tensor<T> s = rfft2_half(x->val);
    const i64 W = x->val.dim(3);
    return make_op(g, std::move(s), x->needs, [x, W](Node<T>& n) {
        Tensor<T> gx = rfft2_half_adjoint(n.grad, W);
        accum(*x, gx);
    });
}

template <typename T>
Value<T> irfft2_half_op(Graph<T>& g, Value<T> s, i64 W) {
    Tensor<T> x = irfft2_half(s->val, W);
    const i64 C2 = s->val.dim(1);
    return make_op(g, std::move(x), s->needs, [s, C2](Node<T>& n) {
        Tensor<T> gs = irfft2_half_adjoint(n.grad, C2);
        accum(*s, gs);
    });
}

}  // namespace ag

}  // namespace fmsr
