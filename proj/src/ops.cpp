#include "focusnas/ops.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "focusnas/error.hpp"

namespace focusnas::ops {

namespace {

Tape& same_tape(Var a, Var b) {
    require(a.valid() && b.valid() && &a.tape() == &b.tape(), Errc::tape_state, "operands live on different tapes");
    return a.tape();
}

void require_rank2(const Tensor& t, const char* op) {
    require(t.rank() == 2, Errc::shape_mismatch, std::string(op) + ": expected rank-2, got " + shape_string(t.shape()));
}

// c[m x n] += a[m x k] * b[k x n]
void gemm_nn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        const double* ai = a + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            const double* bt = b + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += av * bt[j];
        }
    }
}

// c[m x k] += a[m x n] * b[k x n]^T
void gemm_nt(const double* a, const double* b, double* c, std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        double* ci = c + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double* bt = b + t * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += ai[j] * bt[j];
            ci[t] += s;
        }
    }
}

// c[k x n] += a[m x k]^T * b[m x n]
void gemm_tn(const double* a, const double* b, double* c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double av = ai[t];
            double* ct = c + t * n;
            for (std::size_t j = 0; j < n; ++j) ct[j] += av * bi[j];
        }
    }
}

template <class Fwd, class Deriv>
Var unary(const char* name, Var x, Fwd fwd, Deriv deriv) {
    Tape& tape = x.tape();
    const Tensor& in = x.value();
    Tensor out(in.shape());
    for (std::size_t i = 0; i < in.size(); ++i) out[i] = fwd(in[i]);
    return tape.record(name, std::move(out), tape.needs_grad(x), [x, deriv](Tape& t, const Tensor& g) {
        const Tensor& in = x.value();
        Tensor& gx = t.grad_of(x);
        for (std::size_t i = 0; i < in.size(); ++i) gx[i] += g[i] * deriv(in[i]);
    });
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

}  // namespace

Var matmul(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    const Tensor& av = a.value();
    const Tensor& bv = b.value();
    require_rank2(av, "matmul");
    require_rank2(bv, "matmul");
    const std::size_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    require(bv.dim(0) == k, Errc::shape_mismatch,
            "matmul inner dims differ: " + shape_string(av.shape()) + " x " + shape_string(bv.shape()));
    Tensor c({m, n}, 0.0);
    gemm_nn(av.ptr(), bv.ptr(), c.ptr(), m, k, n);
    const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
    return tape.record("matmul", std::move(c), ng, [a, b, m, k, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(a)) gemm_nt(g.ptr(), b.value().ptr(), t.grad_of(a).ptr(), m, n, k);
        if (t.needs_grad(b)) gemm_tn(a.value().ptr(), g.ptr(), t.grad_of(b).ptr(), m, k, n);
    });
}

Var add(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    require(a.shape() == b.shape(), Errc::shape_mismatch,
            "add: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
    const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
    return tape.record("add", std::move(out), ng, [a, b](Tape& t, const Tensor& g) {
        for (Var v : {a, b}) {
            if (!t.needs_grad(v)) continue;
            Tensor& gv = t.grad_of(v);
            for (std::size_t i = 0; i < g.size(); ++i) gv[i] += g[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& tape = same_tape(a, b);
    require(a.shape() == b.shape(), Errc::shape_mismatch,
            "mul: " + shape_string(a.shape()) + " vs " + shape_string(b.shape()));
    Tensor out = a.value();
    const Tensor& bv = b.value();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
    const bool ng = tape.needs_grad(a) || tape.needs_grad(b);
    return tape.record("mul", std::move(out), ng, [a, b](Tape& t, const Tensor& g) {
        if (t.needs_grad(a)) {
            Tensor& ga = t.grad_of(a);
            const Tensor& bv = b.value();
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i];
        }
        if (t.needs_grad(b)) {
            Tensor& gb = t.grad_of(b);
            const Tensor& av = a.value();
            for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * av[i];
        }
    });
}

Var scale(Var a, double factor) {
    Tape& tape = a.tape();
    Tensor out = a.value();
    for (double& v : out.data()) v *= factor;
    return tape.record("scale", std::move(out), tape.needs_grad(a), [a, factor](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * factor;
    });
}

Var add_bias(Var a, Var bias) {
    Tape& tape = same_tape(a, bias);
    const Tensor& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    require(bias.value().size() == n, Errc::shape_mismatch,
            "add_bias: bias " + shape_string(bias.shape()) + " for " + shape_string(av.shape()));
    Tensor out = av;
    const double* bp = bias.value().ptr();
    for (std::size_t i = 0; i < m; ++i) {
        double* o = out.ptr() + i * n;
        for (std::size_t j = 0; j < n; ++j) o[j] += bp[j];
    }
    const bool ng = tape.needs_grad(a) || tape.needs_grad(bias);
    return tape.record("add_bias", std::move(out), ng, [a, bias, m, n](Tape& t, const Tensor& g) {
        if (t.needs_grad(a)) {
            Tensor& ga = t.grad_of(a);
            for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
        }
        if (t.needs_grad(bias)) {
            double* gb = t.grad_of(bias).ptr();
            for (std::size_t i = 0; i < m; ++i) {
                const double* gi = g.ptr() + i * n;
                for (std::size_t j = 0; j < n; ++j) gb[j] += gi[j];
            }
        }
    });
}

Var gelu(Var x) {
    return unary(
        "gelu", x,
        [](double v) { return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v))); },
        [](double v) {
            const double u = kGeluC * (v + kGeluA * v * v * v);
            const double th = std::tanh(u);
            const double du = kGeluC * (1.0 + 3.0 * kGeluA * v * v);
            return 0.5 * (1.0 + th) + 0.5 * v * (1.0 - th * th) * du;
        });
}

Var sigmoid(Var x) {
    auto sig = [](double v) {
        if (v >= 0) return 1.0 / (1.0 + std::exp(-v));
        const double e = std::exp(v);
        return e / (1.0 + e);
    };
    return unary("sigmoid", x, sig, [sig](double v) {
        const double s = sig(v);
        return s * (1.0 - s);
    });
}

Var tanh(Var x) {
    return unary(
        "tanh", x, [](double v) { return std::tanh(v); },
        [](double v) {
            const double th = std::tanh(v);
            return 1.0 - th * th;
        });
}

Var layer_norm(Var x, Var gamma, Var beta, double eps) {
    Tape& tape = same_tape(x, gamma);
    same_tape(x, beta);
    require(eps > 0.0, Errc::invalid_argument, "layer_norm: eps must be positive");
    const Tensor& xv = x.value();
    require_rank2(xv, "layer_norm");
    const std::size_t n = xv.dim(0), e = xv.dim(1);
    require(gamma.value().size() == e && beta.value().size() == e, Errc::shape_mismatch,
            "layer_norm: affine width does not match " + shape_string(xv.shape()));

    Tensor xhat({n, e});
    std::vector<double> rstd(n);
    Tensor out({n, e});
    const double* gp = gamma.value().ptr();
    const double* bp = beta.value().ptr();
    for (std::size_t i = 0; i < n; ++i) {
        const double* xi = xv.ptr() + i * e;
        double mean = 0.0;
        for (std::size_t j = 0; j < e; ++j) mean += xi[j];
        mean /= static_cast<double>(e);
        double var = 0.0;
        for (std::size_t j = 0; j < e; ++j) var += (xi[j] - mean) * (xi[j] - mean);
        var /= static_cast<double>(e);
        rstd[i] = 1.0 / std::sqrt(var + eps);
        double* hi = xhat.ptr() + i * e;
        double* oi = out.ptr() + i * e;
        for (std::size_t j = 0; j < e; ++j) {
            hi[j] = (xi[j] - mean) * rstd[i];
            oi[j] = gp[j] * hi[j] + bp[j];
        }
    }
    const bool ng = tape.needs_grad(x) || tape.needs_grad(gamma) || tape.needs_grad(beta);
    return tape.record(
        "layer_norm", std::move(out), ng,
        [x, gamma, beta, n, e, xhat = std::move(xhat), rstd = std::move(rstd)](Tape& t, const Tensor& g) {
            const double* gp = gamma.value().ptr();
            if (t.needs_grad(gamma) || t.needs_grad(beta)) {
                double* gg = t.needs_grad(gamma) ? t.grad_of(gamma).ptr() : nullptr;
                double* gb = t.needs_grad(beta) ? t.grad_of(beta).ptr() : nullptr;
                for (std::size_t i = 0; i < n; ++i) {
                    const double* gi = g.ptr() + i * e;
                    const double* hi = xhat.ptr() + i * e;
                    for (std::size_t j = 0; j < e; ++j) {
                        if (gg) gg[j] += gi[j] * hi[j];
                        if (gb) gb[j] += gi[j];
                    }
                }
            }
            if (!t.needs_grad(x)) return;
            double* gx = t.grad_of(x).ptr();
            std::vector<double> dh(e);
            for (std::size_t i = 0; i < n; ++i) {
                const double* gi = g.ptr() + i * e;
                const double* hi = xhat.ptr() + i * e;
                double mean_dh = 0.0, mean_dh_h = 0.0;
                for (std::size_t j = 0; j < e; ++j) {
                    dh[j] = gi[j] * gp[j];
                    mean_dh += dh[j];
                    mean_dh_h += dh[j] * hi[j];
                }
                mean_dh /= static_cast<double>(e);
                mean_dh_h /= static_cast<double>(e);
                double* gxi = gx + i * e;
                for (std::size_t j = 0; j < e; ++j) gxi[j] += rstd[i] * (dh[j] - mean_dh - hi[j] * mean_dh_h);
            }
        });
}

namespace {

void softmax_row(const double* in, double* out, std::size_t n) {
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        out[j] = std::exp(in[j] - mx);
        s += out[j];
    }
    const double inv = 1.0 / s;
    for (std::size_t j = 0; j < n; ++j) out[j] *= inv;
}

// log(sum(exp(row))) with max subtraction.
double log_sum_exp(const double* in, std::size_t n) {
    double mx = in[0];
    for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, in[j]);
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += std::exp(in[j] - mx);
    return mx + std::log(s);
}

}  // namespace

Var softmax_rows(Var x) {
    Tape& tape = x.tape();
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out(xv.shape());
    for (std::size_t i = 0; i < m; ++i) softmax_row(xv.ptr() + i * n, out.ptr() + i * n, n);
    Tensor probs = tape.needs_grad(x) ? out : Tensor();
    return tape.record("softmax_rows", std::move(out), tape.needs_grad(x),
                       [x, m, n, probs = std::move(probs)](Tape& t, const Tensor& g) {
                           double* gx = t.grad_of(x).ptr();
                           for (std::size_t i = 0; i < m; ++i) {
                               const double* pi = probs.ptr() + i * n;
                               const double* gi = g.ptr() + i * n;
                               double dot = 0.0;
                               for (std::size_t j = 0; j < n; ++j) dot += gi[j] * pi[j];
                               for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += pi[j] * (gi[j] - dot);
                           }
                       });
}

Var log_softmax_rows(Var x) {
    Tape& tape = x.tape();
    const Tensor& xv = x.value();
    const std::size_t m = xv.rows(), n = xv.cols();
    Tensor out(xv.shape());
    Tensor probs(xv.shape());
    for (std::size_t i = 0; i < m; ++i) {
        const double* xi = xv.ptr() + i * n;
        const double lse = log_sum_exp(xi, n);
        for (std::size_t j = 0; j < n; ++j) {
            out[i * n + j] = xi[j] - lse;
            probs[i * n + j] = std::exp(out[i * n + j]);
        }
    }
    return tape.record("log_softmax_rows", std::move(out), tape.needs_grad(x),
                       [x, m, n, probs = std::move(probs)](Tape& t, const Tensor& g) {
                           double* gx = t.grad_of(x).ptr();
                           for (std::size_t i = 0; i < m; ++i) {
                               const double* gi = g.ptr() + i * n;
                               double s = 0.0;
                               for (std::size_t j = 0; j < n; ++j) s += gi[j];
                               for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += gi[j] - probs[i * n + j] * s;
                           }
                       });
}

Var cross_entropy(Var logits, std::span<const int> labels) {
    Tape& tape = logits.tape();
    const Tensor& lv = logits.value();
    require_rank2(lv, "cross_entropy");
    const std::size_t b = lv.dim(0), k = lv.dim(1);
    require(labels.size() == b, Errc::shape_mismatch, "cross_entropy: label count does not match batch");
    for (int y : labels)
        require(y >= 0 && static_cast<std::size_t>(y) < k, Errc::out_of_range,
                "cross_entropy: label " + std::to_string(y) + " outside [0," + std::to_string(k) + ")");
    Tensor probs({b, k});
    double loss = 0.0;
    for (std::size_t i = 0; i < b; ++i) {
        const double* li = lv.ptr() + i * k;
        const double lse = log_sum_exp(li, k);
        loss += lse - li[labels[i]];
        for (std::size_t j = 0; j < k; ++j) probs[i * k + j] = std::exp(li[j] - lse);
    }
    loss /= static_cast<double>(b);
    std::vector<int> ys(labels.begin(), labels.end());
    return tape.record("cross_entropy", Tensor({1}, loss), tape.needs_grad(logits),
                       [logits, b, k, probs = std::move(probs), ys = std::move(ys)](Tape& t, const Tensor& g) {
                           double* gl = t.grad_of(logits).ptr();
                           const double s = g[0] / static_cast<double>(b);
                           for (std::size_t i = 0; i < b; ++i) {
                               for (std::size_t j = 0; j < k; ++j) gl[i * k + j] += s * probs[i * k + j];
                               gl[i * k + static_cast<std::size_t>(ys[i])] -= s;
                           }
                       });
}

Var depthwise_conv3x3(Var grid, Var kernel, Var bias) {
    Tape& tape = same_tape(grid, kernel);
    same_tape(grid, bias);
    const Tensor& gv = grid.value();
    require(gv.rank() == 3 || gv.rank() == 4, Errc::shape_mismatch,
            "depthwise_conv3x3: grid must be [h,w,c] or [b,h,w,c], got " + shape_string(gv.shape()));
    const std::size_t off = gv.rank() == 4 ? 1 : 0;
    const std::size_t nb = off ? gv.dim(0) : 1;
    const std::size_t h = gv.dim(off), w = gv.dim(off + 1), c = gv.dim(off + 2);
    require(kernel.value().size() == 9 * c && kernel.shape().back() == c, Errc::shape_mismatch,
            "depthwise_conv3x3: kernel " + shape_string(kernel.shape()) + " for " + std::to_string(c) + " channels");
    require(bias.value().size() == c, Errc::shape_mismatch, "depthwise_conv3x3: bias width mismatch");

    const double* kp = kernel.value().ptr();
    const double* bp = bias.value().ptr();
    Tensor out(gv.shape());
    for (std::size_t s = 0; s < nb; ++s) {
        const double* in = gv.ptr() + s * h * w * c;
        double* o = out.ptr() + s * h * w * c;
        for (std::size_t y = 0; y < h; ++y)
            for (std::size_t x = 0; x < w; ++x) {
                double* oc = o + (y * w + x) * c;
                for (std::size_t ch = 0; ch < c; ++ch) oc[ch] = bp[ch];
                for (int dy = -1; dy <= 1; ++dy) {
                    const long yy = static_cast<long>(y) + dy;
                    if (yy < 0 || yy >= static_cast<long>(h)) continue;
                    for (int dx = -1; dx <= 1; ++dx) {
                        const long xx = static_cast<long>(x) + dx;
                        if (xx < 0 || xx >= static_cast<long>(w)) continue;
                        const double* ic = in + (static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * c;
                        const double* kc = kp + static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * c;
                        for (std::size_t ch = 0; ch < c; ++ch) oc[ch] += kc[ch] * ic[ch];
                    }
                }
            }
    }
    const bool ng = tape.needs_grad(grid) || tape.needs_grad(kernel) || tape.needs_grad(bias);
    return tape.record("depthwise_conv3x3", std::move(out), ng, [grid, kernel, bias, nb, h, w, c](Tape& t, const Tensor& g) {
        const double* in_all = grid.value().ptr();
        const double* kp = kernel.value().ptr();
        double* gin_all = t.needs_grad(grid) ? t.grad_of(grid).ptr() : nullptr;
        double* gk = t.needs_grad(kernel) ? t.grad_of(kernel).ptr() : nullptr;
        double* gb = t.needs_grad(bias) ? t.grad_of(bias).ptr() : nullptr;
        for (std::size_t s = 0; s < nb; ++s) {
            const double* in = in_all + s * h * w * c;
            const double* go = g.ptr() + s * h * w * c;
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x) {
                    const double* gc = go + (y * w + x) * c;
                    if (gb)
                        for (std::size_t ch = 0; ch < c; ++ch) gb[ch] += gc[ch];
                    for (int dy = -1; dy <= 1; ++dy) {
                        const long yy = static_cast<long>(y) + dy;
                        if (yy < 0 || yy >= static_cast<long>(h)) continue;
                        for (int dx = -1; dx <= 1; ++dx) {
                            const long xx = static_cast<long>(x) + dx;
                            if (xx < 0 || xx >= static_cast<long>(w)) continue;
                            const std::size_t src = (static_cast<std::size_t>(yy) * w + static_cast<std::size_t>(xx)) * c;
                            const std::size_t kofs = static_cast<std::size_t>((dy + 1) * 3 + (dx + 1)) * c;
                            if (gk)
                                for (std::size_t ch = 0; ch < c; ++ch) gk[kofs + ch] += gc[ch] * in[src + ch];
                            if (gin_all) {
                                double* gi = gin_all + s * h * w * c + src;
                                for (std::size_t ch = 0; ch < c; ++ch) gi[ch] += gc[ch] * kp[kofs + ch];
                            }
                        }
                    }
                }
        }
    });
}

Var attention(Var qkv, std::size_t batch, std::size_t heads, std::size_t head_dim) {
    Tape& tape = qkv.tape();
    const Tensor& in = qkv.value();
    require_rank2(in, "attention");
    const std::size_t width = heads * head_dim;
    require(batch >= 1 && heads >= 1 && head_dim >= 1, Errc::invalid_argument, "attention: empty configuration");
    require(in.dim(1) == 3 * width && in.dim(0) % batch == 0, Errc::shape_mismatch,
            "attention: qkv " + shape_string(in.shape()) + " does not split into batch " + std::to_string(batch) +
                ", heads " + std::to_string(heads) + ", head_dim " + std::to_string(head_dim));
    const std::size_t n = in.dim(0) / batch;
    const std::size_t ld = 3 * width;
    const double sc = 1.0 / std::sqrt(static_cast<double>(head_dim));

    Tensor out({batch * n, width}, 0.0);
    Tensor probs({batch * heads, n, n});
    std::vector<double> scores(n);
    for (std::size_t s = 0; s < batch; ++s)
        for (std::size_t hd = 0; hd < heads; ++hd) {
            const double* base = in.ptr() + s * n * ld;
            const std::size_t qo = 3 * hd * head_dim, ko = qo + head_dim, vo = qo + 2 * head_dim;
            double* p = probs.ptr() + (s * heads + hd) * n * n;
            for (std::size_t i = 0; i < n; ++i) {
                const double* q = base + i * ld + qo;
                for (std::size_t j = 0; j < n; ++j) {
                    const double* kk = base + j * ld + ko;
                    double dot = 0.0;
                    for (std::size_t d = 0; d < head_dim; ++d) dot += q[d] * kk[d];
                    scores[j] = dot * sc;
                }
                softmax_row(scores.data(), p + i * n, n);
                double* o = out.ptr() + (s * n + i) * width + hd * head_dim;
                for (std::size_t j = 0; j < n; ++j) {
                    const double pij = p[i * n + j];
                    const double* v = base + j * ld + vo;
                    for (std::size_t d = 0; d < head_dim; ++d) o[d] += pij * v[d];
                }
            }
        }
    return tape.record(
        "attention", std::move(out), tape.needs_grad(qkv),
        [qkv, batch, heads, head_dim, n, width, ld, sc, probs = std::move(probs)](Tape& t, const Tensor& g) {
            const double* in = qkv.value().ptr();
            double* gin = t.grad_of(qkv).ptr();
            std::vector<double> dp(n);
            for (std::size_t s = 0; s < batch; ++s)
                for (std::size_t hd = 0; hd < heads; ++hd) {
                    const double* base = in + s * n * ld;
                    double* gbase = gin + s * n * ld;
                    const std::size_t qo = 3 * hd * head_dim, ko = qo + head_dim, vo = qo + 2 * head_dim;
                    const double* p = probs.ptr() + (s * heads + hd) * n * n;
                    for (std::size_t i = 0; i < n; ++i) {
                        const double* go = g.ptr() + (s * n + i) * width + hd * head_dim;
                        // dV[j] += p[i,j] * dO[i];  dP[i,j] = dO[i] . V[j]
                        double dot = 0.0;
                        for (std::size_t j = 0; j < n; ++j) {
                            const double* v = base + j * ld + vo;
                            double* gv = gbase + j * ld + vo;
                            const double pij = p[i * n + j];
                            double acc = 0.0;
                            for (std::size_t d = 0; d < head_dim; ++d) {
                                gv[d] += pij * go[d];
                                acc += go[d] * v[d];
                            }
                            dp[j] = acc;
                            dot += acc * pij;
                        }
                        // dS = P (dP - <dP, P>), then through the scaled dot product.
                        const double* q = base + i * ld + qo;
                        double* gq = gbase + i * ld + qo;
                        for (std::size_t j = 0; j < n; ++j) {
                            const double ds = p[i * n + j] * (dp[j] - dot) * sc;
                            const double* kk = base + j * ld + ko;
                            double* gk = gbase + j * ld + ko;
                            for (std::size_t d = 0; d < head_dim; ++d) {
                                gq[d] += ds * kk[d];
                                gk[d] += ds * q[d];
                            }
                        }
                    }
                }
        });
}

Var reshape(Var a, Shape shape) {
    Tape& tape = a.tape();
    Tensor out = a.value().reshaped(std::move(shape));
    return tape.record("reshape", std::move(out), tape.needs_grad(a), [a](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    });
}

Var slice_cols(Var a, std::size_t begin, std::size_t end) {
    Tape& tape = a.tape();
    const Tensor& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    require(begin < end && end <= n, Errc::out_of_range, "slice_cols: bad range");
    const std::size_t w = end - begin;
    Tensor out({m, w});
    for (std::size_t i = 0; i < m; ++i) std::copy_n(av.ptr() + i * n + begin, w, out.ptr() + i * w);
    return tape.record("slice_cols", std::move(out), tape.needs_grad(a), [a, m, n, begin, w](Tape& t, const Tensor& g) {
        double* ga = t.grad_of(a).ptr();
        for (std::size_t i = 0; i < m; ++i)
            for (std::size_t j = 0; j < w; ++j) ga[i * n + begin + j] += g[i * w + j];
    });
}

Var row(Var a, std::size_t index) {
    Tape& tape = a.tape();
    const Tensor& av = a.value();
    const std::size_t m = av.rows(), n = av.cols();
    require(index < m, Errc::out_of_range, "row: index " + std::to_string(index) + " out of range");
    Tensor out({1, n});
    std::copy_n(av.ptr() + index * n, n, out.ptr());
    return tape.record("row", std::move(out), tape.needs_grad(a), [a, index, n](Tape& t, const Tensor& g) {
        double* ga = t.grad_of(a).ptr() + index * n;
        for (std::size_t j = 0; j < n; ++j) ga[j] += g[j];
    });
}

Var mean_pool(Var x, std::size_t groups) {
    Tape& tape = x.tape();
    const Tensor& xv = x.value();
    require_rank2(xv, "mean_pool");
    require(groups >= 1 && xv.dim(0) % groups == 0, Errc::shape_mismatch, "mean_pool: rows not divisible by groups");
    const std::size_t k = xv.dim(0) / groups, e = xv.dim(1);
    const double inv = 1.0 / static_cast<double>(k);
    Tensor out({groups, e}, 0.0);
    for (std::size_t gi = 0; gi < groups; ++gi) {
        double* o = out.ptr() + gi * e;
        for (std::size_t r = 0; r < k; ++r) {
            const double* xr = xv.ptr() + (gi * k + r) * e;
            for (std::size_t j = 0; j < e; ++j) o[j] += xr[j];
        }
        for (std::size_t j = 0; j < e; ++j) o[j] *= inv;
    }
    return tape.record("mean_pool", std::move(out), tape.needs_grad(x), [x, groups, k, e, inv](Tape& t, const Tensor& g) {
        double* gx = t.grad_of(x).ptr();
        for (std::size_t gi = 0; gi < groups; ++gi)
            for (std::size_t r = 0; r < k; ++r)
                for (std::size_t j = 0; j < e; ++j) gx[(gi * k + r) * e + j] += g[gi * e + j] * inv;
    });
}

Var sum(Var a) {
    Tape& tape = a.tape();
    double s = 0.0;
    for (double v : a.value().data()) s += v;
    return tape.record("sum", Tensor({1}, s), tape.needs_grad(a), [a](Tape& t, const Tensor& g) {
        Tensor& ga = t.grad_of(a);
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += g[0];
    });
}

Var pick(Var a, std::size_t index) {
    Tape& tape = a.tape();
    require(index < a.value().size(), Errc::out_of_range, "pick: index out of range");
    return tape.record("pick", Tensor({1}, a.value()[index]), tape.needs_grad(a), [a, index](Tape& t, const Tensor& g) {
        t.grad_of(a)[index] += g[0];
    });
}

}  // namespace focusnas::ops
