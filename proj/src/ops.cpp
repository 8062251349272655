#include "iclab/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "iclab/errors.hpp"

namespace iclab::ops {

namespace {

Tape& tape_of(Var v) {
    if (!v.valid()) {
        throw UsageError("op input is not a valid Var");
    }
    return *v.tape;
}

Tape& common_tape(Var a, Var b) {
    Tape& t = tape_of(a);
    if (&t != &tape_of(b)) {
        throw UsageError("op inputs live on different tapes");
    }
    return t;
}

[[noreturn]] void shape_error(const char* op, const Tensor& a, const Tensor& b) {
    throw ConfigError(std::string(op) + ": incompatible shapes " + a.shape_str() + " and " +
                      b.shape_str());
}

[[noreturn]] void shape_error(const char* op, const Tensor& a) {
    throw ConfigError(std::string(op) + ": unsupported shape " + a.shape_str());
}

// C += A(m,k) @ B(k,n)
void mm_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        double* crow = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// C += A(m,n) @ B(k,n)^T  -> (m,k). The reduction runs four independent
// accumulators so it vectorizes under strict FP; the summation order is
// fixed, so results stay deterministic.
void mm_nt_acc(const double* a, const double* b, double* c, int64_t m, int64_t n, int64_t k) {
    const int64_t n4 = n - (n % 4);
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * n;
        double* crow = c + i * k;
        for (int64_t j = 0; j < k; ++j) {
            const double* brow = b + j * n;
            double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
            for (int64_t p = 0; p < n4; p += 4) {
                s0 += arow[p] * brow[p];
                s1 += arow[p + 1] * brow[p + 1];
                s2 += arow[p + 2] * brow[p + 2];
                s3 += arow[p + 3] * brow[p + 3];
            }
            double acc = (s0 + s1) + (s2 + s3);
            for (int64_t p = n4; p < n; ++p) {
                acc += arow[p] * brow[p];
            }
            crow[j] += acc;
        }
    }
}

// C += A(m,k)^T @ B(m,n) -> (k,n)
void mm_tn_acc(const double* a, const double* b, double* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const double* arow = a + i * k;
        const double* brow = b + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            double* crow = c + p * n;
            for (int64_t j = 0; j < n; ++j) {
                crow[j] += av * brow[j];
            }
        }
    }
}

// Rows of the mask, broadcast over leading axes of x when the mask only
// covers the trailing two.
struct MaskView {
    Tensor mask;     // empty when inactive
    int64_t rows = 0;
    int64_t cols = 0;

    bool active() const { return !mask.data.empty(); }
    const double* row(int64_t r) const { return mask.data.data() + (r % rows) * cols; }
};

MaskView make_mask_view(const Tensor& x, const Tensor& mask, const char* op) {
    MaskView mv;
    if (mask.data.empty()) {
        return mv;
    }
    const int64_t cols = x.shape.back();
    const int64_t rows = x.numel() / cols;
    mv.cols = cols;
    if (mask.numel() == x.numel()) {
        mv.rows = rows;
    } else if (x.rank() >= 2 && mask.numel() == cols * x.shape[x.shape.size() - 2]) {
        mv.rows = x.shape[x.shape.size() - 2];
    } else {
        shape_error(op, x, mask);
    }
    for (double v : mask.data) {
        if (v != 0.0 && v != 1.0) {
            throw ConfigError(std::string(op) + ": mask values must be exactly 0 or 1");
        }
    }
    mv.mask = mask;
    return mv;
}

void conv_check(const Tensor& x, const Tensor& w, int stride, int pad, int64_t& ho, int64_t& wo) {
    if (x.rank() != 4 || w.rank() != 4) shape_error("conv2d", x, w);
    if (x.dim(1) != w.dim(1)) shape_error("conv2d", x, w);
    if (stride < 1 || pad < 0) {
        throw ConfigError("conv2d: stride must be >= 1 and pad >= 0");
    }
    ho = (x.dim(2) + 2 * pad - w.dim(2)) / stride + 1;
    wo = (x.dim(3) + 2 * pad - w.dim(3)) / stride + 1;
    if (x.dim(2) + 2 * pad < w.dim(2) || x.dim(3) + 2 * pad < w.dim(3)) {
        throw ConfigError("conv2d: kernel " + w.shape_str() + " does not fit input " +
                          x.shape_str() + " with pad " + std::to_string(pad));
    }
}

// col (cin*kh*kw, ho*wo) for one sample.
void im2col(const double* x, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
            int stride, int pad, int64_t ho, int64_t wo, double* col) {
    for (int64_t c = 0; c < cin; ++c) {
        const double* xc = x + c * h * w;
        for (int64_t u = 0; u < kh; ++u) {
            for (int64_t v = 0; v < kw; ++v) {
                double* crow = col + ((c * kh + u) * kw + v) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride + u - pad;
                    if (iy < 0 || iy >= h) {
                        for (int64_t ox = 0; ox < wo; ++ox) crow[oy * wo + ox] = 0.0;
                        continue;
                    }
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride + v - pad;
                        crow[oy * wo + ox] = (ix < 0 || ix >= w) ? 0.0 : xc[iy * w + ix];
                    }
                }
            }
        }
    }
}

void col2im_acc(const double* col, int64_t cin, int64_t h, int64_t w, int64_t kh, int64_t kw,
                int stride, int pad, int64_t ho, int64_t wo, double* x) {
    for (int64_t c = 0; c < cin; ++c) {
        double* xc = x + c * h * w;
        for (int64_t u = 0; u < kh; ++u) {
            for (int64_t v = 0; v < kw; ++v) {
                const double* crow = col + ((c * kh + u) * kw + v) * ho * wo;
                for (int64_t oy = 0; oy < ho; ++oy) {
                    const int64_t iy = oy * stride + u - pad;
                    if (iy < 0 || iy >= h) continue;
                    for (int64_t ox = 0; ox < wo; ++ox) {
                        const int64_t ix = ox * stride + v - pad;
                        if (ix < 0 || ix >= w) continue;
                        xc[iy * w + ix] += crow[oy * wo + ox];
                    }
                }
            }
        }
    }
}

Var unary_map(const char* op, Var x, double (*f)(double), double (*df)(double)) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    Tensor out(xv.shape);
    for (size_t i = 0; i < xv.data.size(); ++i) {
        out.data[i] = f(xv.data[i]);
    }
    const int xid = x.id;
    return t.record(op, {x}, std::move(out), [xid, df](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& xv = tp.value(xid);
        Tensor& dx = tp.grad_buffer(xid);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            dx.data[i] += g.data[i] * df(xv.data[i]);
        }
    });
}

double gelu_fwd(double x) {
    return 0.5 * x * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2)));
}

double gelu_dfwd(double x) {
    const double phi = std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi);
    return 0.5 * (1.0 + std::erf(x * (1.0 / std::numbers::sqrt2))) + x * phi;
}

double relu_fwd(double x) { return x > 0.0 ? x : 0.0; }
double relu_dfwd(double x) { return x > 0.0 ? 1.0 : 0.0; }

double sigmoid_fwd(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    const double e = std::exp(x);
    return e / (1.0 + e);
}

}  // namespace

Var matmul(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() == 3 && bv.rank() == 3) {
        return bmm(a, b);
    }
    if (av.rank() != 2 || bv.rank() != 2 || av.dim(1) != bv.dim(0)) {
        shape_error("matmul", av, bv);
    }
    const int64_t m = av.dim(0), k = av.dim(1), n = bv.dim(1);
    Tensor out({m, n});
    mm_acc(av.data.data(), bv.data.data(), out.data.data(), m, k, n);
    const int aid = a.id, bid = b.id;
    return t.record("matmul", {a, b}, std::move(out), [aid, bid, m, k, n](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        if (tp.id_needs_grad(aid)) {
            mm_nt_acc(g.data.data(), tp.value(bid).data.data(),
                      tp.grad_buffer(aid).data.data(), m, n, k);
        }
        if (tp.id_needs_grad(bid)) {
            mm_tn_acc(tp.value(aid).data.data(), g.data.data(),
                      tp.grad_buffer(bid).data.data(), m, k, n);
        }
    });
}

Var bmm(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(1)) {
        shape_error("bmm", av, bv);
    }
    const int64_t nb = av.dim(0), m = av.dim(1), k = av.dim(2), n = bv.dim(2);
    Tensor out({nb, m, n});
    for (int64_t i = 0; i < nb; ++i) {
        mm_acc(av.data.data() + i * m * k, bv.data.data() + i * k * n,
               out.data.data() + i * m * n, m, k, n);
    }
    const int aid = a.id, bid = b.id;
    return t.record("bmm", {a, b}, std::move(out), [aid, bid, nb, m, k, n](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& av = tp.value(aid);
        const Tensor& bv = tp.value(bid);
        for (int64_t i = 0; i < nb; ++i) {
            const double* gi = g.data.data() + i * m * n;
            if (tp.id_needs_grad(aid)) {
                mm_nt_acc(gi, bv.data.data() + i * k * n,
                          tp.grad_buffer(aid).data.data() + i * m * k, m, n, k);
            }
            if (tp.id_needs_grad(bid)) {
                mm_tn_acc(av.data.data() + i * m * k, gi,
                          tp.grad_buffer(bid).data.data() + i * k * n, m, k, n);
            }
        }
    });
}

Var bmm_nt(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (av.rank() != 3 || bv.rank() != 3 || av.dim(0) != bv.dim(0) || av.dim(2) != bv.dim(2)) {
        shape_error("bmm_nt", av, bv);
    }
    const int64_t nb = av.dim(0), m = av.dim(1), d = av.dim(2), n = bv.dim(1);
    Tensor out({nb, m, n});
    for (int64_t i = 0; i < nb; ++i) {
        mm_nt_acc(av.data.data() + i * m * d, bv.data.data() + i * n * d,
                  out.data.data() + i * m * n, m, d, n);
    }
    const int aid = a.id, bid = b.id;
    return t.record("bmm_nt", {a, b}, std::move(out), [aid, bid, nb, m, d, n](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& av = tp.value(aid);
        const Tensor& bv = tp.value(bid);
        for (int64_t i = 0; i < nb; ++i) {
            const double* gi = g.data.data() + i * m * n;
            if (tp.id_needs_grad(aid)) {
                // dA = G @ B : (m,n)@(n,d)
                mm_acc(gi, bv.data.data() + i * n * d,
                       tp.grad_buffer(aid).data.data() + i * m * d, m, n, d);
            }
            if (tp.id_needs_grad(bid)) {
                // dB = G^T @ A : (n,m)@(m,d)
                mm_tn_acc(gi, av.data.data() + i * m * d,
                          tp.grad_buffer(bid).data.data() + i * n * d, m, n, d);
            }
        }
    });
}

Var add(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    const bool bias = !av.same_shape(bv);
    if (bias && (bv.rank() != 1 || av.rank() < 1 || bv.dim(0) != av.shape.back())) {
        shape_error("add", av, bv);
    }
    Tensor out(av.shape);
    if (bias) {
        const int64_t n = bv.dim(0);
        const int64_t rows = av.numel() / n;
        for (int64_t r = 0; r < rows; ++r) {
            const double* src = av.data.data() + r * n;
            double* dst = out.data.data() + r * n;
            for (int64_t j = 0; j < n; ++j) {
                dst[j] = src[j] + bv.data[static_cast<size_t>(j)];
            }
        }
    } else {
        for (size_t i = 0; i < out.data.size(); ++i) {
            out.data[i] = av.data[i] + bv.data[i];
        }
    }
    const int aid = a.id, bid = b.id;
    return t.record("add", {a, b}, std::move(out), [aid, bid, bias](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        if (tp.id_needs_grad(aid)) {
            tp.accum_grad(aid, g);
        }
        if (tp.id_needs_grad(bid)) {
            Tensor& db = tp.grad_buffer(bid);
            if (!bias) {
                for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += g.data[i];
            } else {
                const int64_t n = static_cast<int64_t>(db.data.size());
                const int64_t rows = g.numel() / n;
                for (int64_t r = 0; r < rows; ++r) {
                    const double* gr = g.data.data() + r * n;
                    for (int64_t j = 0; j < n; ++j) db.data[static_cast<size_t>(j)] += gr[j];
                }
            }
        }
    });
}

Var sub(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) shape_error("sub", av, bv);
    Tensor out(av.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = av.data[i] - bv.data[i];
    }
    const int aid = a.id, bid = b.id;
    return t.record("sub", {a, b}, std::move(out), [aid, bid](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        if (tp.id_needs_grad(aid)) {
            tp.accum_grad(aid, g);
        }
        if (tp.id_needs_grad(bid)) {
            Tensor& db = tp.grad_buffer(bid);
            for (size_t i = 0; i < db.data.size(); ++i) db.data[i] -= g.data[i];
        }
    });
}

Var mul(Var a, Var b) {
    Tape& t = common_tape(a, b);
    const Tensor& av = a.val();
    const Tensor& bv = b.val();
    if (!av.same_shape(bv)) shape_error("mul", av, bv);
    Tensor out(av.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = av.data[i] * bv.data[i];
    }
    const int aid = a.id, bid = b.id;
    return t.record("mul", {a, b}, std::move(out), [aid, bid](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        if (tp.id_needs_grad(aid)) {
            const Tensor& bv = tp.value(bid);
            Tensor& da = tp.grad_buffer(aid);
            for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += g.data[i] * bv.data[i];
        }
        if (tp.id_needs_grad(bid)) {
            const Tensor& av = tp.value(aid);
            Tensor& db = tp.grad_buffer(bid);
            for (size_t i = 0; i < db.data.size(); ++i) db.data[i] += g.data[i] * av.data[i];
        }
    });
}

Var scale(Var a, double s) {
    Tape& t = tape_of(a);
    const Tensor& av = a.val();
    Tensor out(av.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = av.data[i] * s;
    }
    const int aid = a.id;
    return t.record("scale", {a}, std::move(out), [aid, s](Tape& tp, int self) {
        if (!tp.id_needs_grad(aid)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& da = tp.grad_buffer(aid);
        for (size_t i = 0; i < da.data.size(); ++i) da.data[i] += g.data[i] * s;
    });
}

Var relu(Var x) { return unary_map("relu", x, relu_fwd, relu_dfwd); }
Var gelu(Var x) { return unary_map("gelu", x, gelu_fwd, gelu_dfwd); }

Var sigmoid(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    Tensor out(xv.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = sigmoid_fwd(xv.data[i]);
    }
    const int xid = x.id;
    return t.record("sigmoid", {x}, std::move(out), [xid](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.value(self);
        Tensor& dx = tp.grad_buffer(xid);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            dx.data[i] += g.data[i] * y.data[i] * (1.0 - y.data[i]);
        }
    });
}

Var tanh(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    Tensor out(xv.shape);
    for (size_t i = 0; i < out.data.size(); ++i) {
        out.data[i] = std::tanh(xv.data[i]);
    }
    const int xid = x.id;
    return t.record("tanh", {x}, std::move(out), [xid](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.value(self);
        Tensor& dx = tp.grad_buffer(xid);
        for (size_t i = 0; i < dx.data.size(); ++i) {
            dx.data[i] += g.data[i] * (1.0 - y.data[i] * y.data[i]);
        }
    });
}

Var softmax(Var x, const Tensor& mask) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    if (xv.rank() < 1) shape_error("softmax", xv);
    MaskView mv = make_mask_view(xv, mask, "softmax");
    const int64_t n = xv.shape.back();
    const int64_t rows = xv.numel() / n;
    Tensor out(xv.shape);
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = xv.data.data() + r * n;
        double* dst = out.data.data() + r * n;
        const double* m = mv.active() ? mv.row(r) : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        for (int64_t j = 0; j < n; ++j) {
            if (m && m[j] == 0.0) continue;
            mx = std::max(mx, src[j]);
        }
        if (!std::isfinite(mx)) {
            throw ConfigError("softmax: fully masked row");
        }
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            if (m && m[j] == 0.0) {
                dst[j] = 0.0;
            } else {
                dst[j] = std::exp(src[j] - mx);
                denom += dst[j];
            }
        }
        for (int64_t j = 0; j < n; ++j) {
            dst[j] /= denom;
        }
    }
    const int xid = x.id;
    return t.record("softmax", {x}, std::move(out), [xid, mv, n, rows](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const Tensor& g = tp.grad_ref(self);
        const Tensor& y = tp.value(self);
        Tensor& dx = tp.grad_buffer(xid);
        for (int64_t r = 0; r < rows; ++r) {
            const double* gr = g.data.data() + r * n;
            const double* yr = y.data.data() + r * n;
            double* dr = dx.data.data() + r * n;
            const double* m = mv.active() ? mv.row(r) : nullptr;
            double dot = 0.0;
            for (int64_t j = 0; j < n; ++j) {
                if (m && m[j] == 0.0) continue;
                dot += gr[j] * yr[j];
            }
            for (int64_t j = 0; j < n; ++j) {
                if (m && m[j] == 0.0) continue;
                dr[j] += yr[j] * (gr[j] - dot);
            }
        }
    });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    const Tensor& gv = gain.val();
    const Tensor& bv = bias.val();
    if (xv.rank() < 1) shape_error("layer_norm", xv);
    const int64_t n = xv.shape.back();
    if (gv.rank() != 1 || gv.dim(0) != n || bv.rank() != 1 || bv.dim(0) != n) {
        shape_error("layer_norm", xv, gv);
    }
    const int64_t rows = xv.numel() / n;
    Tensor out(xv.shape);
    // Saved for backward: normalized activations and per-row 1/std.
    auto norm = std::make_shared<Tensor>(xv.shape);
    auto inv_std = std::make_shared<std::vector<double>>(static_cast<size_t>(rows));
    for (int64_t r = 0; r < rows; ++r) {
        const double* src = xv.data.data() + r * n;
        double mean = 0.0;
        for (int64_t j = 0; j < n; ++j) mean += src[j];
        mean /= static_cast<double>(n);
        double var = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            const double d = src[j] - mean;
            var += d * d;
        }
        var /= static_cast<double>(n);
        const double is = 1.0 / std::sqrt(var + eps);
        (*inv_std)[static_cast<size_t>(r)] = is;
        double* nr = norm->data.data() + r * n;
        double* dst = out.data.data() + r * n;
        for (int64_t j = 0; j < n; ++j) {
            nr[j] = (src[j] - mean) * is;
            dst[j] = nr[j] * gv.data[static_cast<size_t>(j)] + bv.data[static_cast<size_t>(j)];
        }
    }
    const int xid = x.id, gid = gain.id, bid = bias.id;
    return t.record("layer_norm", {x, gain, bias}, std::move(out),
                    [xid, gid, bid, n, rows, norm, inv_std](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& gv = tp.value(gid);
        for (int64_t r = 0; r < rows; ++r) {
            const double* gr = g.data.data() + r * n;
            const double* nr = norm->data.data() + r * n;
            if (tp.id_needs_grad(gid)) {
                Tensor& dg = tp.grad_buffer(gid);
                for (int64_t j = 0; j < n; ++j) dg.data[static_cast<size_t>(j)] += gr[j] * nr[j];
            }
            if (tp.id_needs_grad(bid)) {
                Tensor& db = tp.grad_buffer(bid);
                for (int64_t j = 0; j < n; ++j) db.data[static_cast<size_t>(j)] += gr[j];
            }
            if (tp.id_needs_grad(xid)) {
                Tensor& dx = tp.grad_buffer(xid);
                double* dr = dx.data.data() + r * n;
                const double is = (*inv_std)[static_cast<size_t>(r)];
                double mean_gy = 0.0, mean_gyn = 0.0;
                for (int64_t j = 0; j < n; ++j) {
                    const double gy = gr[j] * gv.data[static_cast<size_t>(j)];
                    mean_gy += gy;
                    mean_gyn += gy * nr[j];
                }
                mean_gy /= static_cast<double>(n);
                mean_gyn /= static_cast<double>(n);
                for (int64_t j = 0; j < n; ++j) {
                    const double gy = gr[j] * gv.data[static_cast<size_t>(j)];
                    dr[j] += is * (gy - mean_gy - nr[j] * mean_gyn);
                }
            }
        }
    });
}

Var gather_rows(Var table, const std::vector<int64_t>& ids) {
    Tape& t = tape_of(table);
    const Tensor& tv = table.val();
    if (tv.rank() != 2) shape_error("gather_rows", tv);
    const int64_t rows = tv.dim(0), d = tv.dim(1);
    for (int64_t id : ids) {
        if (id < 0 || id >= rows) {
            throw ConfigError("gather_rows: index " + std::to_string(id) +
                              " out of range for table " + tv.shape_str());
        }
    }
    Tensor out({static_cast<int64_t>(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i) {
        const double* src = tv.data.data() + ids[i] * d;
        std::copy(src, src + d, out.data.data() + static_cast<int64_t>(i) * d);
    }
    const int tid = table.id;
    auto ids_copy = std::make_shared<std::vector<int64_t>>(ids);
    return t.record("gather_rows", {table}, std::move(out), [tid, d, ids_copy](Tape& tp, int self) {
        if (!tp.id_needs_grad(tid)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& dt = tp.grad_buffer(tid);
        for (size_t i = 0; i < ids_copy->size(); ++i) {
            const double* gr = g.data.data() + static_cast<int64_t>(i) * d;
            double* dr = dt.data.data() + (*ids_copy)[i] * d;
            for (int64_t j = 0; j < d; ++j) dr[j] += gr[j];
        }
    });
}

Var concat(const std::vector<Var>& xs, int axis) {
    if (xs.empty()) {
        throw UsageError("concat: no inputs");
    }
    Tape& t = tape_of(xs[0]);
    const Tensor& first = xs[0].val();
    const int rank = first.rank();
    if (axis < 0 || axis >= rank) {
        throw ConfigError("concat: axis " + std::to_string(axis) + " out of range for rank " +
                          std::to_string(rank));
    }
    std::vector<int64_t> out_shape = first.shape;
    for (size_t i = 1; i < xs.size(); ++i) {
        const Tensor& v = xs[i].val();
        if (v.rank() != rank) shape_error("concat", first, v);
        for (int a = 0; a < rank; ++a) {
            if (a == axis) continue;
            if (v.dim(a) != first.dim(a)) shape_error("concat", first, v);
        }
        out_shape[static_cast<size_t>(axis)] += v.dim(axis);
    }
    int64_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a) outer *= first.dim(a);
    for (int a = axis + 1; a < rank; ++a) inner *= first.dim(a);

    Tensor out(out_shape);
    const int64_t out_axis = out_shape[static_cast<size_t>(axis)];
    std::vector<int64_t> offsets;  // start offset of each input along axis
    int64_t off = 0;
    for (const Var& x : xs) {
        offsets.push_back(off);
        const Tensor& v = x.val();
        const int64_t len = v.dim(axis);
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = v.data.data() + o * len * inner;
            double* dst = out.data.data() + (o * out_axis + off) * inner;
            std::copy(src, src + len * inner, dst);
        }
        off += len;
    }
    std::vector<int> in_ids;
    std::vector<int64_t> lens;
    for (const Var& x : xs) {
        in_ids.push_back(x.id);
        lens.push_back(x.val().dim(axis));
    }
    return t.record("concat", xs, std::move(out),
                    [in_ids, lens, offsets, outer, inner, out_axis](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        for (size_t i = 0; i < in_ids.size(); ++i) {
            if (!tp.id_needs_grad(in_ids[i])) continue;
            Tensor& dx = tp.grad_buffer(in_ids[i]);
            const int64_t len = lens[i];
            for (int64_t o = 0; o < outer; ++o) {
                const double* src = g.data.data() + (o * out_axis + offsets[i]) * inner;
                double* dst = dx.data.data() + o * len * inner;
                for (int64_t j = 0; j < len * inner; ++j) dst[j] += src[j];
            }
        }
    });
}

Var slice(Var x, int axis, int64_t start, int64_t stop) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    const int rank = xv.rank();
    if (axis < 0 || axis >= rank) {
        throw ConfigError("slice: axis " + std::to_string(axis) + " out of range");
    }
    const int64_t len = xv.dim(axis);
    if (start < 0 || stop > len || start >= stop) {
        throw ConfigError("slice: range [" + std::to_string(start) + "," + std::to_string(stop) +
                          ") invalid for axis of size " + std::to_string(len));
    }
    int64_t outer = 1, inner = 1;
    for (int a = 0; a < axis; ++a) outer *= xv.dim(a);
    for (int a = axis + 1; a < rank; ++a) inner *= xv.dim(a);
    std::vector<int64_t> out_shape = xv.shape;
    out_shape[static_cast<size_t>(axis)] = stop - start;
    Tensor out(out_shape);
    const int64_t span = stop - start;
    for (int64_t o = 0; o < outer; ++o) {
        const double* src = xv.data.data() + (o * len + start) * inner;
        std::copy(src, src + span * inner, out.data.data() + o * span * inner);
    }
    const int xid = x.id;
    return t.record("slice", {x}, std::move(out),
                    [xid, outer, inner, len, start, span](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& dx = tp.grad_buffer(xid);
        for (int64_t o = 0; o < outer; ++o) {
            const double* src = g.data.data() + o * span * inner;
            double* dst = dx.data.data() + (o * len + start) * inner;
            for (int64_t j = 0; j < span * inner; ++j) dst[j] += src[j];
        }
    });
}

namespace {

Tensor permute_tensor(const Tensor& xv, const std::vector<int>& axes) {
    const int rank = xv.rank();
    std::vector<int64_t> out_shape(static_cast<size_t>(rank));
    for (int a = 0; a < rank; ++a) {
        out_shape[static_cast<size_t>(a)] = xv.dim(axes[static_cast<size_t>(a)]);
    }
    Tensor out(out_shape);
    // strides of input
    std::vector<int64_t> in_stride(static_cast<size_t>(rank), 1);
    for (int a = rank - 2; a >= 0; --a) {
        in_stride[static_cast<size_t>(a)] =
            in_stride[static_cast<size_t>(a + 1)] * xv.dim(a + 1);
    }
    std::vector<int64_t> src_stride(static_cast<size_t>(rank));
    for (int a = 0; a < rank; ++a) {
        src_stride[static_cast<size_t>(a)] = in_stride[static_cast<size_t>(axes[static_cast<size_t>(a)])];
    }
    std::vector<int64_t> idx(static_cast<size_t>(rank), 0);
    const int64_t total = xv.numel();
    int64_t src = 0;
    for (int64_t i = 0; i < total; ++i) {
        out.data[static_cast<size_t>(i)] = xv.data[static_cast<size_t>(src)];
        for (int a = rank - 1; a >= 0; --a) {
            idx[static_cast<size_t>(a)]++;
            src += src_stride[static_cast<size_t>(a)];
            if (idx[static_cast<size_t>(a)] < out_shape[static_cast<size_t>(a)]) break;
            src -= src_stride[static_cast<size_t>(a)] * out_shape[static_cast<size_t>(a)];
            idx[static_cast<size_t>(a)] = 0;
        }
    }
    return out;
}

}  // namespace

Var transpose(Var x) {
    const Tensor& xv = x.val();
    if (xv.rank() != 2) shape_error("transpose", xv);
    return permute(x, {1, 0});
}

Var permute(Var x, const std::vector<int>& axes) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    const int rank = xv.rank();
    if (static_cast<int>(axes.size()) != rank || rank > 4) {
        shape_error("permute", xv);
    }
    std::vector<bool> seen(static_cast<size_t>(rank), false);
    for (int a : axes) {
        if (a < 0 || a >= rank || seen[static_cast<size_t>(a)]) {
            throw ConfigError("permute: axes must be a permutation of 0..rank-1");
        }
        seen[static_cast<size_t>(a)] = true;
    }
    Tensor out = permute_tensor(xv, axes);
    std::vector<int> inverse(static_cast<size_t>(rank));
    for (int a = 0; a < rank; ++a) {
        inverse[static_cast<size_t>(axes[static_cast<size_t>(a)])] = a;
    }
    const int xid = x.id;
    return t.record("permute", {x}, std::move(out), [xid, inverse](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        Tensor back = permute_tensor(tp.grad_ref(self), inverse);
        tp.accum_grad(xid, back);
    });
}

Var reshape(Var x, std::vector<int64_t> new_shape) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    if (shape_numel(new_shape) != xv.numel()) {
        throw ConfigError("reshape: cannot view " + xv.shape_str() + " as " +
                          shape_str(new_shape));
    }
    Tensor out;
    out.shape = std::move(new_shape);
    out.data = xv.data;
    const int xid = x.id;
    return t.record("reshape", {x}, std::move(out), [xid](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& dx = tp.grad_buffer(xid);
        for (size_t i = 0; i < dx.data.size(); ++i) dx.data[i] += g.data[i];
    });
}

Var conv2d(Var x, Var w, Var bias, int stride, int pad) {
    Tape& t = common_tape(x, w);
    const Tensor& xv = x.val();
    const Tensor& wv = w.val();
    int64_t ho = 0, wo = 0;
    conv_check(xv, wv, stride, pad, ho, wo);
    const int64_t n = xv.dim(0), cin = xv.dim(1), h = xv.dim(2), wd = xv.dim(3);
    const int64_t cout = wv.dim(0), kh = wv.dim(2), kw = wv.dim(3);
    const bool has_bias = bias.valid();
    if (has_bias) {
        const Tensor& b = bias.val();
        if (b.rank() != 1 || b.dim(0) != cout) shape_error("conv2d", wv, b);
    }
    const int64_t ckk = cin * kh * kw;
    Tensor out({n, cout, ho, wo});
    std::vector<double> col(static_cast<size_t>(ckk * ho * wo));
    for (int64_t i = 0; i < n; ++i) {
        im2col(xv.data.data() + i * cin * h * wd, cin, h, wd, kh, kw, stride, pad, ho, wo,
               col.data());
        mm_acc(wv.data.data(), col.data(), out.data.data() + i * cout * ho * wo, cout, ckk,
               ho * wo);
        if (has_bias) {
            const Tensor& b = bias.val();
            double* dst = out.data.data() + i * cout * ho * wo;
            for (int64_t c = 0; c < cout; ++c) {
                const double bc = b.data[static_cast<size_t>(c)];
                for (int64_t p = 0; p < ho * wo; ++p) dst[c * ho * wo + p] += bc;
            }
        }
    }
    std::vector<Var> inputs{x, w};
    if (has_bias) inputs.push_back(bias);
    const int xid = x.id, wid = w.id, bid = has_bias ? bias.id : -1;
    return t.record("conv2d", inputs, std::move(out),
                    [xid, wid, bid, n, cin, h, wd, cout, kh, kw, stride, pad, ho, wo,
                     ckk](Tape& tp, int self) {
        const Tensor& g = tp.grad_ref(self);
        const Tensor& xv = tp.value(xid);
        const Tensor& wv = tp.value(wid);
        const int64_t howo = ho * wo;
        std::vector<double> col(static_cast<size_t>(ckk * howo));
        std::vector<double> colT(static_cast<size_t>(ckk * howo));
        std::vector<double> dcol(static_cast<size_t>(ckk * howo));
        const bool need_x = tp.id_needs_grad(xid);
        const bool need_w = tp.id_needs_grad(wid);
        const bool need_b = bid >= 0 && tp.id_needs_grad(bid);
        for (int64_t i = 0; i < n; ++i) {
            const double* gi = g.data.data() + i * cout * howo;
            if (need_w) {
                im2col(xv.data.data() + i * cin * h * wd, cin, h, wd, kh, kw, stride, pad, ho,
                       wo, col.data());
                // dW += G_i @ col^T, computed as mm with col transposed so the
                // inner loop vectorizes
                for (int64_t r = 0; r < ckk; ++r) {
                    for (int64_t p = 0; p < howo; ++p) {
                        colT[static_cast<size_t>(p * ckk + r)] =
                            col[static_cast<size_t>(r * howo + p)];
                    }
                }
                mm_acc(gi, colT.data(), tp.grad_buffer(wid).data.data(), cout, howo, ckk);
            }
            if (need_x) {
                std::fill(dcol.begin(), dcol.end(), 0.0);
                // dcol = W^T @ G_i : (ckk, cout)(cout, howo)
                mm_tn_acc(wv.data.data(), gi, dcol.data(), cout, ckk, ho * wo);
                col2im_acc(dcol.data(), cin, h, wd, kh, kw, stride, pad, ho, wo,
                           tp.grad_buffer(xid).data.data() + i * cin * h * wd);
            }
            if (need_b) {
                Tensor& db = tp.grad_buffer(bid);
                for (int64_t c = 0; c < cout; ++c) {
                    double acc = 0.0;
                    for (int64_t p = 0; p < ho * wo; ++p) acc += gi[c * ho * wo + p];
                    db.data[static_cast<size_t>(c)] += acc;
                }
            }
        }
    });
}

Var mean_pool_hw(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    if (xv.rank() != 4) shape_error("mean_pool_hw", xv);
    const int64_t n = xv.dim(0), c = xv.dim(1), hw = xv.dim(2) * xv.dim(3);
    Tensor out({n, c});
    for (int64_t i = 0; i < n * c; ++i) {
        const double* src = xv.data.data() + i * hw;
        double acc = 0.0;
        for (int64_t p = 0; p < hw; ++p) acc += src[p];
        out.data[static_cast<size_t>(i)] = acc / static_cast<double>(hw);
    }
    const int xid = x.id;
    return t.record("mean_pool_hw", {x}, std::move(out), [xid, n, c, hw](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const Tensor& g = tp.grad_ref(self);
        Tensor& dx = tp.grad_buffer(xid);
        for (int64_t i = 0; i < n * c; ++i) {
            const double gv = g.data[static_cast<size_t>(i)] / static_cast<double>(hw);
            double* dst = dx.data.data() + i * hw;
            for (int64_t p = 0; p < hw; ++p) dst[p] += gv;
        }
    });
}

Var cross_entropy_with_logits(Var logits, const std::vector<int64_t>& targets) {
    Tape& t = tape_of(logits);
    const Tensor& lv = logits.val();
    if (lv.rank() != 2 || lv.dim(0) != static_cast<int64_t>(targets.size())) {
        throw ConfigError("cross_entropy_with_logits: logits " + lv.shape_str() + " vs " +
                          std::to_string(targets.size()) + " targets");
    }
    const int64_t n = lv.dim(0), L = lv.dim(1);
    for (int64_t tgt : targets) {
        if (tgt < 0 || tgt >= L) {
            throw ConfigError("cross_entropy_with_logits: target " + std::to_string(tgt) +
                              " out of range for " + std::to_string(L) + " classes");
        }
    }
    double total = 0.0;
    for (int64_t i = 0; i < n; ++i) {
        const double* row = lv.data.data() + i * L;
        double mx = row[0];
        for (int64_t j = 1; j < L; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < L; ++j) denom += std::exp(row[j] - mx);
        total += mx + std::log(denom) - row[targets[static_cast<size_t>(i)]];
    }
    Tensor out = Tensor::scalar(total / static_cast<double>(n));
    const int lid = logits.id;
    auto tgts = std::make_shared<std::vector<int64_t>>(targets);
    return t.record("cross_entropy", {logits}, std::move(out), [lid, n, L, tgts](Tape& tp, int self) {
        if (!tp.id_needs_grad(lid)) return;
        const double gs = tp.grad_ref(self).data[0] / static_cast<double>(n);
        const Tensor& lv = tp.value(lid);
        Tensor& dl = tp.grad_buffer(lid);
        for (int64_t i = 0; i < n; ++i) {
            const double* row = lv.data.data() + i * L;
            double* drow = dl.data.data() + i * L;
            double mx = row[0];
            for (int64_t j = 1; j < L; ++j) mx = std::max(mx, row[j]);
            double denom = 0.0;
            for (int64_t j = 0; j < L; ++j) denom += std::exp(row[j] - mx);
            for (int64_t j = 0; j < L; ++j) {
                drow[j] += gs * std::exp(row[j] - mx) / denom;
            }
            drow[(*tgts)[static_cast<size_t>(i)]] -= gs;
        }
    });
}

Var sum_all(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    double acc = 0.0;
    for (double v : xv.data) acc += v;
    const int xid = x.id;
    return t.record("sum_all", {x}, Tensor::scalar(acc), [xid](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const double gs = tp.grad_ref(self).data[0];
        Tensor& dx = tp.grad_buffer(xid);
        for (double& v : dx.data) v += gs;
    });
}

Var mean_all(Var x) {
    Tape& t = tape_of(x);
    const Tensor& xv = x.val();
    const double inv = 1.0 / static_cast<double>(xv.numel());
    double acc = 0.0;
    for (double v : xv.data) acc += v;
    const int xid = x.id;
    return t.record("mean_all", {x}, Tensor::scalar(acc * inv), [xid, inv](Tape& tp, int self) {
        if (!tp.id_needs_grad(xid)) return;
        const double gs = tp.grad_ref(self).data[0] * inv;
        Tensor& dx = tp.grad_buffer(xid);
        for (double& v : dx.data) v += gs;
    });
}

void softmax_rows_inplace(Tensor& t) {
    if (t.rank() < 1) {
        throw ConfigError("softmax_rows_inplace: scalar input");
    }
    const int64_t n = t.shape.back();
    const int64_t rows = t.numel() / n;
    for (int64_t r = 0; r < rows; ++r) {
        double* row = t.data.data() + r * n;
        double mx = row[0];
        for (int64_t j = 1; j < n; ++j) mx = std::max(mx, row[j]);
        double denom = 0.0;
        for (int64_t j = 0; j < n; ++j) {
            row[j] = std::exp(row[j] - mx);
            denom += row[j];
        }
        for (int64_t j = 0; j < n; ++j) row[j] /= denom;
    }
}

}  // namespace iclab::ops
